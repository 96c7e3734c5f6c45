#pragma once

// Independent reference implementations used as oracles by the tests. None of
// these call into the library's numerical code.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "logitwitness/trace.hpp"

namespace lwtest {

// Textbook recursive Cox-de Boor on a full knot vector. Half-open intervals,
// with the last non-empty interval closed on the right so z = hi is covered.
inline double cox_de_boor(const std::vector<double>& knots, int i, int k, double z) {
    if (k == 0) {
        const double a = knots[i];
        const double b = knots[i + 1];
        if (a == b) return 0.0;
        if (z >= a && z < b) return 1.0;
        // right closure at the final boundary
        if (z == b && b == knots.back()) {
            // only the last non-degenerate interval gets it
            for (std::size_t j = static_cast<std::size_t>(i) + 1; j + 1 < knots.size(); ++j) {
                if (knots[j] < knots[j + 1]) return 0.0;
            }
            return 1.0;
        }
        return 0.0;
    }
    double out = 0.0;
    const double left_den = knots[i + k] - knots[i];
    if (left_den > 0.0) {
        out += (z - knots[i]) / left_den * cox_de_boor(knots, i, k - 1, z);
    }
    const double right_den = knots[i + k + 1] - knots[i + 1];
    if (right_den > 0.0) {
        out += (knots[i + k + 1] - z) / right_den * cox_de_boor(knots, i + 1, k - 1, z);
    }
    return out;
}

inline std::vector<double> clamped_knots(int degree, const std::vector<double>& interior, double lo, double hi) {
    std::vector<double> k(static_cast<std::size_t>(degree + 1), lo);
    k.insert(k.end(), interior.begin(), interior.end());
    k.insert(k.end(), static_cast<std::size_t>(degree + 1), hi);
    return k;
}

inline std::vector<double> cox_de_boor_all(int degree, const std::vector<double>& interior, double lo, double hi,
                                           double z) {
    const auto knots = clamped_knots(degree, interior, lo, hi);
    const int d = static_cast<int>(interior.size()) + degree + 1;
    std::vector<double> out(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        out[static_cast<std::size_t>(i)] = cox_de_boor(knots, i, degree, z);
    }
    return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Phi via the Maclaurin series of erf in long double; accurate to ~1e-17 for |z| <= 3.
inline long double erf_series(long double x) {
    long double term = x;
    long double sum = x;
    for (int n = 1; n < 400; ++n) {
        term *= -x * x / n;
        const long double add = term / (2 * n + 1);
        sum += add;
        if (std::fabs(add) < 1e-30L) break;
    }
    return 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * sum;
}

inline long double phi_series(long double z) { return 0.5L * (1.0L + erf_series(z / std::sqrt(2.0L))); }

// Token whose candidate distribution is given by probabilities (sorted here).
inline lw::TokenObservation token_from_probs(std::vector<double> probs, std::size_t observed_index,
                                             std::int64_t rank = 1) {
    lw::TokenObservation tok;
    const double observed = probs[observed_index];
    std::sort(probs.begin(), probs.end(), std::greater<>());
    for (double p : probs) tok.candidates.logprobs.push_back(std::log(p));
    tok.observed_logprob = std::log(observed);
    tok.observed_rank = rank;
    return tok;
}

inline lw::PassageTrace passage_with_lps(std::string id, const std::vector<double>& lps,
                                         lw::Label label = lw::Label::human) {
    lw::PassageTrace p;
    p.id = std::move(id);
    p.label = label;
    for (double lp : lps) {
        lw::TokenObservation tok;
        tok.observed_logprob = lp;
        tok.observed_rank = 1;
        tok.candidates.logprobs = {std::log(0.5), std::log(0.5)};
        p.tokens.push_back(tok);
    }
    return p;
}

} // namespace lwtest
