#pragma once

// Per-passage detection statistics and the FNR-controlled decision rule.
//
// The adaptive statistic standardizes the sum of witness-transformed observed
// log-probs by the scoring model's own conditional moments:
//
//     T_w(x) = sum_t [w(lp_t) - E_q w] / sqrt(sum_t Var_q w)
//
// Under text sampled from the scoring model the numerator is a martingale, so
// T_w is asymptotically N(0,1) and the threshold Phi^{-1}(alpha) fixes the FNR
// at alpha. Ties at the threshold classify as human.

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logitwitness/error.hpp"
#include "logitwitness/normal.hpp"
#include "logitwitness/parallel.hpp"
#include "logitwitness/trace.hpp"
#include "logitwitness/witness.hpp"

namespace lw {

inline constexpr double variance_floor = 1e-12;
inline constexpr double default_alpha = 0.05;

enum class Method { ada, fast, likelihood, entropy, logrank, lrr };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::ada: return "ada";
    case Method::fast: return "fast";
    case Method::likelihood: return "likelihood";
    case Method::entropy: return "entropy";
    case Method::logrank: return "logrank";
    case Method::lrr: return "lrr";
    }
    return "ada";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::ada, Method::fast, Method::likelihood, Method::entropy, Method::logrank, Method::lrr}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    return std::nullopt;
}

enum class Verdict { machine, human };

inline std::string_view to_string(Verdict v) { return v == Verdict::machine ? "machine" : "human"; }

struct TokenMoments {
    double mean_w = 0.0;
    double var_w = 0.0;
    double entropy = 0.0;
};

/// Conditional mean and variance of w(log q) under the renormalized candidate
/// distribution, plus its entropy. Weighted Welford update keeps the variance
/// accurate when w carries a large offset.
template <Witness W>
TokenMoments token_moments(const TokenObservation& tok, const W& witness) {
    const auto& lps = tok.candidates.logprobs;
    const double top = lps.front();
    double total = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
    double weighted_lp = 0.0;
    for (double lp : lps) {
        const double weight = std::exp(lp - top);
        const double x = witness(lp);
        total += weight;
        const double delta = x - mean;
        mean += (weight / total) * delta;
        m2 += weight * delta * (x - mean);
        weighted_lp += weight * (lp - top);
    }
    TokenMoments m;
    m.mean_w = mean;
    m.var_w = std::max(0.0, m2 / total);
    m.entropy = std::max(0.0, std::log(total) - weighted_lp / total);
    return m;
}

inline TokenMoments token_moments(const TokenObservation& tok) { return token_moments(tok, IdentityWitness{}); }

/// Numerator and squared denominator of T_w before the final division.
struct StatisticParts {
    double centered_sum = 0.0;
    double variance_sum = 0.0;
};

template <Witness W>
StatisticParts statistic_parts(const PassageTrace& passage, const W& witness) {
    StatisticParts parts;
    for (const auto& tok : passage.tokens) {
        const auto m = token_moments(tok, witness);
        parts.centered_sum += witness(tok.observed_logprob) - m.mean_w;
        parts.variance_sum += m.var_w;
    }
    return parts;
}

template <Witness W>
double statistic_ada(const PassageTrace& passage, const W& witness) {
    const auto parts = statistic_parts(passage, witness);
    if (!(parts.variance_sum > variance_floor)) {
        std::ostringstream os;
        os << "degenerate statistic for passage '" << passage.id << "': total conditional variance "
           << parts.variance_sum << " <= " << variance_floor;
        throw domain_error(os.str());
    }
    return parts.centered_sum / std::sqrt(parts.variance_sum);
}

inline double statistic_fast(const PassageTrace& passage) { return statistic_ada(passage, IdentityWitness{}); }

struct BaselineScores {
    double likelihood = 0.0;
    double entropy = 0.0;
    double logrank = 0.0;
    double lrr = 0.0;
};

/// Logit baselines, each oriented so that larger means more machine-like
/// except entropy, which is reported raw.
inline BaselineScores statistic_baselines(const PassageTrace& passage) {
    if (passage.tokens.empty()) {
        throw domain_error("passage '" + passage.id + "' has zero length");
    }
    double sum_lp = 0.0;
    double sum_entropy = 0.0;
    double sum_log_rank = 0.0;
    for (const auto& tok : passage.tokens) {
        if (tok.observed_rank < 1) {
            throw domain_error("passage '" + passage.id + "' is missing token ranks");
        }
        sum_lp += tok.observed_logprob;
        sum_entropy += token_moments(tok).entropy;
        sum_log_rank += std::log(static_cast<double>(tok.observed_rank));
    }
    const double len = static_cast<double>(passage.tokens.size());
    BaselineScores s;
    s.likelihood = sum_lp / len;
    s.entropy = sum_entropy / len;
    s.logrank = -sum_log_rank / len;
    s.lrr = std::fabs(sum_lp) / std::max(std::fabs(sum_log_rank), 1e-12);
    return s;
}

struct Decision {
    double threshold = 0.0;
    Verdict verdict = Verdict::human;
};

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw domain_error("alpha must lie in (0,1)");
    }
}

/// Threshold z_alpha = Phi^{-1}(alpha); machine iff statistic > z_alpha.
inline Decision decide(double statistic, double alpha) {
    check_alpha(alpha);
    const double z = normal_quantile(alpha);
    return {z, statistic > z ? Verdict::machine : Verdict::human};
}

struct DetectionReport {
    std::string id;
    std::optional<double> statistic;  // empty when the passage could not be scored
    Method method = Method::ada;
    double threshold = 0.0;
    std::optional<Verdict> decision;
    std::size_t length = 0;
    Label label = Label::unknown;
    std::string error;  // non-empty iff statistic is empty

    bool ok() const noexcept { return statistic.has_value(); }
};

/// Scores one passage. Domain errors (degenerate variance) are captured in the
/// report rather than thrown.
inline DetectionReport score_passage(const PassageTrace& passage, Method method, const WitnessModel* witness,
                                     double alpha) {
    check_alpha(alpha);
    DetectionReport r;
    r.id = passage.id;
    r.method = method;
    r.length = passage.tokens.size();
    r.label = passage.label;
    r.threshold = normal_quantile(alpha);
    try {
        double s = 0.0;
        switch (method) {
        case Method::ada:
            if (!witness) {
                throw usage_error("method 'ada' needs a witness model");
            }
            s = statistic_ada(passage, *witness);
            break;
        case Method::fast: s = statistic_fast(passage); break;
        case Method::likelihood: s = statistic_baselines(passage).likelihood; break;
        case Method::entropy: s = statistic_baselines(passage).entropy; break;
        case Method::logrank: s = statistic_baselines(passage).logrank; break;
        case Method::lrr: s = statistic_baselines(passage).lrr; break;
        }
        r.statistic = s;
        r.decision = decide(s, alpha).verdict;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::domain) {
            throw;
        }
        r.error = e.what();
    }
    return r;
}

/// Scores every passage; output order follows input order for any job count.
inline std::vector<DetectionReport> score_corpus(const TraceCorpus& corpus, Method method, const WitnessModel* witness,
                                                 double alpha, unsigned jobs = 1) {
    if (method == Method::ada && !witness) {
        throw usage_error("method 'ada' needs a witness model");
    }
    std::vector<DetectionReport> out(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t i) {
        out[i] = score_passage(corpus.passages[i], method, witness, alpha);
    });
    return out;
}

inline void write_report(const DetectionReport& r, std::ostream& out) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["statistic"] = r.statistic ? nlohmann::ordered_json(*r.statistic) : nlohmann::ordered_json(nullptr);
    j["method"] = std::string(to_string(r.method));
    j["threshold"] = r.threshold;
    j["decision"] = r.decision ? nlohmann::ordered_json(std::string(to_string(*r.decision)))
                               : nlohmann::ordered_json(nullptr);
    j["L"] = r.length;
    j["label"] = std::string(to_string(r.label));
    j["status"] = r.ok() ? "ok" : "error";
    if (!r.ok()) {
        j["message"] = r.error;
    }
    out << j.dump() << '\n';
}

inline DetectionReport read_report(const nlohmann::json& j) {
    DetectionReport r;
    r.id = j.at("id").get<std::string>();
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method) {
        throw domain_error("report '" + r.id + "': unknown method");
    }
    r.method = *method;
    r.threshold = j.at("threshold").get<double>();
    r.length = j.at("L").get<std::size_t>();
    const auto label = parse_label(j.value("label", std::string("unknown")));
    if (!label) {
        throw domain_error("report '" + r.id + "': unknown label");
    }
    r.label = *label;
    if (j.value("status", std::string("ok")) == "ok" && !j.at("statistic").is_null()) {
        r.statistic = j.at("statistic").get<double>();
        r.decision = j.at("decision").get<std::string>() == "machine" ? Verdict::machine : Verdict::human;
    } else {
        r.error = j.value("message", std::string("unscored"));
    }
    return r;
}

inline std::vector<DetectionReport> parse_reports(std::istream& in) {
    std::vector<DetectionReport> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(read_report(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw domain_error("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace lw
