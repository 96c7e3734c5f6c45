#pragma once

// Exact synthetic languages and the Monte Carlo experiments built on them.
//
// A sampler (the "author") emits tokens; a scorer (the detector's source
// model, always an order-1 Markov chain here) supplies the full candidate
// distribution for every position. Sampling from the scorer itself yields
// machine text; sampling from a different model yields human text.
//
// Passage i of a run draws from CounterRng(seed, i), so corpora are
// reproducible and independent of the job count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "logitwitness/detector.hpp"
#include "logitwitness/error.hpp"
#include "logitwitness/evaluation.hpp"
#include "logitwitness/normal.hpp"
#include "logitwitness/parallel.hpp"
#include "logitwitness/rng.hpp"
#include "logitwitness/trace.hpp"
#include "logitwitness/witness.hpp"

namespace lw {

/// Order-1 Markov chain over tokens 0..V-1.
class MarkovLanguage {
public:
    MarkovLanguage(std::size_t vocab_size, std::vector<double> transitions, std::vector<double> initial,
                   std::uint64_t seed = 0)
        : vocab_(vocab_size), transitions_(std::move(transitions)), initial_(std::move(initial)), seed_(seed) {
        if (vocab_ < 2) {
            throw domain_error("vocabulary size must be >= 2");
        }
        if (transitions_.size() != vocab_ * vocab_ || initial_.size() != vocab_) {
            throw domain_error("transition matrix or initial vector has the wrong size");
        }
        check_stochastic(initial_, "initial distribution");
        for (std::size_t s = 0; s < vocab_; ++s) {
            check_stochastic(row(s), "transition row " + std::to_string(s));
        }
    }

    std::size_t vocab_size() const noexcept { return vocab_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::span<const double> initial() const noexcept { return initial_; }
    std::span<const double> row(std::size_t state) const noexcept {
        return {transitions_.data() + state * vocab_, vocab_};
    }

    /// Next-token distribution given the previous token (-1 at the start).
    std::span<const double> conditional(int prev, std::size_t /*position*/) const noexcept {
        return prev < 0 ? initial() : row(static_cast<std::size_t>(prev));
    }

    /// Stationary distribution by power iteration.
    std::vector<double> stationary(int iterations = 10000) const {
        std::vector<double> pi(vocab_, 1.0 / static_cast<double>(vocab_));
        std::vector<double> next(vocab_);
        for (int it = 0; it < iterations; ++it) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t s = 0; s < vocab_; ++s) {
                const auto r = row(s);
                for (std::size_t v = 0; v < vocab_; ++v) {
                    next[v] += pi[s] * r[v];
                }
            }
            double diff = 0.0;
            for (std::size_t v = 0; v < vocab_; ++v) {
                diff = std::max(diff, std::fabs(next[v] - pi[v]));
            }
            pi.swap(next);
            if (diff < 1e-15) {
                break;
            }
        }
        return pi;
    }

private:
    static void check_stochastic(std::span<const double> p, const std::string& what) {
        double sum = 0.0;
        for (double x : p) {
            if (!(x >= 0.0) || !std::isfinite(x)) {
                throw domain_error(what + " has a negative or non-finite entry");
            }
            sum += x;
        }
        if (std::fabs(sum - 1.0) > 1e-12) {
            throw domain_error(what + " does not sum to 1");
        }
    }

    std::size_t vocab_;
    std::vector<double> transitions_;
    std::vector<double> initial_;
    std::uint64_t seed_;
};

/// Binary author whose P(token = 1) follows a per-position schedule. A
/// one-entry schedule is constant; otherwise it must cover the passage length.
class PositionalBernoulli {
public:
    explicit PositionalBernoulli(std::vector<double> p_series) {
        if (p_series.empty()) {
            throw domain_error("p_series must be non-empty");
        }
        rows_.reserve(2 * p_series.size());
        for (double p : p_series) {
            if (!(p > 0.0 && p < 1.0)) {
                throw domain_error("p_series entries must lie in (0,1)");
            }
            rows_.push_back(1.0 - p);
            rows_.push_back(p);
        }
    }

    std::size_t vocab_size() const noexcept { return 2; }
    std::size_t schedule_length() const noexcept { return rows_.size() / 2; }

    std::span<const double> conditional(int /*prev*/, std::size_t position) const noexcept {
        const std::size_t t = std::min(position, schedule_length() - 1);
        return {rows_.data() + 2 * t, 2};
    }

private:
    std::vector<double> rows_;
};

template <typename M>
concept SequenceModel = requires(const M& m, int prev, std::size_t t) {
    { m.vocab_size() } -> std::convertible_to<std::size_t>;
    { m.conditional(prev, t) } -> std::convertible_to<std::span<const double>>;
};

/// Candidate lists for every scorer state, precomputed once: log-probs sorted
/// descending (ties by token index) plus each token's log-prob and rank.
class ScoringTable {
public:
    explicit ScoringTable(const MarkovLanguage& lang) : vocab_(lang.vocab_size()) {
        states_.reserve(vocab_ + 1);
        states_.push_back(make_state(lang.initial()));
        for (std::size_t s = 0; s < vocab_; ++s) {
            states_.push_back(make_state(lang.row(s)));
        }
    }

    std::size_t vocab_size() const noexcept { return vocab_; }

    TokenObservation observe(int prev, std::size_t token) const {
        const auto& st = states_[static_cast<std::size_t>(prev + 1)];
        if (st.rank[token] == 0) {
            throw domain_error("scoring model assigns zero probability to token " + std::to_string(token));
        }
        TokenObservation tok;
        tok.observed_logprob = st.logprob[token];
        tok.observed_rank = st.rank[token];
        tok.candidates.logprobs = st.sorted;
        return tok;
    }

private:
    struct State {
        std::vector<double> sorted;
        std::vector<double> logprob;
        std::vector<std::int64_t> rank;  // 0 marks a zero-probability token
    };

    static State make_state(std::span<const double> probs) {
        State st;
        std::vector<std::size_t> order(probs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
        st.logprob.assign(probs.size(), -std::numeric_limits<double>::infinity());
        st.rank.assign(probs.size(), 0);
        std::int64_t r = 0;
        for (std::size_t v : order) {
            if (probs[v] <= 0.0) {
                continue;
            }
            st.logprob[v] = std::log(probs[v]);
            st.rank[v] = ++r;
            st.sorted.push_back(st.logprob[v]);
        }
        return st;
    }

    std::size_t vocab_;
    std::vector<State> states_;
};

inline std::size_t sample_categorical(std::span<const double> probs, CounterRng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
        if (probs[v] <= 0.0) {
            continue;
        }
        acc += probs[v];
        last = v;
        if (u < acc) {
            return v;
        }
    }
    return last;
}

template <SequenceModel Sampler>
std::vector<std::size_t> sample_tokens(const Sampler& sampler, std::size_t length, CounterRng& rng) {
    std::vector<std::size_t> tokens(length);
    int prev = -1;
    for (std::size_t t = 0; t < length; ++t) {
        tokens[t] = sample_categorical(sampler.conditional(prev, t), rng);
        prev = static_cast<int>(tokens[t]);
    }
    return tokens;
}

inline PassageTrace trace_from_tokens(std::span<const std::size_t> tokens, const ScoringTable& scorer, std::string id,
                                      Label label) {
    PassageTrace p;
    p.id = std::move(id);
    p.label = label;
    p.tokens.reserve(tokens.size());
    int prev = -1;
    for (std::size_t tok : tokens) {
        p.tokens.push_back(scorer.observe(prev, tok));
        prev = static_cast<int>(tok);
    }
    return p;
}

inline std::string passage_id(const std::string& prefix, std::size_t index) {
    std::string digits = std::to_string(index);
    if (digits.size() < 6) {
        digits.insert(0, 6 - digits.size(), '0');
    }
    return prefix + "-" + digits;
}

struct GenerateOptions {
    std::uint64_t seed = 42;
    std::string id_prefix = "p";
    std::map<std::string, std::string> meta;
    unsigned jobs = 1;
};

/// n passages of length L drawn from `sampler` and scored under `scorer`.
template <SequenceModel Sampler>
TraceCorpus generate_corpus(const Sampler& sampler, const MarkovLanguage& scorer, std::size_t n, std::size_t length,
                            Label label, const GenerateOptions& opts = {}) {
    if (n < 1 || length < 1) {
        throw domain_error("generate_corpus: n and L must be >= 1");
    }
    if (sampler.vocab_size() != scorer.vocab_size()) {
        throw domain_error("sampler and scorer vocabularies differ");
    }
    const ScoringTable table(scorer);
    TraceCorpus corpus;
    corpus.passages.resize(n);
    parallel_for(n, opts.jobs, [&](std::size_t i) {
        CounterRng rng(opts.seed, i);
        const auto tokens = sample_tokens(sampler, length, rng);
        auto p = trace_from_tokens(tokens, table, passage_id(opts.id_prefix, i), label);
        p.meta = opts.meta;
        corpus.passages[i] = std::move(p);
    });
    return corpus;
}

/// Machine text: the scorer samples its own passages.
inline TraceCorpus generate_corpus(const MarkovLanguage& lang, std::size_t n, std::size_t length, Label label,
                                   const GenerateOptions& opts = {}) {
    return generate_corpus(lang, lang, n, length, label, opts);
}

// ---------------------------------------------------------------------------
// Language families

/// Rows are random permutations of a shared Zipf profile p_k ∝ (k+1)^{-zipf},
/// perturbed by log-normal jitter and renormalized. With jitter 0 every state
/// has the same candidate multiset; positive jitter makes the conditional
/// moments state-dependent.
inline MarkovLanguage make_peaked_language(std::size_t vocab_size, double zipf, double jitter, std::uint64_t seed) {
    if (vocab_size < 2) {
        throw domain_error("vocabulary size must be >= 2");
    }
    if (!(zipf >= 0.0) || !(jitter >= 0.0)) {
        throw domain_error("zipf exponent and jitter must be non-negative");
    }
    CounterRng rng(seed, 0x5eed);
    std::vector<double> base(vocab_size);
    for (std::size_t k = 0; k < vocab_size; ++k) {
        base[k] = std::pow(static_cast<double>(k + 1), -zipf);
    }
    const auto make_row = [&](std::span<double> out) {
        std::vector<std::size_t> perm(vocab_size);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = vocab_size - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(rng() % (i + 1));
            std::swap(perm[i], perm[j]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < vocab_size; ++k) {
            const double w = base[k] * std::exp(jitter * rng.normal());
            out[perm[k]] = w;
            sum += w;
        }
        for (auto& x : out) {
            x /= sum;
        }
    };
    std::vector<double> transitions(vocab_size * vocab_size);
    std::vector<double> initial(vocab_size);
    make_row(initial);
    for (std::size_t s = 0; s < vocab_size; ++s) {
        make_row(std::span<double>(transitions.data() + s * vocab_size, vocab_size));
    }
    return MarkovLanguage(vocab_size, std::move(transitions), std::move(initial), seed);
}

/// Same chain with every row raised to 1/temperature and renormalized;
/// temperature > 1 flattens the distributions.
inline MarkovLanguage temper(const MarkovLanguage& lang, double temperature) {
    if (!(temperature > 0.0)) {
        throw domain_error("temperature must be positive");
    }
    const std::size_t v = lang.vocab_size();
    const auto reweight = [&](std::span<const double> in, std::span<double> out) {
        double sum = 0.0;
        for (std::size_t k = 0; k < v; ++k) {
            out[k] = in[k] > 0.0 ? std::pow(in[k], 1.0 / temperature) : 0.0;
            sum += out[k];
        }
        for (auto& x : out) {
            x /= sum;
        }
    };
    std::vector<double> transitions(v * v);
    std::vector<double> initial(v);
    reweight(lang.initial(), initial);
    for (std::size_t s = 0; s < v; ++s) {
        reweight(lang.row(s), std::span<double>(transitions.data() + s * v, v));
    }
    return MarkovLanguage(v, std::move(transitions), std::move(initial), lang.seed());
}

// ---------------------------------------------------------------------------
// Two-token language: machine authors emit 1 with fixed probability q1
// regardless of context; human authors follow a positional schedule p_t(1).

struct BitKingdom {
    double q1 = 0.6;
    std::vector<double> p_series{0.5};

    void validate() const {
        if (!(q1 > 0.0 && q1 < 1.0)) {
            throw domain_error("q1 must lie in (0,1)");
        }
        if (p_series.empty()) {
            throw domain_error("p_series must be non-empty");
        }
        for (double p : p_series) {
            if (!(p > 0.0 && p < 1.0)) {
                throw domain_error("p_series entries must lie in (0,1)");
            }
        }
    }

    MarkovLanguage machine_language() const {
        validate();
        const std::vector<double> row{1.0 - q1, q1};
        return MarkovLanguage(2, {row[0], row[1], row[0], row[1]}, row);
    }

    PositionalBernoulli human_author() const {
        validate();
        return PositionalBernoulli(p_series);
    }

    double mean_p() const {
        return std::accumulate(p_series.begin(), p_series.end(), 0.0) / static_cast<double>(p_series.size());
    }
};

enum class BitWitness { identity, indicator };

/// (1/L) sum_t [E_{q} w(log q(X)) - E_{p_t} w(log q(X))] in closed form.
/// The indicator witness marks token 1, i.e. 1{z > midpoint} for q1 > 1/2 and
/// 1{z < midpoint} for q1 < 1/2, so its value is q1 - mean p_t(1) either way.
inline double bit_example_value(const BitKingdom& k, BitWitness witness) {
    k.validate();
    const double gap = k.q1 - k.mean_p();
    switch (witness) {
    case BitWitness::identity: return std::log(k.q1 / (1.0 - k.q1)) * gap;
    case BitWitness::indicator:
        if (k.q1 == 0.5) {
            throw domain_error("indicator witness is undefined for q1 = 0.5");
        }
        return gap;
    }
    return 0.0;
}

/// Direct enumeration over {0,1} for an arbitrary witness.
template <Witness W>
double bit_example_value(const BitKingdom& k, const W& witness) {
    k.validate();
    const double w1 = witness(std::log(k.q1));
    const double w0 = witness(std::log(1.0 - k.q1));
    const double eq = k.q1 * w1 + (1.0 - k.q1) * w0;
    double total = 0.0;
    for (double p : k.p_series) {
        total += eq - (p * w1 + (1.0 - p) * w0);
    }
    return total / static_cast<double>(k.p_series.size());
}

/// The token-1 indicator as a callable witness over log-probabilities.
inline auto bit_indicator_witness(const BitKingdom& k) {
    if (k.q1 == 0.5) {
        throw domain_error("indicator witness is undefined for q1 = 0.5");
    }
    const double mid = 0.5 * (std::log(k.q1) + std::log(1.0 - k.q1));
    const bool one_is_likelier = k.q1 > 0.5;
    return [mid, one_is_likelier](double z) { return ((z > mid) == one_is_likelier) ? 1.0 : 0.0; };
}

// ---------------------------------------------------------------------------
// Experiments

struct FnrRow {
    double alpha = 0.0;
    double fnr = 0.0;
    double standard_error = 0.0;  // sqrt(alpha (1 - alpha) / n_scored)
};

struct FnrResult {
    std::vector<FnrRow> rows;
    std::vector<double> scores;  // in passage order, degenerate passages skipped
    std::size_t n_degenerate = 0;
};

/// Scores n passages sampled from `lang` (machine text) and reports the
/// empirical FNR at each alpha. Passages are generated and scored one at a time.
template <Witness W>
FnrResult fnr_experiment(const MarkovLanguage& lang, const W& witness, std::span<const double> alphas, std::size_t n,
                         std::size_t length, std::uint64_t seed, unsigned jobs = 1) {
    for (double a : alphas) {
        check_alpha(a);
    }
    if (n < 1 || length < 1) {
        throw domain_error("fnr_experiment: n and L must be >= 1");
    }
    const ScoringTable table(lang);
    std::vector<std::optional<double>> raw(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        CounterRng rng(seed, i);
        const auto tokens = sample_tokens(lang, length, rng);
        const auto passage = trace_from_tokens(tokens, table, passage_id("q", i), Label::machine);
        try {
            raw[i] = statistic_ada(passage, witness);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::domain) {
                throw;
            }
        }
    });
    FnrResult out;
    for (const auto& s : raw) {
        if (s) {
            out.scores.push_back(*s);
        } else {
            ++out.n_degenerate;
        }
    }
    if (out.scores.empty()) {
        throw domain_error("fnr_experiment: every passage was degenerate");
    }
    const double m = static_cast<double>(out.scores.size());
    for (double a : alphas) {
        const double z = normal_quantile(a);
        const auto below = std::count_if(out.scores.begin(), out.scores.end(), [z](double s) { return s <= z; });
        out.rows.push_back({a, static_cast<double>(below) / m, std::sqrt(a * (1.0 - a) / m)});
    }
    return out;
}

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
/// Small lambda uses the equivalent theta-function form, where the
/// alternating series converges slowly.
inline double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) {
        return 1.0;
    }
    if (lambda < 1.18) {
        const double pi = std::numbers::pi;
        double s = 0.0;
        for (int k = 1; k <= 20; ++k) {
            const double odd = 2.0 * k - 1.0;
            s += std::exp(-odd * odd * pi * pi / (8.0 * lambda * lambda));
        }
        return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += sign * term;
        if (term < 1e-300) {
            break;
        }
        sign = -sign;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct NormalityDiagnostics {
    double ks_stat = 0.0;
    double ks_pvalue = 1.0;
    double mean = 0.0;
    double var = 0.0;  // unbiased
};

/// One-sample KS test against N(0,1), asymptotic p-value with the Stephens
/// small-sample correction.
inline NormalityDiagnostics normality_diagnostics(std::span<const double> scores) {
    if (scores.size() < 8) {
        throw domain_error("normality diagnostics need at least 8 scores");
    }
    std::vector<double> x(scores.begin(), scores.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = normal_cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    NormalityDiagnostics out;
    out.ks_stat = d;
    const double root = std::sqrt(n);
    out.ks_pvalue = kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    out.mean = mean;
    out.var = ss / (n - 1.0);
    return out;
}

struct VarianceRatioRow {
    std::size_t length = 0;
    double mean_ratio = 0.0;      // conditional / marginal
    double var_ratio = 0.0;
    double mean_inverse = 0.0;    // marginal / conditional
    double var_inverse = 0.0;
    std::size_t n_flagged = 0;    // passages with zero conditional variance, excluded from the inverse
};

/// For each L: per passage, (1/L) sum_{t<L} Var_q w at that passage's contexts,
/// divided by (1/L) sum_{t<L} of the cross-passage sample variance of the
/// observed w values at position t. Returns the mean and variance of that
/// ratio across passages, and of its inverse.
template <Witness W>
std::vector<VarianceRatioRow> variance_ratio_diagnostics(const TraceCorpus& corpus, const W& witness,
                                                         std::span<const std::size_t> length_grid) {
    if (corpus.size() < 2) {
        throw domain_error("variance ratio needs at least two passages for the cross-passage variance");
    }
    if (length_grid.empty()) {
        throw domain_error("empty length grid");
    }
    const std::size_t max_len = *std::max_element(length_grid.begin(), length_grid.end());
    if (*std::min_element(length_grid.begin(), length_grid.end()) < 1) {
        throw domain_error("length grid entries must be >= 1");
    }
    const std::size_t n = corpus.size();
    std::vector<std::vector<double>> cond_prefix(n, std::vector<double>(max_len + 1, 0.0));
    std::vector<double> obs(n * max_len);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = corpus.passages[i];
        if (p.tokens.size() < max_len) {
            throw domain_error("passage '" + p.id + "' is shorter than the largest grid length");
        }
        for (std::size_t t = 0; t < max_len; ++t) {
            const auto m = token_moments(p.tokens[t], witness);
            cond_prefix[i][t + 1] = cond_prefix[i][t] + m.var_w;
            obs[i * max_len + t] = witness(p.tokens[t].observed_logprob);
        }
    }
    std::vector<double> marginal_prefix(max_len + 1, 0.0);
    for (std::size_t t = 0; t < max_len; ++t) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += obs[i * max_len + t];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dv = obs[i * max_len + t] - mean;
            ss += dv * dv;
        }
        marginal_prefix[t + 1] = marginal_prefix[t] + ss / static_cast<double>(n - 1);
    }
    const auto mean_var = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - m) * (x - m);
        return std::pair{m, xs.size() > 1 ? ss / static_cast<double>(xs.size() - 1) : 0.0};
    };
    std::vector<VarianceRatioRow> rows;
    for (std::size_t len : length_grid) {
        const double marginal = marginal_prefix[len] / static_cast<double>(len);
        if (!(marginal > variance_floor)) {
            throw domain_error("variance ratio: cross-passage variance is zero at L=" + std::to_string(len) +
                               " (constant witness?)");
        }
        std::vector<double> ratio;
        std::vector<double> inverse;
        VarianceRatioRow row;
        row.length = len;
        for (std::size_t i = 0; i < n; ++i) {
            const double cond = cond_prefix[i][len] / static_cast<double>(len);
            ratio.push_back(cond / marginal);
            if (cond > variance_floor) {
                inverse.push_back(marginal / cond);
            } else {
                ++row.n_flagged;
            }
        }
        std::tie(row.mean_ratio, row.var_ratio) = mean_var(ratio);
        if (!inverse.empty()) {
            std::tie(row.mean_inverse, row.var_inverse) = mean_var(inverse);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace lw
