#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "logitwitness/detector.hpp"
#include "logitwitness/error.hpp"
#include "logitwitness/normal.hpp"
#include "logitwitness/trace.hpp"
#include "logitwitness/witness.hpp"

namespace lw {

/// Mann-Whitney AUC: P(machine score > human score), ties counted as 1/2.
/// Computed by one sort over the pooled scores; every partial sum is a
/// multiple of 1/2, so the result equals exhaustive pair counting exactly.
inline double auc(std::span<const double> machine, std::span<const double> human) {
    if (machine.empty() || human.empty()) {
        throw domain_error("auc: score lists must be non-empty");
    }
    std::vector<std::pair<double, bool>> pooled;  // (score, is_machine)
    pooled.reserve(machine.size() + human.size());
    for (double s : machine) pooled.emplace_back(s, true);
    for (double s : human) pooled.emplace_back(s, false);
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double wins = 0.0;
    double humans_below = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        double m = 0.0;
        double h = 0.0;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) {
            (pooled[j].second ? m : h) += 1.0;
            ++j;
        }
        wins += m * humans_below + 0.5 * m * h;
        humans_below += h;
        i = j;
    }
    return wins / (static_cast<double>(machine.size()) * static_cast<double>(human.size()));
}

struct Rates {
    double fnr = 0.0;
    double tnr = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Classification rates at threshold z_alpha. A passage counts as human-classified
/// when its score is <= z_alpha.
inline Rates rates(std::span<const double> machine, std::span<const double> human, double alpha) {
    check_alpha(alpha);
    if (machine.empty() || human.empty()) {
        throw domain_error("rates: score lists must be non-empty");
    }
    const double z = normal_quantile(alpha);
    const auto below = [z](std::span<const double> xs) {
        std::size_t c = 0;
        for (double x : xs) {
            c += x <= z ? 1 : 0;
        }
        return c;
    };
    const std::size_t fn = below(machine);
    const std::size_t tn = below(human);
    Rates r;
    r.fnr = static_cast<double>(fn) / static_cast<double>(machine.size());
    r.tnr = static_cast<double>(tn) / static_cast<double>(human.size());
    r.tpr = static_cast<double>(machine.size() - fn) / static_cast<double>(machine.size());
    r.fpr = static_cast<double>(human.size() - tn) / static_cast<double>(human.size());
    return r;
}

/// Share of the remaining headroom above the baseline AUC that was gained.
inline double relative_improvement(double auc_ada, double auc_fast) {
    if (!(auc_fast < 1.0)) {
        throw domain_error("relative improvement undefined when the baseline AUC is 1");
    }
    return (auc_ada - auc_fast) / (1.0 - auc_fast);
}

struct EvalSummary {
    Method method = Method::ada;
    double auc = 0.5;
    double auc_oriented = 0.5;  // max(auc, 1 - auc)
    double fnr = 0.0;
    double tnr = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::optional<double> relative_improvement;
    std::size_t n_human = 0;
    std::size_t n_machine = 0;
    std::size_t n_failed = 0;
};

inline EvalSummary summarize(std::span<const double> machine, std::span<const double> human, double alpha,
                             Method method = Method::ada) {
    EvalSummary s;
    s.method = method;
    s.auc = auc(machine, human);
    s.auc_oriented = std::max(s.auc, 1.0 - s.auc);
    const auto r = rates(machine, human, alpha);
    s.fnr = r.fnr;
    s.tnr = r.tnr;
    s.tpr = r.tpr;
    s.fpr = r.fpr;
    s.n_machine = machine.size();
    s.n_human = human.size();
    return s;
}

/// Groups labeled reports by method and summarizes each group. When both ada
/// and fast are present the ada row carries the relative improvement.
inline std::vector<EvalSummary> evaluate_reports(std::span<const DetectionReport> reports, double alpha) {
    struct Group {
        std::vector<double> machine;
        std::vector<double> human;
        std::size_t failed = 0;
    };
    std::map<Method, Group> groups;
    for (const auto& r : reports) {
        if (r.label == Label::unknown) {
            throw domain_error("report '" + r.id + "' is unlabeled; evaluation needs human/machine labels");
        }
        auto& g = groups[r.method];
        if (!r.ok()) {
            ++g.failed;
            continue;
        }
        (r.label == Label::machine ? g.machine : g.human).push_back(*r.statistic);
    }
    std::vector<EvalSummary> out;
    for (const auto& [method, g] : groups) {
        if (g.machine.empty() || g.human.empty()) {
            throw domain_error("method '" + std::string(to_string(method)) +
                               "' needs scored passages of both labels");
        }
        auto s = summarize(g.machine, g.human, alpha, method);
        s.n_failed = g.failed;
        out.push_back(s);
    }
    const auto find = [&](Method m) -> EvalSummary* {
        for (auto& s : out) {
            if (s.method == m) return &s;
        }
        return nullptr;
    };
    if (auto* ada = find(Method::ada); ada) {
        if (const auto* fast = find(Method::fast); fast && fast->auc < 1.0) {
            ada->relative_improvement = relative_improvement(ada->auc, fast->auc);
        }
    }
    return out;
}

inline nlohmann::ordered_json to_json(const EvalSummary& s) {
    nlohmann::ordered_json j;
    j["method"] = std::string(to_string(s.method));
    j["auc"] = s.auc;
    j["auc_oriented"] = s.auc_oriented;
    j["fnr"] = s.fnr;
    j["tnr"] = s.tnr;
    j["tpr"] = s.tpr;
    j["fpr"] = s.fpr;
    j["relative_improvement"] = s.relative_improvement ? nlohmann::ordered_json(*s.relative_improvement)
                                                       : nlohmann::ordered_json(nullptr);
    j["n_human"] = s.n_human;
    j["n_machine"] = s.n_machine;
    j["n_failed"] = s.n_failed;
    return j;
}

inline void write_summary_json(std::span<const EvalSummary> summaries, double alpha, std::ostream& out) {
    nlohmann::ordered_json j;
    j["alpha"] = alpha;
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& s : summaries) {
        j["methods"].push_back(to_json(s));
    }
    out << j.dump(2) << '\n';
}

/// Aligned plain-text table, one row per method. Relative improvement is
/// printed as a percentage, "-" when undefined.
inline void write_summary_table(std::span<const EvalSummary> summaries, std::ostream& out) {
    out << std::left << std::setw(12) << "Method" << std::right;
    for (const char* h : {"AUC", "AUC*", "FNR", "TNR", "TPR", "FPR", "Rel.(%)"}) {
        out << std::setw(10) << h;
    }
    out << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& s : summaries) {
        out << std::left << std::setw(12) << to_string(s.method) << std::right;
        for (double v : {s.auc, s.auc_oriented, s.fnr, s.tnr, s.tpr, s.fpr}) {
            out << std::setw(10) << v;
        }
        if (s.relative_improvement) {
            out << std::setw(10) << 100.0 * *s.relative_improvement;
        } else {
            out << std::setw(10) << "-";
        }
        out << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

/// Empirical separation T2-hat on human text and the TNR lower bound it implies.
struct TnrBoundEstimate {
    double value = 0.0;        // numerator / denominator
    double numerator = 0.0;    // sum_t avg_i [E_q w - w(observed)]
    double denominator = 0.0;  // sqrt(sum_t avg_i Var_q w)
    std::optional<double> bound;
};

/// Position-wise averages run over the passages long enough to reach t.
template <Witness W>
TnrBoundEstimate tnr_bound_estimate(const TraceCorpus& human, const W& witness,
                                    std::optional<double> alpha = std::nullopt) {
    if (human.empty()) {
        throw domain_error("tnr_bound_estimate: human corpus is empty");
    }
    std::vector<double> gap_sum;
    std::vector<double> var_sum;
    std::vector<double> count;
    for (const auto& p : human.passages) {
        if (p.tokens.size() > gap_sum.size()) {
            gap_sum.resize(p.tokens.size(), 0.0);
            var_sum.resize(p.tokens.size(), 0.0);
            count.resize(p.tokens.size(), 0.0);
        }
        for (std::size_t t = 0; t < p.tokens.size(); ++t) {
            const auto m = token_moments(p.tokens[t], witness);
            gap_sum[t] += m.mean_w - witness(p.tokens[t].observed_logprob);
            var_sum[t] += m.var_w;
            count[t] += 1.0;
        }
    }
    TnrBoundEstimate est;
    double var_total = 0.0;
    for (std::size_t t = 0; t < gap_sum.size(); ++t) {
        est.numerator += gap_sum[t] / count[t];
        var_total += var_sum[t] / count[t];
    }
    if (!(var_total > variance_floor)) {
        throw domain_error("tnr_bound_estimate: degenerate denominator (witness is constant on the candidates)");
    }
    est.denominator = std::sqrt(var_total);
    est.value = est.numerator / est.denominator;
    if (alpha) {
        check_alpha(*alpha);
        const double z = normal_quantile(*alpha);
        est.bound = std::min(*alpha + normal_pdf(z) * est.value, 1.0 - *alpha);
    }
    return est;
}

} // namespace lw
