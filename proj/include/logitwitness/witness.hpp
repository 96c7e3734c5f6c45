#pragma once

// Witness functions w(z) = phi(z)^T beta learned by maximizing the two-sample
// separation objective
//
//     J(beta) = psi^T beta / sqrt(beta^T S0 beta),
//     psi = sum_i mean_t phi(z_it^machine) - sum_i mean_t phi(z_it^human),
//     S0  = sum_i Cov_t phi(z_it^human) + sum_i Cov_t phi(z_it^machine),
//
// whose maximizer is beta ∝ S^{-1} psi (S = S0 plus a scaled ridge).

#include <cmath>
#include <concepts>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "logitwitness/error.hpp"
#include "logitwitness/parallel.hpp"
#include "logitwitness/spline.hpp"
#include "logitwitness/trace.hpp"

namespace lw {

inline constexpr int witness_file_version = 1;
inline constexpr double default_ridge = 1e-6;

template <typename W>
concept Witness = requires(const W& w, double z) {
    { w(z) } -> std::convertible_to<double>;
};

/// w(z) = z; turns the adaptive statistic into the Fast-DetectGPT statistic.
struct IdentityWitness {
    double operator()(double z) const noexcept { return z; }
};

/// c * w(z) + shift, used to probe invariances.
template <Witness W>
struct AffineWitness {
    W inner;
    double scale = 1.0;
    double shift = 0.0;
    double operator()(double z) const { return scale * inner(z) + shift; }
};

struct FeatureMoments {
    Eigen::VectorXd mean_machine;
    Eigen::VectorXd mean_human;
    Eigen::MatrixXd sigma_human;
    Eigen::MatrixXd sigma_machine;
    std::size_t n_human = 0;
    std::size_t n_machine = 0;

    Eigen::Index dim() const noexcept { return mean_human.size(); }
    Eigen::VectorXd psi() const { return mean_machine - mean_human; }
};

namespace detail {

struct PassageMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Token-averaged features and within-passage covariance
// (1/L) Z^T Z - mu mu^T for one passage.
inline PassageMoments passage_moments(const PassageTrace& passage, const SplineBasis& basis) {
    const auto d = static_cast<Eigen::Index>(basis.dim());
    const std::size_t width = static_cast<std::size_t>(basis.degree()) + 1;
    PassageMoments m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
    double local[32];
    for (const auto& tok : passage.tokens) {
        const auto first = static_cast<Eigen::Index>(basis.eval_local(tok.observed_logprob, std::span<double>(local, width)));
        for (std::size_t a = 0; a < width; ++a) {
            const Eigen::Index ia = first + static_cast<Eigen::Index>(a);
            m.mean[ia] += local[a];
            for (std::size_t b = 0; b < width; ++b) {
                m.cov(ia, first + static_cast<Eigen::Index>(b)) += local[a] * local[b];
            }
        }
    }
    const double inv_len = 1.0 / static_cast<double>(passage.tokens.size());
    m.mean *= inv_len;
    m.cov *= inv_len;
    m.cov.noalias() -= m.mean * m.mean.transpose();
    return m;
}

inline void accumulate_side(const TraceCorpus& corpus, const SplineBasis& basis, unsigned jobs,
                            Eigen::VectorXd& mean, Eigen::MatrixXd& sigma) {
    std::vector<PassageMoments> parts(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t i) {
        parts[i] = passage_moments(corpus.passages[i], basis);
    });
    // Index-ordered reduction keeps results bit-stable across job counts.
    for (const auto& p : parts) {
        mean += p.mean;
        sigma += p.cov;
    }
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
}

} // namespace detail

/// Sums per-passage feature means and within-passage covariances for both
/// corpora. Roles come from the arguments, not from passage labels.
inline FeatureMoments accumulate_moments(const TraceCorpus& human, const TraceCorpus& machine,
                                         const SplineBasis& basis, unsigned jobs = 1) {
    if (human.empty() || machine.empty()) {
        throw domain_error("accumulate_moments: both corpora must be non-empty");
    }
    for (const auto* corpus : {&human, &machine}) {
        for (const auto& p : corpus->passages) {
            if (p.tokens.empty()) {
                throw domain_error("passage '" + p.id + "' has zero length");
            }
        }
    }
    const auto d = static_cast<Eigen::Index>(basis.dim());
    FeatureMoments m{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d),
                     Eigen::MatrixXd::Zero(d, d), human.size(), machine.size()};
    detail::accumulate_side(human, basis, jobs, m.mean_human, m.sigma_human);
    detail::accumulate_side(machine, basis, jobs, m.mean_machine, m.sigma_machine);
    return m;
}

/// J(beta) = psi^T beta / sqrt(beta^T S0 beta). +inf when the quadratic form vanishes.
inline double separation_objective(const Eigen::VectorXd& psi, const Eigen::MatrixXd& s0, const Eigen::VectorXd& beta) {
    const double q = beta.dot(s0 * beta);
    if (!(q > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    return psi.dot(beta) / std::sqrt(q);
}

/// Lower-triangular Cholesky factor; throws if `a` is not positive definite.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (Eigen::Index k = 0; k < j; ++k) {
            diag -= l(j, k) * l(j, k);
        }
        if (!(diag > 0.0)) {
            throw domain_error("matrix is not positive definite; retry with a positive ridge");
        }
        l(j, j) = std::sqrt(diag);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (Eigen::Index k = 0; k < j; ++k) {
                s -= l(i, k) * l(j, k);
            }
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

inline Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& l, const Eigen::VectorXd& b) {
    const Eigen::Index n = l.rows();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = b[i];
        for (Eigen::Index k = 0; k < i; ++k) {
            s -= l(i, k) * y[k];
        }
        y[i] = s / l(i, i);
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (Eigen::Index k = i + 1; k < n; ++k) {
            s -= l(k, i) * x[k];
        }
        x[i] = s / l(i, i);
    }
    return x;
}

/// Both characterizations of the maximizer, for cross-checking.
struct ClosedFormSolution {
    Eigen::VectorXd beta;            // S^{-1/2} alpha_hat via eigendecomposition
    Eigen::VectorXd beta_linsolve;   // S^{-1} psi / sqrt(psi^T S^{-1} psi) via Cholesky
    double objective = 0.0;          // J(beta) against the unregularized S0
    double route_discrepancy = 0.0;  // ||beta - beta_linsolve|| / ||beta||
};

/// Maximizes J over directions. S = S0 + ridge * (trace(S0)/d) * I.
inline ClosedFormSolution solve_closed_form(const Eigen::MatrixXd& s0, const Eigen::VectorXd& psi, double ridge) {
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw domain_error("ridge must be a finite non-negative number");
    }
    const Eigen::Index d = psi.size();
    if (s0.rows() != d || s0.cols() != d) {
        throw domain_error("moment dimensions disagree");
    }
    if (!psi.allFinite() || !s0.allFinite()) {
        throw domain_error("non-finite moments");
    }
    if (psi.norm() == 0.0) {
        throw domain_error("no separation: machine and human feature means coincide");
    }
    Eigen::MatrixXd s = 0.5 * (s0 + s0.transpose());
    s.diagonal().array() += ridge * s0.trace() / static_cast<double>(d);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) {
        throw domain_error("eigendecomposition failed");
    }
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double lmax = lambda.maxCoeff();
    const double lmin = lambda.minCoeff();
    if (!(lmax > 0.0) || !(lmin > 1e-14 * lmax)) {
        std::ostringstream os;
        os << "covariance is singular (eigenvalues in [" << lmin << ", " << lmax
           << "]); retry with a positive ridge, e.g. --ridge 1e-6";
        throw domain_error(os.str());
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd inv_sqrt = lambda.array().sqrt().inverse().matrix();
    const Eigen::MatrixXd s_inv_half = v * inv_sqrt.asDiagonal() * v.transpose();

    const Eigen::VectorXd alpha_tilde = s_inv_half * psi;
    const Eigen::VectorXd alpha_hat = alpha_tilde / alpha_tilde.norm();

    ClosedFormSolution out;
    out.beta = s_inv_half * alpha_hat;

    const Eigen::MatrixXd l = cholesky_lower(s);
    const Eigen::VectorXd x = cholesky_solve(l, psi);
    out.beta_linsolve = x / std::sqrt(psi.dot(x));

    out.route_discrepancy = (out.beta - out.beta_linsolve).norm() / out.beta.norm();
    out.objective = separation_objective(psi, s0, out.beta);
    return out;
}

struct TrainingInfo {
    std::vector<std::string> corpus_ids;
    std::size_t n_human = 0;
    std::size_t n_machine = 0;

    bool operator==(const TrainingInfo&) const = default;
};

class WitnessModel {
public:
    WitnessModel(SplineBasis basis, std::vector<double> beta, double objective, double ridge, TrainingInfo info = {})
        : basis_(std::move(basis)), beta_(std::move(beta)), objective_(objective), ridge_(ridge), info_(std::move(info)) {
        if (beta_.size() != basis_.dim()) {
            throw domain_error("witness has " + std::to_string(beta_.size()) + " coefficients but the basis has d=" +
                               std::to_string(basis_.dim()));
        }
        bool nonzero = false;
        for (double b : beta_) {
            if (!std::isfinite(b)) {
                throw domain_error("witness coefficients must be finite");
            }
            nonzero = nonzero || b != 0.0;
        }
        if (!nonzero) {
            throw domain_error("witness coefficients are all zero");
        }
    }

    double operator()(double z) const { return basis_.dot(z, beta_); }

    const SplineBasis& basis() const noexcept { return basis_; }
    const std::vector<double>& beta() const noexcept { return beta_; }
    double objective() const noexcept { return objective_; }
    double ridge() const noexcept { return ridge_; }
    const TrainingInfo& trained_on() const noexcept { return info_; }

    bool operator==(const WitnessModel& o) const {
        const bool same_objective = objective_ == o.objective_ || (std::isnan(objective_) && std::isnan(o.objective_));
        return basis_ == o.basis_ && beta_ == o.beta_ && same_objective && ridge_ == o.ridge_ && info_ == o.info_;
    }

private:
    SplineBasis basis_;
    std::vector<double> beta_;
    double objective_;
    double ridge_;
    TrainingInfo info_;
};

inline WitnessModel solve_witness(const FeatureMoments& moments, const SplineBasis& basis, double ridge = default_ridge,
                                  TrainingInfo info = {}) {
    if (static_cast<std::size_t>(moments.dim()) != basis.dim()) {
        throw domain_error("moment dimension does not match the basis");
    }
    const Eigen::MatrixXd s0 = moments.sigma_human + moments.sigma_machine;
    const Eigen::VectorXd psi = moments.psi();
    const double scale = moments.mean_machine.norm() + moments.mean_human.norm();
    if (psi.norm() <= 1e-12 * scale) {
        throw domain_error("no separation: machine and human feature means coincide");
    }
    const auto sol = solve_closed_form(s0, psi, ridge);
    info.n_human = moments.n_human;
    info.n_machine = moments.n_machine;
    return WitnessModel(basis, std::vector<double>(sol.beta.data(), sol.beta.data() + sol.beta.size()), sol.objective,
                        ridge, std::move(info));
}

/// Builds the basis from the pooled observed log-probs of both corpora, then
/// accumulates moments and solves.
inline WitnessModel train_witness(const TraceCorpus& human, const TraceCorpus& machine, int n_base = default_n_base,
                                  int degree = default_degree, double ridge = default_ridge, TrainingInfo info = {},
                                  unsigned jobs = 1) {
    std::vector<double> pooled;
    for (const auto* corpus : {&human, &machine}) {
        for (const auto& p : corpus->passages) {
            for (const auto& tok : p.tokens) {
                pooled.push_back(tok.observed_logprob);
            }
        }
    }
    auto basis = build_basis(pooled, n_base, degree);
    const auto moments = accumulate_moments(human, machine, basis, jobs);
    return solve_witness(moments, basis, ridge, std::move(info));
}

namespace detail {

inline nlohmann::ordered_json finite_or_null(double x) {
    if (std::isfinite(x)) {
        return x;
    }
    return nullptr;
}

} // namespace detail

inline void save_model(const WitnessModel& model, std::ostream& out) {
    nlohmann::ordered_json j;
    j["version"] = witness_file_version;
    j["degree"] = model.basis().degree();
    j["knots"] = model.basis().interior_knots();
    j["boundary"] = {model.basis().lo(), model.basis().hi()};
    j["beta"] = model.beta();
    j["objective"] = detail::finite_or_null(model.objective());
    j["ridge"] = model.ridge();
    nlohmann::ordered_json info;
    info["corpus_ids"] = model.trained_on().corpus_ids;
    info["n_human"] = model.trained_on().n_human;
    info["n_machine"] = model.trained_on().n_machine;
    j["trained_on"] = std::move(info);
    out << j.dump() << '\n';
}

inline std::string save_model(const WitnessModel& model) {
    std::ostringstream out;
    save_model(model, out);
    return out.str();
}

inline WitnessModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw domain_error(std::string("malformed witness file: ") + e.what());
    }
    try {
        if (!j.contains("version") || !j["version"].is_number_integer()) {
            throw domain_error("witness file has no version tag");
        }
        if (j["version"].get<int>() != witness_file_version) {
            throw domain_error("unsupported witness file version " + j["version"].dump());
        }
        const auto boundary = j.at("boundary").get<std::vector<double>>();
        if (boundary.size() != 2) {
            throw domain_error("witness boundary must have two entries");
        }
        SplineBasis basis(j.at("degree").get<int>(), j.at("knots").get<std::vector<double>>(), boundary[0], boundary[1]);
        const auto& obj = j.at("objective");
        const double objective = obj.is_null() ? std::numeric_limits<double>::infinity() : obj.get<double>();
        TrainingInfo info;
        if (auto it = j.find("trained_on"); it != j.end()) {
            info.corpus_ids = it->value("corpus_ids", std::vector<std::string>{});
            info.n_human = it->value("n_human", std::size_t{0});
            info.n_machine = it->value("n_machine", std::size_t{0});
        }
        return WitnessModel(std::move(basis), j.at("beta").get<std::vector<double>>(), objective,
                            j.at("ridge").get<double>(), std::move(info));
    } catch (const nlohmann::json::exception& e) {
        throw domain_error(std::string("malformed witness file: ") + e.what());
    }
}

inline WitnessModel load_model(std::string_view text) {
    std::istringstream in{std::string(text)};
    return load_model(in);
}

} // namespace lw
