#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "longimpute/diagnostics.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/optim.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr const char* kCovariateNames[kDropoutCovariates] = {"month", "art", "delta_cd4", "prednisolone"};

double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct SubjectBlock {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct Prepared {
    Eigen::MatrixXd X;  // intercept + covariates
    Eigen::VectorXd y;
    std::vector<SubjectBlock> blocks;
};

Prepared prepare(std::span<const DropoutRecord> records) {
    Prepared p;
    const auto n = static_cast<Eigen::Index>(records.size());
    p.X.resize(n, 1 + kDropoutCovariates);
    p.y.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& rec = records[static_cast<std::size_t>(r)];
        p.X.row(r) << 1.0, rec.month, rec.art, rec.delta, rec.prednisolone;
        p.y(r) = rec.event;
        if (r == 0 || rec.subject != records[static_cast<std::size_t>(r - 1)].subject)
            p.blocks.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(r)});
        p.blocks.back().end = static_cast<std::size_t>(r) + 1;
    }
    return p;
}

// log of the subject's marginal likelihood, integrating b ~ N(0, sigma^2)
// with adaptive Gauss-Hermite quadrature centred at the posterior mode.
double subject_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, double sigma, const GaussHermite& gh) {
    const auto n = eta.size();
    const auto conditional = [&](double b) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) s += y(j) * (eta(j) + b) - log1pexp(eta(j) + b);
        return s;
    };
    if (std::abs(sigma) < 1e-8) return conditional(0.0);

    const double var = sigma * sigma;
    const auto log_joint = [&](double b) {
        return conditional(b) - 0.5 * b * b / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
    };
    double b = 0.0, curvature = 0.0;
    for (int it = 0; it < 100; ++it) {
        double grad = -b / var, hess = -1.0 / var;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double pj = stats::inv_logit(eta(j) + b);
            grad += y(j) - pj;
            hess -= pj * (1.0 - pj);
        }
        curvature = hess;
        double step = -grad / hess;
        // The joint is strictly concave; damp only to guard the first steps.
        step = std::clamp(step, -5.0, 5.0);
        b += step;
        if (std::abs(step) < 1e-12 * (1.0 + std::abs(b))) break;
    }
    {
        double hess = -1.0 / var;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double pj = stats::inv_logit(eta(j) + b);
            hess -= pj * (1.0 - pj);
        }
        curvature = hess;
    }
    const double scale = std::sqrt(2.0) / std::sqrt(-curvature);
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(gh.nodes.size());
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
        const double x = gh.nodes[k];
        terms[k] = std::log(gh.weights[k]) + x * x + log_joint(b + scale * x);
        max_term = std::max(max_term, terms[k]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    return max_term + std::log(sum) + std::log(scale);
}

double total_loglik(const Prepared& p, const Eigen::VectorXd& params, bool random_intercept, const GaussHermite& gh) {
    const Eigen::VectorXd beta = params.head(1 + kDropoutCovariates);
    const double sigma = random_intercept ? params(static_cast<Eigen::Index>(1 + kDropoutCovariates)) : 0.0;
    const Eigen::VectorXd eta = p.X * beta;
    double total = 0.0;
    for (const auto& blk : p.blocks) {
        const auto b = static_cast<Eigen::Index>(blk.begin);
        const auto len = static_cast<Eigen::Index>(blk.end - blk.begin);
        total += subject_loglik(eta.segment(b, len), p.y.segment(b, len), sigma, gh);
    }
    return total;
}

// Plain logistic regression by Newton-Raphson; detects separation.
Eigen::VectorXd logistic_start(const Prepared& p) {
    const auto q = p.X.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
    const double ybar = p.y.mean();
    beta(0) = stats::logit(ybar);
    double ll_prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        const Eigen::VectorXd eta = p.X * beta;
        Eigen::VectorXd mu(eta.size()), w(eta.size());
        double ll = 0.0;
        for (Eigen::Index r = 0; r < eta.size(); ++r) {
            mu(r) = stats::inv_logit(eta(r));
            w(r) = mu(r) * (1.0 - mu(r));
            ll += p.y(r) * eta(r) - log1pexp(eta(r));
        }
        const Eigen::MatrixXd info = p.X.transpose() * w.asDiagonal() * p.X;
        const Eigen::VectorXd score = p.X.transpose() * (p.y - mu);
        const Eigen::VectorXd step = info.ldlt().solve(score);
        beta += step;
        if (!beta.allFinite() || beta.tail(q - 1).lpNorm<Eigen::Infinity>() > 30.0 || ll > -1e-8)
            throw SeparationError("dropout outcomes are completely separated by the covariates");
        if (std::abs(ll - ll_prev) < 1e-12 && step.lpNorm<Eigen::Infinity>() < 1e-10) break;
        ll_prev = ll;
    }
    return beta;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<DropoutRecord> dropout_design(const LongitudinalDataset& ds, std::size_t start_visit) {
    if (!ds.is_monotone()) throw IntermittentMissingnessError("dropout_design requires monotone missingness");
    if (start_visit < 2) throw std::invalid_argument("dropout records start at visit 2 or later");
    std::vector<DropoutRecord> out;
    const auto n = ds.n_visits();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.subjects()[i];
        const auto& pat = ds.patterns()[i];
        const std::size_t D = pat.dropout_occasion ? static_cast<std::size_t>(*pat.dropout_occasion) : n + 1;
        const std::size_t last = std::min(D, n);
        for (std::size_t j = start_visit; j <= last; ++j) {  // 1-based visit at risk
            DropoutRecord r;
            r.subject = i;
            r.visit = j - 1;
            r.event = j == D ? 1 : 0;
            r.month = ds.schedule().month(j - 1);
            r.art = s.art[j - 2];
            r.delta = j >= 3 ? *s.outcomes[j - 2] - *s.outcomes[j - 3] : 0.0;
            r.prednisolone = s.arm == Arm::Prednisolone ? 1.0 : 0.0;
            out.push_back(r);
        }
    }
    return out;
}

void DropoutModelSpec::validate() const {
    if (quadrature_nodes < 5 || quadrature_nodes % 2 == 0)
        throw std::invalid_argument("quadrature_nodes must be odd and at least 5");
    if (start_visit < 2) throw std::invalid_argument("start_visit must be at least 2");
}

const OddsRatioRow& DropoutFit::row(const std::string& variable) const {
    for (const auto& r : odds_ratios)
        if (r.variable == variable) return r;
    throw std::out_of_range("no odds ratio for '" + variable + "'");
}

GaussHermite gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("quadrature needs at least one node");
    // Golub-Welsch: eigen-decomposition of the Jacobi matrix of the Hermite recurrence.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    GaussHermite gh;
    for (int k = 0; k < n; ++k) {
        gh.nodes.push_back(eig.eigenvalues()(k));
        const double v0 = eig.eigenvectors()(0, k);
        gh.weights.push_back(std::sqrt(std::numbers::pi) * v0 * v0);
    }
    return gh;
}

double dropout_loglik(std::span<const DropoutRecord> records, const Eigen::VectorXd& params,
                      const DropoutModelSpec& spec) {
    spec.validate();
    return total_loglik(prepare(records), params, spec.random_intercept, gauss_hermite(spec.quadrature_nodes));
}

DropoutFit fit_dropout_logistic(std::span<const DropoutRecord> records, const DropoutModelSpec& spec) {
    spec.validate();
    const auto p = prepare(records);
    const double events = p.y.sum();
    if (events == 0.0) throw DegenerateOutcomeError("no dropout events");
    if (events == static_cast<double>(p.y.size())) throw DegenerateOutcomeError("every record is a dropout event");

    {
        Eigen::MatrixXd scaled = p.X;
        for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
            const double norm = scaled.col(c).norm();
            if (norm > 0.0) scaled.col(c) /= norm;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
        qr.setThreshold(1e-10);
        if (qr.rank() < scaled.cols())
            throw SingularDesignError("dropout design matrix is rank deficient", {});
    }

    const auto gh = gauss_hermite(spec.quadrature_nodes);
    const Eigen::VectorXd beta0 = logistic_start(p);
    const auto q = static_cast<Eigen::Index>(1 + kDropoutCovariates + (spec.random_intercept ? 1 : 0));
    Eigen::VectorXd start(q);
    start.head(beta0.size()) = beta0;
    if (spec.random_intercept) start(q - 1) = 0.5;

    const auto objective = [&](const Eigen::VectorXd& theta) { return -total_loglik(p, theta, spec.random_intercept, gh); };
    const auto gradient = [&](const Eigen::VectorXd& theta) { return optim::numerical_gradient(objective, theta, 1e-6); };
    optim::BfgsOptions bopt;
    bopt.grad_tol = 1e-5;
    const auto res = optim::bfgs(objective, gradient, start, bopt);
    Eigen::VectorXd theta = res.x;
    if (theta.head(1 + kDropoutCovariates).tail(kDropoutCovariates).lpNorm<Eigen::Infinity>() > 30.0)
        throw SeparationError("dropout coefficients diverge (separation)");

    // Observed information; falls back to the fixed-effect block when the
    // random-intercept direction is flat (sigma_b on the boundary).
    const Eigen::MatrixXd H = optim::numerical_hessian(objective, theta, 1e-4);
    Eigen::MatrixXd cov;
    {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        const bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 1e-10).all();
        if (pd) {
            cov = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
        } else {
            const auto k = static_cast<Eigen::Index>(1 + kDropoutCovariates);
            cov = Eigen::MatrixXd::Zero(q, q);
            cov.topLeftCorner(k, k) = H.topLeftCorner(k, k).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
        }
    }

    DropoutFit fit;
    fit.loglik = -res.fx;
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.n_records = records.size();
    fit.n_events = static_cast<std::size_t>(events);
    fit.n_subjects = p.blocks.size();
    fit.intercept = theta(0);
    fit.intercept_se = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.sigma_b = spec.random_intercept ? std::abs(theta(q - 1)) : 0.0;
    for (std::size_t c = 0; c < kDropoutCovariates; ++c) {
        const auto k = static_cast<Eigen::Index>(c + 1);
        OddsRatioRow row;
        row.variable = kCovariateNames[c];
        row.coef = theta(k);
        row.coef_se = std::sqrt(std::max(cov(k, k), 0.0));
        row.odds_ratio = std::exp(row.coef);
        row.se = row.odds_ratio * row.coef_se;
        row.ci_low = std::exp(row.coef - kZ975 * row.coef_se);
        row.ci_high = std::exp(row.coef + kZ975 * row.coef_se);
        row.p = row.coef_se > 0.0 ? stats::normal_two_sided_p(row.coef / row.coef_se) : 1.0;
        fit.odds_ratios.push_back(row);
    }
    return fit;
}

}  // namespace longimpute
