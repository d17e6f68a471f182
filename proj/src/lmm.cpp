#include "longimpute/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include "longimpute/optim.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double term_value(Term term, const SubjectRecord& s, const VisitSchedule& schedule, std::size_t j) {
    const double pred = s.arm == Arm::Prednisolone ? 1.0 : 0.0;
    const double month = schedule.month(j);
    const double art = static_cast<double>(s.art[j]);
    switch (term) {
        case Term::Intercept: return 1.0;
        case Term::Prednisolone: return pred;
        case Term::Month: return month;
        case Term::PrednisoloneMonth: return pred * month;
        case Term::Art: return art;
        case Term::PrednisoloneArt: return pred * art;
        case Term::Age: return s.age;
    }
    return 0.0;
}

void check_vc(const VarianceComponents& vc) {
    if (!(vc.sigma_e2 > 0.0) || !std::isfinite(vc.sigma_e2))
        throw DomainError("sigma_e2 must be positive");
    if (!(vc.sigma_b2 >= 0.0) || !std::isfinite(vc.sigma_b2))
        throw DomainError("sigma_b2 must be non-negative");
}

// Sufficient statistics grouped by the number of observed visits. With a
// random intercept, V_i depends on subject i only through n_i, so every
// likelihood quantity is a sum over these few groups.
struct Group {
    double n = 0.0;
    double count = 0.0;
    Eigen::MatrixXd A;   // sum X'X
    Eigen::MatrixXd S;   // sum s s',  s = X'1
    Eigen::VectorXd c;   // sum X'y
    Eigen::VectorXd d;   // sum s (1'y)
    double yy = 0.0;     // sum y'y
    double ty = 0.0;     // sum (1'y)^2
};

class GroupedStats {
public:
    GroupedStats(const LongitudinalDataset& ds, const ModelSpec& spec) : p_(spec.n_fixed()) {
        std::map<std::size_t, Group> groups;
        Eigen::VectorXd x(p_), s(p_);
        for (const auto& subj : ds.subjects()) {
            const auto n_i = subj.n_observed();
            if (n_i == 0) continue;
            auto& g = groups[n_i];
            if (g.count == 0.0) {
                g.n = static_cast<double>(n_i);
                g.A = Eigen::MatrixXd::Zero(p_, p_);
                g.S = Eigen::MatrixXd::Zero(p_, p_);
                g.c = Eigen::VectorXd::Zero(p_);
                g.d = Eigen::VectorXd::Zero(p_);
            }
            g.count += 1.0;
            s.setZero();
            double sum_y = 0.0;
            for (std::size_t j = 0; j < ds.n_visits(); ++j) {
                if (!subj.outcomes[j]) continue;
                const double y = *subj.outcomes[j];
                for (std::size_t k = 0; k < p_; ++k) x(k) = term_value(spec.fixed_terms[k], subj, ds.schedule(), j);
                g.A.noalias() += x * x.transpose();
                g.c += y * x;
                g.yy += y * y;
                s += x;
                sum_y += y;
            }
            g.S.noalias() += s * s.transpose();
            g.d += sum_y * s;
            g.ty += sum_y * sum_y;
            n_obs_ += n_i;
            ++n_subjects_;
        }
        for (auto& [n, g] : groups) groups_.push_back(std::move(g));
    }

    std::size_t p() const { return p_; }
    std::size_t n_obs() const { return n_obs_; }
    std::size_t n_subjects() const { return n_subjects_; }

    // X'V^{-1}X and X'V^{-1}y.
    void normal_equations(const VarianceComponents& vc, Eigen::MatrixXd& M, Eigen::VectorXd& rhs) const {
        M = Eigen::MatrixXd::Zero(p_, p_);
        rhs = Eigen::VectorXd::Zero(p_);
        for (const auto& g : groups_) {
            const double gamma = vc.sigma_b2 / (vc.sigma_e2 + g.n * vc.sigma_b2);
            M += g.A - gamma * g.S;
            rhs += g.c - gamma * g.d;
        }
        M /= vc.sigma_e2;
        rhs /= vc.sigma_e2;
    }

    Eigen::VectorXd gls(const VarianceComponents& vc, Eigen::MatrixXd* M_out = nullptr) const {
        Eigen::MatrixXd M;
        Eigen::VectorXd rhs;
        normal_equations(vc, M, rhs);
        Eigen::VectorXd beta = M.ldlt().solve(rhs);
        if (M_out) *M_out = std::move(M);
        return beta;
    }

    double loglik(const Eigen::VectorXd& beta, const VarianceComponents& vc) const {
        double logdet = 0.0, quad = 0.0;
        for (const auto& g : groups_) {
            const double lambda = vc.sigma_e2 + g.n * vc.sigma_b2;
            const double gamma = vc.sigma_b2 / lambda;
            logdet += g.count * ((g.n - 1.0) * std::log(vc.sigma_e2) + std::log(lambda));
            quad += rss(g, beta) - gamma * sum_sq_total(g, beta);
        }
        return -0.5 * (static_cast<double>(n_obs_) * kLog2Pi + logdet + quad / vc.sigma_e2);
    }

    // d loglik / d(log sigma_b2, log sigma_e2) at fixed beta.
    Eigen::Vector2d vc_gradient(const Eigen::VectorXd& beta, const VarianceComponents& vc) const {
        double db = 0.0, de = 0.0;
        const double se2 = vc.sigma_e2;
        for (const auto& g : groups_) {
            const double lambda = se2 + g.n * vc.sigma_b2;
            const double gamma = vc.sigma_b2 / lambda;
            const double U = sum_sq_total(g, beta);
            const double R = rss(g, beta);
            db += -0.5 * (g.count * g.n / lambda - U / (lambda * lambda));
            de += -0.5 * (g.count * g.n * (1.0 - gamma) / se2 -
                          (R - (2.0 * gamma - gamma * gamma * g.n) * U) / (se2 * se2));
        }
        return {db * vc.sigma_b2, de * se2};
    }

    Eigen::VectorXd beta_gradient(const Eigen::VectorXd& beta, const VarianceComponents& vc) const {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_);
        for (const auto& g : groups_) {
            const double gamma = vc.sigma_b2 / (vc.sigma_e2 + g.n * vc.sigma_b2);
            grad += (g.c - g.A * beta) - gamma * (g.d - g.S * beta);
        }
        return grad / vc.sigma_e2;
    }

    // ECM update of the variance components with beta held fixed.
    VarianceComponents em_vc(const Eigen::VectorXd& beta, const VarianceComponents& vc) const {
        double b_moment = 0.0, e_moment = 0.0;
        for (const auto& g : groups_) {
            const double lambda = vc.sigma_e2 + g.n * vc.sigma_b2;
            const double gamma = vc.sigma_b2 / lambda;
            const double post_var = vc.sigma_b2 * vc.sigma_e2 / lambda;
            const double U = sum_sq_total(g, beta);
            const double R = rss(g, beta);
            b_moment += gamma * gamma * U + g.count * post_var;
            e_moment += R - 2.0 * gamma * U + g.n * gamma * gamma * U + g.count * g.n * post_var;
        }
        return {b_moment / static_cast<double>(n_subjects_), e_moment / static_cast<double>(n_obs_)};
    }

private:
    static double rss(const Group& g, const Eigen::VectorXd& beta) {
        return g.yy - 2.0 * beta.dot(g.c) + beta.dot(g.A * beta);
    }
    // sum over the group of (1'r_i)^2
    static double sum_sq_total(const Group& g, const Eigen::VectorXd& beta) {
        return g.ty - 2.0 * beta.dot(g.d) + beta.dot(g.S * beta);
    }

    std::size_t p_;
    std::size_t n_obs_ = 0;
    std::size_t n_subjects_ = 0;
    std::vector<Group> groups_;
};

struct Profile {
    Eigen::VectorXd beta;
    Eigen::MatrixXd M;
    double value = 0.0;
};

Profile profile(const GroupedStats& stats, const VarianceComponents& vc, bool reml) {
    Profile out;
    out.beta = stats.gls(vc, &out.M);
    out.value = stats.loglik(out.beta, vc);
    if (reml) {
        const auto llt = out.M.llt();
        double logdet_m = 0.0;
        for (Eigen::Index k = 0; k < out.M.rows(); ++k) logdet_m += 2.0 * std::log(llt.matrixL()(k, k));
        out.value += 0.5 * static_cast<double>(stats.p()) * kLog2Pi - 0.5 * logdet_m;
    }
    return out;
}

VarianceComponents from_log(const Eigen::Vector2d& theta) {
    return {std::exp(theta(0)), std::exp(theta(1))};
}

std::vector<std::string> collinear_columns(const LongitudinalDataset& ds, const ModelSpec& spec) {
    const auto p = spec.n_fixed();
    Eigen::MatrixXd X(ds.n_observed_cells(), p);
    Eigen::Index row = 0;
    for (const auto& s : ds.subjects()) {
        const auto d = design_rows(s, ds.schedule(), spec);
        X.middleRows(row, d.X.rows()) = d.X;
        row += d.X.rows();
    }
    // Column scaling keeps the rank decision independent of units.
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const double norm = X.col(k).norm();
        if (norm > 0.0) X.col(k) /= norm;
    }
    std::vector<std::string> bad;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full(X);
    full.setThreshold(1e-10);
    if (full.rank() == static_cast<Eigen::Index>(p)) return bad;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(p); ++k) {
        Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
        for (std::size_t m = 0; m < kept.size(); ++m) sub.col(static_cast<Eigen::Index>(m)) = X.col(kept[m]);
        sub.col(sub.cols() - 1) = X.col(k);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
        qr.setThreshold(1e-10);
        if (qr.rank() == sub.cols()) kept.push_back(k);
        else bad.emplace_back(term_name(spec.fixed_terms[static_cast<std::size_t>(k)]));
    }
    return bad;
}

VarianceComponents starting_values(const GroupedStats& stats) {
    const Eigen::VectorXd beta = stats.gls({0.0, 1.0});
    const double total = std::max(-2.0 * (stats.loglik(beta, {0.0, 1.0}) + 0.5 * stats.n_obs() * kLog2Pi) /
                                      static_cast<double>(stats.n_obs()),
                                  1e-6);
    return {0.5 * total, 0.5 * total};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view term_name(Term term) {
    switch (term) {
        case Term::Intercept: return "intercept";
        case Term::Prednisolone: return "prednisolone";
        case Term::Month: return "month";
        case Term::PrednisoloneMonth: return "prednisolone:month";
        case Term::Art: return "art";
        case Term::PrednisoloneArt: return "prednisolone:art";
        case Term::Age: return "age";
    }
    return "?";
}

void ModelSpec::validate() const {
    const auto has = [&](Term t) { return std::find(fixed_terms.begin(), fixed_terms.end(), t) != fixed_terms.end(); };
    if (!has(Term::Intercept)) throw std::invalid_argument("model must contain an intercept");
    for (std::size_t a = 0; a < fixed_terms.size(); ++a)
        for (std::size_t b = a + 1; b < fixed_terms.size(); ++b)
            if (fixed_terms[a] == fixed_terms[b])
                throw std::invalid_argument("term '" + std::string(term_name(fixed_terms[a])) + "' repeated");
    if (has(Term::PrednisoloneMonth) && !(has(Term::Prednisolone) && has(Term::Month)))
        throw std::invalid_argument("prednisolone:month requires prednisolone and month");
    if (has(Term::PrednisoloneArt) && !(has(Term::Prednisolone) && has(Term::Art)))
        throw std::invalid_argument("prednisolone:art requires prednisolone and art");
}

std::vector<std::string> ModelSpec::coefficient_names() const {
    std::vector<std::string> out;
    for (auto t : fixed_terms) out.emplace_back(term_name(t));
    return out;
}

ModelSpec ModelSpec::intercept_only() {
    ModelSpec spec;
    spec.fixed_terms = {Term::Intercept};
    return spec;
}

SubjectDesign design_rows(const SubjectRecord& subject, const VisitSchedule& schedule, const ModelSpec& spec) {
    const auto n_obs = subject.n_observed();
    SubjectDesign d{Eigen::MatrixXd(n_obs, spec.n_fixed()), Eigen::VectorXd(n_obs)};
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < schedule.size(); ++j) {
        if (!subject.outcomes[j]) continue;
        for (std::size_t k = 0; k < spec.n_fixed(); ++k)
            d.X(row, static_cast<Eigen::Index>(k)) = term_value(spec.fixed_terms[k], subject, schedule, j);
        d.y(row) = *subject.outcomes[j];
        ++row;
    }
    return d;
}

double marginal_loglik(const LongitudinalDataset& ds, const ModelSpec& spec, const Eigen::VectorXd& beta,
                       const VarianceComponents& vc) {
    check_vc(vc);
    double total = 0.0;
    for (const auto& s : ds.subjects()) {
        const auto d = design_rows(s, ds.schedule(), spec);
        const double n = static_cast<double>(d.y.size());
        if (n == 0.0) continue;
        const Eigen::VectorXd r = d.y - d.X * beta;
        const double lambda = vc.sigma_e2 + n * vc.sigma_b2;
        const double logdet = (n - 1.0) * std::log(vc.sigma_e2) + std::log(lambda);
        const double sum_r = r.sum();
        const double quad = (r.squaredNorm() - vc.sigma_b2 / lambda * sum_r * sum_r) / vc.sigma_e2;
        total += -0.5 * (n * kLog2Pi + logdet + quad);
    }
    return total;
}

LoglikGradient marginal_loglik_gradient(const LongitudinalDataset& ds, const ModelSpec& spec,
                                        const Eigen::VectorXd& beta, const VarianceComponents& vc) {
    check_vc(vc);
    LoglikGradient g{Eigen::VectorXd::Zero(spec.n_fixed()), 0.0, 0.0};
    double d_b = 0.0, d_e = 0.0;
    const double se2 = vc.sigma_e2;
    for (const auto& s : ds.subjects()) {
        const auto d = design_rows(s, ds.schedule(), spec);
        const double n = static_cast<double>(d.y.size());
        if (n == 0.0) continue;
        const Eigen::VectorXd r = d.y - d.X * beta;
        const double lambda = se2 + n * vc.sigma_b2;
        const double gamma = vc.sigma_b2 / lambda;
        const double sum_r = r.sum();
        // V^{-1} r = (r - gamma * 1 1'r) / sigma_e2
        const Eigen::VectorXd vinv_r = (r.array() - gamma * sum_r).matrix() / se2;
        g.beta += d.X.transpose() * vinv_r;
        d_b += -0.5 * (n / lambda - (sum_r / lambda) * (sum_r / lambda));
        d_e += -0.5 * (n * (1.0 - gamma) / se2 - vinv_r.squaredNorm());
    }
    g.log_sigma_b2 = d_b * vc.sigma_b2;
    g.log_sigma_e2 = d_e * se2;
    return g;
}

LmmParams em_step(const LongitudinalDataset& ds, const ModelSpec& spec, const LmmParams& current) {
    check_vc(current.vc);
    const GroupedStats stats(ds, spec);
    LmmParams next;
    next.beta = stats.gls(current.vc);
    next.vc = stats.em_vc(next.beta, current.vc);
    next.vc.sigma_e2 = std::max(next.vc.sigma_e2, kSigmaE2Floor);
    return next;
}

LmmFit fit_ml(const LongitudinalDataset& ds, const ModelSpec& spec, const FitOptions& options) {
    spec.validate();
    if (ds.size() < 2) throw SampleSizeError("fit_ml needs at least two subjects");
    if (const auto bad = collinear_columns(ds, spec); !bad.empty()) {
        std::string cols;
        for (const auto& c : bad) cols += (cols.empty() ? "" : ", ") + c;
        throw SingularDesignError("design matrix is rank deficient; collinear columns: " + cols, bad);
    }

    const GroupedStats stats(ds, spec);
    LmmFit fit;
    fit.names = spec.coefficient_names();
    fit.n_subjects = stats.n_subjects();
    fit.n_obs = stats.n_obs();
    fit.reml = options.reml;

    const auto finish = [&](const VarianceComponents& vc) {
        const auto prof = profile(stats, vc, options.reml);
        fit.vc = vc;
        fit.beta = prof.beta;
        fit.beta_cov = prof.M.ldlt().solve(Eigen::MatrixXd::Identity(stats.p(), stats.p()));
        fit.beta_cov = 0.5 * (fit.beta_cov + fit.beta_cov.transpose());
        fit.loglik = prof.value;
    };

    if (!spec.random_intercept) {
        // Closed form: OLS with the ML residual variance.
        const Eigen::VectorXd beta = stats.gls({0.0, 1.0});
        const double rss = -2.0 * (stats.loglik(beta, {0.0, 1.0}) + 0.5 * stats.n_obs() * kLog2Pi);
        const double denom = static_cast<double>(stats.n_obs()) - (options.reml ? static_cast<double>(stats.p()) : 0.0);
        finish({0.0, std::max(rss / denom, kSigmaE2Floor)});
        fit.converged = true;
        fit.boundary = true;
    } else {
        const Eigen::Vector2d lower(std::log(kSigmaB2Floor), std::log(kSigmaE2Floor));
        VarianceComponents vc = starting_values(stats);
        int iterations = 0;
        bool converged = false;

        const bool use_em = options.algorithm != FitAlgorithm::Direct;
        if (use_em) {
            const int steps = options.algorithm == FitAlgorithm::Em ? options.max_iter : options.em_iterations;
            Eigen::VectorXd beta = stats.gls(vc);
            double ll = stats.loglik(beta, vc);
            for (int it = 0; it < steps; ++it) {
                Eigen::VectorXd beta_next = stats.gls(vc);
                VarianceComponents vc_next = stats.em_vc(beta_next, vc);
                vc_next.sigma_b2 = std::max(vc_next.sigma_b2, kSigmaB2Floor);
                vc_next.sigma_e2 = std::max(vc_next.sigma_e2, kSigmaE2Floor);
                const double ll_next = stats.loglik(beta_next, vc_next);
                const double step = std::max({(beta_next - beta).lpNorm<Eigen::Infinity>(),
                                              std::abs(std::log(vc_next.sigma_b2 / vc.sigma_b2)),
                                              std::abs(std::log(vc_next.sigma_e2 / vc.sigma_e2))});
                const double dll = std::abs(ll_next - ll);
                beta = std::move(beta_next);
                vc = vc_next;
                ll = ll_next;
                ++iterations;
                if (options.algorithm == FitAlgorithm::Em && dll < options.loglik_tol && step < options.param_tol) {
                    converged = true;
                    break;
                }
            }
        }

        if (options.algorithm != FitAlgorithm::Em) {
            const auto objective = [&](const Eigen::VectorXd& theta) {
                return -profile(stats, from_log(theta), options.reml).value;
            };
            optim::NelderMeadOptions nm;
            nm.f_tol = options.loglik_tol;
            nm.x_tol = options.param_tol;
            nm.max_iter = options.max_iter;
            nm.lower = Eigen::VectorXd(lower);
            nm.initial_step = use_em ? 0.1 : 0.7;
            const auto res = optim::nelder_mead(objective, Eigen::Vector2d(std::log(vc.sigma_b2), std::log(vc.sigma_e2)), nm);
            iterations += res.iterations;
            converged = res.converged;
            Eigen::Vector2d theta = res.x;

            // Newton polish on the profiled surface. Off the boundary this
            // drives the profiled score to round-off; on it only sigma_e2 moves.
            const auto score = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
                const VarianceComponents v = from_log(t);
                if (options.reml) return -optim::numerical_gradient(objective, t, 1e-5);
                const Eigen::VectorXd b = stats.gls(v);
                return stats.vc_gradient(b, v);
            };
            const bool at_floor = theta(0) <= lower(0) + 1e-6 ||
                                  std::exp(theta(0)) < 1e-8 * std::exp(theta(1));
            double best = -objective(theta);
            for (int it = 0; it < 50; ++it) {
                Eigen::VectorXd g = score(theta);
                Eigen::Vector2d step = Eigen::Vector2d::Zero();
                if (at_floor) {
                    theta(0) = lower(0);
                    g = score(theta);
                    const auto g1 = [&](const Eigen::VectorXd& t) { return score(t); };
                    const double h = optim::jacobian_of_gradient(g1, theta)(1, 1);
                    if (!(h < 0.0)) break;
                    step(1) = -g(1) / h;
                } else {
                    const Eigen::MatrixXd H = optim::jacobian_of_gradient(score, theta);
                    const Eigen::LDLT<Eigen::MatrixXd> ldlt(-H);
                    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
                    step = ldlt.solve(g);
                }
                if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
                double scale = 1.0;
                bool improved = false;
                for (int ls = 0; ls < 20; ++ls) {
                    Eigen::Vector2d trial = (theta + scale * step).cwiseMax(lower);
                    const double val = -objective(trial);
                    if (val >= best - 1e-12 * std::max(1.0, std::abs(best))) {
                        improved = val >= best;
                        theta = trial;
                        best = std::max(best, val);
                        break;
                    }
                    scale *= 0.5;
                }
                ++iterations;
                if (!improved) break;
            }
            vc = from_log(theta);
            fit.boundary = at_floor || vc.sigma_b2 <= kSigmaB2Floor * 1.000001;
        } else {
            fit.boundary = vc.sigma_b2 <= 1e-8 * vc.sigma_e2;
        }

        if (fit.boundary) vc.sigma_b2 = std::max(vc.sigma_b2, kSigmaB2Floor);
        finish(vc);
        fit.iterations = iterations;
        fit.converged = converged;
    }

    if (fit.vc.sigma_e2 <= kSigmaE2Floor * 1.0001)
        throw DegenerateVarianceError("residual variance collapsed to its floor (outcomes are exactly fitted)", fit);
    if (!fit.converged)
        throw NonConvergenceError("variance-component search did not converge in " +
                                      std::to_string(options.max_iter) + " iterations",
                                  fit);
    return fit;
}

std::vector<WaldRow> wald_table(const LmmFit& fit) {
    std::vector<WaldRow> rows;
    for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
        WaldRow row;
        row.name = fit.names.at(static_cast<std::size_t>(k));
        row.estimate = fit.beta(k);
        const double var = fit.beta_cov(k, k);
        row.se = var > 0.0 ? std::sqrt(var) : 0.0;
        if (!(row.se > 0.0)) throw DegenerateInferenceError("standard error of '" + row.name + "' is zero");
        row.z = row.estimate / row.se;
        row.p = stats::normal_two_sided_p(row.z);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_p_value(double p) {
    if (p < 1e-4) return "<0.0001";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", p);
    return buf;
}

}  // namespace longimpute
