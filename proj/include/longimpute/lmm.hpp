#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "longimpute/dataset.hpp"
#include "longimpute/errors.hpp"

namespace longimpute {

// Fixed-effect columns of the random-intercept model for sqrt(CD4):
//   y_ij = b0 + b1 pred_i + b2 month_j + b3 pred_i month_j + b4 art_ij
//        + b5 pred_i art_ij + b6 age_i + u_i + e_ij
enum class Term { Intercept, Prednisolone, Month, PrednisoloneMonth, Art, PrednisoloneArt, Age };

std::string_view term_name(Term term);

struct ModelSpec {
    std::vector<Term> fixed_terms{Term::Intercept,   Term::Prednisolone,    Term::Month,
                                  Term::PrednisoloneMonth, Term::Art, Term::PrednisoloneArt,
                                  Term::Age};
    bool random_intercept = true;

    // Throws std::invalid_argument when the intercept is absent, a term repeats,
    // or an interaction lacks one of its main effects.
    void validate() const;
    std::size_t n_fixed() const noexcept { return fixed_terms.size(); }
    std::vector<std::string> coefficient_names() const;

    static ModelSpec intercept_only();
};

struct VarianceComponents {
    double sigma_b2 = 1.0;  // random-intercept variance
    double sigma_e2 = 1.0;  // residual variance
};

inline constexpr double kSigmaB2Floor = 1e-12;
inline constexpr double kSigmaE2Floor = 1e-10;

struct SubjectDesign {
    Eigen::MatrixXd X;  // one row per observed visit
    Eigen::VectorXd y;
};

SubjectDesign design_rows(const SubjectRecord& subject, const VisitSchedule& schedule,
                          const ModelSpec& spec);

// Observed-data log-likelihood summed over subjects, using only observed visits.
double marginal_loglik(const LongitudinalDataset& ds, const ModelSpec& spec,
                       const Eigen::VectorXd& beta, const VarianceComponents& vc);

struct LoglikGradient {
    Eigen::VectorXd beta;
    double log_sigma_b2 = 0.0;
    double log_sigma_e2 = 0.0;
};

// Analytic gradient of marginal_loglik in (beta, log sigma_b2, log sigma_e2).
LoglikGradient marginal_loglik_gradient(const LongitudinalDataset& ds, const ModelSpec& spec,
                                        const Eigen::VectorXd& beta, const VarianceComponents& vc);

enum class FitAlgorithm { Direct, Em, EmThenDirect };

struct FitOptions {
    FitAlgorithm algorithm = FitAlgorithm::Direct;
    int max_iter = 5000;
    int em_iterations = 25;       // warm-up steps for EmThenDirect
    double loglik_tol = 1e-8;
    double param_tol = 1e-6;
    bool reml = false;            // not used by any acceptance oracle
};

struct LmmFit {
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_cov;
    VarianceComponents vc;
    double loglik = 0.0;
    std::size_t n_subjects = 0;
    std::size_t n_obs = 0;
    bool converged = false;
    int iterations = 0;
    bool boundary = false;  // sigma_b2 sits on its floor
    bool reml = false;
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, LmmFit best) : Error(what), best_(std::move(best)) {}
    const LmmFit& best() const noexcept { return best_; }

private:
    LmmFit best_;
};

// Residual variance collapsed onto its floor; the fixed effects are still reported.
class DegenerateVarianceError : public Error {
public:
    DegenerateVarianceError(const std::string& what, LmmFit fit) : Error(what), fit_(std::move(fit)) {}
    const LmmFit& fit() const noexcept { return fit_; }

private:
    LmmFit fit_;
};

// Maximum likelihood fit on the observed rows of `ds`. Fixed effects are
// profiled out by GLS; the variance components are searched on the log scale.
LmmFit fit_ml(const LongitudinalDataset& ds, const ModelSpec& spec = {}, const FitOptions& options = {});

struct LmmParams {
    Eigen::VectorXd beta;
    VarianceComponents vc;
};

// One ECM iteration: GLS update of beta at the current variance components,
// then an EM update of (sigma_b2, sigma_e2) with the random intercepts as
// missing data. The observed-data log-likelihood never decreases.
LmmParams em_step(const LongitudinalDataset& ds, const ModelSpec& spec, const LmmParams& current);

struct WaldRow {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p = 1.0;
};

std::vector<WaldRow> wald_table(const LmmFit& fit);

// Values below 1e-4 print as "<0.0001".
std::string format_p_value(double p);

}  // namespace longimpute
