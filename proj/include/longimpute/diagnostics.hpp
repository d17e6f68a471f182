#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimpute/dataset.hpp"

namespace longimpute {

// ---------------------------------------------------------------------------
// Discrete-time dropout hazard
// ---------------------------------------------------------------------------

// One person-period: subject `subject` was present at the previous visit and
// is at risk of dropping out at `visit` (0-based).
struct DropoutRecord {
    std::size_t subject = 0;
    std::size_t visit = 0;
    int event = 0;               // 1 when the outcome at `visit` is missing
    double month = 0.0;          // month of `visit`
    double art = 0.0;            // ART at the previous visit
    double delta = 0.0;          // change in sqrt(CD4) between the two previous visits
    double prednisolone = 0.0;
};

inline constexpr std::size_t kDropoutCovariates = 4;  // month, art, delta, prednisolone

// Person-period records for visits start_visit..n (1-based). ΔCD4 for the
// record at visit j is y_{j-1} - y_{j-2}, and 0 when j = 2.
std::vector<DropoutRecord> dropout_design(const LongitudinalDataset& ds, std::size_t start_visit = 2);

struct DropoutModelSpec {
    bool random_intercept = true;
    int quadrature_nodes = 15;  // odd, >= 5
    std::size_t start_visit = 2;

    void validate() const;
};

struct OddsRatioRow {
    std::string variable;
    double coef = 0.0;
    double coef_se = 0.0;
    double odds_ratio = 0.0;
    double se = 0.0;       // delta-method standard error of the odds ratio
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p = 1.0;
};

struct DropoutFit {
    std::vector<OddsRatioRow> odds_ratios;  // month, art, delta_cd4, prednisolone
    double intercept = 0.0;
    double intercept_se = 0.0;
    double sigma_b = 0.0;                   // random-intercept sd on the logit scale
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::size_t n_records = 0;
    std::size_t n_events = 0;
    std::size_t n_subjects = 0;

    const OddsRatioRow& row(const std::string& variable) const;
};

// Gauss-Hermite nodes/weights for weight exp(-x^2).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussHermite gauss_hermite(int n);

// Mixed-effects logistic hazard model. The subject random intercept is
// integrated out with adaptive Gauss-Hermite quadrature.
DropoutFit fit_dropout_logistic(std::span<const DropoutRecord> records, const DropoutModelSpec& spec = {});

// Marginal log-likelihood of the dropout model at (intercept, coefficients, sigma_b).
double dropout_loglik(std::span<const DropoutRecord> records, const Eigen::VectorXd& params,
                      const DropoutModelSpec& spec);

// ---------------------------------------------------------------------------
// Little's MCAR test
// ---------------------------------------------------------------------------

struct McarTestResult {
    double statistic = 0.0;
    int df = 0;
    double p = 1.0;
    int n_patterns = 0;
    int em_iterations = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

// Rows are subjects, columns visits; NaN marks a missing value.
McarTestResult little_mcar_test(const Eigen::MatrixXd& data);
McarTestResult little_mcar_test(const LongitudinalDataset& ds);

struct MvnEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    int iterations = 0;
    bool converged = false;
};

// ML mean and covariance under multivariate normality with missing values.
MvnEstimate mvn_em(const Eigen::MatrixXd& data, double rel_tol = 1e-8, int max_iter = 500);

// ---------------------------------------------------------------------------
// Pattern distribution across arms
// ---------------------------------------------------------------------------

struct ChiSquareResult {
    double statistic = 0.0;
    int df = 0;
    double p = 1.0;
    bool small_cell_warning = false;  // some expected count below 1
    double min_expected = 0.0;
};

// Pearson chi-square on an r x c table of counts. Empty rows/columns are dropped.
ChiSquareResult pearson_chi2(const Eigen::MatrixXd& counts);

// Arm x missingness-pattern contingency test.
ChiSquareResult pattern_chi2(const LongitudinalDataset& ds);

}  // namespace longimpute
