#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "longimpute/dataset.hpp"

namespace longimpute {

struct LmmFit;

enum class Strategy { CompleteCase, Locf, Bocf, MultipleImputation };

std::string_view to_string(Strategy strategy);

struct CompletedDataset {
    LongitudinalDataset data;
    Strategy strategy;
    std::optional<int> imputation_index;     // 1..K for multiple imputation
    std::optional<std::uint64_t> seed_trace; // RNG stream seed for multiple imputation
};

// Completers only. Throws EmptyAnalysisSetError when nobody completed.
CompletedDataset complete_case(const LongitudinalDataset& ds);

// Carry the last observed / the baseline outcome into every missing visit.
// Both reject intermittent missingness.
CompletedDataset locf(const LongitudinalDataset& ds);
CompletedDataset bocf(const LongitudinalDataset& ds);

// Predictors of the visit-j regression. Everything refers to visits before j
// or to the visit itself for ART, which is always recorded.
struct ImputationModelSpec {
    bool prior_outcomes = true;
    bool arm = true;
    bool age = true;
    bool art_current = true;
    bool arm_art_current = true;   // prednisolone x ART at visit j
    bool art_history = true;       // ART and prednisolone x ART at visits < j
};

// Sequential Bayesian linear-regression imputation for monotone dropout.
// Draws sigma^2 from its scaled inverse chi-square posterior and the
// coefficients from their conditional normal posterior (flat prior on beta,
// Jeffreys on sigma^2), then imputes visit j for every subject missing it
// and feeds the draws forward as predictors of later visits.
std::vector<CompletedDataset> multiple_impute(const LongitudinalDataset& ds, int K,
                                              const ImputationModelSpec& spec = {},
                                              std::uint64_t seed = 1);

// Completed data with `strategy` and `imputation_index` columns appended.
void write_completed_csv(std::ostream& out, const CompletedDataset& completed);

// ---------------------------------------------------------------------------
// Rubin's rules
// ---------------------------------------------------------------------------

struct CoefficientEstimates {
    std::vector<std::string> names;
    Eigen::VectorXd estimate;
    Eigen::VectorXd variance;  // squared standard errors

    static CoefficientEstimates from_fit(const LmmFit& fit);
};

inline constexpr double kMaxPooledDf = 1e9;

struct PooledEstimate {
    std::vector<std::string> names;
    Eigen::VectorXd point;    // mean of the K estimates
    Eigen::VectorXd within;   // mean of the K variances
    Eigen::VectorXd between;  // sample variance of the K estimates
    Eigen::VectorXd total;    // within + (1 + 1/K) between
    Eigen::VectorXd df;       // capped at kMaxPooledDf
    int K = 0;

    double se(Eigen::Index k) const { return std::sqrt(total(k)); }
    double t_statistic(Eigen::Index k) const { return point(k) / se(k); }
    double p_value(Eigen::Index k) const;
    // Two-sided interval with a Student-t reference on df(k).
    std::pair<double, double> interval(Eigen::Index k, double level = 0.95) const;
};

PooledEstimate pool(std::span<const CoefficientEstimates> fits);

}  // namespace longimpute
