#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimpute/analysis.hpp"
#include "longimpute/simgen.hpp"

namespace longimpute {

struct StudyOptions {
    int n_reps = 200;
    int threads = 1;
    double level = 0.95;
    AnalysisOptions analysis;  // analysis.seed seeds MI; analysis.threads is ignored

    void validate() const;
};

struct ReplicateOutcome {
    bool ok = false;
    std::string error;
    Eigen::VectorXd estimate;
    Eigen::VectorXd se;
    std::vector<bool> covered;
};

struct ReplicateRecord {
    int index = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t analysis_seed = 0;
    std::vector<ReplicateOutcome> methods;  // aligned with StudyResult::methods
};

struct MethodSummary {
    Method method = Method::Ml;
    int n_ok = 0;
    int n_failed = 0;
    Eigen::VectorXd mean_bias;   // mean of estimate - truth
    Eigen::VectorXd bias_mcse;   // empirical sd / sqrt(n_ok)
    Eigen::VectorXd empirical_se;
    Eigen::VectorXd mean_se;
    Eigen::VectorXd coverage;
};

struct StudyResult {
    std::vector<std::string> names;
    Eigen::VectorXd truth;
    std::vector<Method> methods;
    std::vector<MethodSummary> summaries;
    std::vector<ReplicateRecord> replicates;

    const MethodSummary& summary(Method method) const;
};

// Truth vector for the coefficients of `spec`.
Eigen::VectorXd generator_truth(const TrialGeneratorConfig& config, const ModelSpec& spec);

// Each replicate draws data with derive_seed(config.seed, r) and imputes with
// derive_seed(options.analysis.seed, r). Summaries are accumulated in
// replicate order, so results do not depend on the thread count.
StudyResult replicate_study(const TrialGeneratorConfig& config, const StudyOptions& options);

struct PairedDifference {
    double mean = 0.0;
    double mcse = 0.0;
    int n = 0;
};

// Mean and Monte Carlo se of (estimate_a - estimate_b) over replicates where both succeeded.
PairedDifference paired_difference(const StudyResult& study, Method a, Method b, Eigen::Index coefficient);

}  // namespace longimpute
