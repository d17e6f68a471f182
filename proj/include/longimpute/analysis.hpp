#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "longimpute/dataset.hpp"
#include "longimpute/impute.hpp"
#include "longimpute/lmm.hpp"

namespace longimpute {

enum class Method { Cc, Locf, Bocf, Ml, Mi };

inline constexpr Method kAllMethods[] = {Method::Cc, Method::Locf, Method::Bocf, Method::Ml, Method::Mi};

std::string_view to_string(Method method);   // "cc", "locf", ...
std::string_view display_name(Method method); // "CC", "LOCF", ...
std::optional<Method> parse_method(std::string_view token);
// Comma-separated list; throws std::invalid_argument on unknown or repeated names.
std::vector<Method> parse_methods(std::string_view list);

struct AnalysisOptions {
    std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    int mi_k = 25;
    std::uint64_t seed = 1;
    int threads = 1;
    ModelSpec model;
    ImputationModelSpec imputation;
    FitOptions fit;

    // Throws ConfigError.
    void validate() const;
};

struct MethodResult {
    Method method = Method::Ml;
    bool ok = false;
    std::string error;
    std::vector<std::string> names;
    Eigen::VectorXd estimate;
    Eigen::VectorXd se;
    Eigen::VectorXd p;
    Eigen::VectorXd df;  // Rubin df for MI, infinity otherwise
    std::optional<VarianceComponents> vc;  // single-fit methods only
    std::optional<double> loglik;
    std::size_t n_subjects = 0;

    // Normal reference for single fits, Student t on df for MI.
    std::pair<double, double> interval(Eigen::Index k, double level = 0.95) const;
};

// Runs one method. Errors are captured in the result, never thrown.
MethodResult run_method(const LongitudinalDataset& ds, Method method, const AnalysisOptions& options);

// One result per selected method, in the order given.
std::vector<MethodResult> run_analysis(const LongitudinalDataset& ds, const AnalysisOptions& options);

}  // namespace longimpute
