#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "longimpute/analysis.hpp"
#include "longimpute/simgen.hpp"

namespace longimpute {

// Settings shared by `simulate` and `study`. Every key is optional; missing
// keys keep the generator and analysis defaults.
//
//   seed, n_per_arm, schedule, sigma_b2, sigma_e2, art_probability
//   [beta]      intercept, prednisolone, month, "prednisolone:month", art, "prednisolone:art", age
//   [dropout]   mechanism ("none" | "mcar" | "mar"), intercept, coef_month, coef_art, coef_delta, first_visit
//   [analysis]  methods, mi_k
//   [study]     reps, level
struct RunFileConfig {
    TrialGeneratorConfig generator;
    AnalysisOptions analysis;
    std::optional<int> reps;
    std::optional<double> level;
};

enum class ConfigFormat { Toml, Json };

// Errors are ConfigError with a dotted field path (e.g. "dropout.mechanism").
RunFileConfig parse_config(std::string_view text, ConfigFormat format);
// Format from the extension: ".json" is JSON, anything else TOML.
RunFileConfig load_config_file(const std::string& path);

}  // namespace longimpute
