#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <optional>
#include <vector>

#include "longimpute/dataset.hpp"

namespace longimpute {

enum class DropoutMechanism { None, Mcar, Mar };

std::string_view to_string(DropoutMechanism mechanism);
std::optional<DropoutMechanism> parse_mechanism(std::string_view token);

// Logit of the per-visit withdrawal hazard:
//   intercept + coef_month * month_j + coef_art * ART_{j-1} + coef_delta * (Y_{j-1} - Y_{j-2})
// ΔY is 0 at visit 2. Subjects are at risk from `first_visit` (1-based) on.
// Coefficients are per month, per ART indicator and per unit sqrt(CD4).
struct DropoutHazard {
    DropoutMechanism mechanism = DropoutMechanism::Mar;
    double intercept = -3.6;
    double coef_month = -0.16251892949777494;  // ln 0.85
    double coef_art = 2.1540850587298233;      // ln 8.62
    double coef_delta = 0.21511137961694549;   // ln 1.24
    std::size_t first_visit = 3;
};

struct TrialGeneratorConfig {
    std::size_t n_per_arm = 70;
    VisitSchedule schedule;
    // intercept, prednisolone, month, prednisolone:month, art, prednisolone:art, age
    std::array<double, 7> beta{20.0, 0.28, 0.39, -0.12, 2.98, -0.21, -3.14};
    double sigma_b2 = 6.0;
    double sigma_e2 = 20.0;
    DropoutHazard dropout;
    // Marginal probability of being on ART at each visit; uptake is monotone.
    // Empty means 0.5 + 0.05 * month.
    std::vector<double> art_probability;
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<double> art_curve() const;
    // Hazard coefficients after the mechanism is applied: `mcar` keeps only the
    // intercept and month terms, `none` disables dropout.
    DropoutHazard effective_hazard() const;
};

struct GeneratedTrial {
    LongitudinalDataset full;
    LongitudinalDataset observed;
    TrialGeneratorConfig truth;
};

// Outcomes below zero are clamped to zero (sqrt(CD4) is non-negative).
GeneratedTrial generate(const TrialGeneratorConfig& config);

// Mean retention at the last visit over `reps` generated trials (seeds 1..reps).
double simulated_retention(const TrialGeneratorConfig& config, int reps);

// Bisection for the hazard intercept that gives `target` last-visit retention.
double calibrate_hazard_intercept(TrialGeneratorConfig config, double target, int reps,
                                  double lo = -8.0, double hi = 2.0);

}  // namespace longimpute
