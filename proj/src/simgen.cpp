#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "longimpute/errors.hpp"
#include "longimpute/rng.hpp"
#include "longimpute/simgen.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

std::string_view to_string(DropoutMechanism mechanism) {
    switch (mechanism) {
        case DropoutMechanism::None: return "none";
        case DropoutMechanism::Mcar: return "mcar";
        case DropoutMechanism::Mar: return "mar";
    }
    return "?";
}

std::optional<DropoutMechanism> parse_mechanism(std::string_view token) {
    if (token == "none") return DropoutMechanism::None;
    if (token == "mcar") return DropoutMechanism::Mcar;
    if (token == "mar") return DropoutMechanism::Mar;
    return std::nullopt;
}

void TrialGeneratorConfig::validate() const {
    if (n_per_arm < 1) throw ConfigError("n_per_arm", "must be at least 1");
    if (schedule.size() < 2) throw ConfigError("schedule", "needs at least two visits");
    for (std::size_t k = 0; k < beta.size(); ++k)
        if (!std::isfinite(beta[k])) throw ConfigError("beta", "coefficient " + std::to_string(k) + " is not finite");
    if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) throw ConfigError("sigma_b2", "must be finite and non-negative");
    if (!(sigma_e2 >= 0.0) || !std::isfinite(sigma_e2)) throw ConfigError("sigma_e2", "must be finite and non-negative");
    const auto& h = dropout;
    if (!std::isfinite(h.intercept)) throw ConfigError("dropout.intercept", "must be finite");
    if (!std::isfinite(h.coef_month)) throw ConfigError("dropout.coef_month", "must be finite");
    if (!std::isfinite(h.coef_art)) throw ConfigError("dropout.coef_art", "must be finite");
    if (!std::isfinite(h.coef_delta)) throw ConfigError("dropout.coef_delta", "must be finite");
    if (h.first_visit < 2 || h.first_visit > schedule.size())
        throw ConfigError("dropout.first_visit", "must lie between 2 and the number of visits");
    if (!art_probability.empty()) {
        if (art_probability.size() != schedule.size())
            throw ConfigError("art_probability", "needs one probability per visit");
        for (std::size_t j = 0; j < art_probability.size(); ++j) {
            const double p = art_probability[j];
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("art_probability", "values must lie in [0, 1]");
            if (j > 0 && p < art_probability[j - 1])
                throw ConfigError("art_probability", "uptake must be non-decreasing");
        }
    }
}

std::vector<double> TrialGeneratorConfig::art_curve() const {
    if (!art_probability.empty()) return art_probability;
    std::vector<double> p;
    for (double m : schedule.months()) p.push_back(std::clamp(0.5 + 0.05 * m, 0.0, 1.0));
    return p;
}

DropoutHazard TrialGeneratorConfig::effective_hazard() const {
    DropoutHazard h = dropout;
    if (h.mechanism != DropoutMechanism::Mar) {
        h.coef_art = 0.0;
        h.coef_delta = 0.0;
    }
    return h;
}

GeneratedTrial generate(const TrialGeneratorConfig& config) {
    config.validate();
    const auto n = config.schedule.size();
    const auto art_p = config.art_curve();
    const auto hazard = config.effective_hazard();
    const auto& b = config.beta;
    const double sd_b = std::sqrt(config.sigma_b2);
    const double sd_e = std::sqrt(config.sigma_e2);
    const std::size_t total = 2 * config.n_per_arm;
    const auto width = std::max<std::size_t>(4, std::to_string(total).size());

    auto rng = make_rng(config.seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<SubjectRecord> full, observed;
    full.reserve(total);
    observed.reserve(total);
    for (std::size_t s = 0; s < total; ++s) {
        SubjectRecord rec;
        std::string num = std::to_string(s + 1);
        rec.id = "S" + std::string(width - num.size(), '0') + num;
        rec.arm = s < config.n_per_arm ? Arm::Placebo : Arm::Prednisolone;
        const double pred = rec.arm == Arm::Prednisolone ? 1.0 : 0.0;

        // Fixed draw order per subject, independent of the dropout mechanism.
        rec.age = normal(rng);
        const double u = sd_b * normal(rng);
        std::vector<double> eps(n), art_u(n), drop_u(n);
        for (auto& e : eps) e = sd_e * normal(rng);
        for (auto& a : art_u) a = unif(rng);
        for (auto& d : drop_u) d = unif(rng);

        rec.art.resize(n);
        rec.outcomes.resize(n);
        bool on_art = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (!on_art) {
                const double prev = j == 0 ? 0.0 : art_p[j - 1];
                const double start = prev >= 1.0 ? 1.0 : (art_p[j] - prev) / (1.0 - prev);
                on_art = art_u[j] < start;
            }
            rec.art[j] = on_art ? 1 : 0;
            const double month = config.schedule.month(j);
            const double art = on_art ? 1.0 : 0.0;
            const double mean = b[0] + b[1] * pred + b[2] * month + b[3] * pred * month + b[4] * art +
                                b[5] * pred * art + b[6] * rec.age;
            rec.outcomes[j] = std::max(0.0, mean + u + eps[j]);
        }

        SubjectRecord masked = rec;
        if (hazard.mechanism != DropoutMechanism::None) {
            for (std::size_t j = hazard.first_visit; j <= n; ++j) {  // 1-based visit at risk
                const double delta = j >= 3 ? *rec.outcomes[j - 2] - *rec.outcomes[j - 3] : 0.0;
                const double eta = hazard.intercept + hazard.coef_month * config.schedule.month(j - 1) +
                                   hazard.coef_art * rec.art[j - 2] + hazard.coef_delta * delta;
                if (drop_u[j - 1] < stats::inv_logit(eta)) {
                    for (std::size_t k = j - 1; k < n; ++k) masked.outcomes[k].reset();
                    break;
                }
            }
        }
        full.push_back(std::move(rec));
        observed.push_back(std::move(masked));
    }
    return GeneratedTrial{LongitudinalDataset(config.schedule, std::move(full)),
                          LongitudinalDataset(config.schedule, std::move(observed)), config};
}

double simulated_retention(const TrialGeneratorConfig& config, int reps) {
    if (reps < 1) throw std::invalid_argument("reps must be positive");
    double kept = 0.0, total = 0.0;
    for (int r = 1; r <= reps; ++r) {
        auto c = config;
        c.seed = static_cast<std::uint64_t>(r);
        const auto trial = generate(c);
        const auto last = trial.observed.n_visits() - 1;
        for (const auto& s : trial.observed.subjects()) {
            kept += s.outcomes[last].has_value() ? 1.0 : 0.0;
            total += 1.0;
        }
    }
    return kept / total;
}

double calibrate_hazard_intercept(TrialGeneratorConfig config, double target, int reps, double lo, double hi) {
    if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target retention must lie in (0, 1)");
    // Retention decreases in the intercept; common random numbers keep it monotone.
    for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
        const double mid = 0.5 * (lo + hi);
        config.dropout.intercept = mid;
        if (simulated_retention(config, reps) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace longimpute
