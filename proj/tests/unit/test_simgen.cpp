#include <doctest.h>

#include <cmath>

#include "longimpute/diagnostics.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/lmm.hpp"
#include "longimpute/simgen.hpp"

using namespace longimpute;

TEST_CASE("mechanism names") {
    for (auto m : {DropoutMechanism::None, DropoutMechanism::Mcar, DropoutMechanism::Mar})
        CHECK(parse_mechanism(to_string(m)) == m);
    CHECK_FALSE(parse_mechanism("nmar").has_value());
}

TEST_CASE("generator config validation") {
    const auto field = [](TrialGeneratorConfig c) -> std::string {
        try {
            c.validate();
        } catch (const ConfigError& e) {
            return e.field();
        }
        return "";
    };
    TrialGeneratorConfig c;
    CHECK(field(c).empty());
    c.sigma_b2 = -1.0;
    CHECK(field(c) == "sigma_b2");
    c = {};
    c.sigma_e2 = -2.0;
    CHECK(field(c) == "sigma_e2");
    c = {};
    c.n_per_arm = 0;
    CHECK(field(c) == "n_per_arm");
    c = {};
    c.art_probability = {0.5, 0.4, 0.6, 0.7, 0.8};
    CHECK(field(c) == "art_probability");
    c = {};
    c.dropout.first_visit = 1;
    CHECK(field(c) == "dropout.first_visit");

    CHECK(TrialGeneratorConfig{}.art_curve() == std::vector<double>{0.5, 0.525, 0.55, 0.65, 0.8});
    c = {};
    c.dropout.mechanism = DropoutMechanism::Mcar;
    CHECK(c.effective_hazard().coef_delta == 0.0);
    CHECK(c.effective_hazard().coef_art == 0.0);
    CHECK(c.effective_hazard().coef_month == c.dropout.coef_month);
}

TEST_CASE("generated trials") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 60;
    cfg.seed = 99;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    CHECK(a.full == b.full);
    CHECK(a.observed == b.observed);
    CHECK(a.full.size() == 120);
    CHECK(a.full.n_missing_cells() == 0);
    CHECK(a.observed.is_monotone());
    CHECK(a.observed.n_missing_cells() > 0);

    std::size_t placebo = 0;
    for (std::size_t i = 0; i < a.full.size(); ++i) {
        const auto& f = a.full.subjects()[i];
        const auto& o = a.observed.subjects()[i];
        CHECK(f.id == o.id);
        CHECK(f.art == o.art);
        CHECK(o.outcomes[0].has_value());
        placebo += f.arm == Arm::Placebo;
        for (std::size_t j = 0; j < 5; ++j) {
            if (o.outcomes[j]) CHECK(*o.outcomes[j] == *f.outcomes[j]);
            CHECK(*f.outcomes[j] >= 0.0);
            if (j > 0) CHECK(f.art[j] >= f.art[j - 1]);
        }
        // Dropout starts at the third visit by default.
        CHECK(o.outcomes[1].has_value());
    }
    CHECK(placebo == 60);

    cfg.seed = 100;
    CHECK_FALSE(generate(cfg).full == a.full);
}

TEST_CASE("mechanisms share the complete data") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 80;
    cfg.seed = 5;
    const auto mar = generate(cfg);
    cfg.dropout.mechanism = DropoutMechanism::Mcar;
    const auto mcar = generate(cfg);
    cfg.dropout.mechanism = DropoutMechanism::None;
    const auto none = generate(cfg);
    CHECK(mar.full == mcar.full);
    CHECK(mar.full == none.full);
    CHECK(none.observed == none.full);
    CHECK(none.observed.n_missing_cells() == 0);

    const auto fo = fit_ml(none.observed), ff = fit_ml(none.full);
    CHECK(fo.loglik == ff.loglik);
    CHECK(fo.beta == ff.beta);
}

TEST_CASE("default calibration matches the published retention") {
    TrialGeneratorConfig cfg;
    double placebo = 0.0, pred = 0.0;
    const int reps = 200;
    for (int r = 1; r <= reps; ++r) {
        cfg.seed = static_cast<std::uint64_t>(r);
        const auto rows = retention_table(generate(cfg).observed);
        placebo += rows[0].percent.back();
        pred += rows[1].percent.back();
    }
    placebo /= reps;
    pred /= reps;
    CHECK(std::abs(placebo - 69.0) <= 7.0);
    CHECK(std::abs(pred - 63.0) <= 7.0);
    CHECK(simulated_retention(cfg, 20) == doctest::Approx(simulated_retention(cfg, 20)));
}

TEST_CASE("calibration by bisection hits its target") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 100;
    const double intercept = calibrate_hazard_intercept(cfg, 0.5, 20);
    cfg.dropout.intercept = intercept;
    CHECK(simulated_retention(cfg, 20) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("mcar dropout does not depend on the outcome change") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 150;
    cfg.dropout.mechanism = DropoutMechanism::Mcar;
    cfg.dropout.intercept = -1.7;
    const int reps = 40;
    int small = 0;
    DropoutModelSpec spec;
    spec.start_visit = cfg.dropout.first_visit;
    for (int r = 1; r <= reps; ++r) {
        cfg.seed = static_cast<std::uint64_t>(1000 + r);
        const auto records = dropout_design(generate(cfg).observed, spec.start_visit);
        const auto fit = fit_dropout_logistic(records, spec);
        const auto& row = fit.row("delta_cd4");
        small += std::abs(row.coef / row.coef_se) < 3.0;
    }
    CHECK(small >= 0.95 * reps);
}
