#include <doctest.h>

#include <cmath>

#include "longimpute/analysis.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/rng.hpp"
#include "longimpute/simgen.hpp"
#include "longimpute/study.hpp"

using namespace longimpute;

TEST_CASE("seed streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 5) == derive_seed(1, 5));
    auto a = make_rng(7, 3), b = make_rng(7, 3);
    CHECK(a() == b());
}

TEST_CASE("analysis options validation") {
    AnalysisOptions o;
    CHECK_NOTHROW(o.validate());
    o.mi_k = 1;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    o.methods = {Method::Ml};
    CHECK_NOTHROW(o.validate());
    o.methods.clear();
    CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("run_analysis on generated data") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 100;
    cfg.seed = 21;
    const auto trial = generate(cfg);
    AnalysisOptions o;
    o.mi_k = 5;
    const auto results = run_analysis(trial.observed, o);
    REQUIRE(results.size() == 5);
    for (const auto& r : results) {
        CHECK(r.ok);
        CHECK(r.names.size() == 7);
        for (Eigen::Index k = 0; k < r.se.size(); ++k) {
            CHECK(r.se(k) > 0.0);
            const auto [lo, hi] = r.interval(k);
            CHECK(lo < r.estimate(k));
            CHECK(r.estimate(k) < hi);
        }
    }
    CHECK(results[0].n_subjects < results[1].n_subjects);
    CHECK(std::isinf(results[3].df(0)));
    CHECK(std::isfinite(results[4].df(2)));
    // Same seed, same answer.
    const auto again = run_analysis(trial.observed, o);
    CHECK(again[4].estimate == results[4].estimate);
    o.threads = 3;
    CHECK(run_analysis(trial.observed, o)[4].estimate == results[4].estimate);
}

TEST_CASE("method failures are captured") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 10;
    cfg.dropout.intercept = 6.0;  // nobody completes
    const auto trial = generate(cfg);
    const auto r = run_method(trial.observed, Method::Cc, AnalysisOptions{});
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
}

TEST_CASE("study options") {
    StudyOptions s;
    s.n_reps = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("no dropout gives unbiased methods") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 40;
    cfg.seed = 77;
    cfg.dropout.mechanism = DropoutMechanism::None;
    StudyOptions s;
    s.n_reps = 100;
    s.analysis.mi_k = 3;
    const auto study = replicate_study(cfg, s);
    const auto& ml = study.summary(Method::Ml);
    CHECK(ml.n_ok == 100);
    for (auto m : kAllMethods) {
        const auto& sum = study.summary(m);
        CHECK(sum.n_failed == 0);
        // With nothing missing every method analyzes the same data.
        CHECK((sum.mean_bias - ml.mean_bias).cwiseAbs().maxCoeff() < 1e-8);
        // Two standard errors per coefficient, Bonferroni-adjusted over the seven
        // coefficients so the family of checks holds at 95%.
        const double z = 2.6901;
        for (Eigen::Index k = 0; k < sum.mean_bias.size(); ++k) {
            INFO(to_string(m), " ", study.names[static_cast<std::size_t>(k)]);
            CHECK(std::abs(sum.mean_bias(k)) < z * sum.bias_mcse(k));
        }
    }
    CHECK(paired_difference(study, Method::Mi, Method::Ml, 2).mean == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("studies do not depend on the thread count") {
    TrialGeneratorConfig cfg;
    cfg.n_per_arm = 30;
    StudyOptions s;
    s.n_reps = 6;
    s.analysis.mi_k = 3;
    const auto a = replicate_study(cfg, s);
    s.threads = 4;
    const auto b = replicate_study(cfg, s);
    for (std::size_t m = 0; m < a.summaries.size(); ++m) {
        CHECK(a.summaries[m].mean_bias == b.summaries[m].mean_bias);
        CHECK(a.summaries[m].coverage == b.summaries[m].coverage);
    }
    CHECK(a.replicates[3].data_seed == derive_seed(cfg.seed, 3));
}
