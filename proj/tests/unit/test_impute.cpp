#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "longimpute/errors.hpp"
#include "longimpute/impute.hpp"
#include "longimpute/lmm.hpp"
#include "support/oracles.hpp"

using namespace longimpute;

namespace {

LongitudinalDataset one_subject(std::vector<std::optional<double>> y) {
    SubjectRecord s;
    s.id = "S1";
    s.outcomes = std::move(y);
    s.art.assign(s.outcomes.size(), 0);
    DatasetOptions opts;
    opts.min_observed = 1;
    return LongitudinalDataset(VisitSchedule{}, {s}, opts);
}

std::vector<double> values(const LongitudinalDataset& ds, std::size_t i = 0) {
    std::vector<double> out;
    for (const auto& y : ds.subjects()[i].outcomes) out.push_back(y ? *y : std::numeric_limits<double>::quiet_NaN());
    return out;
}

CoefficientEstimates scalar(double est, double var) {
    CoefficientEstimates c;
    c.names = {"x"};
    c.estimate = Eigen::VectorXd::Constant(1, est);
    c.variance = Eigen::VectorXd::Constant(1, var);
    return c;
}

constexpr auto NA = std::nullopt;

}  // namespace

TEST_CASE("complete case") {
    const auto cc = complete_case(oracle::trial_pattern_dataset());
    CHECK(cc.data.size() == 90);
    CHECK(std::lround(100.0 * 90 / 137) == 66);
    for (const auto& p : cc.data.patterns()) CHECK(p.is_completer());

    const auto full = one_subject({1, 2, 3, 4, 5});
    CHECK(complete_case(full).data == full);
    CHECK_THROWS_AS(complete_case(one_subject({1, 2, NA, NA, NA})), EmptyAnalysisSetError);
}

TEST_CASE("locf and bocf fill rules") {
    const auto ds = one_subject({5, 7, NA, NA, NA});
    CHECK(values(locf(ds).data) == std::vector<double>{5, 7, 7, 7, 7});
    CHECK(values(bocf(ds).data) == std::vector<double>{5, 7, 5, 5, 5});
    const auto completer = one_subject({5, 7, 8, 9, 10});
    CHECK(locf(completer).data == completer);
    CHECK(bocf(completer).data == completer);
    CHECK(values(bocf(one_subject({13, 15, NA, NA, NA})).data) == std::vector<double>{13, 15, 13, 13, 13});

    SubjectRecord s;
    s.id = "X";
    s.outcomes = {1, NA, 3, 4, 5};
    s.art.assign(5, 0);
    DatasetOptions opts;
    opts.allow_intermittent = true;
    const LongitudinalDataset inter(VisitSchedule{}, {s}, opts);
    CHECK_THROWS_AS(locf(inter), IntermittentMissingnessError);
    CHECK_THROWS_AS(bocf(inter), IntermittentMissingnessError);
}

TEST_CASE("locf dominates bocf on nondecreasing prefixes") {
    const double grid[] = {0.0, 1.5, 4.0};
    std::size_t checked = 0;
    for (std::size_t len = 1; len <= 5; ++len) {
        std::vector<std::size_t> idx(len, 0);
        while (true) {
            std::vector<std::optional<double>> y(5);
            bool nondecreasing = true;
            for (std::size_t j = 0; j < len; ++j) {
                y[j].emplace(grid[idx[j]]);
                if (j > 0 && idx[j] < idx[j - 1]) nondecreasing = false;
            }
            if (nondecreasing) {
                const auto ds = one_subject(y);
                const auto l = values(locf(ds).data), b = values(bocf(ds).data);
                for (std::size_t j = 0; j < 5; ++j) CHECK(l[j] >= b[j]);
                ++checked;
            }
            std::size_t k = 0;
            for (; k < len; ++k) {
                if (++idx[k] < 3) break;
                idx[k] = 0;
            }
            if (k == len) break;
        }
    }
    CHECK(checked == 3 + 6 + 10 + 15 + 21);
}

TEST_CASE("single imputation is idempotent") {
    std::mt19937_64 rng(5);
    const auto ds = oracle::random_unbalanced(rng, 30);
    const auto once = locf(ds).data;
    CHECK(locf(once).data == once);
    const auto b = bocf(ds).data;
    CHECK(bocf(b).data == b);
}

TEST_CASE("multiple imputation keeps observed cells and is reproducible") {
    std::mt19937_64 rng(17);
    const auto ds = oracle::random_unbalanced(rng, 200);
    const auto a = multiple_impute(ds, 5, {}, 42);
    const auto b = multiple_impute(ds, 5, {}, 42);
    REQUIRE(a.size() == 5);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].imputation_index == static_cast<int>(k + 1));
        CHECK(a[k].data == b[k].data);
        CHECK(a[k].data.n_missing_cells() == 0);
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t j = 0; j < ds.n_visits(); ++j) {
                const auto& orig = ds.subjects()[i].outcomes[j];
                if (orig) CHECK(*a[k].data.subjects()[i].outcomes[j] == *orig);
            }
    }
    CHECK_FALSE(a[0].data == a[1].data);
    CHECK_FALSE(multiple_impute(ds, 2, {}, 43)[0].data == a[0].data);
}

TEST_CASE("multiple imputation errors") {
    std::mt19937_64 rng(2);
    CHECK_THROWS_AS(multiple_impute(oracle::random_unbalanced(rng, 6), 3), SampleSizeError);
}

TEST_CASE("completed csv carries strategy columns") {
    const auto c = locf(one_subject({5, 7, NA, NA, NA}));
    std::ostringstream out;
    write_completed_csv(out, c);
    const auto text = out.str();
    CHECK(text.find("strategy") != std::string::npos);
    CHECK(text.find("LOCF") != std::string::npos);
}

TEST_CASE("pool examples") {
    SUBCASE("identical fits") {
        std::vector<CoefficientEstimates> fits(3, scalar(2.0, 0.25));
        const auto p = pool(fits);
        CHECK(p.point(0) == 2.0);
        CHECK(p.between(0) == 0.0);
        CHECK(p.total(0) == doctest::Approx(0.25));
        CHECK(p.df(0) == kMaxPooledDf);
    }
    SUBCASE("two fits") {
        const std::vector<CoefficientEstimates> fits{scalar(1.0, 1.0), scalar(3.0, 1.0)};
        const auto p = pool(fits);
        CHECK(p.point(0) == doctest::Approx(2.0));
        CHECK(p.within(0) == doctest::Approx(1.0));
        CHECK(p.between(0) == doctest::Approx(2.0));
        CHECK(p.total(0) == doctest::Approx(4.0));
        CHECK(p.df(0) == doctest::Approx(16.0 / 9.0));
    }
    SUBCASE("errors") {
        const std::vector<CoefficientEstimates> one{scalar(1.0, 1.0)};
        CHECK_THROWS_AS(pool(one), PoolingError);
        auto other = scalar(1.0, 1.0);
        other.names = {"y"};
        const std::vector<CoefficientEstimates> mismatched{scalar(1.0, 1.0), other};
        CHECK_THROWS_AS(pool(mismatched), ShapeError);
    }
}

TEST_CASE("pooling algebra") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<CoefficientEstimates> fits;
        const int K = 2 + rep % 6;
        for (int k = 0; k < K; ++k) {
            CoefficientEstimates c;
            c.names = {"a", "b"};
            c.estimate = Eigen::Vector2d(z(rng), 3.0 + z(rng));
            c.variance = Eigen::Vector2d(0.1 + z(rng) * z(rng), 0.5 + z(rng) * z(rng));
            fits.push_back(c);
        }
        const auto p = pool(fits);
        std::reverse(fits.begin(), fits.end());
        const auto q = pool(fits);
        for (Eigen::Index j = 0; j < 2; ++j) {
            CHECK(p.total(j) >= p.within(j));
            CHECK(p.df(j) > 0.0);
            CHECK(p.total(j) == doctest::Approx(p.within(j) + (1.0 + 1.0 / K) * p.between(j)));
            CHECK(q.point(j) == doctest::Approx(p.point(j)).epsilon(1e-14));
            CHECK(q.total(j) == doctest::Approx(p.total(j)).epsilon(1e-14));
        }
    }
    // T tends to W as the spread between imputations shrinks.
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        const std::vector<CoefficientEstimates> fits{scalar(1.0 - eps, 1.0), scalar(1.0 + eps, 1.0)};
        CHECK(pool(fits).total(0) - 1.0 == doctest::Approx(3.0 * eps * eps));
    }
}
