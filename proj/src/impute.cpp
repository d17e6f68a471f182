#include "longimpute/impute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "longimpute/errors.hpp"
#include "longimpute/rng.hpp"

namespace longimpute {

namespace {

void require_monotone(const LongitudinalDataset& ds, std::string_view op) {
    if (!ds.is_monotone())
        throw IntermittentMissingnessError(std::string(op) + " requires monotone missingness");
}

template <class Fill>
CompletedDataset carry_forward(const LongitudinalDataset& ds, Strategy strategy, Fill fill) {
    std::vector<SubjectRecord> out = ds.subjects();
    for (auto& s : out) {
        for (std::size_t j = 0; j < s.outcomes.size(); ++j) {
            if (!s.outcomes[j]) s.outcomes[j] = fill(s, j);
        }
    }
    return {LongitudinalDataset(ds.schedule(), std::move(out), ds.options()), strategy, std::nullopt, std::nullopt};
}

struct Column {
    std::string name;
    bool optional = false;
};

// Values of the candidate predictors of the visit-j regression for one subject.
void fill_predictors(const ImputationModelSpec& spec, const SubjectRecord& s, const Eigen::RowVectorXd& y,
                     std::size_t j, std::vector<double>& out) {
    out.clear();
    const double pred = s.arm == Arm::Prednisolone ? 1.0 : 0.0;
    out.push_back(1.0);
    if (spec.prior_outcomes)
        for (std::size_t k = 0; k < j; ++k) out.push_back(y(static_cast<Eigen::Index>(k)));
    if (spec.arm) out.push_back(pred);
    if (spec.age) out.push_back(s.age);
    if (spec.art_current) out.push_back(s.art[j]);
    if (spec.arm_art_current) out.push_back(pred * s.art[j]);
    if (spec.art_history) {
        for (std::size_t k = 0; k < j; ++k) out.push_back(s.art[k]);
        for (std::size_t k = 0; k < j; ++k) out.push_back(pred * s.art[k]);
    }
}

std::vector<Column> predictor_columns(const ImputationModelSpec& spec, std::size_t j) {
    std::vector<Column> cols{{"intercept", false}};
    if (spec.prior_outcomes)
        for (std::size_t k = 0; k < j; ++k) cols.push_back({"y" + std::to_string(k + 1), false});
    if (spec.arm) cols.push_back({"prednisolone", false});
    if (spec.age) cols.push_back({"age", false});
    if (spec.art_current) cols.push_back({"art" + std::to_string(j + 1), false});
    if (spec.arm_art_current) cols.push_back({"prednisolone:art" + std::to_string(j + 1), false});
    if (spec.art_history) {
        for (std::size_t k = 0; k < j; ++k) cols.push_back({"art" + std::to_string(k + 1), true});
        for (std::size_t k = 0; k < j; ++k) cols.push_back({"prednisolone:art" + std::to_string(k + 1), true});
    }
    return cols;
}

// Keeps columns in order while they add rank. History columns that are
// aliased (e.g. nobody started ART between two visits) are dropped; an
// aliased core column is a singular design.
std::vector<Eigen::Index> select_columns(const Eigen::MatrixXd& X, const std::vector<Column>& cols, std::size_t visit) {
    Eigen::MatrixXd scaled = X;
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
        const double norm = scaled.col(c).norm();
        if (norm > 0.0) scaled.col(c) /= norm;
    }
    std::vector<Eigen::Index> kept;
    std::vector<std::string> aliased;
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
        Eigen::MatrixXd sub(scaled.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
        for (std::size_t m = 0; m < kept.size(); ++m) sub.col(static_cast<Eigen::Index>(m)) = scaled.col(kept[m]);
        sub.col(sub.cols() - 1) = scaled.col(c);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
        qr.setThreshold(1e-10);
        if (qr.rank() == sub.cols()) kept.push_back(c);
        else if (!cols[static_cast<std::size_t>(c)].optional) aliased.push_back(cols[static_cast<std::size_t>(c)].name);
    }
    if (!aliased.empty()) {
        std::string names;
        for (const auto& a : aliased) names += (names.empty() ? "" : ", ") + a;
        throw SingularDesignError("imputation regression for visit " + std::to_string(visit + 1) +
                                      " is rank deficient; collinear columns: " + names,
                                  aliased);
    }
    return kept;
}

}  // namespace

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::CompleteCase: return "CC";
        case Strategy::Locf: return "LOCF";
        case Strategy::Bocf: return "BOCF";
        case Strategy::MultipleImputation: return "MI";
    }
    return "?";
}

CompletedDataset complete_case(const LongitudinalDataset& ds) {
    std::vector<SubjectRecord> kept;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.patterns()[i].n_observed() == ds.n_visits()) kept.push_back(ds.subjects()[i]);
    if (kept.empty()) throw EmptyAnalysisSetError("no subject completed every visit");
    return {LongitudinalDataset(ds.schedule(), std::move(kept), ds.options()), Strategy::CompleteCase, std::nullopt,
            std::nullopt};
}

CompletedDataset locf(const LongitudinalDataset& ds) {
    require_monotone(ds, "LOCF");
    return carry_forward(ds, Strategy::Locf, [](const SubjectRecord& s, std::size_t j) {
        for (std::size_t k = j; k > 0; --k)
            if (s.outcomes[k - 1]) return *s.outcomes[k - 1];
        return *s.outcomes[0];
    });
}

CompletedDataset bocf(const LongitudinalDataset& ds) {
    require_monotone(ds, "BOCF");
    return carry_forward(ds, Strategy::Bocf, [](const SubjectRecord& s, std::size_t) { return *s.outcomes[0]; });
}

std::vector<CompletedDataset> multiple_impute(const LongitudinalDataset& ds, int K, const ImputationModelSpec& spec,
                                              std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("number of imputations must be positive");
    require_monotone(ds, "multiple imputation");
    const auto N = ds.size();
    const auto n_visits = ds.n_visits();
    const auto nan = std::numeric_limits<double>::quiet_NaN();

    Eigen::MatrixXd observed(N, n_visits);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < n_visits; ++j) {
            const auto& y = ds.subjects()[i].outcomes[j];
            observed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y ? *y : nan;
        }

    struct Stream {
        Rng rng;
        std::normal_distribution<double> normal{0.0, 1.0};
        Eigen::MatrixXd y;
    };
    std::vector<Stream> streams;
    streams.reserve(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) streams.push_back({make_rng(seed, static_cast<std::uint64_t>(k)), {}, observed});

    std::vector<double> row;
    for (std::size_t j = 1; j < n_visits; ++j) {
        std::vector<std::size_t> train, targets;
        for (std::size_t i = 0; i < N; ++i) (ds.patterns()[i].observed[j] ? train : targets).push_back(i);
        if (targets.empty()) continue;

        const auto cols = predictor_columns(spec, j);
        const auto q_all = static_cast<Eigen::Index>(cols.size());
        Eigen::MatrixXd X_all(static_cast<Eigen::Index>(train.size()), q_all);
        Eigen::VectorXd y_train(static_cast<Eigen::Index>(train.size()));
        // Monotone data: everyone observed at j is observed before j, so the
        // training design is the same in every imputation.
        for (std::size_t r = 0; r < train.size(); ++r) {
            const auto i = train[r];
            fill_predictors(spec, ds.subjects()[i], observed.row(static_cast<Eigen::Index>(i)), j, row);
            X_all.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), q_all);
            y_train(static_cast<Eigen::Index>(r)) = observed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        const auto too_few = [&](std::size_t columns) {
            return SampleSizeError("visit " + std::to_string(j + 1) + ": " + std::to_string(train.size()) +
                                   " observed subjects for " + std::to_string(columns) + " regression columns");
        };
        const auto n_core = static_cast<std::size_t>(
            std::count_if(cols.begin(), cols.end(), [](const Column& c) { return !c.optional; }));
        if (train.size() <= n_core) throw too_few(n_core);
        const auto kept = select_columns(X_all, cols, j);
        const auto q = static_cast<Eigen::Index>(kept.size());
        if (static_cast<Eigen::Index>(train.size()) <= q) throw too_few(kept.size());
        Eigen::MatrixXd X(X_all.rows(), q);
        for (Eigen::Index c = 0; c < q; ++c) X.col(c) = X_all.col(kept[static_cast<std::size_t>(c)]);

        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
        const Eigen::VectorXd beta_hat = qr.solve(y_train);
        const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
        const double rss = (y_train - X * beta_hat).squaredNorm();
        const double df = static_cast<double>(X.rows() - q);

        Eigen::VectorXd z(q), x(q);
        for (auto& st : streams) {
            std::chi_squared_distribution<double> chi2(df);
            const double sigma = std::sqrt(rss / chi2(st.rng));
            for (Eigen::Index c = 0; c < q; ++c) z(c) = st.normal(st.rng);
            // beta* ~ N(beta_hat, sigma^2 (X'X)^{-1}) with (X'X)^{-1} = R^{-1} R^{-T}
            const Eigen::VectorXd beta_star =
                beta_hat + sigma * R.triangularView<Eigen::Upper>().solve(z);
            for (auto i : targets) {
                fill_predictors(spec, ds.subjects()[i], st.y.row(static_cast<Eigen::Index>(i)), j, row);
                for (Eigen::Index c = 0; c < q; ++c) x(c) = row[static_cast<std::size_t>(kept[static_cast<std::size_t>(c)])];
                st.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    x.dot(beta_star) + sigma * st.normal(st.rng);
            }
        }
    }

    auto options = ds.options();
    options.nonnegative = false;
    std::vector<CompletedDataset> out;
    out.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        std::vector<SubjectRecord> subjects = ds.subjects();
        const auto& y = streams[static_cast<std::size_t>(k)].y;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < n_visits; ++j)
                if (!subjects[i].outcomes[j])
                    subjects[i].outcomes[j] = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        out.push_back({LongitudinalDataset(ds.schedule(), std::move(subjects), options),
                       Strategy::MultipleImputation, k + 1, derive_seed(seed, static_cast<std::uint64_t>(k + 1))});
    }
    return out;
}

void write_completed_csv(std::ostream& out, const CompletedDataset& completed) {
    const auto& ds = completed.data;
    out << "subject_id,arm,age,month,sqrt_cd4,art,strategy,imputation_index\n";
    const std::string index = completed.imputation_index ? std::to_string(*completed.imputation_index) : "";
    for (const auto& s : ds.subjects()) {
        for (std::size_t j = 0; j < ds.n_visits(); ++j) {
            out << s.id << ',' << to_string(s.arm) << ',' << format_number(s.age) << ','
                << format_number(ds.schedule().month(j)) << ','
                << (s.outcomes[j] ? format_number(*s.outcomes[j]) : std::string("NA")) << ','
                << static_cast<int>(s.art[j]) << ',' << to_string(completed.strategy) << ',' << index << '\n';
        }
    }
}

}  // namespace longimpute
