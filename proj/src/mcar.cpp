#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "longimpute/diagnostics.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

namespace {

using Mask = std::vector<bool>;

struct PatternGroup {
    Mask observed;
    std::vector<Eigen::Index> rows;

    std::vector<Eigen::Index> observed_idx() const {
        std::vector<Eigen::Index> out;
        for (std::size_t j = 0; j < observed.size(); ++j)
            if (observed[j]) out.push_back(static_cast<Eigen::Index>(j));
        return out;
    }
    std::vector<Eigen::Index> missing_idx() const {
        std::vector<Eigen::Index> out;
        for (std::size_t j = 0; j < observed.size(); ++j)
            if (!observed[j]) out.push_back(static_cast<Eigen::Index>(j));
        return out;
    }
    std::size_t n_observed() const { return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), true)); }
};

std::vector<PatternGroup> group_patterns(const Eigen::MatrixXd& data) {
    std::map<Mask, std::vector<Eigen::Index>, std::greater<>> groups;
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        Mask m(static_cast<std::size_t>(data.cols()));
        for (Eigen::Index c = 0; c < data.cols(); ++c) m[static_cast<std::size_t>(c)] = !std::isnan(data(r, c));
        groups[m].push_back(r);
    }
    std::vector<PatternGroup> out;
    for (auto& [mask, rows] : groups) out.push_back({mask, std::move(rows)});
    return out;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    return out;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    return out;
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& s) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw SingularCovarianceError("covariance block is not positive definite");
    const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
    const double dmax = d.maxCoeff();
    if (d.minCoeff() <= 1e-7 * dmax) throw SingularCovarianceError("covariance block is numerically singular");
    return llt;
}

// Merge patterns with fewer than two members into the pattern with the
// largest observed set that is contained in theirs.
std::vector<PatternGroup> merge_sparse(std::vector<PatternGroup> groups) {
    std::stable_sort(groups.begin(), groups.end(),
                     [](const PatternGroup& a, const PatternGroup& b) { return a.n_observed() > b.n_observed(); });
    const auto contains = [](const Mask& outer, const Mask& inner) {
        bool proper = false;
        for (std::size_t j = 0; j < outer.size(); ++j) {
            if (inner[j] && !outer[j]) return false;
            if (outer[j] && !inner[j]) proper = true;
        }
        return proper;
    };
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].rows.size() >= 2) continue;
        std::optional<std::size_t> target;
        for (std::size_t h = 0; h < groups.size(); ++h) {
            if (h == g || groups[h].rows.empty() || !contains(groups[g].observed, groups[h].observed)) continue;
            if (groups[h].n_observed() == 0) continue;
            if (!target || groups[h].n_observed() > groups[*target].n_observed() ||
                (groups[h].n_observed() == groups[*target].n_observed() &&
                 groups[h].rows.size() > groups[*target].rows.size()))
                target = h;
        }
        if (!target) continue;
        auto& dst = groups[*target].rows;
        dst.insert(dst.end(), groups[g].rows.begin(), groups[g].rows.end());
        groups[g].rows.clear();
    }
    std::erase_if(groups, [](const PatternGroup& p) { return p.rows.empty(); });
    return groups;
}

}  // namespace

MvnEstimate mvn_em(const Eigen::MatrixXd& data, double rel_tol, int max_iter) {
    const auto N = data.rows();
    const auto k = data.cols();
    if (N < 2 || k < 1) throw SampleSizeError("mvn_em needs at least two rows and one column");

    Eigen::VectorXd mu(k);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (Eigen::Index r = 0; r < N; ++r)
            if (!std::isnan(data(r, c))) {
                sum += data(r, c);
                ++n;
            }
        if (n < 2) throw SampleSizeError("every variable needs at least two observed values");
        mu(c) = sum / n;
        for (Eigen::Index r = 0; r < N; ++r)
            if (!std::isnan(data(r, c))) sq += (data(r, c) - mu(c)) * (data(r, c) - mu(c));
        sigma(c, c) = sq / n;
        if (!(sigma(c, c) > 0.0)) throw SingularCovarianceError("a variable has zero observed variance");
    }

    const auto groups = group_patterns(data);
    MvnEstimate est;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd t1 = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(k, k);
        for (const auto& g : groups) {
            const auto O = g.observed_idx();
            const auto M = g.missing_idx();
            Eigen::MatrixXd B, C;
            if (!M.empty()) {
                const Eigen::MatrixXd s_mm = submatrix(sigma, M, M);
                if (O.empty()) {
                    B.resize(static_cast<Eigen::Index>(M.size()), 0);
                    C = s_mm;
                } else {
                    const Eigen::MatrixXd s_oo = submatrix(sigma, O, O);
                    const Eigen::MatrixXd s_mo = submatrix(sigma, M, O);
                    const auto llt = checked_llt(s_oo);
                    B = llt.solve(s_mo.transpose()).transpose();
                    C = s_mm - B * s_mo.transpose();
                }
            }
            for (const auto r : g.rows) {
                Eigen::VectorXd yhat(k);
                for (const auto c : O) yhat(c) = data(r, c);
                if (!M.empty()) {
                    Eigen::VectorXd resid(static_cast<Eigen::Index>(O.size()));
                    for (std::size_t i = 0; i < O.size(); ++i) resid(static_cast<Eigen::Index>(i)) = data(r, O[i]) - mu(O[i]);
                    const Eigen::VectorXd fill = subvector(mu, M) + B * resid;
                    for (std::size_t i = 0; i < M.size(); ++i) yhat(M[i]) = fill(static_cast<Eigen::Index>(i));
                }
                t1 += yhat;
                t2 += yhat * yhat.transpose();
                for (std::size_t a = 0; a < M.size(); ++a)
                    for (std::size_t b = 0; b < M.size(); ++b)
                        t2(M[a], M[b]) += C(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
        const Eigen::VectorXd mu_new = t1 / static_cast<double>(N);
        const Eigen::MatrixXd sigma_new = t2 / static_cast<double>(N) - mu_new * mu_new.transpose();

        double change = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) {
            change = std::max(change, std::abs(mu_new(a) - mu(a)) / std::sqrt(sigma(a, a)));
            for (Eigen::Index b = 0; b < k; ++b)
                change = std::max(change, std::abs(sigma_new(a, b) - sigma(a, b)) / std::sqrt(sigma(a, a) * sigma(b, b)));
        }
        mu = mu_new;
        sigma = 0.5 * (sigma_new + sigma_new.transpose());
        est.iterations = it;
        if (change < rel_tol) {
            est.converged = true;
            break;
        }
    }
    est.mean = mu;
    est.covariance = sigma;
    return est;
}

McarTestResult little_mcar_test(const Eigen::MatrixXd& data) {
    const auto est = mvn_em(data);
    checked_llt(est.covariance);
    auto groups = merge_sparse(group_patterns(data));

    McarTestResult res;
    res.mean = est.mean;
    res.covariance = est.covariance;
    res.em_iterations = est.iterations;

    int observed_vars = 0;
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        bool any = false;
        for (Eigen::Index r = 0; r < data.rows() && !any; ++r) any = !std::isnan(data(r, c));
        observed_vars += any ? 1 : 0;
    }

    double d2 = 0.0;
    int sum_k = 0;
    for (const auto& g : groups) {
        const auto O = g.observed_idx();
        if (O.empty()) continue;
        ++res.n_patterns;
        sum_k += static_cast<int>(O.size());
        Eigen::VectorXd ybar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(O.size()));
        for (const auto r : g.rows)
            for (std::size_t i = 0; i < O.size(); ++i) ybar(static_cast<Eigen::Index>(i)) += data(r, O[i]);
        ybar /= static_cast<double>(g.rows.size());
        const Eigen::VectorXd diff = ybar - subvector(est.mean, O);
        const auto llt = checked_llt(submatrix(est.covariance, O, O));
        d2 += static_cast<double>(g.rows.size()) * diff.dot(llt.solve(diff));
    }
    if (res.n_patterns <= 1) {
        res.statistic = 0.0;
        res.df = 0;
        res.p = 1.0;
        return res;
    }
    res.statistic = d2;
    res.df = sum_k - observed_vars;
    res.p = stats::chi2_upper_tail(d2, res.df);
    return res;
}

McarTestResult little_mcar_test(const LongitudinalDataset& ds) {
    const auto N = static_cast<Eigen::Index>(ds.size());
    const auto k = static_cast<Eigen::Index>(ds.n_visits());
    Eigen::MatrixXd data(N, k);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto& s = ds.subjects()[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto& y = s.outcomes[static_cast<std::size_t>(j)];
            data(i, j) = y ? *y : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return little_mcar_test(data);
}

}  // namespace longimpute
