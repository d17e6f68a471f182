#include <algorithm>
#include <limits>
#include <map>

#include "longimpute/diagnostics.hpp"
#include "longimpute/errors.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

ChiSquareResult pearson_chi2(const Eigen::MatrixXd& counts) {
    if ((counts.array() < 0.0).any() || !counts.allFinite()) throw DomainError("counts must be finite and non-negative");
    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index r = 0; r < counts.rows(); ++r)
        if (counts.row(r).sum() > 0.0) rows.push_back(r);
    for (Eigen::Index c = 0; c < counts.cols(); ++c)
        if (counts.col(c).sum() > 0.0) cols.push_back(c);
    if (rows.size() < 2 || cols.size() < 2) throw ShapeError("chi-square test needs at least a 2 x 2 table of non-empty margins");

    Eigen::MatrixXd t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = counts(rows[i], cols[j]);
    const Eigen::VectorXd rsum = t.rowwise().sum();
    const Eigen::RowVectorXd csum = t.colwise().sum();
    const double total = t.sum();

    ChiSquareResult res;
    res.min_expected = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
            const double e = rsum(i) * csum(j) / total;
            res.min_expected = std::min(res.min_expected, e);
            res.statistic += (t(i, j) - e) * (t(i, j) - e) / e;
        }
    res.df = static_cast<int>((t.rows() - 1) * (t.cols() - 1));
    res.p = stats::chi2_upper_tail(res.statistic, res.df);
    res.small_cell_warning = res.min_expected < 1.0;
    return res;
}

ChiSquareResult pattern_chi2(const LongitudinalDataset& ds) {
    std::map<std::vector<std::uint8_t>, Eigen::Index, std::greater<>> index;
    for (const auto& p : ds.patterns()) index.emplace(p.observed, 0);
    Eigen::Index next = 0;
    for (auto& [mask, col] : index) col = next++;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(2, next);
    for (std::size_t i = 0; i < ds.size(); ++i)
        counts(static_cast<Eigen::Index>(ds.subjects()[i].arm), index.at(ds.patterns()[i].observed)) += 1.0;
    return pearson_chi2(counts);
}

}  // namespace longimpute
