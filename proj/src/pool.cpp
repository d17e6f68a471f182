#include <cmath>

#include "longimpute/errors.hpp"
#include "longimpute/impute.hpp"
#include "longimpute/lmm.hpp"
#include "longimpute/stats.hpp"

namespace longimpute {

CoefficientEstimates CoefficientEstimates::from_fit(const LmmFit& fit) {
    return {fit.names, fit.beta, fit.beta_cov.diagonal()};
}

PooledEstimate pool(std::span<const CoefficientEstimates> fits) {
    const auto K = static_cast<int>(fits.size());
    if (K < 2) throw PoolingError("pooling needs at least two imputations, got " + std::to_string(K));
    const auto& first = fits.front();
    const auto p = first.estimate.size();
    for (const auto& f : fits) {
        if (f.names != first.names || f.estimate.size() != p || f.variance.size() != p)
            throw ShapeError("imputation fits have different coefficient sets");
    }

    PooledEstimate out;
    out.names = first.names;
    out.K = K;
    out.point = Eigen::VectorXd::Zero(p);
    out.within = Eigen::VectorXd::Zero(p);
    for (const auto& f : fits) {
        out.point += f.estimate;
        out.within += f.variance;
    }
    out.point /= K;
    out.within /= K;
    out.between = Eigen::VectorXd::Zero(p);
    for (const auto& f : fits) out.between += (f.estimate - out.point).cwiseAbs2();
    out.between /= (K - 1);

    const double inflate = 1.0 + 1.0 / K;
    out.total = out.within + inflate * out.between;
    out.df.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        if (out.between(k) <= 0.0) {
            out.df(k) = kMaxPooledDf;
            continue;
        }
        const double r = 1.0 + out.within(k) / (inflate * out.between(k));
        out.df(k) = std::min((K - 1) * r * r, kMaxPooledDf);
    }
    return out;
}

double PooledEstimate::p_value(Eigen::Index k) const {
    return stats::student_t_two_sided_p(t_statistic(k), df(k));
}

std::pair<double, double> PooledEstimate::interval(Eigen::Index k, double level) const {
    const double q = stats::student_t_quantile(0.5 + 0.5 * level, df(k));
    return {point(k) - q * se(k), point(k) + q * se(k)};
}

}  // namespace longimpute
