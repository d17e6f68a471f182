#include "longimpute/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace longimpute::optim {

namespace {

void clamp_lower(Eigen::VectorXd& x, const std::optional<Eigen::VectorXd>& lower) {
    if (lower) x = x.cwiseMax(*lower);
}

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& start,
                           const NelderMeadOptions& options) {
    const auto d = start.size();
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

    std::vector<Eigen::VectorXd> x(d + 1, start);
    clamp_lower(x[0], options.lower);
    for (Eigen::Index i = 0; i < d; ++i) {
        x[i + 1] = x[0];
        x[i + 1](i) += options.initial_step;
    }
    std::vector<double> fx(d + 1);
    for (std::size_t k = 0; k < x.size(); ++k) fx[k] = safe_eval(f, x[k]);

    std::vector<std::size_t> order(d + 1);
    MinimizeResult result;
    for (int iter = 0; iter < options.max_iter; ++iter) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
        const auto best = order.front();
        const auto worst = order.back();
        const auto second_worst = order[d - 1];

        double x_spread = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
            x_spread = std::max(x_spread, (x[k] - x[best]).lpNorm<Eigen::Infinity>());
        const double f_spread = fx[worst] - fx[best];
        result.iterations = iter;
        if (std::isfinite(f_spread) && f_spread < options.f_tol && x_spread < options.x_tol) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < x.size(); ++k)
            if (k != worst) centroid += x[k];
        centroid /= static_cast<double>(d);

        Eigen::VectorXd xr = centroid + alpha * (centroid - x[worst]);
        clamp_lower(xr, options.lower);
        const double fr = safe_eval(f, xr);
        if (fr < fx[best]) {
            Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            clamp_lower(xe, options.lower);
            const double fe = safe_eval(f, xe);
            if (fe < fr) { x[worst] = xe; fx[worst] = fe; }
            else { x[worst] = xr; fx[worst] = fr; }
            continue;
        }
        if (fr < fx[second_worst]) {
            x[worst] = xr;
            fx[worst] = fr;
            continue;
        }
        const bool outside = fr < fx[worst];
        Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + rho * (xr - centroid))
                                     : Eigen::VectorXd(centroid + rho * (x[worst] - centroid));
        clamp_lower(xc, options.lower);
        const double fc = safe_eval(f, xc);
        if (fc < (outside ? fr : fx[worst])) {
            x[worst] = xc;
            fx[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (k == best) continue;
            x[k] = x[best] + sigma * (x[k] - x[best]);
            clamp_lower(x[k], options.lower);
            fx[k] = safe_eval(f, x[k]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fx.begin(), fx.end()) - fx.begin());
    result.x = x[best];
    result.fx = fx[best];
    return result;
}

MinimizeResult bfgs(const Objective& f, const Gradient& grad, const Eigen::VectorXd& start,
                    const BfgsOptions& options) {
    const auto d = start.size();
    MinimizeResult result;
    Eigen::VectorXd x = start;
    double fx = f(x);
    Eigen::VectorXd g = grad(x);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        result.iterations = iter;
        if (g.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            result.converged = true;
            break;
        }
        Eigen::VectorXd p = -H * g;
        if (g.dot(p) >= 0.0) {
            H.setIdentity();
            p = -g;
        }
        double step = 1.0;
        Eigen::VectorXd x_new;
        double f_new = std::numeric_limits<double>::infinity();
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * p;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * g.dot(p)) break;
            step *= 0.5;
        }
        if (!std::isfinite(f_new) || f_new > fx) break;
        const Eigen::VectorXd g_new = grad(x_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double rel_change = std::abs(fx - f_new) / std::max(1.0, std::abs(fx));
        x = x_new;
        fx = f_new;
        g = g_new;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double r = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            H = (I - r * s * y.transpose()) * H * (I - r * y * s.transpose()) + r * s * s.transpose();
        }
        if (rel_change < options.f_tol && g.lpNorm<Eigen::Infinity>() < 100.0 * options.grad_tol) {
            result.converged = true;
            break;
        }
    }
    result.x = x;
    result.fx = fx;
    return result;
}

Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
        xp(i) = xm(i) = x(i);
    }
    return g;
}

Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double h) {
    const auto d = x.size();
    Eigen::MatrixXd H(d, d);
    const double f0 = f(x);
    Eigen::VectorXd xx = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        xx(i) = x(i) + h;
        const double fp = f(xx);
        xx(i) = x(i) - h;
        const double fm = f(xx);
        xx(i) = x(i);
        H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
        for (Eigen::Index j = 0; j < i; ++j) {
            xx(i) = x(i) + h; xx(j) = x(j) + h;
            const double fpp = f(xx);
            xx(j) = x(j) - h;
            const double fpm = f(xx);
            xx(i) = x(i) - h;
            const double fmm = f(xx);
            xx(j) = x(j) + h;
            const double fmp = f(xx);
            xx(i) = x(i); xx(j) = x(j);
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    return H;
}

Eigen::MatrixXd jacobian_of_gradient(const Gradient& g, const Eigen::VectorXd& x, double h) {
    const auto d = x.size();
    Eigen::MatrixXd J(d, d);
    Eigen::VectorXd xx = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        xx(i) = x(i) + h;
        const Eigen::VectorXd gp = g(xx);
        xx(i) = x(i) - h;
        const Eigen::VectorXd gm = g(xx);
        xx(i) = x(i);
        J.col(i) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (J + J.transpose());
}

}  // namespace longimpute::optim
