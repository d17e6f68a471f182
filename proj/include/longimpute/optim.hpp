#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace longimpute::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct NelderMeadOptions {
    double initial_step = 0.5;
    int max_iter = 5000;
    double f_tol = 1e-8;   // spread of objective values across the simplex
    double x_tol = 1e-6;   // largest vertex distance from the best vertex
    std::optional<Eigen::VectorXd> lower;  // coordinates are clamped from below
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& start,
                           const NelderMeadOptions& options = {});

struct BfgsOptions {
    int max_iter = 500;
    double grad_tol = 1e-6;   // infinity norm of the gradient
    double f_tol = 1e-12;     // relative objective change
};

MinimizeResult bfgs(const Objective& f, const Gradient& grad, const Eigen::VectorXd& start,
                    const BfgsOptions& options = {});

Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5);
Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4);
// Central differences of an analytic gradient, symmetrised.
Eigen::MatrixXd jacobian_of_gradient(const Gradient& g, const Eigen::VectorXd& x, double h = 1e-5);

}  // namespace longimpute::optim
