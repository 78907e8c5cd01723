#pragma once

// Small dense Levenberg-Marquardt solver with a projection step for simple
// bound constraints. Jacobians are forward differences.

#include <Eigen/Dense>
#include <functional>
#include <limits>

namespace kitamp::optim {

struct LmOptions {
    int max_iterations = 100;
    double initial_lambda = 1e-3;
    double step_tolerance = 1e-13;     // relative step norm
    double cost_tolerance = 1e-15;     // relative cost reduction
    double absolute_cost_floor = 1e-28; // cost below which the fit is exact
};

struct LmResult {
    Eigen::VectorXd x;
    double initial_cost = 0.0;
    double cost = 0.0; // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
};

using Projector = std::function<void(Eigen::VectorXd&)>;

template <class Residual>
LmResult levenberg_marquardt(Residual&& residual, Eigen::VectorXd x, const LmOptions& opt = {},
                             const Projector& project = {}) {
    if (project) project(x);
    Eigen::VectorXd r = residual(x);
    LmResult res;
    res.initial_cost = 0.5 * r.squaredNorm();
    double cost = res.initial_cost;
    double lambda = opt.initial_lambda;
    const Eigen::Index n = x.size();

    if (cost <= opt.absolute_cost_floor) {
        res.x = x;
        res.cost = cost;
        res.converged = true;
        return res;
    }

    Eigen::MatrixXd J(r.size(), n);
    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it + 1;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            Eigen::VectorXd xp = x;
            xp[j] += h;
            J.col(j) = (residual(xp) - r) / h;
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;

        bool improved = false;
        for (int tries = 0; tries < 30 && !improved; ++tries) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
            Eigen::VectorXd step = A.ldlt().solve(-g);
            Eigen::VectorXd xn = x + step;
            if (project) project(xn);
            Eigen::VectorXd rn = residual(xn);
            const double cn = 0.5 * rn.squaredNorm();
            if (std::isfinite(cn) && cn < cost) {
                const double rel_step = (xn - x).norm() / std::max(1.0, x.norm());
                const double rel_drop = (cost - cn) / std::max(cost, std::numeric_limits<double>::min());
                x = xn;
                r = rn;
                cost = cn;
                lambda = std::max(lambda / 3.0, 1e-15);
                improved = true;
                if (cost <= opt.absolute_cost_floor || rel_step < opt.step_tolerance ||
                    rel_drop < opt.cost_tolerance) {
                    res.converged = true;
                }
            } else {
                lambda *= 4.0;
            }
        }
        if (!improved) {
            // No descent direction left: a local minimum at working precision.
            res.converged = g.norm() <= 1e-8 * std::max(1.0, std::sqrt(2.0 * cost)) || lambda > 1e10;
            break;
        }
        if (res.converged) break;
    }
    res.x = x;
    res.cost = cost;
    return res;
}

} // namespace kitamp::optim
