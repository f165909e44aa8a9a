#pragma once

// Shared helpers for the test binaries: finite-difference derivatives, an
// independent projected-gradient solver for the identity-coupled quadratic
// instance, and filesystem scratch space. These deliberately avoid the
// library's own differentiation and KKT paths so they can serve as
// independent cross-checks.

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Central-difference gradient of a scalar function.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                            double h = 1e-6) {
    VectorXd g(x.size());
    VectorXd e = x;
    for (long i = 0; i < x.size(); ++i) {
        double xi = x[i];
        e[i] = xi + h;
        double up = f(e);
        e[i] = xi - h;
        double dn = f(e);
        e[i] = xi;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline double rel_diff(const VectorXd& a, const VectorXd& b) {
    return (a - b).norm() / std::max(1.0, std::max(a.norm(), b.norm()));
}

/// Projected gradient descent for
///   min sum_i ||x_i - a_i||^2 + ||x_i - mean(x)||^2
///   s.t. sum_i x_i <= s   (componentwise),
/// the identity-coupled quadratic family. The feasible set projection is
/// separable per component: excess mass (sum_c - s_c)+ is split evenly.
/// Slow but entirely independent of the library's KKT machinery.
struct PgResult {
    VectorXd x;
    VectorXd lambda;  // recovered from the stationarity of the projection
};

inline PgResult projected_gradient_quadratic(const std::vector<VectorXd>& a, const VectorXd& s,
                                             int iters = 200000, double step = 5e-3) {
    const int N = static_cast<int>(a.size());
    const int n = static_cast<int>(a[0].size());
    VectorXd x = VectorXd::Zero(static_cast<long>(N) * n);
    auto grad = [&](const VectorXd& xx) {
        VectorXd mean = VectorXd::Zero(n);
        for (int i = 0; i < N; ++i) mean += xx.segment(static_cast<long>(i) * n, n);
        mean /= N;
        VectorXd g(xx.size());
        // d/dx_i of sum_j ||x_j - mean||^2 collapses to 2(x_i - mean): the
        // chain-rule terms through mean cancel in the sum.
        for (int i = 0; i < N; ++i) {
            VectorXd xi = xx.segment(static_cast<long>(i) * n, n);
            g.segment(static_cast<long>(i) * n, n) = 2.0 * (xi - a[i]) + 2.0 * (xi - mean);
        }
        return g;
    };
    auto project = [&](VectorXd& xx) {
        for (int c = 0; c < n; ++c) {
            double sum = 0.0;
            for (int i = 0; i < N; ++i) sum += xx[static_cast<long>(i) * n + c];
            double excess = sum - s[c];
            if (excess > 0.0)
                for (int i = 0; i < N; ++i) xx[static_cast<long>(i) * n + c] -= excess / N;
        }
    };
    for (int k = 0; k < iters; ++k) {
        VectorXd g = grad(x);
        x -= step * g;
        project(x);
    }
    // lambda_c = -(1/N) sum_i (grad_i)_c at the solution when constraint c is
    // active; zero otherwise. Stationarity: grad_i + lambda = 0 per block for
    // the identity coupling.
    VectorXd g = grad(x);
    VectorXd lambda = VectorXd::Zero(n);
    for (int c = 0; c < n; ++c) {
        double sum = 0.0, xs = 0.0;
        for (int i = 0; i < N; ++i) {
            sum += g[static_cast<long>(i) * n + c];
            xs += x[static_cast<long>(i) * n + c];
        }
        if (xs >= s[c] - 1e-7) lambda[c] = std::max(0.0, -sum / N);
    }
    return {x, lambda};
}

/// Fresh scratch directory under the system temp root; caller owns cleanup
/// (tests leave it around on failure for inspection).
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("dapd_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport
