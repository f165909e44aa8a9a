#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "dapd/problem.hpp"
#include "dapd/solver.hpp"
#include "dapd/topology.hpp"

namespace dapd {

/// Reference optimum of the coupled problem: primal block, consensual
/// multiplier, and the active set that produced them.
struct KktPoint {
    VectorXd x;                   // stacked, R^d
    VectorXd lambda;              // R^m, >= 0
    std::vector<int> active_set;  // ascending constraint indices with A x = b
    double condition_estimate = 0.0;
    int candidates_accepted = 0;  // masks passing both feasibility checks (1 unless degenerate)
};

struct KktResiduals {
    double stationarity = 0.0;   // || full_gradient(x) + Lambda^T (1 (x) lambda) ||
    double primal = 0.0;         // || max(A x - b, 0) ||
    double complementarity = 0.0;  // | lambda . (A x - b) |
    double dual_feasibility = 0.0;  // || min(lambda, 0) ||
};

/// Residuals of the first-order optimality system at (x, lambda) with a
/// consensual multiplier. Nonnegativity violations land in dual_feasibility
/// instead of throwing.
inline KktResiduals kkt_residuals(const AggregativeProblem& p, const VectorXd& x, const VectorXd& lambda) {
    if (lambda.size() != p.num_constraints()) throw ConfigError("lambda has wrong dimension");
    KktResiduals r;
    VectorXd g = p.full_gradient(x);
    for (int i = 0; i < p.num_agents(); ++i)
        g.segment(p.agent_offset(i), p.agent_dim(i)) += p.agent(i).A.transpose() * lambda;
    r.stationarity = g.norm();
    VectorXd gap = p.constraint_gap(x);
    r.primal = gap.cwiseMax(0.0).norm();
    r.complementarity = std::abs(lambda.dot(gap));
    r.dual_feasibility = lambda.cwiseMin(0.0).norm();
    return r;
}

namespace detail {

/// Reduced Hessian and linear term of the quadratic family:
/// objective = x^T (2I + 2 P (x) I) x / ... with gradient H x - 2 a_stacked,
/// H = 2 I_d + 2 (P (x) I_n), P the centering projector.
inline MatrixXd quadratic_hessian(const QuadraticInstance& q) {
    const int d = q.N * q.n;
    MatrixXd H = 2.0 * MatrixXd::Identity(d, d);
    for (int i = 0; i < q.N; ++i)
        for (int j = 0; j < q.N; ++j) {
            double pij = (i == j ? 1.0 : 0.0) - 1.0 / q.N;
            H.block(static_cast<long>(i) * q.n, static_cast<long>(j) * q.n, q.n, q.n) +=
                2.0 * pij * MatrixXd::Identity(q.n, q.n);
        }
    return H;
}

}  // namespace detail

/// Equality-constrained subsystem for a fixed candidate active set: minimize
/// the quadratic objective subject to (sum_i x_i - sum_i b_i)_j = 0 for j in
/// `active`. Returns the primal solution, the full multiplier (zeros off the
/// active set), and the condition estimate of the saddle system.
struct EqualitySolve {
    VectorXd x;
    VectorXd lambda;
    double condition = 0.0;
};

inline EqualitySolve solve_equality_constrained(const QuadraticInstance& q, const std::vector<int>& active) {
    const int d = q.N * q.n, m = q.n, k = static_cast<int>(active.size());
    MatrixXd H = detail::quadratic_hessian(q);
    VectorXd c(d);
    for (int i = 0; i < q.N; ++i) c.segment(static_cast<long>(i) * q.n, q.n) = 2.0 * q.a[i];
    VectorXd btot = VectorXd::Zero(m);
    for (int i = 0; i < q.N; ++i) btot += q.b[i];

    MatrixXd K = MatrixXd::Zero(d + k, d + k);
    K.topLeftCorner(d, d) = H;
    VectorXd rhs(d + k);
    rhs.head(d) = c;
    for (int t = 0; t < k; ++t) {
        int j = active[t];
        if (j < 0 || j >= m) throw ConfigError("active-set index out of range");
        for (int i = 0; i < q.N; ++i) {
            K(static_cast<long>(i) * q.n + j, d + t) = 1.0;
            K(d + t, static_cast<long>(i) * q.n + j) = 1.0;
        }
        rhs[d + t] = btot[j];
    }
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible()) throw NumericError("singular saddle system for candidate active set");
    VectorXd sol = lu.solve(rhs);
    EqualitySolve out;
    out.x = sol.head(d);
    out.lambda = VectorXd::Zero(m);
    for (int t = 0; t < k; ++t) out.lambda[active[t]] = sol[d + t];
    // cheap condition estimate from the LU factors
    VectorXd du = lu.matrixLU().diagonal().cwiseAbs();
    out.condition = du.maxCoeff() / std::max(du.minCoeff(), 1e-300);
    return out;
}

/// Reference solver for the quadratic family: enumerate candidate active sets
/// (2^m subsystems, ascending bitmask order), solve each equality-constrained
/// subsystem, and accept candidates with nonnegative active multipliers and
/// feasible inactive rows. Strong convexity plus full-row-rank coupling makes
/// the optimum unique; ties from degenerate (zero-multiplier) constraints are
/// broken by the enumeration order, so the reported active set is the
/// smallest-bitmask optimal one. A condition estimate above 1e12 only warns
/// (stderr), never fails.
inline KktPoint solve_kkt(const QuadraticInstance& q) {
    const int m = q.n;
    if (m > 20) throw ConfigError("active-set enumeration limited to m <= 20 constraints");
    std::optional<KktPoint> best;
    int accepted = 0;
    VectorXd btot = VectorXd::Zero(m);
    for (int i = 0; i < q.N; ++i) btot += q.b[i];

    for (unsigned mask = 0; mask < (1u << m); ++mask) {
        std::vector<int> act;
        for (int j = 0; j < m; ++j)
            if (mask >> j & 1u) act.push_back(j);
        EqualitySolve es;
        try {
            es = solve_equality_constrained(q, act);
        } catch (const NumericError&) {
            continue;
        }
        VectorXd sums = VectorXd::Zero(m);
        for (int i = 0; i < q.N; ++i) sums += es.x.segment(static_cast<long>(i) * q.n, q.n);
        VectorXd slack = btot - sums;
        bool ok = es.lambda.minCoeff() >= -1e-11;
        for (int j = 0; j < m && ok; ++j) {
            if (mask >> j & 1u)
                ok = std::abs(slack[j]) <= 1e-9;
            else
                ok = slack[j] >= -1e-9;
        }
        if (!ok) continue;
        ++accepted;
        if (!best) {
            KktPoint kp;
            kp.x = es.x;
            kp.lambda = es.lambda.cwiseMax(0.0);
            kp.active_set = act;
            kp.condition_estimate = es.condition;
            best = std::move(kp);
        }
    }
    if (!best) throw NumericError("no candidate active set satisfied the optimality checks");
    best->candidates_accepted = accepted;
    if (best->condition_estimate > 1e12)
        std::fprintf(stderr, "warning: reference saddle system condition ~%.2e\n", best->condition_estimate);
    return *best;
}

// ============================================================================
// Fixed point of the iteration
// ============================================================================

/// The stationary tuple the iteration contracts to, in matrix-form
/// coordinates. All agent blocks of z*, mu*, v*, lambda* are consensual.
struct FixedPoint {
    VectorXd x;        // = x*
    VectorXd z;        // = 1 (x) phi(x*)
    VectorXd mu;       // = 1 (x) mean grad2
    VectorXd v;        // = 1 (x) (lambda* + (beta/N) (A x* - b))
    VectorXd y;        // minimum-norm solution of B y = v - lambda - beta(Lambda x - b)
    VectorXd lambda;   // = 1 (x) lambda*
    double y_residual = 0.0;
};

/// Assemble the fixed point from a reference optimum. The y-block solves its
/// defining equation on the range space of B (minimum-norm representative via
/// the spectral pseudo-inverse); the right-hand side sums to zero across
/// agents, which makes the system consistent. Residual above 1e-8 is fatal.
inline FixedPoint build_fixed_point(const AggregativeProblem& p, const MixingNetwork& net,
                                    const StepSizes& st, const KktPoint& ref) {
    const int N = p.num_agents(), n = p.agg_dim(), m = p.num_constraints();
    if (net.size() != N) throw ConfigError("network size does not match agent count");
    FixedPoint f;
    f.x = ref.x;
    VectorXd ph = p.phi(ref.x);
    VectorXd zstar = ph;
    f.z.resize(static_cast<long>(N) * n);
    for (int i = 0; i < N; ++i) f.z.segment(static_cast<long>(i) * n, n) = zstar;
    VectorXd mubar = p.mean_grad_agg(ref.x, f.z);
    f.mu.resize(static_cast<long>(N) * n);
    for (int i = 0; i < N; ++i) f.mu.segment(static_cast<long>(i) * n, n) = mubar;
    VectorXd gap = p.constraint_gap(ref.x);
    VectorXd vbar = ref.lambda + (st.beta / N) * gap;
    f.v.resize(static_cast<long>(N) * m);
    f.lambda.resize(static_cast<long>(N) * m);
    for (int i = 0; i < N; ++i) {
        f.v.segment(static_cast<long>(i) * m, m) = vbar;
        f.lambda.segment(static_cast<long>(i) * m, m) = ref.lambda;
    }
    VectorXd rhs(static_cast<long>(N) * m);
    for (int i = 0; i < N; ++i)
        rhs.segment(static_cast<long>(i) * m, m) =
            vbar - ref.lambda - st.beta * (p.agent(i).A * p.agent_x(ref.x, i) - p.agent(i).b);

    // spectral pseudo-inverse of B applied blockwise: y = (V S^+ V^T (x) I) rhs
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(net.C());
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    MatrixXd V = es.eigenvectors();
    VectorXd ev = es.eigenvalues();
    MatrixXd R(N, m);  // rhs reshaped, row i = agent i block
    for (int i = 0; i < N; ++i) R.row(i) = rhs.segment(static_cast<long>(i) * m, m).transpose();
    MatrixXd coef = V.transpose() * R;
    for (int k2 = 0; k2 < N; ++k2)
        coef.row(k2) *= (ev[k2] > kEigenvalueZeroTol) ? 1.0 / std::sqrt(ev[k2]) : 0.0;
    MatrixXd Y = V * coef;
    f.y.resize(static_cast<long>(N) * m);
    for (int i = 0; i < N; ++i) f.y.segment(static_cast<long>(i) * m, m) = Y.row(i).transpose();

    MatrixXd B = matrix_sqrt_b(net);
    f.y_residual = ((B * Y) - R).norm();
    if (f.y_residual > 1e-8)
        throw NumericError("fixed-point y equation residual " + std::to_string(f.y_residual));
    return f;
}

}  // namespace dapd
