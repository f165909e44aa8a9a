#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "dapd/problem.hpp"
#include "dapd/topology.hpp"

namespace dapd {

/// Iterates with any |entry| above this are declared divergent.
inline constexpr double kDivergenceLimit = 1e12;

struct StepSizes {
    double alpha = 0.0;  // primal step
    double beta = 0.0;   // constraint pressure
    double gamma = 0.0;  // dual consensus damping

    void validate() const {
        if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0))
            throw ConfigError("step sizes must be positive");
    }
};

// ============================================================================
// States
// ============================================================================

/// Per-agent state of the distributed iteration, stacked agent-major:
///   x       in R^d        decision variables
///   z       in R^{N n}    aggregate trackers (mean tracks phi(x) exactly)
///   mu      in R^{N n}    aggregate-gradient trackers
///   v       in R^{N m}    pre-projection dual variables
///   lambda  in R^{N m}    projected multipliers, >= 0
///   lambda_prev           multipliers of the previous round
struct SwarmState {
    VectorXd x, z, mu, v, lambda, lambda_prev;
    long k = 0;
};

/// Stacked-form twin state. Same x/z/mu/v/lambda blocks plus the auxiliary y
/// used by the gradient-flow form of the dual update. y starts at 0 and stays
/// in the range space of B.
struct MatrixFormState {
    VectorXd x, z, mu, v, y, lambda;
    long k = 0;
};

/// Dense stacked operators for the matrix-form twin (built once; the twin is
/// a verification oracle, not the production path, and pays the O(N^3)
/// eigendecomposition for B).
struct MatrixOps {
    MatrixXd Wn;      // W (x) I_n, mixes aggregate trackers
    MatrixXd Cm;      // C (x) I_m
    MatrixXd Bm;      // B (x) I_m, principal sqrt of Cm
    MatrixXd Lambda;  // blockdiag(A_1..A_N), (N m) x d
    VectorXd b;       // col(b_1..b_N)
};

namespace detail {

inline MatrixXd kron_identity(const MatrixXd& M, int block) {
    const int N = static_cast<int>(M.rows());
    MatrixXd K = MatrixXd::Zero(static_cast<long>(N) * block, static_cast<long>(N) * block);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            if (M(i, j) != 0.0)
                K.block(static_cast<long>(i) * block, static_cast<long>(j) * block, block, block) =
                    M(i, j) * MatrixXd::Identity(block, block);
    return K;
}

/// Run fn(i) for i in [0, N) on up to `threads` workers over contiguous agent
/// ranges. Writers touch disjoint output segments, and each agent's arithmetic
/// is a fixed ascending-index accumulation, so the result is identical to the
/// sequential pass.
template <typename Fn>
void for_each_agent(int N, int threads, Fn&& fn) {
    if (threads <= 1 || N < 2) {
        for (int i = 0; i < N; ++i) fn(i);
        return;
    }
    threads = std::min(threads, N);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    int chunk = (N + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int lo = t * chunk, hi = std::min(N, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline void check_iterate(const SwarmState& s, const AggregativeProblem& p) {
    auto scan = [&](const VectorXd& v, const char* name, int block) {
        for (long idx = 0; idx < v.size(); ++idx) {
            double val = v[idx];
            if (!std::isfinite(val) || std::abs(val) > kDivergenceLimit) {
                int agent, comp;
                if (block > 0) {
                    agent = static_cast<int>(idx / block);
                    comp = static_cast<int>(idx % block);
                } else {  // x uses per-agent offsets
                    agent = 0;
                    while (agent + 1 < p.num_agents() && p.agent_offset(agent + 1) <= idx) ++agent;
                    comp = static_cast<int>(idx - p.agent_offset(agent));
                }
                throw DivergenceError("divergence detected in " + std::string(name) + " at agent " +
                                          std::to_string(agent) + ", component " + std::to_string(comp),
                                      agent, comp);
            }
        }
    };
    scan(s.x, "x", 0);
    scan(s.z, "z", p.agg_dim());
    scan(s.mu, "mu", p.agg_dim());
    scan(s.v, "v", p.num_constraints());
    scan(s.lambda, "lambda", p.num_constraints());
}

}  // namespace detail

inline MatrixOps make_matrix_ops(const AggregativeProblem& p, const MixingNetwork& net) {
    if (net.size() != p.num_agents()) throw ConfigError("network size does not match agent count");
    MatrixOps ops;
    ops.Wn = detail::kron_identity(net.W(), p.agg_dim());
    ops.Cm = detail::kron_identity(net.C(), p.num_constraints());
    ops.Bm = detail::kron_identity(matrix_sqrt_b(net), p.num_constraints());
    const int m = p.num_constraints();
    ops.Lambda = MatrixXd::Zero(static_cast<long>(p.num_agents()) * m, p.total_dim());
    ops.b = VectorXd::Zero(static_cast<long>(p.num_agents()) * m);
    for (int i = 0; i < p.num_agents(); ++i) {
        ops.Lambda.block(static_cast<long>(i) * m, p.agent_offset(i), m, p.agent_dim(i)) = p.agent(i).A;
        ops.b.segment(static_cast<long>(i) * m, m) = p.agent(i).b;
    }
    return ops;
}

// ============================================================================
// Initialization
// ============================================================================

/// Start state: trackers primed from the initial point (z_i = h_i(x_i),
/// mu_i = grad2 f_i(x_i, z_i)), v = 0 and lambda_prev = 0. x0 and lambda0 are
/// free; lambda0 must be nonnegative.
inline SwarmState initial_state(const AggregativeProblem& p, const VectorXd& x0, const VectorXd& lambda0) {
    const int N = p.num_agents(), n = p.agg_dim(), m = p.num_constraints();
    if (x0.size() != p.total_dim()) throw ConfigError("x0 has wrong dimension");
    if (lambda0.size() != static_cast<long>(N) * m) throw ConfigError("lambda0 has wrong dimension");
    if (lambda0.minCoeff() < 0.0) throw ConfigError("lambda0 must be nonnegative");
    SwarmState s;
    s.x = x0;
    s.z.resize(static_cast<long>(N) * n);
    s.mu.resize(static_cast<long>(N) * n);
    for (int i = 0; i < N; ++i) {
        VectorXd zi = p.agent(i).aggregate(p.agent_x(x0, i));
        if (zi.size() != n) throw ConfigError("h_i returned wrong dimension");
        s.z.segment(static_cast<long>(i) * n, n) = zi;
        s.mu.segment(static_cast<long>(i) * n, n) = p.eval_grad_agg(i, p.agent_x(x0, i), zi);
    }
    s.v = VectorXd::Zero(static_cast<long>(N) * m);
    s.lambda = lambda0;
    s.lambda_prev = VectorXd::Zero(static_cast<long>(N) * m);
    s.k = 0;
    return s;
}

inline MatrixFormState initial_matrix_state(const AggregativeProblem& p, const VectorXd& x0,
                                            const VectorXd& lambda0) {
    SwarmState s = initial_state(p, x0, lambda0);
    MatrixFormState ms;
    ms.x = std::move(s.x);
    ms.z = std::move(s.z);
    ms.mu = std::move(s.mu);
    ms.v = std::move(s.v);
    ms.lambda = std::move(s.lambda);
    ms.y = VectorXd::Zero(ms.lambda.size());
    ms.k = 0;
    return ms;
}

// ============================================================================
// Distributed step
// ============================================================================

/// One synchronous round of the per-agent iteration. Every agent reads the
/// round-k snapshot (double-buffered), so rounds may be evaluated in parallel
/// across agents; `threads` <= 1 runs sequentially with identical results.
///
/// The incremental dual recursion used from round 1 onward conserves
/// sum_i (v_i - lambda_prev_i) - beta sum_i A_i x_i across rounds, so the
/// very first round evaluates the dual update in its direct form
///   v_i <- lambda_i - sum_j c_ij lambda_j + beta (A_i x_i^+ - b_i),
/// anchoring that conserved quantity to the constraint offsets b_i rather
/// than to the (arbitrary) initial point. The two forms coincide whenever
/// A_i x_{i,0} = b_i. Both need only neighbor values, so the round stays
/// fully local either way.
inline SwarmState step_distributed(const SwarmState& s, const AggregativeProblem& p,
                                   const MixingNetwork& net, const StepSizes& st, int threads = 1) {
    st.validate();
    const int N = p.num_agents(), n = p.agg_dim(), m = p.num_constraints();
    if (net.size() != N) throw ConfigError("network size does not match agent count");

    SwarmState out;
    out.x.resize(p.total_dim());
    out.z.resize(static_cast<long>(N) * n);
    out.mu.resize(static_cast<long>(N) * n);
    out.v.resize(static_cast<long>(N) * m);
    out.lambda.resize(static_cast<long>(N) * m);
    out.lambda_prev = s.lambda;
    out.k = s.k + 1;
    const bool first_round = (s.k == 0);

    detail::for_each_agent(N, threads, [&](int i) {
        const auto& ag = p.agent(i);
        const int di = ag.dim, off = p.agent_offset(i);
        VectorXd xi = s.x.segment(off, di);
        VectorXd zi = s.z.segment(static_cast<long>(i) * n, n);
        VectorXd mui = s.mu.segment(static_cast<long>(i) * n, n);
        VectorXd lami = s.lambda.segment(static_cast<long>(i) * m, m);

        // primal descent against local gradient, tracker feedback, multiplier
        VectorXd xin = xi - st.alpha * (p.eval_grad_local(i, xi, zi) + ag.aggregate_jacobian(xi) * mui +
                                        ag.A.transpose() * lami);
        out.x.segment(off, di) = xin;

        // tracker mixing; sums run in ascending neighbor order (determinism
        // contract)
        VectorXd zmix = VectorXd::Zero(n);
        VectorXd mumix = VectorXd::Zero(n);
        for (const auto& [j, w] : net.row(i)) {
            if (w != 0.0) {
                zmix += w * s.z.segment(static_cast<long>(j) * n, n);
                mumix += w * s.mu.segment(static_cast<long>(j) * n, n);
            }
        }
        VectorXd zin = zmix + ag.aggregate(xin) - ag.aggregate(xi);
        out.z.segment(static_cast<long>(i) * n, n) = zin;
        out.mu.segment(static_cast<long>(i) * n, n) =
            mumix + p.eval_grad_agg(i, xin, zin) - p.eval_grad_agg(i, xi, zi);

        VectorXd vin(m);
        if (first_round) {
            VectorXd clam = VectorXd::Zero(m);
            for (const auto& [j, w] : net.row(i)) {
                double c = 0.5 * ((j == i ? 1.0 : 0.0) - w);
                clam += c * s.lambda.segment(static_cast<long>(j) * m, m);
            }
            vin = lami - clam + st.beta * (ag.A * xin - ag.b);
        } else {
            VectorXd cv = VectorXd::Zero(m);
            VectorXd cdlam = VectorXd::Zero(m);
            for (const auto& [j, w] : net.row(i)) {
                double c = 0.5 * ((j == i ? 1.0 : 0.0) - w);
                cv += c * s.v.segment(static_cast<long>(j) * m, m);
                cdlam += c * (s.lambda.segment(static_cast<long>(j) * m, m) -
                              s.lambda_prev.segment(static_cast<long>(j) * m, m));
            }
            vin = s.v.segment(static_cast<long>(i) * m, m) - st.gamma * cv - cdlam +
                  (lami - s.lambda_prev.segment(static_cast<long>(i) * m, m)) + st.beta * ag.A * (xin - xi);
        }
        out.v.segment(static_cast<long>(i) * m, m) = vin;
        out.lambda.segment(static_cast<long>(i) * m, m) = vin.cwiseMax(0.0);
    });

    detail::check_iterate(out, p);
    return out;
}

// ============================================================================
// Matrix-form step
// ============================================================================

/// One round of the stacked iteration, coded independently of the per-agent
/// path (dense operators) so the two can cross-check each other.
inline MatrixFormState step_matrix(const MatrixFormState& s, const AggregativeProblem& p,
                                   const MatrixOps& ops, const StepSizes& st) {
    st.validate();
    const int N = p.num_agents(), n = p.agg_dim();

    VectorXd g1(p.total_dim());
    for (int i = 0; i < N; ++i) {
        VectorXd xi = p.agent_x(s.x, i);
        VectorXd zi = s.z.segment(static_cast<long>(i) * n, n);
        g1.segment(p.agent_offset(i), p.agent_dim(i)) =
            p.eval_grad_local(i, xi, zi) +
            p.agent(i).aggregate_jacobian(xi) * s.mu.segment(static_cast<long>(i) * n, n);
    }
    MatrixFormState out;
    out.k = s.k + 1;
    out.x = s.x - st.alpha * (g1 + ops.Lambda.transpose() * s.lambda);

    auto hstack = [&](const VectorXd& x) {
        VectorXd h(static_cast<long>(N) * n);
        for (int i = 0; i < N; ++i) h.segment(static_cast<long>(i) * n, n) = p.agent(i).aggregate(p.agent_x(x, i));
        return h;
    };
    auto g2stack = [&](const VectorXd& x, const VectorXd& z) {
        VectorXd g(static_cast<long>(N) * n);
        for (int i = 0; i < N; ++i)
            g.segment(static_cast<long>(i) * n, n) =
                p.eval_grad_agg(i, p.agent_x(x, i), z.segment(static_cast<long>(i) * n, n));
        return g;
    };
    out.z = ops.Wn * s.z + hstack(out.x) - hstack(s.x);
    out.mu = ops.Wn * s.mu + g2stack(out.x, out.z) - g2stack(s.x, s.z);
    out.v = s.lambda - ops.Cm * s.lambda + st.beta * (ops.Lambda * out.x - ops.b) + ops.Bm * s.y;
    out.y = s.y - st.gamma * (ops.Bm * out.v);
    out.lambda = out.v.cwiseMax(0.0);
    return out;
}

// ============================================================================
// State diagnostics
// ============================================================================

/// Exact-tracking drift: ||mean_i z_i - phi(x)|| and
/// ||mean_i mu_i - mean_i grad2 f_i(x_i, z_i)||. Both are conserved by the
/// iteration up to rounding (growth is at most linear in k * machine eps).
inline std::pair<double, double> tracking_drift(const AggregativeProblem& p, const VectorXd& x,
                                                const VectorXd& z, const VectorXd& mu) {
    const int N = p.num_agents(), n = p.agg_dim();
    VectorXd zbar = VectorXd::Zero(n), mubar = VectorXd::Zero(n);
    for (int i = 0; i < N; ++i) {
        zbar += z.segment(static_cast<long>(i) * n, n);
        mubar += mu.segment(static_cast<long>(i) * n, n);
    }
    zbar /= N;
    mubar /= N;
    return {(zbar - p.phi(x)).norm(), (mubar - p.mean_grad_agg(x, z)).norm()};
}

/// ||u - 1 (x) mean(u)|| for a stacked vector of N blocks.
inline double consensus_error(const VectorXd& u, int N) {
    const int blk = static_cast<int>(u.size() / N);
    VectorXd mean = VectorXd::Zero(blk);
    for (int i = 0; i < N; ++i) mean += u.segment(static_cast<long>(i) * blk, blk);
    mean /= N;
    double acc = 0.0;
    for (int i = 0; i < N; ++i) acc += (u.segment(static_cast<long>(i) * blk, blk) - mean).squaredNorm();
    return std::sqrt(acc);
}

inline VectorXd block_mean(const VectorXd& u, int N) {
    const int blk = static_cast<int>(u.size() / N);
    VectorXd mean = VectorXd::Zero(blk);
    for (int i = 0; i < N; ++i) mean += u.segment(static_cast<long>(i) * blk, blk);
    return mean / N;
}

}  // namespace dapd
