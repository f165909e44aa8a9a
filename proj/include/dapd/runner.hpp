#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "dapd/analysis.hpp"
#include "dapd/oracle.hpp"
#include "dapd/problem.hpp"
#include "dapd/solver.hpp"
#include "dapd/topology.hpp"

namespace dapd {

/// Termination policy. max_iters always applies; the optional targets stop
/// the run early once reached (checked on trace rows, so granularity is
/// trace_every).
struct StopRule {
    long max_iters = 1000;
    std::optional<double> rel_err_target;   // needs a reference optimum
    std::optional<double> kkt_target;       // max of the three KKT residuals
};

struct RunOptions {
    StopRule stop;
    long trace_every = 1;   // record every t-th round (round 0 always recorded)
    int threads = 1;
    bool track_lyapunov = false;   // run the dense twin; fill eps and margin_min
    std::optional<SmoothnessConstants> constants;  // required by track_lyapunov
    std::optional<KktPoint> reference;             // enables rel_err and eps
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline double rel_error(const VectorXd& x, const VectorXd& x_star) {
    double denom = std::max(x_star.norm(), 1e-30);
    return (x - x_star).norm() / denom;
}

}  // namespace detail

/// Drive the per-agent iteration from the given initial state. When
/// track_lyapunov is set (and a reference plus certified constants are
/// available), a dense matrix-form twin is stepped in lockstep purely for
/// diagnostics: the composite error and the recursion margins are evaluated
/// on the twin's own trajectory. The twin never feeds back into the
/// distributed state, so enabling diagnostics cannot change the iterates.
inline RunTrace run(const AggregativeProblem& p, const MixingNetwork& net, const StepSizes& st,
                    SwarmState state, const RunOptions& opt) {
    st.validate();
    RunTrace trace;
    trace.rho = net.spectral().rho;
    trace.config_hash = opt.config_hash;
    trace.seed = opt.seed;

    const int N = p.num_agents();
    const int m = p.num_constraints();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    if (opt.reference) {
        trace.has_reference = true;
        trace.x_star = opt.reference->x;
        trace.lambda_star = opt.reference->lambda;
    }

    // Diagnostics twin. Weight-matrix positivity is a precondition of the
    // composite error; when it fails we record NaN columns instead of
    // aborting an otherwise valid run.
    bool twin_active = false;
    std::optional<MatrixOps> ops;
    std::optional<MatrixFormState> twin;
    std::optional<FixedPoint> fp;
    SmoothnessConstants consts;
    bool weights_ok = false;
    if (opt.track_lyapunov && opt.constants && opt.reference) {
        consts = *opt.constants;
        ops.emplace(make_matrix_ops(p, net));
        twin.emplace(initial_matrix_state(p, state.x, state.lambda));
        twin->z = state.z;
        twin->mu = state.mu;
        twin->v = state.v;
        twin->k = state.k;
        fp.emplace(build_fixed_point(p, net, st, *opt.reference));
        trace.certificate = certify(p, net, st, consts);
        trace.has_certificate = true;
        auto [lmin, lmax] = p.coupling_spectrum();
        weights_ok = 2.0 * st.alpha * st.beta * lmax <= 1.0 &&
                     st.gamma * net.spectral().lambda_max_sq <= 1.0;
        twin_active = true;
    }

    auto record = [&](const SwarmState& s, double margin_min) {
        TraceRow row;
        row.k = s.k;
        VectorXd lam_bar = block_mean(s.lambda, N);
        row.rel_err = trace.has_reference ? detail::rel_error(s.x, trace.x_star) : nan;
        auto [dz, dmu] = tracking_drift(p, s.x, s.z, s.mu);
        row.cons_z = consensus_error(s.z, N);
        row.cons_mu = consensus_error(s.mu, N);
        row.cons_lambda = consensus_error(s.lambda, N);
        KktResiduals res = kkt_residuals(p, s.x, lam_bar);
        row.kkt_stat = res.stationarity;
        row.kkt_primal = res.primal;
        row.kkt_comp = res.complementarity;
        if (twin_active && weights_ok) {
            row.eps = lyapunov_value(p, net, st, consts, *fp, *ops, *twin);
        } else {
            row.eps = nan;
        }
        row.margin_min = margin_min;
        trace.rows.push_back(row);
        (void)dz;
        (void)dmu;
        (void)m;
        return row;
    };

    auto should_stop = [&](const TraceRow& row) -> std::optional<StopReason> {
        if (opt.stop.rel_err_target && trace.has_reference && row.rel_err <= *opt.stop.rel_err_target)
            return StopReason::rel_err;
        if (opt.stop.kkt_target) {
            double worst = std::max({row.kkt_stat, row.kkt_primal, row.kkt_comp});
            if (worst <= *opt.stop.kkt_target) return StopReason::kkt;
        }
        return std::nullopt;
    };

    TraceRow row0 = record(state, nan);
    if (auto why = should_stop(row0)) {
        trace.stop_reason = *why;
        trace.iterations = 0;
        trace.final_state = std::move(state);
        return trace;
    }

    try {
        for (long k = 0; k < opt.stop.max_iters; ++k) {
            double margin_min = nan;
            if (twin_active) {
                MatrixFormState next = step_matrix(*twin, p, *ops, st);
                RecursionMargins mg =
                    check_error_recursion_step(p, net, st, consts, *fp, *ops, *twin, next);
                margin_min = mg.min();
                *twin = std::move(next);
            }
            state = step_distributed(state, p, net, st, opt.threads);
            bool last = (k + 1 == opt.stop.max_iters);
            if (state.k % opt.trace_every == 0 || last) {
                TraceRow row = record(state, margin_min);
                if (auto why = should_stop(row)) {
                    trace.stop_reason = *why;
                    trace.iterations = state.k;
                    trace.final_state = std::move(state);
                    return trace;
                }
            }
        }
    } catch (const DivergenceError& e) {
        trace.diverged = true;
        trace.divergence_detail = e.what();
        trace.stop_reason = StopReason::diverged;
        trace.iterations = state.k;
        trace.final_state = std::move(state);
        return trace;
    }

    trace.stop_reason = StopReason::max_iters;
    trace.iterations = state.k;
    trace.final_state = std::move(state);
    return trace;
}

/// Convenience entry: zero-initialized state.
inline RunTrace run(const AggregativeProblem& p, const MixingNetwork& net, const StepSizes& st,
                    const RunOptions& opt) {
    VectorXd x0 = VectorXd::Zero(p.total_dim());
    VectorXd lam0 = VectorXd::Zero(static_cast<long>(p.num_agents()) * p.num_constraints());
    return run(p, net, st, initial_state(p, x0, lam0), opt);
}

}  // namespace dapd
