#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dapd/oracle.hpp"
#include "dapd/problem.hpp"
#include "dapd/solver.hpp"
#include "dapd/topology.hpp"

namespace dapd {

// ============================================================================
// Linear-rate certificate
// ============================================================================

/// Evaluation of the sufficient step-size conditions for geometric decay of
/// the composite error. Every inequality is reported with both sides so a
/// failure names the binding constraint. `tau` upper-bounds the per-round
/// contraction factor of the composite error when all checks pass.
struct Certificate {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double rho = 0.0;
    double c1 = 0.0;
    double kappa = 0.0, kappa1 = 0.0, kappa2 = 0.0;
    double beta_bound = 0.0;   // beta must stay below this
    double gamma_bound = 0.0;  // gamma must stay below this
    double lambda_min_AAt = 0.0, lambda_max_AtA = 0.0;
    double sigma_min_sq = 0.0, lambda_max_sq = 0.0;
    double tau = 0.0;
    bool c1_positive = false;
    bool kappa_ok = false, kappa1_ok = false, kappa2_ok = false;
    bool beta_ok = false, gamma_ok = false;
    bool passed = false;
    std::string failure;  // human-readable reason for the first failed check
};

/// Evaluate the certificate for a (constants, network, steps) triple. The
/// coupling spectrum comes from the problem's A_i blocks. Never throws on a
/// failing certificate; failure is an output.
inline Certificate certify(const AggregativeProblem& p, const MixingNetwork& net, const StepSizes& st,
                           const SmoothnessConstants& c) {
    st.validate();
    if (!(c.nu > 0.0)) throw ConfigError("certificate needs a positive strong convexity modulus");
    Certificate r;
    r.alpha = st.alpha;
    r.beta = st.beta;
    r.gamma = st.gamma;
    r.rho = net.spectral().rho;
    r.sigma_min_sq = net.spectral().sigma_min_sq;
    r.lambda_max_sq = net.spectral().lambda_max_sq;
    auto [lmin, lmax] = p.coupling_spectrum();
    r.lambda_min_AAt = lmin;
    r.lambda_max_AtA = lmax;
    if (!(lmin > 0.0)) throw ConfigError("coupling blocks must have full row rank");

    const double q = (1.0 + r.rho * r.rho) / (1.0 - r.rho * r.rho);
    const double h3 = 1.0 + 2.0 * c.L3 * c.L3;
    const double ag = st.alpha / st.gamma;

    r.c1 = 0.5 - 4.0 * c.L2 * c.L2 * h3 * ag;
    r.c1_positive = r.c1 > 0.0;
    r.kappa = 1.0 - st.alpha * (c.nu / 2.0 -
                                4.0 * st.alpha * c.L1 * c.L1 * h3 * (1.5 + 4.0 * c.L2 * c.L2 * h3 * ag));
    r.kappa1 = (1.0 + r.rho * r.rho) / 2.0 +
               16.0 * q * c.L1 * c.L1 * c.L3 * c.L3 * (3.0 * st.alpha * st.alpha + st.alpha / c.nu) +
               (64.0 * c.L3 * c.L3 * ag) * q *
                   (2.0 * c.L1 * c.L1 * c.L2 * c.L2 * h3 * st.alpha * st.alpha + c.L2 * c.L2);
    r.kappa2 = (1.0 + r.rho * r.rho) / 2.0 +
               8.0 * q * c.L2 * c.L2 * c.L3 * c.L3 * h3 * st.alpha * st.alpha +
               2.0 * q * c.L3 * c.L3 * (st.alpha + 2.0 / c.nu) * st.gamma +
               st.gamma * st.alpha * c.L3 * c.L3 * q;
    r.kappa_ok = r.kappa < 1.0;
    r.kappa1_ok = r.kappa1 < 1.0;
    r.kappa2_ok = r.kappa2 < 1.0;

    if (r.c1_positive && r.kappa > 0.0) {
        r.beta_bound = std::min(c.nu / (2.0 * r.kappa * r.lambda_max_AtA),
                                1.0 / (st.alpha * r.c1 * r.lambda_min_AAt));
        r.beta_ok = st.beta < r.beta_bound;
        double denom = 1.0 - st.alpha * st.beta * r.c1 * r.lambda_min_AAt;
        r.gamma_bound = std::min((2.0 - 2.0 * r.lambda_max_sq) / denom, 1.0 / r.sigma_min_sq);
        r.gamma_ok = st.gamma < r.gamma_bound;
        r.tau = std::max({r.kappa, r.kappa1, r.kappa2, 1.0 - st.alpha * st.beta * r.c1 * r.lambda_min_AAt,
                          1.0 - st.gamma * r.sigma_min_sq});
    } else {
        r.beta_bound = r.gamma_bound = std::numeric_limits<double>::quiet_NaN();
        r.tau = std::numeric_limits<double>::infinity();
    }

    r.passed = r.c1_positive && r.kappa_ok && r.kappa1_ok && r.kappa2_ok && r.beta_ok && r.gamma_ok &&
               r.tau > 0.0 && r.tau < 1.0;
    if (!r.passed) {
        if (!r.c1_positive)
            r.failure = "c1 nonpositive: alpha/gamma too large";
        else if (!r.kappa_ok)
            r.failure = "kappa >= 1: alpha violates the primal contraction condition";
        else if (!r.kappa1_ok)
            r.failure = "kappa1 >= 1: aggregate-tracker consensus condition violated";
        else if (!r.kappa2_ok)
            r.failure = "kappa2 >= 1: gradient-tracker consensus condition violated";
        else if (!r.beta_ok)
            r.failure = "beta exceeds its bound";
        else if (!r.gamma_ok)
            r.failure = "gamma exceeds its bound";
        else
            r.failure = "tau not in (0, 1)";
    }
    return r;
}

/// Grid search for a certified triple: alpha = 10^-a over the given exponent
/// grid, gamma = sqrt(alpha), beta = half its bound. Returns the first (i.e.
/// largest-alpha) certified triple, or throws if none certifies.
inline Certificate find_certified_steps(const AggregativeProblem& p, const MixingNetwork& net,
                                        const SmoothnessConstants& c, double exp_lo = 1.0,
                                        double exp_hi = 8.0, double exp_step = 0.25) {
    for (double a = exp_lo; a <= exp_hi + 1e-12; a += exp_step) {
        StepSizes st;
        st.alpha = std::pow(10.0, -a);
        st.gamma = std::sqrt(st.alpha);
        const double h3 = 1.0 + 2.0 * c.L3 * c.L3;
        double c1 = 0.5 - 4.0 * c.L2 * c.L2 * h3 * (st.alpha / st.gamma);
        if (c1 <= 0.0) continue;
        double kap = 1.0 - st.alpha * (c.nu / 2.0 - 4.0 * st.alpha * c.L1 * c.L1 * h3 *
                                                        (1.5 + 4.0 * c.L2 * c.L2 * h3 * (st.alpha / st.gamma)));
        if (kap <= 0.0) continue;
        auto [lmin, lmax] = p.coupling_spectrum();
        st.beta = 0.5 * std::min(c.nu / (2.0 * kap * lmax), 1.0 / (st.alpha * c1 * lmin));
        Certificate cert = certify(p, net, st, c);
        if (cert.passed) return cert;
    }
    throw NumericError("no certified step sizes found on the exponent grid");
}

// ============================================================================
// Composite error (Lyapunov function)
// ============================================================================

/// eps_k = ||x~||^2_{I - 2 a b Lambda^T Lambda} + (a/b) ||lam~||^2_{I - g B^2}
///       + (a/(b g)) ||y~||^2 + w_z ||z - 1 (x) zbar||^2 + w_mu ||mu - 1 (x) mubar||^2
/// with w_z = (1-rho^2)/(4 L3^2 (1+rho^2)) and w_mu = (1-rho^2) a / ((1+rho^2) g).
/// Errors are taken against the supplied fixed point; the two consensus terms
/// are self-referential and need no reference. Throws if a weight matrix is
/// indefinite, naming the violated step-size bound.
inline double lyapunov_value(const AggregativeProblem& p, const MixingNetwork& net, const StepSizes& st,
                             const SmoothnessConstants& c, const FixedPoint& fp, const MatrixOps& ops,
                             const MatrixFormState& s) {
    const int N = p.num_agents();
    const double rho = net.spectral().rho;
    auto [lmin, lmax] = p.coupling_spectrum();
    if (2.0 * st.alpha * st.beta * lmax > 1.0)
        throw NumericError(
            "x-error weight indefinite: 2*alpha*beta*lambda_max(A^T A) >= 1 (beta bound violated)");
    if (st.gamma * net.spectral().lambda_max_sq > 1.0)
        throw NumericError(
            "dual-error weight indefinite: gamma*lambda_max(B^2) >= 1 (gamma bound violated)");

    VectorXd xt = s.x - fp.x;
    VectorXd lamt = s.lambda - fp.lambda;
    VectorXd yt = s.y - fp.y;
    VectorXd Lx = ops.Lambda * xt;
    double e_x = xt.squaredNorm() - 2.0 * st.alpha * st.beta * Lx.squaredNorm();
    double e_lam = (st.alpha / st.beta) * (lamt.squaredNorm() - st.gamma * lamt.dot(ops.Cm * lamt));
    double e_y = (st.alpha / (st.beta * st.gamma)) * yt.squaredNorm();
    double zc = consensus_error(s.z, N);
    double muc = consensus_error(s.mu, N);
    double w_z = (1.0 - rho * rho) / (4.0 * c.L3 * c.L3 * (1.0 + rho * rho));
    double w_mu = (1.0 - rho * rho) * st.alpha / ((1.0 + rho * rho) * st.gamma);
    return e_x + e_lam + e_y + w_z * zc * zc + w_mu * muc * muc;
}

// ============================================================================
// Per-step error recursions
// ============================================================================

/// Slack (RHS - LHS) of the four one-step error inequalities the rate proof
/// composes, evaluated on consecutive matrix-form states. Nonnegative slack
/// (within rounding) certifies the step obeyed each inequality.
struct RecursionMargins {
    double primal = 0.0;        // squared primal error recursion
    double dual = 0.0;          // weighted dual + auxiliary recursion
    double tracker_z = 0.0;     // aggregate-tracker consensus recursion
    double tracker_mu = 0.0;    // gradient-tracker consensus recursion
    double min() const { return std::min(std::min(primal, dual), std::min(tracker_z, tracker_mu)); }
};

inline RecursionMargins check_error_recursion_step(const AggregativeProblem& p, const MixingNetwork& net,
                                                   const StepSizes& st, const SmoothnessConstants& c,
                                                   const FixedPoint& fp, const MatrixOps& ops,
                                                   const MatrixFormState& cur, const MatrixFormState& nxt) {
    if (!(st.gamma < 1.0 / net.spectral().sigma_min_sq))
        throw ConfigError("dual recursion needs gamma < 1/sigma_min^2(B)");
    const int N = p.num_agents();
    const double rho = net.spectral().rho;
    const double q = (1.0 + rho * rho) / (1.0 - rho * rho);
    const double h3 = 1.0 + 2.0 * c.L3 * c.L3;
    const double a = st.alpha, b = st.beta, g = st.gamma;

    VectorXd xt = cur.x - fp.x, xtn = nxt.x - fp.x;
    VectorXd lamt = cur.lambda - fp.lambda, lamtn = nxt.lambda - fp.lambda;
    VectorXd yt = cur.y - fp.y, ytn = nxt.y - fp.y;
    auto devsq = [N](const VectorXd& u) {
        double e = consensus_error(u, N);
        return e * e;
    };
    double nz = devsq(cur.z), nzn = devsq(nxt.z);
    double nmu = devsq(cur.mu), nmun = devsq(nxt.mu);
    double nx = xt.squaredNorm(), nxn = xtn.squaredNorm();
    VectorXd LTlam = ops.Lambda.transpose() * lamt;
    double nLTlam = LTlam.squaredNorm();
    VectorXd Lxn = ops.Lambda * xtn;
    double cross = lamt.dot(Lxn);

    RecursionMargins out;
    {
        double rhs = (1.0 - a * (c.nu / 2.0 - 4.0 * a * c.L1 * c.L1 * h3)) * nx - a * c.nu * nx -
                     a * a * nLTlam - 2.0 * a * cross +
                     4.0 * (2.0 * a * a + a / c.nu) * c.L1 * c.L1 * nz +
                     2.0 * (a * a + 2.0 * a / c.nu) * c.L3 * c.L3 * nmu;
        out.primal = rhs - nxn;
    }
    {
        VectorXd B2lam = ops.Cm * lamt;
        VectorXd By = ops.Bm * yt;
        double lhs = lamtn.squaredNorm() - g * lamtn.dot(ops.Cm * lamtn) + ytn.squaredNorm() / g;
        double rhs = lamt.squaredNorm() + 2.0 * B2lam.squaredNorm() + 2.0 * b * b * Lxn.squaredNorm() -
                     2.0 * lamt.dot(B2lam) + 2.0 * b * cross - By.squaredNorm() + yt.squaredNorm() / g;
        out.dual = rhs - lhs;
    }
    {
        double rhs = ((1.0 + rho * rho) / 2.0 + 16.0 * q * c.L1 * c.L1 * c.L3 * c.L3 * a * a) * nz +
                     8.0 * q * c.L1 * c.L1 * c.L3 * c.L3 * h3 * a * a * nx +
                     2.0 * q * c.L3 * c.L3 * a * a * nLTlam +
                     4.0 * q * std::pow(c.L3, 4) * a * a * nmu;
        out.tracker_z = rhs - nzn;
    }
    {
        double rhs = ((1.0 + rho * rho) / 2.0 + 8.0 * q * c.L2 * c.L2 * c.L3 * c.L3 * h3 * a * a) * nmu +
                     16.0 * q * c.L1 * c.L1 * c.L2 * c.L2 * h3 * h3 * a * a * nx +
                     16.0 * q * (2.0 * c.L1 * c.L1 * c.L2 * c.L2 * h3 * a * a + c.L2 * c.L2) * nz +
                     4.0 * q * c.L2 * c.L2 * h3 * a * a * nLTlam;
        out.tracker_mu = rhs - nmun;
    }
    return out;
}

/// Margins along a recorded matrix-form trajectory; entry t compares states
/// t and t+1.
inline std::vector<RecursionMargins> check_error_recursions(
    const AggregativeProblem& p, const MixingNetwork& net, const StepSizes& st,
    const SmoothnessConstants& c, const FixedPoint& fp, const MatrixOps& ops,
    const std::vector<MatrixFormState>& trajectory) {
    std::vector<RecursionMargins> out;
    if (trajectory.size() < 2) return out;
    out.reserve(trajectory.size() - 1);
    for (std::size_t t = 0; t + 1 < trajectory.size(); ++t)
        out.push_back(
            check_error_recursion_step(p, net, st, c, fp, ops, trajectory[t], trajectory[t + 1]));
    return out;
}

// ============================================================================
// Empirical rate
// ============================================================================

struct RateFit {
    double tau_hat = 0.0;    // exp(slope) of the log-linear tail fit
    double r_squared = 0.0;
    double max_ratio = 0.0;  // max eps_{k+1}/eps_k over the tail
    int window_begin = 0;
    int points = 0;
    bool noise_floor = false;  // tail dipped below the floor before the end
    bool reliable = false;     // >= 20 fit points
};

/// Least-squares fit of log eps over the tail window (the final half of the
/// entries above the 1e-12 noise floor). Fits with fewer than 20 usable
/// points are reported but flagged unreliable.
inline RateFit fit_rate(const std::vector<double>& eps, double floor = 1e-12) {
    RateFit r;
    int usable = 0;
    while (usable < static_cast<int>(eps.size()) && eps[usable] > floor) ++usable;
    r.noise_floor = usable < static_cast<int>(eps.size());
    if (usable < 2) throw ConfigError("rate fit needs at least 2 points above the noise floor");
    r.window_begin = (usable < 40) ? 0 : usable / 2;
    r.points = usable - r.window_begin;
    r.reliable = r.points >= 20;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = r.window_begin; k < usable; ++k) {
        double x = k, y = std::log(eps[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        if (k > r.window_begin) r.max_ratio = std::max(r.max_ratio, eps[k] / eps[k - 1]);
    }
    double n = r.points;
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    r.tau_hat = std::exp(slope);
    double ss_res = 0, ss_tot = 0, ymean = sy / n;
    for (int k = r.window_begin; k < usable; ++k) {
        double y = std::log(eps[k]);
        double pred = slope * k + intercept;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - ymean) * (y - ymean);
    }
    r.r_squared = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
    return r;
}

// ============================================================================
// Run trace
// ============================================================================

/// One recorded trace row. NaN marks columns whose inputs (reference optimum,
/// certified constants, twin run) were unavailable for the run.
struct TraceRow {
    long k = 0;
    double rel_err = 0.0;
    double eps = 0.0;
    double cons_z = 0.0;
    double cons_mu = 0.0;
    double cons_lambda = 0.0;
    double kkt_stat = 0.0;
    double kkt_primal = 0.0;
    double kkt_comp = 0.0;
    double margin_min = 0.0;
};

enum class StopReason { max_iters, rel_err, kkt, diverged };

struct RunTrace {
    std::vector<TraceRow> rows;
    long iterations = 0;
    StopReason stop_reason = StopReason::max_iters;
    bool diverged = false;
    std::string divergence_detail;
    double rho = 0.0;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool has_reference = false;
    VectorXd x_star;        // empty unless has_reference
    VectorXd lambda_star;   // consensual block
    Certificate certificate;  // evaluated for the run's steps (pass or fail)
    bool has_certificate = false;
    SwarmState final_state;
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::max_iters: return "max_iters";
        case StopReason::rel_err: return "rel_err";
        case StopReason::kkt: return "kkt";
        case StopReason::diverged: return "diverged";
    }
    return "unknown";
}

}  // namespace dapd
