#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dapd/errors.hpp"

namespace dapd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Smoothness / convexity constants of the cost family:
///   nu  - strong convexity modulus of the global objective
///   L1  - Lipschitz constant of the bundled gradient expression
///         grad1 f(x,z) + Dh(x) (1 (x) mean_i grad2 f_i(x_i,z_i)) in (x,z)
///   L2  - Lipschitz constant of the stacked grad2 f in (x,z)
///   L3  - uniform bound on ||Dh_i(x_i)||_2
struct SmoothnessConstants {
    double nu = 0.0;
    double L1 = 0.0;
    double L2 = 0.0;
    double L3 = 0.0;
    /// False when the values came from sampling rather than a closed form.
    bool certified = false;
    /// Set when sampling could not certify a positive nu.
    bool strong_convexity_flagged = false;
};

/// One agent's private model. The decision variable x_i lives in R^dim, the
/// aggregate variable z in R^n (n shared across agents), and the coupling row
/// block A is m x dim with full row rank.
///
/// aggregate_jacobian returns the dim x n matrix whose column j is the
/// gradient of the j-th component of the aggregation map h_i, so the chain
/// rule contribution to the x-update is aggregate_jacobian(x_i) * mu_i.
struct AgentModel {
    int dim = 0;
    std::function<VectorXd(const VectorXd&, const VectorXd&)> grad_local;  // grad1 f_i(x_i, z_i)
    std::function<VectorXd(const VectorXd&, const VectorXd&)> grad_agg;    // grad2 f_i(x_i, z_i)
    std::function<VectorXd(const VectorXd&)> aggregate;                    // h_i(x_i), in R^n
    std::function<MatrixXd(const VectorXd&)> aggregate_jacobian;           // dim x n
    MatrixXd A;  // m x dim
    VectorXd b;  // m
};

// ============================================================================
// AggregativeProblem
// ============================================================================

/// min_x sum_i f_i(x_i, phi(x))  s.t.  sum_i A_i x_i <= sum_i b_i,
/// with phi(x) = (1/N) sum_i h_i(x_i).
class AggregativeProblem {
  public:
    AggregativeProblem(std::vector<AgentModel> agents, int agg_dim, int num_constraints)
        : agents_(std::move(agents)), agg_dim_(agg_dim), m_(num_constraints) {
        if (agents_.empty()) throw ConfigError("problem needs at least one agent");
        if (agg_dim_ <= 0 || m_ <= 0) throw ConfigError("aggregate/constraint dimensions must be positive");
        offsets_.reserve(agents_.size() + 1);
        int off = 0;
        for (const auto& ag : agents_) {
            if (ag.dim <= 0) throw ConfigError("agent dimension must be positive");
            if (ag.A.rows() != m_ || ag.A.cols() != ag.dim)
                throw ConfigError("coupling block A_i must be m x d_i");
            if (ag.b.size() != m_) throw ConfigError("offset b_i must have m entries");
            offsets_.push_back(off);
            off += ag.dim;
        }
        offsets_.push_back(off);
        total_dim_ = off;
    }

    int num_agents() const { return static_cast<int>(agents_.size()); }
    int agg_dim() const { return agg_dim_; }
    int num_constraints() const { return m_; }
    int total_dim() const { return total_dim_; }
    int agent_dim(int i) const { return agents_[i].dim; }
    int agent_offset(int i) const { return offsets_[i]; }
    const AgentModel& agent(int i) const { return agents_[i]; }

    /// Segment of a stacked decision vector belonging to agent i.
    Eigen::VectorBlock<const VectorXd> agent_x(const VectorXd& x, int i) const {
        return x.segment(offsets_[i], agents_[i].dim);
    }

    /// phi(x) = (1/N) sum_i h_i(x_i). Errors on dimension mismatch or
    /// non-finite input.
    VectorXd phi(const VectorXd& x) const {
        require_stacked(x);
        VectorXd acc = VectorXd::Zero(agg_dim_);
        for (int i = 0; i < num_agents(); ++i) {
            VectorXd hi = agents_[i].aggregate(agent_x(x, i));
            if (hi.size() != agg_dim_) throw ConfigError("h_i returned wrong dimension");
            acc += hi;
        }
        return acc / num_agents();
    }

    /// mean_i grad2 f_i(x_i, z_i) over a stacked (x, z) pair; z is N blocks of
    /// size n.
    VectorXd mean_grad_agg(const VectorXd& x, const VectorXd& z) const {
        require_stacked(x);
        if (z.size() != static_cast<long>(num_agents()) * agg_dim_)
            throw ConfigError("stacked z has wrong dimension");
        VectorXd acc = VectorXd::Zero(agg_dim_);
        for (int i = 0; i < num_agents(); ++i)
            acc += eval_grad_agg(i, agent_x(x, i), z.segment(static_cast<long>(i) * agg_dim_, agg_dim_));
        return acc / num_agents();
    }

    /// sum_i (A_i x_i - b_i): the coupled constraint requires this <= 0.
    VectorXd constraint_gap(const VectorXd& x) const {
        require_stacked(x);
        VectorXd g = VectorXd::Zero(m_);
        for (int i = 0; i < num_agents(); ++i) g += agents_[i].A * agent_x(x, i) - agents_[i].b;
        return g;
    }

    VectorXd b_total() const {
        VectorXd s = VectorXd::Zero(m_);
        for (const auto& ag : agents_) s += ag.b;
        return s;
    }

    /// Gradient oracles with finiteness checks (fatal on NaN/Inf in or out).
    VectorXd eval_grad_local(int i, const VectorXd& xi, const VectorXd& zi) const {
        check_finite(xi, "grad_local input x");
        check_finite(zi, "grad_local input z");
        VectorXd g = agents_[i].grad_local(xi, zi);
        check_finite(g, "grad_local output");
        return g;
    }
    VectorXd eval_grad_agg(int i, const VectorXd& xi, const VectorXd& zi) const {
        check_finite(xi, "grad_agg input x");
        check_finite(zi, "grad_agg input z");
        VectorXd g = agents_[i].grad_agg(xi, zi);
        check_finite(g, "grad_agg output");
        if (g.size() != agg_dim_) throw ConfigError("grad_agg returned wrong dimension");
        return g;
    }

    /// True gradient of the reduced objective x -> sum_i f_i(x_i, phi(x)),
    /// stacked. Used by stationarity residuals and sampling estimators.
    VectorXd full_gradient(const VectorXd& x) const {
        require_stacked(x);
        VectorXd p = phi(x);
        VectorXd mean_g2 = VectorXd::Zero(agg_dim_);
        for (int i = 0; i < num_agents(); ++i) mean_g2 += eval_grad_agg(i, agent_x(x, i), p);
        mean_g2 /= num_agents();
        VectorXd g(total_dim_);
        for (int i = 0; i < num_agents(); ++i) {
            VectorXd xi = agent_x(x, i);
            g.segment(offsets_[i], agents_[i].dim) =
                eval_grad_local(i, xi, p) + agents_[i].aggregate_jacobian(xi) * mean_g2;
        }
        return g;
    }

    /// Smallest singular value over all A_i; > 0 means every block has full
    /// row rank (required by the certificate and the dual update analysis).
    double min_coupling_singular_value() const {
        double s = std::numeric_limits<double>::infinity();
        for (const auto& ag : agents_) {
            Eigen::JacobiSVD<MatrixXd> svd(ag.A);
            s = std::min(s, svd.singularValues().minCoeff());
        }
        return s;
    }

    /// Extremes of the blockdiag(A_i A_i^T) and (A^T A) spectra that enter the
    /// step-size bounds. Computed exactly from the blocks.
    std::pair<double, double> coupling_spectrum() const {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& ag : agents_) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(ag.A * ag.A.transpose());
            lo = std::min(lo, es.eigenvalues().minCoeff());
            hi = std::max(hi, es.eigenvalues().maxCoeff());
        }
        return {lo, hi};  // {lambda_min(Lambda Lambda^T), lambda_max(Lambda^T Lambda)}
    }

  private:
    void require_stacked(const VectorXd& x) const {
        if (x.size() != total_dim_) throw ConfigError("stacked x has wrong dimension");
        check_finite(x, "stacked x");
    }
    static void check_finite(const VectorXd& v, const char* what) {
        if (!v.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
    }

    std::vector<AgentModel> agents_;
    int agg_dim_;
    int m_;
    int total_dim_ = 0;
    std::vector<int> offsets_;
};

// ============================================================================
// QuadraticInstance
// ============================================================================

/// Benchmark family: f_i(x_i, z) = ||x_i - a_i||^2 + ||x_i - z||^2 with
/// identity aggregation (h_i(x_i) = x_i) and identity coupling (A_i = I_m),
/// so d_i = n = m for every agent. The coupled constraint is
/// sum_i x_i <= sum_i b_i componentwise.
struct QuadraticInstance {
    int N = 0;
    int n = 0;
    std::vector<VectorXd> a;
    std::vector<VectorXd> b;

    /// Draw a_i, b_i entrywise uniform from the given ranges.
    static QuadraticInstance generate(int N, int n, std::uint64_t seed,
                                      std::pair<double, double> a_range = {1.0, 3.0},
                                      std::pair<double, double> b_range = {1.0, 2.0}) {
        if (N < 1 || n < 1) throw ConfigError("quadratic instance needs N >= 1, n >= 1");
        if (a_range.second < a_range.first || b_range.second < b_range.first)
            throw ConfigError("invalid value range (hi < lo)");
        QuadraticInstance q;
        q.N = N;
        q.n = n;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> da(a_range.first, a_range.second);
        std::uniform_real_distribution<double> db(b_range.first, b_range.second);
        q.a.reserve(N);
        q.b.reserve(N);
        for (int i = 0; i < N; ++i) {
            VectorXd ai(n), bi(n);
            for (int j = 0; j < n; ++j) ai[j] = da(rng);
            for (int j = 0; j < n; ++j) bi[j] = db(rng);
            q.a.push_back(std::move(ai));
            q.b.push_back(std::move(bi));
        }
        return q;
    }

    /// f_i(x_i, z), used by finite-difference checks and oracles.
    double local_value(int i, const VectorXd& xi, const VectorXd& z) const {
        return (xi - a[i]).squaredNorm() + (xi - z).squaredNorm();
    }

    /// Objective of the reduced problem at a stacked point.
    double value(const VectorXd& x) const {
        VectorXd xbar = VectorXd::Zero(n);
        for (int i = 0; i < N; ++i) xbar += x.segment(static_cast<long>(i) * n, n);
        xbar /= N;
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += local_value(i, x.segment(static_cast<long>(i) * n, n), xbar);
        return s;
    }

    AggregativeProblem to_problem() const {
        std::vector<AgentModel> agents;
        agents.reserve(N);
        MatrixXd I = MatrixXd::Identity(n, n);
        for (int i = 0; i < N; ++i) {
            AgentModel ag;
            ag.dim = n;
            VectorXd ai = a[i];
            ag.grad_local = [ai](const VectorXd& xi, const VectorXd& zi) -> VectorXd {
                return 2.0 * (xi - ai) + 2.0 * (xi - zi);
            };
            ag.grad_agg = [](const VectorXd& xi, const VectorXd& zi) -> VectorXd {
                return -2.0 * (xi - zi);
            };
            ag.aggregate = [](const VectorXd& xi) -> VectorXd { return xi; };
            ag.aggregate_jacobian = [I](const VectorXd&) -> MatrixXd { return I; };
            ag.A = I;
            ag.b = b[i];
            agents.push_back(std::move(ag));
        }
        return AggregativeProblem(std::move(agents), n, n);
    }

    /// Exact constants from the quadratic structure. The reduced Hessian is
    /// 2I + 2(P (x) I) with P the centering projector, so nu = 2 and the
    /// bundled gradient map has joint Lipschitz constant max(||4I-2Q||, 2) = 4.
    SmoothnessConstants constants() const {
        SmoothnessConstants c;
        c.nu = 2.0;
        c.L1 = 4.0;
        c.L2 = 2.0;
        c.L3 = 1.0;
        c.certified = true;
        return c;
    }
};

// ============================================================================
// Sampled constant estimation
// ============================================================================

/// Monte-Carlo estimates of the smoothness constants over a box
/// [lo, hi]^d for x-blocks and aggregate blocks alike. The nu estimate is a
/// minimum of sampled difference quotients and therefore optimistic (it can
/// only over-estimate the true modulus); L1, L2, L3 are maxima and can only
/// under-estimate. Flagged as uncertified accordingly.
inline SmoothnessConstants estimate_constants(const AggregativeProblem& p, double lo, double hi,
                                              int samples = 10000, std::uint64_t seed = 0) {
    if (!(hi > lo)) throw ConfigError("sampling box must have hi > lo");
    if (samples < 2) throw ConfigError("need at least 2 samples");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    const int N = p.num_agents(), n = p.agg_dim(), d = p.total_dim();
    auto draw = [&](int len) {
        VectorXd v(len);
        for (int k = 0; k < len; ++k) v[k] = u(rng);
        return v;
    };
    auto bundled = [&](const VectorXd& x, const VectorXd& z) {
        VectorXd mg = p.mean_grad_agg(x, z);
        VectorXd g(d);
        for (int i = 0; i < N; ++i) {
            VectorXd xi = p.agent_x(x, i);
            g.segment(p.agent_offset(i), p.agent_dim(i)) =
                p.eval_grad_local(i, xi, z.segment(static_cast<long>(i) * n, n)) +
                p.agent(i).aggregate_jacobian(xi) * mg;
        }
        return g;
    };

    SmoothnessConstants c;
    c.nu = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        VectorXd x = draw(d), xp = draw(d);
        VectorXd z = draw(N * n), zp = draw(N * n);
        VectorXd dx = x - xp, dz = z - zp;
        double ndx = dx.norm(), ndz = dz.norm();
        if (ndx < 1e-12) continue;
        c.nu = std::min(c.nu, (p.full_gradient(x) - p.full_gradient(xp)).dot(dx) / dx.squaredNorm());
        c.L1 = std::max(c.L1, (bundled(x, z) - bundled(xp, zp)).norm() / (ndx + ndz));
        VectorXd g2(N * n), g2p(N * n);
        for (int i = 0; i < N; ++i) {
            g2.segment(static_cast<long>(i) * n, n) =
                p.eval_grad_agg(i, p.agent_x(x, i), z.segment(static_cast<long>(i) * n, n));
            g2p.segment(static_cast<long>(i) * n, n) =
                p.eval_grad_agg(i, p.agent_x(xp, i), zp.segment(static_cast<long>(i) * n, n));
        }
        c.L2 = std::max(c.L2, (g2 - g2p).norm() / (ndx + ndz));
        for (int i = 0; i < N; ++i) {
            Eigen::JacobiSVD<MatrixXd> svd(p.agent(i).aggregate_jacobian(p.agent_x(x, i)));
            c.L3 = std::max(c.L3, svd.singularValues().maxCoeff());
        }
    }
    c.certified = false;
    if (!(c.nu > 0.0) || !std::isfinite(c.nu)) c.strong_convexity_flagged = true;
    return c;
}

}  // namespace dapd
