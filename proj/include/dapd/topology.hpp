#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dapd/errors.hpp"

namespace dapd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Eigenvalues below this magnitude are treated as exact zeros. Taking square
/// roots otherwise turns the ~1e-16 error of the consensus eigenvalue into a
/// ~1e-8 spurious component, which is far above the fixed-point tolerances.
inline constexpr double kEigenvalueZeroTol = 1e-12;

/// Spectral summary of a mixing matrix W and its Laplacian-like companion
/// C = (I - W)/2:
///   rho            = ||W - (1/N) 1 1^T||_2, the averaging contraction factor
///   c_eigenvalues  = eigenvalues of C, ascending (in [0, 1))
///   sigma_min_sq   = smallest nonzero eigenvalue of C  (= smallest nonzero
///                    singular value of sqrt(C), squared)
///   lambda_max_sq  = largest eigenvalue of C
struct SpectralReport {
    double rho = 0.0;
    VectorXd c_eigenvalues;
    double sigma_min_sq = 0.0;
    double lambda_max_sq = 0.0;
};

namespace detail {

inline void validate_mixing_matrix(const MatrixXd& W) {
    const int N = static_cast<int>(W.rows());
    if (W.cols() != N || N < 1) throw ConfigError("mixing matrix must be square");
    if (!W.allFinite()) throw NumericError("mixing matrix has non-finite entries");
    double asym = (W - W.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12) throw ConfigError("mixing matrix asymmetry exceeds 1e-12: " + std::to_string(asym));
    if (W.minCoeff() < -1e-15) throw ConfigError("mixing matrix has negative weights");
    for (int i = 0; i < N; ++i) {
        double rs = W.row(i).sum();
        if (std::abs(rs - 1.0) > 1e-12)
            throw ConfigError("mixing matrix row " + std::to_string(i) + " sums to " + std::to_string(rs));
    }
}

inline SpectralReport spectral_of(const MatrixXd& W) {
    const int N = static_cast<int>(W.rows());
    MatrixXd C = 0.5 * (MatrixXd::Identity(N, N) - W);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    SpectralReport r;
    r.c_eigenvalues = es.eigenvalues();
    // Exactly one zero eigenvalue of C when the graph is connected; the
    // corresponding W eigenvalue is the Perron value 1. rho is the largest
    // |1 - 2*lambda_C| over the remaining spectrum.
    int zeros = 0;
    double rho = 0.0, smin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < N; ++k) {
        double lc = r.c_eigenvalues[k];
        if (std::abs(lc) < kEigenvalueZeroTol) {
            ++zeros;
            continue;
        }
        rho = std::max(rho, std::abs(1.0 - 2.0 * lc));
        smin = std::min(smin, lc);
    }
    if (zeros != 1 && N > 1)
        throw ConfigError("graph is not connected (C has " + std::to_string(zeros) + " zero eigenvalues)");
    r.rho = (N == 1) ? 0.0 : rho;
    r.sigma_min_sq = (N == 1) ? 0.0 : smin;
    r.lambda_max_sq = r.c_eigenvalues[N - 1];
    return r;
}

/// Metropolis weights for an undirected adjacency: w_ij = 1/(1 + max(deg_i,
/// deg_j)) on edges, diagonal takes the residual mass. Symmetric and doubly
/// stochastic by construction; reduces to uniform 1/(deg+1) on regular graphs.
inline MatrixXd metropolis_weights(const std::vector<std::vector<bool>>& adj) {
    const int N = static_cast<int>(adj.size());
    std::vector<int> deg(N, 0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            if (i != j && adj[i][j]) ++deg[i];
    MatrixXd W = MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        double off = 0.0;
        for (int j = 0; j < N; ++j) {
            if (i == j || !adj[i][j]) continue;
            W(i, j) = 1.0 / (1.0 + std::max(deg[i], deg[j]));
            off += W(i, j);
        }
        W(i, i) = 1.0 - off;
    }
    return W;
}

inline bool is_connected(const std::vector<std::vector<bool>>& adj) {
    const int N = static_cast<int>(adj.size());
    std::vector<bool> seen(N, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v = 0; v < N; ++v)
            if (adj[u][v] && !seen[v]) {
                seen[v] = true;
                ++count;
                stack.push_back(v);
            }
    }
    return count == N;
}

}  // namespace detail

// ============================================================================
// MixingNetwork
// ============================================================================

/// A validated symmetric doubly stochastic mixing matrix over a connected
/// graph, plus the derived structures every consumer needs: C = (I - W)/2,
/// spectral report, and per-row neighbor lists in ascending index order (the
/// determinism contract: all neighbor sums accumulate in this order).
class MixingNetwork {
  public:
    MixingNetwork(MatrixXd W, std::string label) : W_(std::move(W)), label_(std::move(label)) {
        detail::validate_mixing_matrix(W_);
        const int N = size();
        if (N < 2)
            throw ConfigError("network needs at least 2 agents (the dual step bound is undefined "
                              "without a nonzero mixing eigenvalue)");
        C_ = 0.5 * (MatrixXd::Identity(N, N) - W_);
        spectral_ = detail::spectral_of(W_);
        rows_.resize(N);
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                // Self always participates: C has a diagonal term even when
                // w_ii = 0.
                if (W_(i, j) != 0.0 || i == j) rows_[i].emplace_back(j, W_(i, j));
            }
        }
    }

    int size() const { return static_cast<int>(W_.rows()); }
    const MatrixXd& W() const { return W_; }
    const MatrixXd& C() const { return C_; }
    const SpectralReport& spectral() const { return spectral_; }
    const std::string& label() const { return label_; }

    /// Nonzero entries of row i (plus the diagonal), ascending column index.
    const std::vector<std::pair<int, double>>& row(int i) const { return rows_[i]; }

  private:
    MatrixXd W_;
    std::string label_;
    MatrixXd C_;
    SpectralReport spectral_;
    std::vector<std::vector<std::pair<int, double>>> rows_;
};

/// Undirected cycle with self-weight 1/2 and 1/4 per ring neighbor. Circulant,
/// so the spectrum has the closed form 0.5 + 0.5 cos(2 pi k / N).
inline MixingNetwork ring_network(int N) {
    if (N < 3) throw ConfigError("ring topology needs N >= 3");
    MatrixXd W = MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        W(i, i) = 0.5;
        W(i, (i + 1) % N) += 0.25;
        W(i, (i + N - 1) % N) += 0.25;
    }
    return MixingNetwork(std::move(W), "ring");
}

/// Node i links to i +- 2^j (mod N) for j = 0..floor(log2(N-1)). The edge set
/// is symmetric and regular, so the Metropolis rule reduces to uniform
/// 1/(deg+1) weights. Diameter is logarithmic, which keeps rho well below the
/// ring's at equal N.
inline MixingNetwork exponential_network(int N) {
    if (N < 2) throw ConfigError("exponential topology needs N >= 2");
    std::vector<std::vector<bool>> adj(N, std::vector<bool>(N, false));
    for (int j = 0; (1 << j) <= N - 1; ++j) {
        int step = 1 << j;  // step <= N-1 by the loop bound
        for (int i = 0; i < N; ++i) {
            adj[i][(i + step) % N] = true;
            adj[i][(i + N - step) % N] = true;
        }
    }
    for (int i = 0; i < N; ++i) adj[i][i] = false;
    return MixingNetwork(detail::metropolis_weights(adj), "exponential");
}

/// Erdos-Renyi draw with Metropolis weights, resampled until connected
/// (at most 1000 attempts, then fatal). Edges are sampled in the fixed (i, j)
/// lexicographic order so a seed pins the graph exactly.
inline MixingNetwork random_network(int N, double edge_prob, std::uint64_t seed) {
    if (N < 2) throw ConfigError("random topology needs N >= 2");
    if (!(edge_prob > 0.0) || edge_prob > 1.0) throw ConfigError("edge_prob must lie in (0, 1]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<std::vector<bool>> adj(N, std::vector<bool>(N, false));
        for (int i = 0; i < N; ++i)
            for (int j = i + 1; j < N; ++j)
                if (u(rng) < edge_prob) adj[i][j] = adj[j][i] = true;
        if (detail::is_connected(adj))
            return MixingNetwork(detail::metropolis_weights(adj), "random");
    }
    throw ConfigError("random graph not connected after 1000 resamples; raise edge_prob");
}

/// Wrap a user-supplied mixing matrix (validated like the built-ins).
inline MixingNetwork custom_network(MatrixXd W) { return MixingNetwork(std::move(W), "custom"); }

/// Principal square root B of C = (I - W)/2 via eigendecomposition, with
/// |eig| < kEigenvalueZeroTol clamped to exactly zero before the sqrt.
/// Postcondition checked: ||B*B - C||_max <= 1e-8 (fatal otherwise).
inline MatrixXd matrix_sqrt_b(const MixingNetwork& net) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(net.C());
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    VectorXd ev = es.eigenvalues();
    for (int k = 0; k < ev.size(); ++k) ev[k] = (std::abs(ev[k]) < kEigenvalueZeroTol) ? 0.0 : std::max(ev[k], 0.0);
    MatrixXd B = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    double rec = (B * B - net.C()).cwiseAbs().maxCoeff();
    if (rec > 1e-8) throw NumericError("matrix sqrt reconstruction error " + std::to_string(rec));
    return B;
}

/// Spectral report for an arbitrary candidate matrix (validates first).
inline SpectralReport spectral_report(const MatrixXd& W) {
    detail::validate_mixing_matrix(W);
    return detail::spectral_of(W);
}

}  // namespace dapd
