#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dapd/topology.hpp"

using namespace dapd;

namespace {

void expect_doubly_stochastic(const MatrixXd& W) {
    const int N = static_cast<int>(W.rows());
    EXPECT_LT((W - W.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_GE(W.minCoeff(), 0.0);
    for (int i = 0; i < N; ++i) {
        EXPECT_NEAR(W.row(i).sum(), 1.0, 1e-12);
        EXPECT_NEAR(W.col(i).sum(), 1.0, 1e-12);
    }
}

/// Circulant spectrum of the cycle weights: eigenvalues 0.5 + 0.5 cos(2 pi k/N),
/// so the mixing radius has a closed form independent of the eigensolver.
double ring_rho_closed_form(int N) { return 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi / N); }

}  // namespace

TEST(RingNetwork, MatchesClosedFormSpectrum) {
    for (int N : {3, 5, 12, 60}) {
        MixingNetwork net = ring_network(N);
        expect_doubly_stochastic(net.W());
        EXPECT_NEAR(net.spectral().rho, ring_rho_closed_form(N), 1e-12) << "N=" << N;
    }
}

TEST(RingNetwork, SixtyAgentsMatchesReportedRadius) {
    MixingNetwork net = ring_network(60);
    EXPECT_NEAR(net.spectral().rho, 0.9973, 5e-4);
}

TEST(RingNetwork, WeightsAreCycleWithWraparound) {
    MixingNetwork net = ring_network(5);
    const MatrixXd& W = net.W();
    for (int i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(W(i, i), 0.5);
        EXPECT_DOUBLE_EQ(W(i, (i + 1) % 5), 0.25);
        EXPECT_DOUBLE_EQ(W(i, (i + 4) % 5), 0.25);
    }
    EXPECT_DOUBLE_EQ(W(0, 4), 0.25);
    EXPECT_THROW(ring_network(2), ConfigError);
}

TEST(ExponentialNetwork, PowerOfTwoOffsetsWellFormed) {
    MixingNetwork net = exponential_network(60);
    expect_doubly_stochastic(net.W());
    // Node 0 talks to +-1, +-2, +-4, ..., +-32 (mod 60).
    for (int step : {1, 2, 4, 8, 16, 32}) {
        EXPECT_GT(net.W()(0, step % 60), 0.0);
        EXPECT_GT(net.W()(0, (60 - step) % 60), 0.0);
    }
    EXPECT_EQ(net.W()(0, 3), 0.0);
}

TEST(ExponentialNetwork, SixtyAgentsHasSmallRadius) {
    MixingNetwork net = exponential_network(60);
    // Well-connected: radius lands in the fast-mixing class, far below ring.
    EXPECT_NEAR(net.spectral().rho, 0.692308, 1e-6);
    EXPECT_NEAR(net.spectral().rho, 0.7143, 0.05);
}

TEST(RandomNetwork, CompleteGraphMixesInOneRound) {
    MixingNetwork net = random_network(8, 1.0, 0);
    expect_doubly_stochastic(net.W());
    // Uniform Metropolis weights on the complete graph average exactly.
    EXPECT_NEAR(net.spectral().rho, 0.0, 1e-12);
}

TEST(RandomNetwork, SparseDrawIsConnectedAndDeterministic) {
    MixingNetwork n1 = random_network(60, 0.05, 4);
    MixingNetwork n2 = random_network(60, 0.05, 4);
    expect_doubly_stochastic(n1.W());
    EXPECT_EQ((n1.W() - n2.W()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT(n1.spectral().rho, 1.0);
    EXPECT_THROW(random_network(10, 0.0, 1), ConfigError);
    EXPECT_THROW(random_network(10, 1.5, 1), ConfigError);
}

TEST(SpectralReport, DerivedQuantitiesAreConsistent) {
    for (auto net : {ring_network(7), exponential_network(16), random_network(12, 0.4, 2)}) {
        const SpectralReport& r = net.spectral();
        const int N = net.size();
        // C = (I - W)/2 entrywise.
        EXPECT_LT((net.C() - 0.5 * (MatrixXd::Identity(N, N) - net.W())).cwiseAbs().maxCoeff(),
                  1e-15);
        // Eigenvalues ascending in [0, 1); exactly one zero.
        EXPECT_NEAR(r.c_eigenvalues[0], 0.0, 1e-12);
        EXPECT_GT(r.c_eigenvalues[1], kEigenvalueZeroTol);
        EXPECT_LT(r.c_eigenvalues[N - 1], 1.0);
        EXPECT_LE(r.sigma_min_sq, r.lambda_max_sq);
        EXPECT_NEAR(r.sigma_min_sq, r.c_eigenvalues[1], 1e-12);
        EXPECT_NEAR(r.lambda_max_sq, r.c_eigenvalues[N - 1], 1e-12);
        // rho from the W spectrum: largest |1 - 2 lambda_C| off the zero mode.
        double rho = 0.0;
        for (int k = 0; k < N; ++k)
            if (std::abs(r.c_eigenvalues[k]) > kEigenvalueZeroTol)
                rho = std::max(rho, std::abs(1.0 - 2.0 * r.c_eigenvalues[k]));
        EXPECT_NEAR(r.rho, rho, 1e-14);
        EXPECT_LT(r.rho, 1.0);
    }
}

TEST(MatrixSquareRoot, ReconstructsMixingOperator) {
    for (auto net : {ring_network(6), random_network(10, 0.5, 3)}) {
        MatrixXd B = matrix_sqrt_b(net);
        EXPECT_LT((B * B - net.C()).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((B - B.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        // Positive semidefinite principal root.
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(B);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    }
}

TEST(CustomNetwork, ValidationCatchesMalformedWeights) {
    MatrixXd good(3, 3);
    good << 0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5;
    EXPECT_NO_THROW(custom_network(good));

    MatrixXd asym = good;
    asym(0, 1) = 0.3;
    asym(0, 2) = 0.2;
    EXPECT_THROW(custom_network(asym), ConfigError);

    MatrixXd badsum = good;
    badsum(0, 0) = 0.6;
    EXPECT_THROW(custom_network(badsum), ConfigError);

    MatrixXd negative(2, 2);
    negative << 1.5, -0.5, -0.5, 1.5;
    EXPECT_THROW(custom_network(negative), ConfigError);

    // Two disconnected pairs: doubly stochastic but not connected.
    MatrixXd split = MatrixXd::Zero(4, 4);
    split.block(0, 0, 2, 2) << 0.5, 0.5, 0.5, 0.5;
    split.block(2, 2, 2, 2) << 0.5, 0.5, 0.5, 0.5;
    EXPECT_THROW(custom_network(split), ConfigError);

    EXPECT_THROW(custom_network(MatrixXd::Identity(1, 1)), ConfigError);
}

TEST(MixingNetwork, RowViewIsAscendingAndCoversDiagonal) {
    MixingNetwork net = ring_network(6);
    for (int i = 0; i < 6; ++i) {
        const auto& row = net.row(i);
        int prev = -1;
        bool self_seen = false;
        for (const auto& [j, w] : row) {
            EXPECT_GT(j, prev);
            prev = j;
            self_seen = self_seen || j == i;
            EXPECT_DOUBLE_EQ(w, net.W()(i, j));
        }
        EXPECT_TRUE(self_seen);
    }
}
