#include <gtest/gtest.h>

#include "dapd/problem.hpp"
#include "support.hpp"

using namespace dapd;
using testsupport::fd_gradient;
using testsupport::rel_diff;

namespace {

/// Two agents with unequal block sizes and a nonlinear aggregate, small
/// enough to verify the bookkeeping by hand.
AggregativeProblem heterogeneous_problem() {
    std::vector<AgentModel> agents(2);
    agents[0].dim = 1;
    agents[0].grad_local = [](const VectorXd& x, const VectorXd& z) -> VectorXd {
        return VectorXd::Constant(1, 2.0 * x[0] + z[0]);
    };
    agents[0].grad_agg = [](const VectorXd& x, const VectorXd&) -> VectorXd {
        return VectorXd::Constant(1, x[0]);
    };
    agents[0].aggregate = [](const VectorXd& x) -> VectorXd {
        return VectorXd::Constant(1, x[0] * x[0]);
    };
    agents[0].aggregate_jacobian = [](const VectorXd& x) -> MatrixXd {
        return MatrixXd::Constant(1, 1, 2.0 * x[0]);
    };
    agents[0].A = MatrixXd::Constant(1, 1, 1.0);
    agents[0].b = VectorXd::Constant(1, 0.5);

    agents[1].dim = 2;
    agents[1].grad_local = [](const VectorXd& x, const VectorXd&) -> VectorXd { return 2.0 * x; };
    agents[1].grad_agg = [](const VectorXd&, const VectorXd&) -> VectorXd {
        return VectorXd::Zero(1);
    };
    agents[1].aggregate = [](const VectorXd& x) -> VectorXd {
        return VectorXd::Constant(1, x[0] + 2.0 * x[1]);
    };
    agents[1].aggregate_jacobian = [](const VectorXd&) -> MatrixXd {
        MatrixXd j(2, 1);
        j << 1.0, 2.0;
        return j;
    };
    agents[1].A = (MatrixXd(1, 2) << 1.0, 1.0).finished();
    agents[1].b = VectorXd::Constant(1, 0.2);
    return AggregativeProblem(std::move(agents), 1, 1);
}

}  // namespace

TEST(QuadraticInstance, GeneratorIsDeterministic) {
    auto q1 = QuadraticInstance::generate(7, 4, 42);
    auto q2 = QuadraticInstance::generate(7, 4, 42);
    auto q3 = QuadraticInstance::generate(7, 4, 43);
    for (int i = 0; i < 7; ++i) {
        EXPECT_EQ(q1.a[i], q2.a[i]);
        EXPECT_EQ(q1.b[i], q2.b[i]);
    }
    bool any_diff = false;
    for (int i = 0; i < 7; ++i) any_diff = any_diff || q1.a[i] != q3.a[i];
    EXPECT_TRUE(any_diff);
}

TEST(QuadraticInstance, GeneratorRespectsRanges) {
    auto q = QuadraticInstance::generate(20, 6, 3, {1.0, 3.0}, {1.0, 2.0});
    for (int i = 0; i < q.N; ++i) {
        EXPECT_GE(q.a[i].minCoeff(), 1.0);
        EXPECT_LE(q.a[i].maxCoeff(), 3.0);
        EXPECT_GE(q.b[i].minCoeff(), 1.0);
        EXPECT_LE(q.b[i].maxCoeff(), 2.0);
    }
}

TEST(QuadraticInstance, GeneratorRejectsBadArguments) {
    EXPECT_THROW(QuadraticInstance::generate(0, 3, 1), ConfigError);
    EXPECT_THROW(QuadraticInstance::generate(3, 0, 1), ConfigError);
    EXPECT_THROW(QuadraticInstance::generate(3, 3, 1, {3.0, 1.0}), ConfigError);
}

TEST(QuadraticInstance, LocalGradientMatchesFiniteDifferences) {
    auto q = QuadraticInstance::generate(4, 3, 5);
    auto p = q.to_problem();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        int i = trial % q.N;
        VectorXd xi(3), z(3);
        for (int c = 0; c < 3; ++c) xi[c] = d(rng);
        for (int c = 0; c < 3; ++c) z[c] = d(rng);
        VectorXd g = p.eval_grad_local(i, xi, z);
        VectorXd g_fd = fd_gradient([&](const VectorXd& u) { return q.local_value(i, u, z); }, xi);
        EXPECT_LT(rel_diff(g, g_fd), 1e-6);
    }
}

TEST(QuadraticInstance, AggregateGradientMatchesFiniteDifferences) {
    auto q = QuadraticInstance::generate(4, 3, 6);
    auto p = q.to_problem();
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        int i = trial % q.N;
        VectorXd xi(3), z(3);
        for (int c = 0; c < 3; ++c) xi[c] = d(rng);
        for (int c = 0; c < 3; ++c) z[c] = d(rng);
        VectorXd g = p.eval_grad_agg(i, xi, z);
        VectorXd g_fd = fd_gradient([&](const VectorXd& u) { return q.local_value(i, xi, u); }, z);
        EXPECT_LT(rel_diff(g, g_fd), 1e-6);
    }
}

TEST(QuadraticInstance, ReducedGradientMatchesFiniteDifferences) {
    auto q = QuadraticInstance::generate(5, 2, 8);
    auto p = q.to_problem();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        VectorXd x(p.total_dim());
        for (long c = 0; c < x.size(); ++c) x[c] = d(rng);
        VectorXd g = p.full_gradient(x);
        VectorXd g_fd = fd_gradient([&](const VectorXd& u) { return q.value(u); }, x);
        EXPECT_LT(rel_diff(g, g_fd), 1e-6);
    }
}

TEST(AggregativeProblem, PhiIsMeanOfAggregates) {
    auto q = QuadraticInstance::generate(6, 2, 12);
    auto p = q.to_problem();
    VectorXd x = VectorXd::LinSpaced(p.total_dim(), -1.0, 1.0);
    VectorXd mean = VectorXd::Zero(2);
    for (int i = 0; i < 6; ++i) mean += x.segment(2 * i, 2);
    mean /= 6.0;
    EXPECT_LT((p.phi(x) - mean).norm(), 1e-14);
}

TEST(AggregativeProblem, ConstraintGapSumsAgentContributions) {
    auto q = QuadraticInstance::generate(3, 2, 13);
    auto p = q.to_problem();
    VectorXd x = VectorXd::LinSpaced(6, 0.0, 5.0);
    VectorXd expect = x.segment(0, 2) + x.segment(2, 2) + x.segment(4, 2) - q.b[0] - q.b[1] - q.b[2];
    EXPECT_LT((p.constraint_gap(x) - expect).norm(), 1e-14);
    EXPECT_LT((p.b_total() - (q.b[0] + q.b[1] + q.b[2])).norm(), 1e-14);
}

TEST(AggregativeProblem, OffsetsHandleUnequalBlockSizes) {
    auto p = heterogeneous_problem();
    EXPECT_EQ(p.total_dim(), 3);
    EXPECT_EQ(p.agent_offset(0), 0);
    EXPECT_EQ(p.agent_offset(1), 1);
    EXPECT_EQ(p.agent_dim(0), 1);
    EXPECT_EQ(p.agent_dim(1), 2);
    VectorXd x(3);
    x << 2.0, 1.0, -1.0;
    // phi = (x0^2 + (x1 + 2 x2)) / 2
    EXPECT_NEAR(p.phi(x)[0], (4.0 + (1.0 - 2.0)) / 2.0, 1e-14);
    // gap = x0 + (x1 + x2) - 0.5 - 0.2
    EXPECT_NEAR(p.constraint_gap(x)[0], 2.0 + 0.0 - 0.7, 1e-14);
}

TEST(AggregativeProblem, ReducedGradientHandlesNonlinearAggregates) {
    auto p = heterogeneous_problem();
    // Objective consistent with the agent callbacks:
    //   F(x) = x0^2 + x0 phi(x) + ||(x1, x2)||^2.
    auto value = [&](const VectorXd& x) {
        double phi = (x[0] * x[0] + x[1] + 2.0 * x[2]) / 2.0;
        return x[0] * x[0] + x[0] * phi + x[1] * x[1] + x[2] * x[2];
    };
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        VectorXd x(3);
        for (int c = 0; c < 3; ++c) x[c] = d(rng);
        EXPECT_LT(rel_diff(p.full_gradient(x), fd_gradient(value, x)), 1e-6);
    }
}

TEST(AggregativeProblem, NonFiniteGradientIsFatal) {
    auto q = QuadraticInstance::generate(2, 1, 1);
    auto p = q.to_problem();
    std::vector<AgentModel> agents;
    for (int i = 0; i < 2; ++i) {
        AgentModel ag;
        ag.dim = 1;
        ag.grad_local = [](const VectorXd&, const VectorXd&) -> VectorXd {
            return VectorXd::Constant(1, std::numeric_limits<double>::quiet_NaN());
        };
        ag.grad_agg = [](const VectorXd&, const VectorXd&) -> VectorXd { return VectorXd::Zero(1); };
        ag.aggregate = [](const VectorXd& x) -> VectorXd { return x; };
        ag.aggregate_jacobian = [](const VectorXd&) -> MatrixXd { return MatrixXd::Identity(1, 1); };
        ag.A = MatrixXd::Identity(1, 1);
        ag.b = VectorXd::Zero(1);
        agents.push_back(std::move(ag));
    }
    AggregativeProblem bad(std::move(agents), 1, 1);
    VectorXd one = VectorXd::Ones(1);
    EXPECT_THROW(bad.eval_grad_local(0, one, one), NumericError);
}

TEST(ConstantEstimation, BracketsClosedFormOnQuadratic) {
    auto q = QuadraticInstance::generate(4, 2, 21);
    auto p = q.to_problem();
    SmoothnessConstants exact = q.constants();
    SmoothnessConstants est = estimate_constants(p, -2.0, 4.0, 8000, 17);
    // Sampled minimum quotients over-estimate the true modulus; sampled
    // maximum quotients under-estimate the true Lipschitz constants.
    EXPECT_GE(est.nu, exact.nu - 1e-9);
    EXPECT_LE(est.L1, exact.L1 + 1e-9);
    EXPECT_LE(est.L2, exact.L2 + 1e-9);
    EXPECT_LE(est.L3, exact.L3 + 1e-9);
    // They should still land in the right neighbourhood.
    EXPECT_NEAR(est.nu, exact.nu, 0.5);
    EXPECT_NEAR(est.L1, exact.L1, 1.0);
    EXPECT_NEAR(est.L2, exact.L2, 0.5);
    EXPECT_NEAR(est.L3, exact.L3, 1e-9);  // identity aggregate: exact
    EXPECT_FALSE(est.certified);
    EXPECT_TRUE(exact.certified);
    EXPECT_FALSE(est.strong_convexity_flagged);
}
