#include <gtest/gtest.h>

#include <random>

#include "dapd/oracle.hpp"
#include "support.hpp"

using namespace dapd;

TEST(KktOracle, UnconstrainedOptimumHasClosedForm) {
    // With slack constraints the optimizer balances the pull toward a_i and
    // toward the mean: x_i = (a_i + mean(a)) / 2, multiplier zero.
    QuadraticInstance q = QuadraticInstance::generate(6, 3, 17);
    q.b.assign(6, VectorXd::Constant(3, 100.0));  // never active
    KktPoint ref = solve_kkt(q);
    VectorXd abar = VectorXd::Zero(3);
    for (int i = 0; i < 6; ++i) abar += q.a[i];
    abar /= 6.0;
    for (int i = 0; i < 6; ++i) {
        VectorXd expect = 0.5 * (q.a[i] + abar);
        EXPECT_LT((ref.x.segment(3 * i, 3) - expect).norm(), 1e-10) << "agent " << i;
    }
    EXPECT_EQ(ref.lambda, VectorXd::Zero(3));
    EXPECT_TRUE(ref.active_set.empty());
    EXPECT_EQ(ref.candidates_accepted, 1);
}

TEST(KktOracle, MatchesProjectedGradientOnActiveInstance) {
    // Default ranges make the coupling bind; cross-check against a slow
    // projected-gradient solve that shares no code with the oracle.
    QuadraticInstance q = QuadraticInstance::generate(5, 3, 23);
    KktPoint ref = solve_kkt(q);
    ASSERT_FALSE(ref.active_set.empty());

    VectorXd s = VectorXd::Zero(3);
    for (int i = 0; i < 5; ++i) s += q.b[i];
    auto pg = testsupport::projected_gradient_quadratic(q.a, s);
    EXPECT_LT((ref.x - pg.x).norm() / pg.x.norm(), 1e-6);
    EXPECT_LT((ref.lambda - pg.lambda).norm(), 1e-4);
}

TEST(KktOracle, ResidualsVanishOnlyAtTheOptimum) {
    QuadraticInstance q = QuadraticInstance::generate(4, 2, 29);
    AggregativeProblem p = q.to_problem();
    KktPoint ref = solve_kkt(q);
    KktResiduals at = kkt_residuals(p, ref.x, ref.lambda);
    EXPECT_LT(at.stationarity, 1e-10);
    EXPECT_LT(at.primal, 1e-10);
    EXPECT_LT(at.complementarity, 1e-10);
    EXPECT_EQ(at.dual_feasibility, 0.0);

    VectorXd x_off = ref.x;
    x_off[0] += 0.05;
    KktResiduals off = kkt_residuals(p, x_off, ref.lambda);
    EXPECT_GT(off.stationarity, 1e-3);
}

TEST(KktOracle, ResidualsFlagNegativeMultiplier) {
    QuadraticInstance q = QuadraticInstance::generate(3, 2, 31);
    AggregativeProblem p = q.to_problem();
    VectorXd lambda(2);
    lambda << -0.3, 0.4;
    KktResiduals r = kkt_residuals(p, VectorXd::Zero(6), lambda);
    EXPECT_NEAR(r.dual_feasibility, 0.3, 1e-12);
}

TEST(KktOracle, EqualitySubsystemSatisfiesItsConstraints) {
    QuadraticInstance q = QuadraticInstance::generate(4, 3, 37);
    AggregativeProblem p = q.to_problem();
    std::vector<int> active{0, 2};
    EqualitySolve sol = solve_equality_constrained(q, active);
    VectorXd gap = p.constraint_gap(sol.x);
    EXPECT_LT(std::abs(gap[0]), 1e-10);
    EXPECT_LT(std::abs(gap[2]), 1e-10);
    EXPECT_EQ(sol.lambda[1], 0.0);
    // Stationarity of the Lagrangian at the subsystem solution.
    VectorXd g = p.full_gradient(sol.x);
    for (int i = 0; i < 4; ++i) g.segment(3 * i, 3) += sol.lambda;
    EXPECT_LT(g.norm(), 1e-9);
    EXPECT_THROW(solve_equality_constrained(q, std::vector<int>{5}), ConfigError);
}

TEST(KktOracle, EnumerationGuardRejectsWideProblems) {
    QuadraticInstance q = QuadraticInstance::generate(2, 21, 1);
    EXPECT_THROW(solve_kkt(q), ConfigError);
}

TEST(FixedPoint, IsInvariantUnderOneMatrixStep) {
    QuadraticInstance q = QuadraticInstance::generate(4, 2, 41);
    AggregativeProblem p = q.to_problem();
    MixingNetwork net = exponential_network(4);
    StepSizes st{0.05, 0.3, 0.1};
    KktPoint ref = solve_kkt(q);
    FixedPoint fp = build_fixed_point(p, net, st, ref);
    MatrixOps ops = make_matrix_ops(p, net);
    MatrixFormState s;
    s.x = fp.x;
    s.z = fp.z;
    s.mu = fp.mu;
    s.v = fp.v;
    s.y = fp.y;
    s.lambda = fp.lambda;
    s.k = 1;
    MatrixFormState moved = step_matrix(s, p, ops, st);
    EXPECT_LT((moved.x - s.x).norm(), 1e-10);
    EXPECT_LT((moved.z - s.z).norm(), 1e-10);
    EXPECT_LT((moved.mu - s.mu).norm(), 1e-10);
    EXPECT_LT((moved.v - s.v).norm(), 1e-10);
    EXPECT_LT((moved.y - s.y).norm(), 1e-10);
    EXPECT_LT((moved.lambda - s.lambda).norm(), 1e-10);
}

TEST(FixedPoint, BlocksFollowTheirDefiningEquations) {
    QuadraticInstance q = QuadraticInstance::generate(5, 2, 43);
    AggregativeProblem p = q.to_problem();
    MixingNetwork net = ring_network(5);
    StepSizes st{0.04, 0.25, 0.09};
    KktPoint ref = solve_kkt(q);
    FixedPoint fp = build_fixed_point(p, net, st, ref);

    VectorXd phi = p.phi(ref.x);
    VectorXd gap = p.constraint_gap(ref.x);
    VectorXd vblock = ref.lambda + (st.beta / 5.0) * gap;
    for (int i = 0; i < 5; ++i) {
        EXPECT_LT((fp.z.segment(2 * i, 2) - phi).norm(), 1e-12);
        EXPECT_LT((fp.lambda.segment(2 * i, 2) - ref.lambda).norm(), 1e-12);
        EXPECT_LT((fp.v.segment(2 * i, 2) - vblock).norm(), 1e-12);
    }
    VectorXd mubar = p.mean_grad_agg(ref.x, fp.z);
    for (int i = 0; i < 5; ++i) EXPECT_LT((fp.mu.segment(2 * i, 2) - mubar).norm(), 1e-12);
    EXPECT_LT(fp.y_residual, 1e-8);

    // y solves B y = v - lambda - beta (Lambda x - b) blockwise.
    MatrixOps ops = make_matrix_ops(p, net);
    VectorXd rhs = fp.v - fp.lambda - st.beta * (ops.Lambda * fp.x - ops.b);
    EXPECT_LT((ops.Bm * fp.y - rhs).norm(), 1e-10);
}

TEST(FixedPoint, RejectsMismatchedNetwork) {
    QuadraticInstance q = QuadraticInstance::generate(4, 2, 47);
    AggregativeProblem p = q.to_problem();
    MixingNetwork net = ring_network(5);
    StepSizes st{0.05, 0.3, 0.1};
    KktPoint ref = solve_kkt(q);
    EXPECT_THROW(build_fixed_point(p, net, st, ref), ConfigError);
}
