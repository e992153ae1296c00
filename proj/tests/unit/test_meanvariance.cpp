#include "lqjump/meanvariance.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace lqjump;

namespace {

MarketSpec sample_market(std::size_t n = 100, ConeKind cone = ConeKind::NonNegOrthant) {
    return MarketSpec::constant(TimeGrid(1.0, n), 0.05, 0.12, 0.25, 0.1, 0.3, 0.08, 0.3, 1.0, cone);
}

NormalizedPair manual_pair(double P0, double N0, double integrated_rate) {
    NormalizedPair np;
    np.P0 = P0;
    np.N0 = N0;
    np.discount = std::exp(-integrated_rate);
    np.growth = std::exp(integrated_rate);
    return np;
}

// Plain golden-section search for the maximum of a concave function.
double golden_max(const std::function<double(double)>& f, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 200 && b - a > 1e-12 * (1.0 + std::abs(a)); ++i) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

TEST(Feasibility, NoExcessReturnIsInfeasible) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(1.0, 50), 0.03, 0.03, 0.2, 0.0, 0.5, 0.03, 0.2, 1.0);
    const FeasibilityResult f = feasibility_check(m);
    EXPECT_EQ(f.status, Feasibility::Infeasible);
    EXPECT_EQ(f.integral, 0.0);
}

TEST(Feasibility, PositiveConstantPremium) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(2.0, 50), 0.02, 0.12, 0.2, 0.0, 0.0, 0.02, 0.2, 1.0);
    const FeasibilityResult f = feasibility_check(m);
    EXPECT_EQ(f.status, Feasibility::Feasible);
    EXPECT_NEAR(f.integral, 0.2, 1e-12);
}

TEST(Feasibility, PostDefaultPremiumAloneMatchesMonteCarlo) {
    // Pre-default premium exactly offset by the expected jump; only the
    // post-default branch carries positive mass.
    const double T = 1.0, r = 0.02, lam = 1.0, gamma = 0.1;
    const MarketSpec m = MarketSpec::constant(TimeGrid(T, 400), r, r + lam * gamma, 0.2, gamma, lam, r + 0.05, 0.2, 1.0);
    const FeasibilityResult f = feasibility_check(m);
    EXPECT_EQ(f.status, Feasibility::Feasible);

    // E int_0^T (b - r - lambda~ gamma)^+ dt = 0.05 E[(T - tau)^+], tau ~ Exp(lam).
    std::mt19937_64 rng(99);
    std::exponential_distribution<double> tau(lam);
    const int draws = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double v = 0.05 * std::max(0.0, T - tau(rng));
        s += v;
        s2 += v * v;
    }
    const double mean = s / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(f.integral - mean), 3 * se + 1e-6);
}

TEST(Embed, RisklessMultiplierGivesZeroState) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(1.0, 10), 0.0, 0.1, 0.2, 0.0, 0.0, 0.1, 0.2, 1.7);
    EXPECT_EQ(embed(m, 1.7).y0, 0.0);
    const MarketSpec g = sample_market(10);
    EXPECT_EQ(embed(g, g.x0 * std::exp(integrated_rate(g))).y0, 0.0);
    EXPECT_NEAR(embed(g, 2.0).y0, g.x0 - 2.0 * std::exp(-0.05), 1e-15);
}

TEST(Embed, CoefficientBookkeeping) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(1.0, 10), 0.03, 0.11, 0.2, 0.0, 0.0, 0.07, 0.3, 1.0);
    const LQProblem pb = embed(m, 1.0).problem;
    for (const auto& s : pb.pre.nodes) {
        EXPECT_EQ(s.F[0], 0.0);
        EXPECT_DOUBLE_EQ(s.B[0], 0.11 - 0.03);
        EXPECT_EQ(s.Q, 0.0);
        EXPECT_EQ(s.R(0, 0), 0.0);
    }
    EXPECT_DOUBLE_EQ(pb.post.base[3].B[0], 0.07 - 0.03);
    EXPECT_EQ(pb.terminal.G0, 1.0);
    EXPECT_EQ(validate_problem(pb).case_class, CaseClass::Singular);
}

TEST(Embed, ClosedLoopDynamicsReproduceWealth) {
    // Compensated drift and jump of the embedded SDE for a holding pi:
    // dX = (rX + pi (b - r)) dt + pi sigma dW - pi gamma dL.
    const MarketSpec m = sample_market(10);
    const LQProblem pb = embed(m, 1.0).problem;
    const auto& s = pb.pre.nodes[4];
    const double X = 1.3, pi = 0.7;
    const double drift = (s.A - s.lambda * s.E) * X + (s.B[0] - s.lambda * s.F[0]) * pi;
    EXPECT_NEAR(drift, m.r[4] * X + pi * (m.b0[4] - m.r[4]), 1e-15);
    EXPECT_NEAR(s.E * X + s.F[0] * pi, -pi * m.gamma[4], 1e-15);
    EXPECT_NEAR(s.D(0, 0) * pi, pi * m.sigma0[4][0], 1e-15);
}

TEST(Embed, ZeroVolatilityIsNeitherCase) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(1.0, 10), 0.0, 0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0);
    try {
        normalized_pair(m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NeitherCase);
    }
}

TEST(NormalizedPair, NoPremiumMarketIsDegenerate) {
    const MarketSpec m = MarketSpec::constant(TimeGrid(1.0, 200), 0.04, 0.04, 0.2, 0.0, 0.0, 0.04, 0.2, 1.0);
    const NormalizedPair np = normalized_pair(m);
    EXPECT_NEAR(np.n_ratio(), 1.0, 1e-8);
    EXPECT_EQ(feasibility_check(m).status, Feasibility::Infeasible);
    EXPECT_THROW(optimal_eta(np, 1.0, 2.0), Error);
    try {
        frontier(m, {1.5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateDual);
    }
}

TEST(NormalizedPair, SeparableNoJumpMarket) {
    const double mu = 0.1, s = 0.25, T = 1.0;
    const MarketSpec m = MarketSpec::constant(TimeGrid(T, 200), 0.0, mu, s, 0.0, 0.0, mu, s, 1.0);
    const NormalizedPair np = normalized_pair(m);
    EXPECT_NEAR(np.N0, std::exp(-mu * mu * T / (s * s)), 1e-8);
    EXPECT_LT(np.n_ratio(), 1.0);
}

TEST(NormalizedPair, FullSpaceSymmetry) {
    const NormalizedPair np = normalized_pair(sample_market(100, ConeKind::FullSpace));
    EXPECT_NEAR(np.P0, np.N0, 1e-12);
}

TEST(NormalizedPair, RatiosBoundedByOne) {
    for (ConeKind c : {ConeKind::NonNegOrthant, ConeKind::FullSpace}) {
        const NormalizedPair np = normalized_pair(sample_market(100, c));
        EXPECT_LE(np.p_ratio(), 1.0 + 1e-12);
        EXPECT_LT(np.n_ratio(), 1.0);
        EXPECT_GT(np.n_ratio(), 0.0);
    }
}

TEST(OptimalEta, WorkedExample) {
    const NormalizedPair np = manual_pair(0.8, 0.5, 0.0);
    EXPECT_DOUBLE_EQ(optimal_eta(np, 1.0, 2.0), 3.0);
    const FrontierPoint pt = frontier_point(np, 1.0, 2.0);
    EXPECT_DOUBLE_EQ(pt.variance, 1.0);
    const double eta = golden_max([&](double e) { return dual_value(np, 1.0, e, 2.0); }, 1.0, 10.0);
    EXPECT_NEAR(eta, 3.0, 1e-6);
}

TEST(OptimalEta, RisklessTarget) {
    const MarketSpec m = sample_market();
    const NormalizedPair np = normalized_pair(m);
    const double riskless = m.x0 * np.growth;
    const FrontierPoint pt = frontier_point(np, m.x0, riskless);
    EXPECT_EQ(pt.eta, riskless);
    EXPECT_EQ(pt.variance, 0.0);
    const FrontierCheck mc = simulate_frontier_point(m, np, pt, {200, 1, 1});
    EXPECT_TRUE(mc.zero_control);
}

TEST(OptimalEta, ClosedFormMatchesGoldenSection) {
    const MarketSpec m = sample_market();
    const NormalizedPair np = normalized_pair(m);
    const double riskless = m.x0 * np.growth;
    for (double z : {1.1, 1.3, 2.0}) {
        const double eta = optimal_eta(np, m.x0, z);
        const double hi = riskless + 4.0 * (eta - riskless) + 1.0;
        const double gs = golden_max([&](double e) { return dual_value(np, m.x0, e, z); }, riskless, hi);
        EXPECT_LE(std::abs(gs - eta) / std::max(1.0, std::abs(eta)), 1e-6) << "z=" << z;
    }
}

TEST(OptimalEta, RejectsTargetBelowRisklessWealth) {
    const NormalizedPair np = manual_pair(0.8, 0.5, 0.1);
    try {
        optimal_eta(np, 1.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleTarget);
    }
}

TEST(DualValue, Branches) {
    const NormalizedPair np = manual_pair(0.8, 0.5, 0.0);
    EXPECT_EQ(dual_value(np, 2.0, 2.0, 2.0), 0.0);
    // eta below x0: y0 > 0 reads P0.
    EXPECT_DOUBLE_EQ(dual_value(np, 2.0, 1.5, 3.0), 0.8 * 0.25 - 2.25);
    EXPECT_DOUBLE_EQ(dual_value(np, 1.0, 1.5, 3.0), 0.5 * 0.25 - 2.25);
}

TEST(DualValue, ConcaveAboveRisklessWealth) {
    const MarketSpec m = sample_market();
    const NormalizedPair np = normalized_pair(m);
    const double riskless = m.x0 * np.growth, z = 1.4, h = 1e-3;
    for (double eta = riskless; eta < riskless + 5.0; eta += 0.37) {
        const double d2 = dual_value(np, m.x0, eta + h, z) - 2 * dual_value(np, m.x0, eta, z) +
                          dual_value(np, m.x0, eta - h, z);
        EXPECT_LE(d2, 1e-12);
    }
}

TEST(DualValue, OptimumDominatesProbes) {
    const MarketSpec m = sample_market();
    const NormalizedPair np = normalized_pair(m);
    const double riskless = m.x0 * np.growth, z = 1.3;
    const double best = dual_value(np, m.x0, optimal_eta(np, m.x0, z), z);
    for (double k : {0.0, 0.5, 1.0, 2.0, 10.0})
        EXPECT_LE(dual_value(np, m.x0, riskless + k, z), best + 1e-9);
    // Minimal variance equals the dual optimum.
    EXPECT_NEAR(frontier_point(np, m.x0, z).variance, best, 1e-10);
}

TEST(Frontier, QuadraticInExcessTarget) {
    const MarketSpec m = sample_market();
    const std::vector<double> zs{1.06, 1.1, 1.5, 2.0, 3.0};
    const auto pts = frontier(m, zs);
    const double riskless = m.x0 * std::exp(integrated_rate(m));
    const double k = pts[0].variance / std::pow(zs[0] - riskless, 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_NEAR(pts[i].variance / std::pow(zs[i] - riskless, 2), k, 1e-12 * k);
        if (i) {
            EXPECT_GT(pts[i].variance, pts[i - 1].variance);
        }
        EXPECT_GE(pts[i].eta, riskless);
    }
    EXPECT_THROW(frontier(m, {0.5}), Error);
}

TEST(Frontier, ScaleCovariance) {
    const MarketSpec m = sample_market();
    const NormalizedPair np = normalized_pair(m);
    const FrontierPoint a = frontier_point(np, 1.0, 1.4);
    const FrontierPoint b = frontier_point(np, 2.5, 3.5);
    EXPECT_NEAR(b.eta, 2.5 * a.eta, 1e-12 * b.eta);
    EXPECT_NEAR(b.variance, 6.25 * a.variance, 1e-12 * b.variance);
}

TEST(Frontier, MonteCarloMeetsTargetAndVariance) {
    const MarketSpec m = sample_market(100);
    const NormalizedPair np = normalized_pair(m);
    const FrontierPoint pt = frontier_point(np, m.x0, 1.2);
    const FrontierCheck mc = simulate_frontier_point(m, np, pt, {20000, 42, 0});
    EXPECT_LE(std::abs(mc.moments.mean - pt.z), 3 * mc.moments.mean_se);
    EXPECT_LE(std::abs(mc.moments.variance - pt.variance), 3 * mc.moments.variance_se);
    EXPECT_FALSE(mc.zero_control);
}

TEST(Frontier, SuboptimalPoliciesDoNotBeatFrontier) {
    const MarketSpec m = sample_market(100);
    const NormalizedPair np = normalized_pair(m);
    const FrontierPoint pt = frontier_point(np, m.x0, 1.2);
    const Embedding e = embed(m, pt.eta);
    const FeedbackPolicy pol = extract_policy(e.problem, np.solution);
    const double riskless = m.x0 * np.growth;
    for (double f : {0.5, 1.5}) {
        TerminalMoments tm = mc_terminal_moments(e.problem, scaled_law(pol, f), e.y0, {20000, 7, 0});
        tm.mean += pt.eta;
        const double reach = std::max(riskless, tm.mean - 3 * tm.mean_se);
        const double floor = frontier_point(np, m.x0, reach).variance;
        EXPECT_GE(tm.variance, floor - 3 * tm.variance_se) << "factor " << f;
    }
}
