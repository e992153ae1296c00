#include "lqjump/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lqjump;

namespace {

LQProblem no_jump_problem(double A, double B, double C, double D, double Q, double R, double G, std::size_t n,
                          double lambda = 0.0) {
    LQProblem pb;
    pb.grid = TimeGrid(1.0, n);
    pb.cone = ConeSpec::full_space(1);
    CoefficientSlice s = CoefficientSlice::zero(1, 1);
    s.A = A;
    s.B[0] = B;
    s.C[0] = C;
    s.D(0, 0) = D;
    s.Q = Q;
    s.R(0, 0) = R;
    s.lambda = lambda;
    pb.pre = PreDefaultCoeffs::constant(pb.grid, s);
    pb.post = PostDefaultCoeffs::constant(pb.grid, s);
    pb.terminal = TerminalWeights::constant(pb.grid, G, G);
    return pb;
}

bool has_failed_check_containing(const VerificationReport& r, const std::string& text) {
    for (const auto& c : r.checks)
        if (!c.passed && c.note.find(text) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST(ClassicalReference, LinearFlowClosedForm) {
    const double A = 0.3, Q = 0.8, G = 1.2;
    const LQProblem pb = no_jump_problem(A, 0, 0, 1, Q, 1, G, 50);
    const std::vector<double> P = classical_riccati_reference(pb);
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i) {
        const double e = std::exp(2 * A * (1.0 - pb.grid.time(i)));
        EXPECT_NEAR(P[i], G * e + Q * (e - 1) / (2 * A), 1e-11);
    }
}

TEST(ClassicalReference, SeparableImplicitRelation) {
    const LQProblem pb = no_jump_problem(0, 1, 0, 1, 0, 1, 1, 100);
    const std::vector<double> P = classical_riccati_reference(pb);
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i)
        EXPECT_NEAR(std::log(P[i]) - 1 / P[i], pb.grid.time(i) - 2.0, 1e-10);
}

TEST(ClassicalReference, AgreesWithAssembledSolution) {
    const LQProblem pb = no_jump_problem(0.2, 0.6, 0.3, 0.8, 1.0, 0.7, 1.3, 200);
    const std::vector<double> ref = classical_riccati_reference(pb);
    const RiccatiSolution sol = assemble(pb);
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i) EXPECT_LE(battery::rel_err(sol.P0[i], ref[i]), 1e-6);
}

TEST(ClassicalReference, Preconditions) {
    LQProblem pb = no_jump_problem(0, 1, 0, 1, 0, 1, 1, 10);
    pb.cone = ConeSpec::nonneg_orthant(1);
    EXPECT_THROW(classical_riccati_reference(pb), Error);
    EXPECT_THROW(classical_riccati_reference(no_jump_problem(0, 1, 0, 1, 0, 1, 1, 10, 0.5)), Error);
    pb = no_jump_problem(0, 1, 0, 1, 0, 1, 1, 10);
    pb.pre.nodes[3].A = 0.1;
    EXPECT_THROW(classical_riccati_reference(pb), Error);
    EXPECT_THROW(classical_riccati_reference(no_jump_problem(0, 1, 0, 0, 0, 0, 0, 10)), Error);
}

TEST(GoldenSection, ExpandsBracketToFindMaximum) {
    const auto f = [](double x) { return -(x - 3.0) * (x - 3.0); };
    EXPECT_NEAR(golden_section_maximize(f, 0.0, 1.0), 3.0, 1e-6);
    EXPECT_NEAR(golden_section_maximize(f, 0.0, 10.0), 3.0, 1e-6);
    // Maximum at the left end.
    EXPECT_NEAR(golden_section_maximize(f, 5.0, 6.0), 5.0, 1e-6);
}

TEST(PolicyGridOracle, ZeroGridIsTheZeroControlCost) {
    const LQProblem pb = battery::value_instance(20);
    const SimulationOptions opt{300, 3, 1};
    const PolicyGridResult r = policy_grid_oracle(pb, 1.0, {{{0.0, 0.0}}, {{0.0, 0.0}}}, opt);
    const auto zero = [](std::size_t, std::optional<std::size_t>, double) { return Vec::Zero(1).eval(); };
    EXPECT_EQ(r.evaluated, 1u);
    EXPECT_DOUBLE_EQ(r.best.mean, mc_cost(pb, zero, 1.0, opt).mean);
}

TEST(PolicyGridOracle, NoCandidateBeatsTheValue) {
    const LQProblem pb = battery::value_instance(20);
    const RiccatiSolution sol = assemble(pb);
    const double v = value_at(sol, 0.0, 1.0);
    std::vector<PiecewiseGainLaw::Gains> cands;
    for (double g : {0.0, 0.5, 1.0, 1.5}) cands.push_back({g, g});
    const SimulationOptions opt{400, 5, 1};
    const PolicyGridResult r = policy_grid_oracle(pb, 1.0, {cands, cands}, opt);
    EXPECT_EQ(r.evaluated, 16u);
    EXPECT_EQ(r.best_gains.size(), 2u);
    EXPECT_GE(r.best.mean, v - 3 * r.best.se);
}

TEST(PolicyGridOracle, RejectsOversizedSearch) {
    const LQProblem pb = battery::value_instance(20);
    const SimulationOptions opt{10, 1, 1};
    std::vector<PiecewiseGainLaw::Gains> one{{0.0, 0.0}};
    EXPECT_THROW(policy_grid_oracle(pb, 1.0, {one, one, one, one, one}, opt), Error);
    EXPECT_THROW(policy_grid_oracle(pb, 1.0, {std::vector<PiecewiseGainLaw::Gains>(12)}, opt), Error);
    EXPECT_THROW(policy_grid_oracle(pb, 1.0, {{{-1.0, 0.0}}}, opt), Error);
}

TEST(Report, OverallPassIffEveryCheckPasses) {
    VerificationReport r;
    EXPECT_TRUE(r.passed());
    r.checks.push_back({"a", "x", true, 0, 0, ""});
    r.checks.push_back({"b", "y", true, 0, 0, ""});
    r.checks.push_back({"a", "z", false, 0, 0, ""});
    EXPECT_FALSE(r.passed());
    const auto crit = r.criteria();
    ASSERT_EQ(crit.size(), 2u);
    EXPECT_EQ(crit[0].first, "a");
    EXPECT_FALSE(crit[0].second);
    EXPECT_TRUE(crit[1].second);
}

TEST(RunSuite, CheapCriteriaPassOnQuickBattery) {
    VerifyConfig cfg = VerifyConfig::quick();
    cfg.threads = 1;
    cfg.only = {battery::kSeparable, battery::kFeasibility, battery::kNoJump, battery::kBounds};
    const VerificationReport r = run_suite(cfg);
    EXPECT_TRUE(r.passed());
    std::vector<std::string> names;
    for (const auto& [name, ok] : r.criteria()) names.push_back(name);
    EXPECT_EQ(names.size(), 4u);
}

TEST(RunSuite, ViolatedAssumptionSurfacesAsFailedCheck) {
    VerifyConfig cfg = VerifyConfig::quick();
    cfg.only = {battery::kFeasibility};
    LQProblem pb = battery::value_instance(20);
    for (auto& s : pb.pre.nodes) s.E = -2.0;
    cfg.problem = pb;
    const VerificationReport r = run_suite(cfg);
    EXPECT_FALSE(r.passed());
    EXPECT_TRUE(has_failed_check_containing(r, "ViolatedAssumption"));
}

TEST(RunSuite, NeitherCaseSurfacesAsFailedCheck) {
    VerifyConfig cfg = VerifyConfig::quick();
    cfg.only = {battery::kFeasibility};
    cfg.problem = no_jump_problem(0, 1, 0, 1, 0, 0, 0, 20);
    const VerificationReport r = run_suite(cfg);
    EXPECT_FALSE(r.passed());
    EXPECT_TRUE(has_failed_check_containing(r, "NeitherCase"));
}
