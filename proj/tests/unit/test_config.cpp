#include "lqjump/config.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace lqjump;

namespace {

const std::string kMinimal = R"({
  "grid": {"T": 1.0},
  "cone": {"kind": "full", "dim": 1},
  "problem": {
    "pre": {"A": 0.0, "B": 1.0, "C": 0.0, "D": 1.0, "Q": 1.0, "R": 1.0},
    "post": {"A": 0.0, "B": 1.0, "C": 0.0, "D": 1.0, "Q": 1.0, "R": 1.0}
  },
  "terminal": {"G0": 1.0, "G1": 1.0},
  "x0": 1.0
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    return s.replace(pos, from.size(), to);
}

struct Failure {
    ErrorCode code;
    std::string message;
};

Failure parse_failure(const std::string& text, Mode mode = Mode::Solve) {
    try {
        parse_config_text(text, mode, {}, "cfg.json");
    } catch (const Error& e) {
        return {e.code(), e.what()};
    }
    ADD_FAILURE() << "config parsed without error";
    return {ErrorCode::IOError, ""};
}

}  // namespace

TEST(Config, MinimalStandardCaseUsesDocumentedDefaults) {
    const RunConfig rc = parse_config_text(kMinimal, Mode::Simulate);
    EXPECT_EQ(rc.steps, 1000u);
    EXPECT_EQ(rc.paths, 100000u);
    EXPECT_EQ(rc.seed, 42u);
    ASSERT_TRUE(rc.problem);
    EXPECT_EQ(rc.problem->grid.steps(), 1000u);
    EXPECT_EQ(rc.problem->cone.kind, ConeKind::FullSpace);
    EXPECT_EQ(rc.problem->pre.nodes[0].lambda, 0.0);
    EXPECT_EQ(rc.out_dir, "out");
}

TEST(Config, MissingTerminalWeightNamesTheKey) {
    const Failure f = parse_failure(replace(kMinimal, R"("G0": 1.0, )", ""));
    EXPECT_EQ(f.code, ErrorCode::SchemaError);
    EXPECT_NE(f.message.find("terminal.G0"), std::string::npos) << f.message;
    EXPECT_NE(f.message.find("cfg.json"), std::string::npos);
}

TEST(Config, UnknownKeyIsRejected) {
    const Failure f = parse_failure(replace(kMinimal, R"("x0": 1.0)", R"("x0": 1.0, "seeed": 3)"));
    EXPECT_EQ(f.code, ErrorCode::SchemaError);
    EXPECT_NE(f.message.find("seeed"), std::string::npos);
    const Failure g = parse_failure(replace(kMinimal, R"("Q": 1.0, "R": 1.0},
    "post")", R"("Q": 1.0, "R": 1.0, "G": 2},
    "post")"));
    EXPECT_NE(g.message.find("problem.pre.G"), std::string::npos) << g.message;
}

TEST(Config, MalformedJsonReportsLineAndColumn) {
    const Failure f = parse_failure("{\n  \"grid\": {\"T\": 1.0,}\n}");
    EXPECT_EQ(f.code, ErrorCode::ParseError);
    EXPECT_NE(f.message.find("cfg.json:2:"), std::string::npos) << f.message;
}

TEST(Config, WrongTypeIsSchemaError) {
    const Failure f = parse_failure(replace(kMinimal, R"("T": 1.0)", R"("T": "one")"));
    EXPECT_EQ(f.code, ErrorCode::SchemaError);
    EXPECT_NE(f.message.find("grid.T"), std::string::npos);
}

TEST(Config, OverridesReplaceConfigKeys) {
    Overrides ov;
    ov.grid = 50;
    ov.paths = 123;
    ov.seed = 9;
    ov.out_dir = "elsewhere";
    const RunConfig rc = parse_config_text(kMinimal, Mode::Simulate, ov);
    EXPECT_EQ(rc.problem->grid.steps(), 50u);
    EXPECT_EQ(rc.paths, 123u);
    EXPECT_EQ(rc.seed, 9u);
    EXPECT_EQ(rc.out_dir, "elsewhere");
}

TEST(Config, ModelValidationErrorsCarryTheSource) {
    const Failure f = parse_failure(replace(kMinimal, R"("A": 0.0, "B": 1.0)", R"("A": 0.0, "E": -2.0, "B": 1.0)"));
    EXPECT_EQ(f.code, ErrorCode::ViolatedAssumption);
    EXPECT_NE(f.message.find("cfg.json: problem:"), std::string::npos) << f.message;
    const Failure g = parse_failure(replace(replace(kMinimal, R"("R": 1.0},
    "post")", R"("R": 0.0},
    "post")"), R"("G0": 1.0, "G1": 1.0)", R"("G0": 0.0, "G1": 0.0)"));
    EXPECT_EQ(g.code, ErrorCode::NeitherCase);
}

TEST(Config, SimulateNeedsInitialStateAndPaths) {
    EXPECT_EQ(parse_failure(replace(kMinimal, R"(,
  "x0": 1.0)", ""), Mode::Simulate).code, ErrorCode::SchemaError);
    EXPECT_NO_THROW(parse_config_text(replace(kMinimal, R"(,
  "x0": 1.0)", ""), Mode::Solve));
    const std::string few = replace(kMinimal, R"("x0": 1.0)", R"("x0": 1.0, "mc": {"paths": 1})");
    EXPECT_EQ(parse_failure(few, Mode::Simulate).code, ErrorCode::SchemaError);
}

TEST(Config, KnotsAffinePostAndThetaDependentG1) {
    const std::string text = R"({
  "grid": {"T": 2.0, "n": 4},
  "cone": {"kind": "nonneg", "dim": 1},
  "problem": {
    "pre": {"knots": [
      {"t": 0.0, "A": 0.0, "B": 1.0, "C": 0.0, "D": 1.0, "Q": 1.0, "R": 1.0, "lambda": 0.2},
      {"t": 2.0, "A": 1.0, "B": 1.0, "C": 0.0, "D": 1.0, "Q": 1.0, "R": 1.0, "lambda": 0.4}
    ]},
    "post": {
      "base": {"A": 0.1, "B": 1.0, "C": 0.0, "D": 1.0, "Q": 1.0, "R": 1.0},
      "slope": {"A": 0.2, "B": 0.0, "C": 0.0, "D": 0.0, "Q": 0.0, "R": 0.0}
    }
  },
  "terminal": {"G0": 1.0, "G1": {"base": 1.0, "slope": 0.5}}
})";
    const RunConfig rc = parse_config_text(text, Mode::Solve);
    const LQProblem& pb = *rc.problem;
    EXPECT_DOUBLE_EQ(pb.pre.nodes[1].A, 0.25);
    EXPECT_DOUBLE_EQ(pb.pre.nodes[2].lambda, 0.3);
    EXPECT_EQ(pb.post.mode, ThetaMode::Affine);
    EXPECT_NEAR(coefficient_at(pb, 1.5, Phase::post_default(0.5)).A, 0.2, 1e-15);
    EXPECT_DOUBLE_EQ(pb.terminal.G1[4], 2.0);
    EXPECT_EQ(pb.cone.kind, ConeKind::NonNegOrthant);
}

TEST(Config, VectorAndMatrixShapesAreChecked) {
    std::string text = replace(kMinimal, R"("dim": 1)", R"("dim": 2)");
    const Failure f = parse_failure(text);
    EXPECT_EQ(f.code, ErrorCode::SchemaError);
    EXPECT_NE(f.message.find("problem.pre.B"), std::string::npos) << f.message;

    text = R"({
  "grid": {"T": 1.0, "n": 10},
  "cone": {"kind": "full", "dim": 2},
  "brownian_dim": 1,
  "problem": {
    "pre": {"A": 0, "B": [1, 0.5], "C": [0], "D": [[1, 0]], "Q": 1, "R": [[1, 0], [0, 1]]},
    "post": {"A": 0, "B": [1, 0.5], "C": [0], "D": [[1, 0]], "Q": 1, "R": [[1, 0], [0, 1]]}
  },
  "terminal": {"G0": 1, "G1": 1}
})";
    const RunConfig rc = parse_config_text(text, Mode::Solve);
    EXPECT_EQ(rc.problem->control_dim(), 2);
    EXPECT_DOUBLE_EQ(rc.problem->pre.nodes[0].B[1], 0.5);
}

TEST(Config, FrontierSection) {
    const std::string text = R"({
  "grid": {"T": 1.0, "n": 20},
  "market": {"r": 0.03, "b0": 0.1, "sigma0": 0.25, "gamma": 0.2, "lambda": 0.1, "b1": 0.06, "sigma1": 0.35,
             "x0": 1.0, "short_selling": true},
  "frontier": {"z": [1.05, 1.1]}
})";
    const RunConfig rc = parse_config_text(text, Mode::Frontier);
    ASSERT_TRUE(rc.market);
    EXPECT_EQ(rc.market->cone.kind, ConeKind::FullSpace);
    EXPECT_EQ(rc.targets.size(), 2u);
    EXPECT_FALSE(rc.frontier_mc);
    EXPECT_EQ(parse_failure(text, Mode::Solve).code, ErrorCode::SchemaError);
    EXPECT_EQ(parse_failure(replace(text, R"("z": [1.05, 1.1])", R"("z": [])"), Mode::Frontier).code,
              ErrorCode::SchemaError);
}

TEST(Config, VerifySection) {
    const std::string text = replace(kMinimal, R"("x0": 1.0)",
                                     R"("x0": 1.0, "verify": {"battery": "quick", "instances": 3,
                                         "only": ["feasibility-lemma"]}, "mc": {"seed": 5})");
    const RunConfig rc = parse_config_text(text, Mode::Verify);
    EXPECT_EQ(rc.verify.instances, 3u);
    EXPECT_EQ(rc.verify.mc_paths, VerifyConfig::quick().mc_paths);
    EXPECT_EQ(rc.verify.seed, 5u);
    ASSERT_EQ(rc.verify.only.size(), 1u);
    EXPECT_TRUE(rc.verify.problem);
    EXPECT_EQ(parse_failure(replace(text, R"("quick")", R"("medium")"), Mode::Verify).code, ErrorCode::SchemaError);
}

TEST(Config, VerifyModeDefersModelValidation) {
    const std::string bad = replace(kMinimal, R"("A": 0.0, "B": 1.0)", R"("A": 0.0, "E": -2.0, "B": 1.0)");
    const RunConfig rc = parse_config_text(bad, Mode::Verify);
    EXPECT_TRUE(rc.verify.problem);
}

TEST(Config, MissingFileIsIOError) {
    try {
        parse_config("/nonexistent/config.json", Mode::Solve);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IOError);
    }
}

TEST(Config, ModeNames) {
    for (Mode m : {Mode::Solve, Mode::Simulate, Mode::Frontier, Mode::Verify})
        EXPECT_EQ(mode_from_string(to_string(m)), m);
    EXPECT_FALSE(mode_from_string("plot"));
}
