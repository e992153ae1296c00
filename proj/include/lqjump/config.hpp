#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/meanvariance.hpp"
#include "lqjump/model.hpp"
#include "lqjump/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lqjump {

enum class Mode { Solve, Simulate, Frontier, Verify };

inline const char* to_string(Mode m) noexcept {
    switch (m) {
        case Mode::Solve: return "solve";
        case Mode::Simulate: return "simulate";
        case Mode::Frontier: return "frontier";
        case Mode::Verify: return "verify";
    }
    return "?";
}

inline std::optional<Mode> mode_from_string(const std::string& s) {
    if (s == "solve") return Mode::Solve;
    if (s == "simulate") return Mode::Simulate;
    if (s == "frontier") return Mode::Frontier;
    if (s == "verify") return Mode::Verify;
    return std::nullopt;
}

/// Command-line values that replace the corresponding config keys.
struct Overrides {
    std::optional<std::string> out_dir;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> grid;
};

struct RunConfig {
    Mode mode = Mode::Solve;
    std::string source;
    double horizon = 1.0;
    std::size_t steps = 1000;
    std::optional<LQProblem> problem;
    std::optional<MarketSpec> market;
    double x0 = 1.0;
    std::size_t paths = 100000;
    std::uint64_t seed = 42;
    std::size_t dump_paths = 0;
    bool frontier_mc = false;
    std::string out_dir = "out";
    std::vector<double> targets;
    VerifyConfig verify;
    std::size_t threads = 0;
};

namespace config_detail {

using json = nlohmann::json;

/// A JSON value together with its dotted key path, for error messages.
struct Node {
    const json& v;
    std::string path;

    [[noreturn]] void schema(const std::string& msg) const {
        fail(ErrorCode::SchemaError, (path.empty() ? std::string("<root>") : path) + ": " + msg);
    }

    std::string child_path(const std::string& key) const { return path.empty() ? key : path + "." + key; }

    bool has(const std::string& key) const { return v.is_object() && v.contains(key); }

    Node at(const std::string& key) const {
        if (!v.is_object()) schema("expected an object");
        if (!v.contains(key)) fail(ErrorCode::SchemaError, "missing key " + child_path(key));
        return {v.at(key), child_path(key)};
    }

    Node index(std::size_t i) const { return {v.at(i), path + "[" + std::to_string(i) + "]"}; }

    void only(std::initializer_list<const char*> keys) const {
        if (!v.is_object()) schema("expected an object");
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = v.begin(); it != v.end(); ++it)
            if (!allowed.count(it.key())) fail(ErrorCode::SchemaError, "unknown key " + child_path(it.key()));
    }

    double number() const {
        if (!v.is_number()) schema("expected a number");
        return v.get<double>();
    }

    std::size_t count() const {
        if (!v.is_number_integer() && !v.is_number_unsigned()) schema("expected a nonnegative integer");
        if (v.is_number_integer() && v.get<std::int64_t>() < 0) schema("expected a nonnegative integer");
        return v.get<std::size_t>();
    }

    std::string text() const {
        if (!v.is_string()) schema("expected a string");
        return v.get<std::string>();
    }

    bool boolean() const {
        if (!v.is_boolean()) schema("expected true or false");
        return v.get<bool>();
    }

    /// A vector of the given length; a bare number is accepted for length 1.
    Vec vec(int len) const {
        if (v.is_number() && len == 1) return Vec::Constant(1, v.get<double>());
        if (!v.is_array() || static_cast<int>(v.size()) != len)
            schema("expected an array of " + std::to_string(len) + " numbers");
        Vec out(len);
        for (int i = 0; i < len; ++i) out[i] = index(static_cast<std::size_t>(i)).number();
        return out;
    }

    /// A rows x cols matrix as nested arrays; a bare number for 1 x 1.
    Mat mat(int rows, int cols) const {
        if (v.is_number() && rows == 1 && cols == 1) return Mat::Constant(1, 1, v.get<double>());
        if (!v.is_array() || static_cast<int>(v.size()) != rows)
            schema("expected " + std::to_string(rows) + " rows of " + std::to_string(cols) + " numbers");
        Mat out(rows, cols);
        for (int i = 0; i < rows; ++i) out.row(i) = index(static_cast<std::size_t>(i)).vec(cols).transpose();
        return out;
    }
};

inline CoefficientSlice parse_slice(const Node& n, int m, int k, bool jump_fields) {
    if (jump_fields)
        n.only({"A", "B", "C", "D", "E", "F", "Q", "R", "lambda", "t"});
    else
        n.only({"A", "B", "C", "D", "Q", "R", "t"});
    CoefficientSlice s = CoefficientSlice::zero(m, k);
    s.A = n.at("A").number();
    s.B = n.at("B").vec(m);
    s.C = n.at("C").vec(k);
    s.D = n.at("D").mat(k, m);
    s.Q = n.at("Q").number();
    s.R = n.at("R").mat(m, m);
    if (jump_fields) {
        if (n.has("E")) s.E = n.at("E").number();
        if (n.has("F")) s.F = n.at("F").vec(m);
        if (n.has("lambda")) s.lambda = n.at("lambda").number();
    }
    return s;
}

/// A slice constant in time, or {"knots": [slice with "t", ...]} linearly
/// interpolated at the grid nodes (held flat outside the knot range).
inline std::vector<CoefficientSlice> parse_timed(const Node& n, const TimeGrid& grid, int m, int k, bool jump) {
    if (!n.has("knots")) return std::vector<CoefficientSlice>(grid.nodes(), parse_slice(n, m, k, jump));
    n.only({"knots"});
    const Node list = n.at("knots");
    if (!list.v.is_array() || list.v.empty()) list.schema("expected a nonempty array of slices");
    std::vector<double> ts;
    std::vector<CoefficientSlice> ks;
    for (std::size_t i = 0; i < list.v.size(); ++i) {
        const Node kn = list.index(i);
        const double t = kn.at("t").number();
        if (!ts.empty() && !(t > ts.back())) kn.schema("knot times must increase");
        ts.push_back(t);
        ks.push_back(parse_slice(kn, m, k, jump));
    }
    std::vector<CoefficientSlice> out(grid.nodes());
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const double t = grid.time(i);
        if (t <= ts.front()) {
            out[i] = ks.front();
        } else if (t >= ts.back()) {
            out[i] = ks.back();
        } else {
            std::size_t j = 1;
            while (ts[j] < t) ++j;
            out[i] = lerp(ks[j - 1], ks[j], (t - ts[j - 1]) / (ts[j] - ts[j - 1]));
        }
    }
    return out;
}

inline ConeSpec parse_cone(const Node& n) {
    n.only({"kind", "dim"});
    const std::string kind = n.at("kind").text();
    const int dim = static_cast<int>(n.at("dim").count());
    if (dim < 1 || dim > kMaxDim) n.at("dim").schema("dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
    if (kind == "full") return ConeSpec::full_space(dim);
    if (kind == "nonneg") return ConeSpec::nonneg_orthant(dim);
    n.at("kind").schema("expected \"full\" or \"nonneg\"");
}

inline LQProblem parse_problem(const Node& root, const TimeGrid& grid) {
    LQProblem pb;
    pb.grid = grid;
    pb.cone = parse_cone(root.at("cone"));
    pb.brownian_dim = root.has("brownian_dim") ? static_cast<int>(root.at("brownian_dim").count()) : 1;
    if (pb.brownian_dim < 1 || pb.brownian_dim > kMaxDim) root.at("brownian_dim").schema("dimension out of range");
    const int m = pb.cone.dim, k = pb.brownian_dim;

    const Node prob = root.at("problem");
    prob.only({"pre", "post"});
    pb.pre.nodes = parse_timed(prob.at("pre"), grid, m, k, true);
    const Node post = prob.at("post");
    if (post.has("base") || post.has("slope")) {
        post.only({"base", "slope"});
        pb.post.mode = ThetaMode::Affine;
        pb.post.base = parse_timed(post.at("base"), grid, m, k, false);
        pb.post.slope = parse_timed(post.at("slope"), grid, m, k, false);
    } else {
        pb.post.base = parse_timed(post, grid, m, k, false);
    }

    const Node term = root.at("terminal");
    term.only({"G0", "G1"});
    pb.terminal.G0 = term.at("G0").number();
    const Node g1 = term.at("G1");
    if (g1.v.is_object()) {
        g1.only({"base", "slope"});
        const double b = g1.at("base").number(), s = g1.at("slope").number();
        pb.terminal.G1.resize(grid.nodes());
        for (std::size_t j = 0; j < grid.nodes(); ++j) pb.terminal.G1[j] = b + s * grid.time(j);
    } else {
        pb.terminal.G1.assign(grid.nodes(), g1.number());
    }
    return pb;
}

inline MarketSpec parse_market(const Node& n, const TimeGrid& grid) {
    n.only({"r", "b0", "sigma0", "gamma", "lambda", "b1", "sigma1", "b1_slope", "sigma1_slope", "x0",
            "short_selling", "brownian_dim"});
    const int k = n.has("brownian_dim") ? static_cast<int>(n.at("brownian_dim").count()) : 1;
    if (k < 1 || k > kMaxDim) n.at("brownian_dim").schema("dimension out of range");
    MarketSpec m = MarketSpec::constant(grid, n.at("r").number(), n.at("b0").number(), 1.0, n.at("gamma").number(),
                                        n.at("lambda").number(), n.at("b1").number(), 1.0, n.at("x0").number());
    m.brownian_dim = k;
    m.sigma0.assign(grid.nodes(), n.at("sigma0").vec(k));
    m.sigma1.assign(grid.nodes(), n.at("sigma1").vec(k));
    m.sigma1_slope.assign(grid.nodes(), n.has("sigma1_slope") ? n.at("sigma1_slope").vec(k) : Vec::Zero(k));
    if (n.has("b1_slope")) m.b1_slope.assign(grid.nodes(), n.at("b1_slope").number());
    const bool shorting = n.has("short_selling") && n.at("short_selling").boolean();
    m.cone = shorting ? ConeSpec::full_space(1) : ConeSpec::nonneg_orthant(1);
    return m;
}

inline VerifyConfig parse_verify(const Node& n) {
    n.only({"battery", "instances", "hamiltonian_inputs", "mc_paths", "perturbation_paths", "perturbations",
            "oracle_steps", "oracle_paths", "only"});
    VerifyConfig v;
    if (n.has("battery")) {
        const std::string b = n.at("battery").text();
        if (b == "quick")
            v = VerifyConfig::quick();
        else if (b != "full")
            n.at("battery").schema("expected \"full\" or \"quick\"");
    }
    if (n.has("instances")) v.instances = n.at("instances").count();
    if (n.has("hamiltonian_inputs")) v.hamiltonian_inputs = n.at("hamiltonian_inputs").count();
    if (n.has("mc_paths")) v.mc_paths = n.at("mc_paths").count();
    if (n.has("perturbation_paths")) v.perturbation_paths = n.at("perturbation_paths").count();
    if (n.has("perturbations")) v.perturbations = n.at("perturbations").count();
    if (n.has("oracle_steps")) v.oracle_steps = n.at("oracle_steps").count();
    if (n.has("oracle_paths")) v.oracle_paths = n.at("oracle_paths").count();
    if (n.has("only")) {
        const Node list = n.at("only");
        if (!list.v.is_array()) list.schema("expected an array of criterion names");
        for (std::size_t i = 0; i < list.v.size(); ++i) v.only.push_back(list.index(i).text());
    }
    return v;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace config_detail

/// Parses and validates a run configuration from JSON text. `source` names the
/// file in error messages.
inline RunConfig parse_config_text(const std::string& text, Mode mode, const Overrides& ov = {},
                                   const std::string& source = "<config>") {
    using namespace config_detail;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        std::ostringstream os;
        os << source << ":" << line << ":" << col << ": malformed JSON (" << e.what() << ")";
        fail(ErrorCode::ParseError, os.str());
    }
    const Node root{doc, ""};
    root.only({"grid", "cone", "brownian_dim", "problem", "terminal", "x0", "mc", "output", "market", "frontier",
               "verify", "threads"});

    RunConfig rc;
    rc.mode = mode;
    rc.source = source;
    try {
        const Node grid = root.at("grid");
        grid.only({"T", "n"});
        rc.horizon = grid.at("T").number();
        if (grid.has("n")) rc.steps = grid.at("n").count();
        if (ov.grid) rc.steps = *ov.grid;
        const TimeGrid tg(rc.horizon, rc.steps);

        if (root.has("threads")) rc.threads = root.at("threads").count();
        if (root.has("output")) {
            const Node out = root.at("output");
            out.only({"dir"});
            rc.out_dir = out.at("dir").text();
        }
        if (ov.out_dir) rc.out_dir = *ov.out_dir;
        if (root.has("mc")) {
            const Node mc = root.at("mc");
            mc.only({"paths", "seed", "dump_paths"});
            if (mc.has("paths")) rc.paths = mc.at("paths").count();
            if (mc.has("seed")) rc.seed = mc.at("seed").count();
            if (mc.has("dump_paths")) rc.dump_paths = mc.at("dump_paths").count();
            rc.frontier_mc = true;
        }
        if (ov.paths) rc.paths = *ov.paths;
        if (ov.seed) rc.seed = *ov.seed;
        if (root.has("x0")) rc.x0 = root.at("x0").number();

        switch (mode) {
            case Mode::Solve:
            case Mode::Simulate:
                if (root.has("market")) root.at("market").schema("not used in mode " + std::string(to_string(mode)));
                rc.problem = parse_problem(root, tg);
                if (mode == Mode::Simulate) {
                    root.at("x0");
                    if (rc.paths < 2) fail(ErrorCode::SchemaError, "mc.paths must be at least 2");
                }
                break;
            case Mode::Frontier: {
                if (root.has("problem")) root.at("problem").schema("not used in mode frontier");
                rc.market = parse_market(root.at("market"), tg);
                const Node fr = root.at("frontier");
                fr.only({"z"});
                const Node z = fr.at("z");
                if (!z.v.is_array() || z.v.empty()) z.schema("expected a nonempty array of targets");
                for (std::size_t i = 0; i < z.v.size(); ++i) rc.targets.push_back(z.index(i).number());
                if (rc.frontier_mc && rc.paths < 2) fail(ErrorCode::SchemaError, "mc.paths must be at least 2");
                break;
            }
            case Mode::Verify:
                rc.verify = root.has("verify") ? parse_verify(root.at("verify")) : VerifyConfig{};
                rc.verify.grid_steps = rc.steps;
                rc.verify.seed = rc.seed;
                rc.verify.threads = rc.threads;
                if (ov.paths) rc.verify.mc_paths = *ov.paths;
                if (root.has("problem")) rc.verify.problem = parse_problem(root, tg);
                break;
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::SchemaError || e.code() == ErrorCode::InvalidArgument)
            fail(e.code(), source + ": " + e.message());
        throw;
    }

    // Model-level validation is reported against the file; verify mode
    // surfaces it as a failed check instead.
    if (rc.problem) {
        try {
            validate_problem(*rc.problem);
        } catch (const Error& e) {
            fail(e.code(), source + ": problem: " + e.message());
        }
    }
    if (rc.market) {
        try {
            validate_market(*rc.market);
        } catch (const Error& e) {
            fail(e.code(), source + ": market: " + e.message());
        }
    }
    return rc;
}

inline RunConfig parse_config(const std::string& path, Mode mode, const Overrides& ov = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IOError, "cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), mode, ov, path);
}

}  // namespace lqjump
