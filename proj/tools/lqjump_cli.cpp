#include "lqjump/config.hpp"
#include "lqjump/lqjump.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lqjump;

namespace {

std::vector<std::string> gain_columns(const char* prefix, int m) {
    std::vector<std::string> cols;
    for (int d = 1; d <= m; ++d) cols.push_back(std::string(prefix) + "_" + std::to_string(d));
    return cols;
}

int run_solve(const RunConfig& rc) {
    const LQProblem& pb = *rc.problem;
    const SolverOptions opt{rc.threads};
    const RiccatiSolution sol = assemble(pb, opt);
    const FeedbackPolicy pol = extract_policy(pb, sol, opt);

    csv::Writer ric({"t", "P0", "N0", "diagP", "diagN", "Zbar", "Lambdabar"});
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i)
        ric.numbers({pb.grid.time(i), sol.P0[i], sol.N0[i], sol.diagP[i], sol.diagN[i], sol.Zbar[i], sol.Lambdabar[i]});
    ric.save(fs::path(rc.out_dir) / "riccati.csv");

    const int m = pb.control_dim();
    std::vector<std::string> header{"t"};
    for (const auto& c : gain_columns("xi0_plus", m)) header.push_back(c);
    for (const auto& c : gain_columns("xi0_minus", m)) header.push_back(c);
    csv::Writer policy(header);
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i) {
        std::vector<double> row{pb.grid.time(i)};
        for (int d = 0; d < m; ++d) row.push_back(pol.pre_plus[i][d]);
        for (int d = 0; d < m; ++d) row.push_back(pol.pre_minus[i][d]);
        policy.numbers(row);
    }
    policy.save(fs::path(rc.out_dir) / "policy.csv");
    std::cerr << to_string(sol.classification.case_class) << " case; P0(0)=" << csv::format(sol.P0.front())
              << " N0(0)=" << csv::format(sol.N0.front()) << "\n";
    return 0;
}

int run_simulate(const RunConfig& rc) {
    const LQProblem& pb = *rc.problem;
    const SolverOptions opt{rc.threads};
    const RiccatiSolution sol = assemble(pb, opt);
    const FeedbackPolicy pol = extract_policy(pb, sol, opt);
    const MCEstimate est = mc_cost(pb, policy_law(pol), rc.x0, SimulationOptions{rc.paths, rc.seed, rc.threads});
    const double v = value_at(sol, 0.0, rc.x0);
    const double z = est.se > 0.0 ? (est.mean - v) / est.se : (est.mean == v ? 0.0 : NAN);

    csv::Writer mc({"estimate", "SE", "paths", "seed", "value_at", "z_score"});
    mc.row({csv::format(est.mean), csv::format(est.se), std::to_string(est.paths), std::to_string(est.seed),
            csv::format(v), csv::format(z)});
    mc.save(fs::path(rc.out_dir) / "mc.csv");

    if (rc.dump_paths > 0) {
        const int m = pb.control_dim();
        std::vector<std::string> header{"path", "node", "t", "defaulted", "X"};
        for (const auto& c : gain_columns("u", m)) header.push_back(c);
        csv::Writer paths(header);
        const auto recs = simulate_paths(pb, policy_law(pol), rc.x0, std::min(rc.dump_paths, rc.paths), rc.seed,
                                         rc.threads);
        for (std::size_t p = 0; p < recs.size(); ++p) {
            const PathRecord& r = recs[p];
            for (std::size_t i = 0; i < r.X.size(); ++i) {
                const bool post = r.jump_node && i >= *r.jump_node;
                std::vector<std::string> row{std::to_string(p), std::to_string(i), csv::format(pb.grid.time(i)),
                                             post ? "1" : "0", csv::format(r.X[i])};
                for (int d = 0; d < m; ++d) row.push_back(i < r.u.size() ? csv::format(r.u[i][d]) : "");
                paths.row(row);
            }
        }
        paths.save(fs::path(rc.out_dir) / "paths.csv");
    }
    std::cerr << "cost " << csv::format(est.mean) << " +- " << csv::format(est.se) << " (value "
              << csv::format(v) << ")\n";
    return 0;
}

int run_frontier(const RunConfig& rc) {
    const MarketSpec& market = *rc.market;
    const SolverOptions opt{rc.threads};
    const FeasibilityResult feas = feasibility_check(market);
    const NormalizedPair np = normalized_pair(market, opt);
    for (double z : rc.targets) check_target(np, market.x0, z);
    if (feas.status == Feasibility::Infeasible)
        fail(ErrorCode::DegenerateDual,
             "market is infeasible (expected positive excess return " + csv::format(feas.integral) + ")");

    std::vector<std::string> header{"z", "eta_star", "J_star", "N0", "P0"};
    if (rc.frontier_mc)
        for (const char* c : {"mc_mean", "mc_mean_se", "mc_variance", "mc_variance_se"}) header.push_back(c);
    csv::Writer out(header);
    for (double z : rc.targets) {
        const FrontierPoint pt = frontier_point(np, market.x0, z);
        std::vector<double> row{pt.z, pt.eta, pt.variance, pt.N0, pt.P0};
        if (rc.frontier_mc) {
            const FrontierCheck mc = simulate_frontier_point(market, np, pt, SimulationOptions{rc.paths, rc.seed, rc.threads});
            for (double v : {mc.moments.mean, mc.moments.mean_se, mc.moments.variance, mc.moments.variance_se})
                row.push_back(v);
        }
        out.numbers(row);
    }
    out.save(fs::path(rc.out_dir) / "frontier.csv");
    std::cerr << "N0 exp(-2 int r) = " << csv::format(np.n_ratio()) << "\n";
    return 0;
}

int run_verify(const RunConfig& rc) {
    const VerificationReport report = run_suite(rc.verify);
    csv::Writer out({"criterion", "check", "status", "measured", "tolerance", "note"});
    for (const Check& c : report.checks)
        out.row({c.criterion, c.name, c.passed ? "PASS" : "FAIL", csv::format(c.measured), csv::format(c.tolerance),
                 c.note});
    out.save(fs::path(rc.out_dir) / "report.csv");
    for (const auto& [name, ok] : report.criteria()) std::cerr << (ok ? "PASS " : "FAIL ") << name << "\n";
    return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cone-constrained LQ control with a default jump: Riccati solver, Monte Carlo and frontier"};
    std::string mode_name, config_path;
    Overrides ov;
    std::string out_dir;
    std::size_t paths = 0, grid = 0;
    std::uint64_t seed = 0;
    app.add_option("mode", mode_name, "solve | simulate | frontier | verify")->required();
    app.add_option("config", config_path, "JSON configuration file")->required();
    auto* o_out = app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    auto* o_paths = app.add_option("--paths", paths, "Monte Carlo paths (overrides mc.paths)");
    auto* o_seed = app.add_option("--seed", seed, "random seed (overrides mc.seed)");
    auto* o_grid = app.add_option("--grid", grid, "grid steps (overrides grid.n)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const auto mode = mode_from_string(mode_name);
    if (!mode) {
        std::cerr << "unknown mode '" << mode_name << "' (expected solve, simulate, frontier or verify)\n";
        return 2;
    }
    if (*o_out) ov.out_dir = out_dir;
    if (*o_paths) ov.paths = paths;
    if (*o_seed) ov.seed = seed;
    if (*o_grid) ov.grid = grid;

    try {
        const RunConfig rc = parse_config(config_path, *mode, ov);
        switch (rc.mode) {
            case Mode::Solve: return run_solve(rc);
            case Mode::Simulate: return run_simulate(rc);
            case Mode::Frontier: return run_frontier(rc);
            case Mode::Verify: return run_verify(rc);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(ErrorCode::IOError);
    }
    return 0;
}
