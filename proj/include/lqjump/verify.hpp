#pragma once

#include "lqjump/error.hpp"
#include "lqjump/hamiltonian.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/meanvariance.hpp"
#include "lqjump/model.hpp"
#include "lqjump/riccati.hpp"
#include "lqjump/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace lqjump {

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Unconstrained no-jump Riccati equation with the infimum written out:
///   dP/dt = -[2AP + Q + P|C|^2 - S'(R + P D'D)^{-1} S],  S = P(B + D'C),
/// integrated with its own 4-stage scheme at a tenth of the grid step.
/// Returns P at the grid nodes.
inline std::vector<double> classical_riccati_reference(const LQProblem& pb) {
    if (pb.cone.kind != ConeKind::FullSpace) fail(ErrorCode::InvalidArgument, "reference needs the full-space cone");
    const CoefficientSlice& s = pb.pre.nodes.front();
    for (const auto& node : pb.pre.nodes) {
        if (node.lambda != 0.0) fail(ErrorCode::InvalidArgument, "reference needs zero default intensity");
        const bool same = node.A == s.A && node.B == s.B && node.C == s.C && node.D == s.D && node.Q == s.Q &&
                          node.R == s.R;
        if (!same) fail(ErrorCode::InvalidArgument, "reference needs constant coefficients");
    }
    const Eigen::MatrixXd D = s.D, R = s.R;
    const Eigen::VectorXd B = s.B, C = s.C;
    const Eigen::MatrixXd DtD = D.transpose() * D;
    const Eigen::VectorXd BD = B + D.transpose() * C;
    auto rhs = [&](double P) {
        const Eigen::MatrixXd K = R + P * DtD;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
            fail(ErrorCode::NonCoercive, "R + P D'D is not positive definite in the reference flow");
        const Eigen::VectorXd S = P * BD;
        return 2.0 * s.A * P + s.Q + P * C.squaredNorm() - S.dot(ldlt.solve(S));
    };
    constexpr int kSub = 10;
    const std::size_t n = pb.grid.steps();
    const double h = pb.grid.step() / kSub;
    std::vector<double> out(n + 1);
    double P = pb.terminal.G0;
    out[n] = P;
    for (std::size_t i = n; i > 0; --i) {
        for (int j = 0; j < kSub; ++j) {
            const double a = rhs(P);
            const double b = rhs(P + 0.5 * h * a);
            const double c = rhs(P + 0.5 * h * b);
            const double d = rhs(P + h * c);
            P += h * (a + 2.0 * b + 2.0 * c + d) / 6.0;
        }
        out[i - 1] = P;
    }
    return out;
}

/// Maximizer of a unimodal function on [lo, inf): the bracket [lo, hi] is
/// doubled until the function turns down, then golden-section search.
inline double golden_section_maximize(const std::function<double(double)>& f, double lo, double hi,
                                      double tol = 1e-12) {
    if (!(hi > lo)) hi = lo + 1.0;
    for (int k = 0; k < 200 && f(hi) >= f(lo + 0.5 * (hi - lo)); ++k) hi = lo + 2.0 * (hi - lo);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct PolicyGridResult {
    std::vector<PiecewiseGainLaw::Gains> best_gains;
    MCEstimate best;
    std::size_t evaluated = 0;
};

/// Exhaustive Monte Carlo search over piecewise-constant proportional gains,
/// one candidate list per time interval, with common random numbers.
inline PolicyGridResult policy_grid_oracle(const LQProblem& pb, double x0,
                                           const std::vector<std::vector<PiecewiseGainLaw::Gains>>& candidates,
                                           const SimulationOptions& opt) {
    if (pb.control_dim() != 1) fail(ErrorCode::InvalidArgument, "policy grid oracle supports scalar controls only");
    if (candidates.empty() || candidates.size() > 4)
        fail(ErrorCode::InvalidArgument, "policy grid oracle takes 1 to 4 intervals");
    for (const auto& c : candidates) {
        if (c.empty() || c.size() > 11) fail(ErrorCode::InvalidArgument, "each interval takes 1 to 11 gain candidates");
        if (pb.cone.kind == ConeKind::NonNegOrthant)
            for (const auto& g : c)
                if (g.plus < 0.0 || g.minus < 0.0)
                    fail(ErrorCode::InvalidArgument, "gains must be nonnegative on the orthant");
    }
    PolicyGridResult out;
    out.best.mean = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(candidates.size(), 0);
    PiecewiseGainLaw law;
    law.steps = pb.grid.steps();
    law.gains.resize(candidates.size());
    for (;;) {
        for (std::size_t k = 0; k < idx.size(); ++k) law.gains[k] = candidates[k][idx[k]];
        const MCEstimate est = mc_cost(pb, law, x0, opt);
        ++out.evaluated;
        if (est.mean < out.best.mean) {
            out.best = est;
            out.best_gains = law.gains;
        }
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == candidates[k].size()) idx[k++] = 0;
        if (k == idx.size()) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct Check {
    std::string criterion;
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string note;
};

struct VerificationReport {
    std::vector<Check> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }

    /// Criteria in first-appearance order with their aggregated status.
    std::vector<std::pair<std::string, bool>> criteria() const {
        std::vector<std::pair<std::string, bool>> out;
        for (const auto& c : checks) {
            auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == c.criterion; });
            if (it == out.end())
                out.emplace_back(c.criterion, c.passed);
            else
                it->second = it->second && c.passed;
        }
        return out;
    }
};

/// Scale of the battery. The defaults are the full acceptance sizes.
struct VerifyConfig {
    std::uint64_t seed = 42;
    std::size_t threads = 0;
    std::size_t grid_steps = 1000;
    std::size_t instances = 25;
    std::size_t hamiltonian_inputs = 1000;
    std::size_t mc_paths = 100000;
    std::size_t perturbation_paths = 10000;
    std::size_t perturbations = 20;
    std::size_t oracle_steps = 40;
    std::size_t oracle_paths = 400;
    std::vector<std::string> only;        // criterion ids to run; empty runs all
    std::optional<LQProblem> problem;      // user problem checked before the battery

    static VerifyConfig quick() {
        VerifyConfig c;
        c.grid_steps = 200;
        c.instances = 5;
        c.hamiltonian_inputs = 100;
        c.mc_paths = 20000;
        c.perturbation_paths = 4000;
        c.perturbations = 5;
        c.oracle_steps = 20;
        c.oracle_paths = 200;
        return c;
    }
};

namespace battery {

inline const char* kNoJump = "unconstrained-no-jump-equivalence";
inline const char* kSeparable = "separable-ode-exactness";
inline const char* kSymmetry = "full-space-symmetry";
inline const char* kCone = "cone-monotonicity";
inline const char* kBounds = "solution-bounds";
inline const char* kHamiltonian = "hamiltonian-oracle";
inline const char* kValueMC = "value-monte-carlo";
inline const char* kDominance = "optimality-dominance";
inline const char* kFrontier = "mean-variance-frontier";
inline const char* kFeasibility = "feasibility-lemma";

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Random standard-case constant coefficients.
struct InstanceGen {
    std::mt19937_64 rng;
    explicit InstanceGen(std::uint64_t seed) : rng(seed) {}

    double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

    CoefficientSlice slice(int m, int k, bool jump) {
        CoefficientSlice s = CoefficientSlice::zero(m, k);
        s.A = uni(-1.0, 1.0);
        for (int i = 0; i < m; ++i) s.B[i] = uni(-1.0, 1.0);
        for (int i = 0; i < k; ++i) s.C[i] = uni(-0.5, 0.5);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < m; ++j) s.D(i, j) = uni(-1.0, 1.0);
        s.Q = uni(0.0, 1.0);
        Mat L(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) L(i, j) = uni(-0.5, 0.5);
        s.R = L * L.transpose() + uni(0.2, 1.0) * Mat::Identity(m, m);
        if (jump) {
            s.E = uni(-0.6, 0.6);
            for (int i = 0; i < m; ++i) s.F[i] = uni(-0.6, 0.6);
            s.lambda = uni(0.1, 1.5);
        }
        return s;
    }

    LQProblem problem(std::size_t steps, int m, bool jump, ConeKind cone) {
        const int k = 1 + static_cast<int>(rng() % 2);
        const double T = uni(0.5, 1.5);
        LQProblem pb;
        pb.grid = TimeGrid(T, steps);
        pb.cone = {cone, m};
        pb.brownian_dim = k;
        pb.pre = PreDefaultCoeffs::constant(pb.grid, slice(m, k, jump));
        pb.post = PostDefaultCoeffs::constant(pb.grid, slice(m, k, false));
        pb.terminal = TerminalWeights::constant(pb.grid, uni(0.5, 2.0), uni(0.5, 2.0));
        return pb;
    }
};

/// Instance used for the value/Monte Carlo and dominance checks: the
/// nonnegativity constraint binds on the negative half-line.
inline LQProblem value_instance(std::size_t steps) {
    LQProblem pb;
    pb.grid = TimeGrid(1.0, steps);
    pb.cone = ConeSpec::nonneg_orthant(1);
    pb.brownian_dim = 1;
    CoefficientSlice s = CoefficientSlice::zero(1, 1);
    s.A = 0.1;
    s.B[0] = -0.5;
    s.C[0] = 0.2;
    s.D(0, 0) = 0.4;
    s.E = -0.4;
    s.F[0] = 0.3;
    s.Q = 1.0;
    s.R(0, 0) = 0.5;
    s.lambda = 0.3;
    CoefficientSlice p = CoefficientSlice::zero(1, 1);
    p.A = 0.1;
    p.B[0] = -0.3;
    p.C[0] = 0.2;
    p.D(0, 0) = 0.5;
    p.Q = 1.0;
    p.R(0, 0) = 0.5;
    pb.pre = PreDefaultCoeffs::constant(pb.grid, s);
    pb.post = PostDefaultCoeffs::constant(pb.grid, p);
    pb.terminal = TerminalWeights::constant(pb.grid, 1.0, 2.0);
    return pb;
}

inline MarketSpec reference_market(std::size_t steps) {
    return MarketSpec::constant(TimeGrid(1.0, steps), 0.02, 0.08, 0.2, 0.3, 0.3, 0.05, 0.25, 1.0);
}

inline MarketSpec degenerate_market(std::size_t steps) {
    return MarketSpec::constant(TimeGrid(1.0, steps), 0.02, 0.02, 0.2, 0.0, 0.3, 0.02, 0.25, 1.0);
}

/// Collects the solution-bound margins of every assembled instance.
struct BoundsLog {
    double worst_margin = std::numeric_limits<double>::infinity();
    double singular_floor = std::numeric_limits<double>::infinity();
    std::size_t solved = 0;
    std::string worst_where;

    void add(const RiccatiSolution& s, const std::string& where) {
        ++solved;
        double m = std::numeric_limits<double>::infinity();
        if (s.classification.case_class == CaseClass::Standard)
            m = std::min(m, s.floor);
        else
            singular_floor = std::min(singular_floor, s.floor);
        for (std::size_t i = 0; i < s.P0.size(); ++i) {
            m = std::min(m, 2.0 * s.sup_P - std::abs(s.Zbar[i]));
            m = std::min(m, 2.0 * s.sup_N - std::abs(s.Lambdabar[i]));
            m = std::min(m, s.Zbar[i] + s.P0[i]);
            m = std::min(m, s.Lambdabar[i] + s.N0[i]);
        }
        if (m < worst_margin) {
            worst_margin = m;
            worst_where = where;
        }
    }
};

struct Context {
    const VerifyConfig& cfg;
    VerificationReport& report;
    BoundsLog bounds;
    SolverOptions solver;

    void add(const char* criterion, std::string name, bool ok, double measured, double tol, std::string note = {}) {
        report.checks.push_back({criterion, std::move(name), ok, measured, tol, std::move(note)});
    }

    RiccatiSolution solve(const LQProblem& pb, const std::string& where) {
        RiccatiSolution s = assemble(pb, solver);
        bounds.add(s, where);
        return s;
    }
};

inline void no_jump_equivalence(Context& cx) {
    InstanceGen gen(cx.cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::size_t k = 0; k < cx.cfg.instances; ++k) {
        const int m = 1 + static_cast<int>(k % 2);
        const LQProblem pb = gen.problem(cx.cfg.grid_steps, m, false, ConeKind::FullSpace);
        const RiccatiSolution s = cx.solve(pb, "no-jump instance " + std::to_string(k));
        const std::vector<double> ref = classical_riccati_reference(pb);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            worst = std::max(worst, std::abs(s.P0[i] - ref[i]) / std::abs(ref[i]));
            worst = std::max(worst, std::abs(s.N0[i] - ref[i]) / std::abs(ref[i]));
        }
    }
    const double secs = seconds_since(t0);
    cx.add(kNoJump, "max relative error vs classical reference", worst <= 1e-6, worst, 1e-6,
           std::to_string(cx.cfg.instances) + " instances, n=" + std::to_string(cx.cfg.grid_steps));
    cx.add(kNoJump, "runtime seconds", secs < 10.0, secs, 10.0);
}

inline void separable_exactness(Context& cx) {
    LQProblem pb;
    pb.grid = TimeGrid(1.0, cx.cfg.grid_steps);
    pb.cone = ConeSpec::full_space(1);
    pb.brownian_dim = 1;
    CoefficientSlice s = CoefficientSlice::zero(1, 1);
    s.B[0] = 1.0;
    s.D(0, 0) = 1.0;
    s.R(0, 0) = 1.0;
    pb.pre = PreDefaultCoeffs::constant(pb.grid, s);
    pb.post = PostDefaultCoeffs::constant(pb.grid, s);
    pb.terminal = TerminalWeights::constant(pb.grid, 1.0, 1.0);
    const RiccatiSolution sol = cx.solve(pb, "separable instance");
    double worst = 0.0;
    const double T = pb.grid.horizon();
    for (std::size_t i = 0; i < pb.grid.nodes(); ++i) {
        const double t = pb.grid.time(i);
        for (double P : {sol.P0[i], sol.N0[i], sol.P1.at(i, 0)})
            worst = std::max(worst, std::abs(std::log(P) - 1.0 / P - (t - T - 1.0)));
    }
    cx.add(kSeparable, "max residual of ln P - 1/P = t - T - 1", worst <= 1e-8, worst, 1e-8);
}

inline void symmetry_and_cone(Context& cx) {
    InstanceGen gen(cx.cfg.seed + 1);
    double sym = 0.0, gap = 0.0, mono = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cx.cfg.instances; ++k) {
        const int m = 1 + static_cast<int>(k % 2);
        LQProblem pb = gen.problem(cx.cfg.grid_steps, m, true, ConeKind::FullSpace);
        const RiccatiSolution full = cx.solve(pb, "jump instance " + std::to_string(k) + " (full space)");
        for (std::size_t i = 0; i < full.P0.size(); ++i) sym = std::max(sym, std::abs(full.P0[i] - full.N0[i]));
        for (std::size_t j = 0; j < full.P1.size(); ++j)
            sym = std::max(sym, std::abs(full.P1.data()[j] - full.N1.data()[j]));
        pb.cone = ConeSpec::nonneg_orthant(m);
        const RiccatiSolution orth = cx.solve(pb, "jump instance " + std::to_string(k) + " (orthant)");
        for (std::size_t i = 0; i < full.P0.size(); ++i) {
            mono = std::min(mono, orth.P0[i] - full.P0[i]);
            mono = std::min(mono, orth.N0[i] - full.N0[i]);
            gap = std::max({gap, orth.P0[i] - full.P0[i], orth.N0[i] - full.N0[i]});
        }
    }
    cx.add(kSymmetry, "max |P - N| with full-space cone", sym <= 1e-8, sym, 1e-8,
           std::to_string(cx.cfg.instances) + " instances with active default");
    cx.add(kCone, "min (orthant - full space) over P0, N0", mono >= -1e-10, mono, -1e-10,
           "largest gap " + std::to_string(gap));
}

/// Random admissible Hamiltonian input; certificates hold by construction.
inline HamiltonianInput random_input(InstanceGen& gen, int m, Side side, bool pre) {
    const int k = m + static_cast<int>(gen.rng() % 2);
    HamiltonianInput in;
    in.side = side;
    in.phase = pre ? Phase::pre_default() : Phase::post_default(0.0);
    in.slice = gen.slice(m, k, pre);
    in.cone = {gen.rng() % 2 ? ConeKind::FullSpace : ConeKind::NonNegOrthant, m};
    in.q = Vec::Zero(k);
    in.p = gen.uni(0.0, 4.0);
    if (gen.rng() % 5 == 0) {
        // Singular weight: curvature comes from p D'D only.
        in.slice.R = Mat::Zero(m, m);
        in.p = gen.uni(0.2, 4.0);
        for (int i = 0; i < m; ++i) in.slice.D(i, i) += (in.slice.D(i, i) >= 0.0 ? 1.0 : -1.0);
    }
    if (pre) {
        in.slice.E = gen.uni(-1.0, 1.0);
        in.lambda = gen.uni(0.0, 2.0);
        in.slice.lambda = in.lambda;
        if (side == Side::Plus) {
            in.l1 = gen.uni(-in.p, 4.0);
            in.l2 = gen.uni(0.0, 4.0);
        } else {
            in.l1 = gen.uni(0.0, 4.0);
            in.l2 = gen.uni(-in.p, 4.0);
        }
    }
    return in;
}

inline void hamiltonian_battery(Context& cx) {
    InstanceGen gen(cx.cfg.seed + 2);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t total = 0;
    for (int m = 1; m <= 2; ++m)
        for (bool pre : {false, true})
            for (Side side : {Side::Plus, Side::Minus}) {
                for (std::size_t n = 0; n < cx.cfg.hamiltonian_inputs; ++n) {
                    const HamiltonianInput in = random_input(gen, m, side, pre);
                    const MinResult sol = minimize(in);
                    double radius = oracle_search_radius(in);
                    if (!std::isfinite(radius)) radius = 10.0 * (1.0 + sol.argmin.norm());
                    radius = 1.5 * radius + 1e-3;
                    const MinResult orc = grid_oracle_min(in, radius, 2.0 * radius / 40.0);
                    worst = std::max(worst, rel_err(sol.value, orc.value));
                    ++total;
                }
            }
    const double secs = seconds_since(t0);
    cx.add(kHamiltonian, "max |solver - grid oracle| (relative to max(1, |value|))", worst <= 1e-6, worst, 1e-6,
           std::to_string(total) + " inputs over four Hamiltonians, m in {1, 2}");
    cx.add(kHamiltonian, "runtime seconds", secs < 60.0, secs, 60.0);
}

inline void value_monte_carlo(Context& cx) {
    const auto t0 = std::chrono::steady_clock::now();
    const LQProblem pb = value_instance(cx.cfg.grid_steps);
    const RiccatiSolution sol = cx.solve(pb, "value instance");
    const FeedbackPolicy pol = extract_policy(pb, sol, cx.solver);
    SimulationOptions opt{cx.cfg.mc_paths, cx.cfg.seed, cx.cfg.threads};
    for (double x0 : {1.0, -1.0}) {
        const MCEstimate est = mc_cost(pb, policy_law(pol), x0, opt);
        const double v = value_at(sol, 0.0, x0);
        const double z = std::abs(est.mean - v) / est.se;
        std::ostringstream note;
        note << "x0=" << x0 << " mc=" << est.mean << " se=" << est.se << " value=" << v;
        cx.add(kValueMC, x0 > 0 ? "|mc - P0/2| in standard errors" : "|mc - N0/2| in standard errors", z <= 3.0, z,
               3.0, note.str());
    }
    const double secs = seconds_since(t0);
    cx.add(kValueMC, "runtime seconds", secs < 120.0, secs, 120.0);
}

inline void optimality_dominance(Context& cx) {
    {
        const LQProblem pb = value_instance(cx.cfg.grid_steps);
        const RiccatiSolution sol = cx.solve(pb, "dominance instance");
        const FeedbackPolicy pol = extract_policy(pb, sol, cx.solver);
        const double v = value_at(sol, 0.0, 1.0);
        const SimulationOptions opt{cx.cfg.perturbation_paths, cx.cfg.seed + 7, cx.cfg.threads};
        double worst = std::numeric_limits<double>::infinity();
        std::string note;
        const std::size_t count = std::max<std::size_t>(cx.cfg.perturbations, 2);
        for (std::size_t k = 0; k < count; ++k) {
            const double factor = 0.25 + 1.75 * static_cast<double>(k) / static_cast<double>(count - 1);
            const MCEstimate est = mc_cost(pb, scaled_law(pol, factor), 1.0, opt);
            const double z = (est.mean - v) / est.se;
            if (z < worst) {
                worst = z;
                note = "factor " + std::to_string(factor);
            }
        }
        cx.add(kDominance, "min (perturbed cost - value) in standard errors", worst >= -3.0, worst, -3.0,
               std::to_string(count) + " scale factors in [0.25, 2]; worst at " + note);
    }
    {
        const LQProblem pb = value_instance(cx.cfg.oracle_steps);
        const RiccatiSolution sol = cx.solve(pb, "policy grid instance");
        const FeedbackPolicy pol = extract_policy(pb, sol, cx.solver);
        const double v = value_at(sol, 0.0, 1.0);
        constexpr std::size_t kIntervals = 4;
        const std::size_t steps = pb.grid.steps();
        std::vector<std::vector<PiecewiseGainLaw::Gains>> grid(kIntervals);
        for (std::size_t k = 0; k < kIntervals; ++k) {
            double gp = 0.0, gm = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = k * steps / kIntervals; i < (k + 1) * steps / kIntervals; ++i, ++cnt) {
                gp += pol.pre_plus[i][0];
                gm += pol.pre_minus[i][0];
            }
            gp /= static_cast<double>(cnt);
            gm /= static_cast<double>(cnt);
            for (int j = 0; j <= 10; ++j) grid[k].push_back({gp * 0.2 * j, gm * 0.2 * j});
        }
        const SimulationOptions opt{cx.cfg.oracle_paths, cx.cfg.seed + 11, cx.cfg.threads};
        const PolicyGridResult best = policy_grid_oracle(pb, 1.0, grid, opt);
        const double z = (best.best.mean - v) / best.best.se;
        std::ostringstream note;
        note << best.evaluated << " policies, best mc=" << best.best.mean << " se=" << best.best.se << " value=" << v;
        cx.add(kDominance, "best grid policy (cost - value) in standard errors", z >= -3.0, z, -3.0, note.str());
    }
}

inline void mean_variance_frontier(Context& cx) {
    const MarketSpec market = reference_market(cx.cfg.grid_steps);
    const FeasibilityResult feas = feasibility_check(market);
    cx.add(kFrontier, "feasibility integral", feas.status == Feasibility::Feasible, feas.integral, 1e-12);
    const NormalizedPair np = normalized_pair(market, cx.solver);
    cx.bounds.add(np.solution, "reference market");
    cx.add(kFrontier, "N0 exp(-2 int r) below 1", np.n_ratio() < 1.0, np.n_ratio(), 1.0);
    const double riskless = market.x0 * np.growth;
    const SimulationOptions opt{cx.cfg.mc_paths, cx.cfg.seed + 13, cx.cfg.threads};
    for (double ratio : {1.0, 1.1, 1.3}) {
        const double z = ratio * riskless;
        const FrontierPoint pt = frontier_point(np, market.x0, z);
        const double golden = golden_section_maximize([&](double eta) { return dual_value(np, market.x0, eta, z); },
                                                      riskless, riskless + 1.0);
        const std::string tag = "z/riskless=" + std::to_string(ratio).substr(0, 3);
        const double de = rel_err(golden, pt.eta);
        cx.add(kFrontier, tag + ": |closed-form eta - golden section| relative", de <= 1e-6, de, 1e-6,
               "eta*=" + std::to_string(pt.eta));
        const FrontierCheck mc = simulate_frontier_point(market, np, pt, opt);
        const double zm = mc.moments.mean_se > 0 ? std::abs(mc.moments.mean - z) / mc.moments.mean_se
                                                 : (mc.moments.mean == z ? 0.0 : HUGE_VAL);
        cx.add(kFrontier, tag + ": |E[X_T] - z| in standard errors", zm <= 3.0, zm, 3.0,
               "mean=" + std::to_string(mc.moments.mean));
        const double zv = mc.moments.variance_se > 0
                              ? std::abs(mc.moments.variance - pt.variance) / mc.moments.variance_se
                              : (mc.moments.variance == pt.variance ? 0.0 : HUGE_VAL);
        cx.add(kFrontier, tag + ": |Var(X_T) - J*| in standard errors", zv <= 3.0, zv, 3.0,
               "var=" + std::to_string(mc.moments.variance) + " J*=" + std::to_string(pt.variance));
        if (ratio == 1.0) {
            cx.add(kFrontier, "riskless target: J* exactly 0", pt.variance == 0.0, pt.variance, 0.0);
            cx.add(kFrontier, "riskless target: every simulated control exactly 0", mc.zero_control,
                   mc.zero_control ? 0.0 : 1.0, 0.0);
        }
    }
}

inline void feasibility_lemma(Context& cx) {
    const MarketSpec market = degenerate_market(cx.cfg.grid_steps);
    const FeasibilityResult feas = feasibility_check(market);
    cx.add(kFeasibility, "degenerate market reported infeasible", feas.status == Feasibility::Infeasible,
           feas.integral, 1e-12);
    const NormalizedPair np = normalized_pair(market, cx.solver);
    cx.bounds.add(np.solution, "degenerate market");
    const double dev = std::abs(np.n_ratio() - 1.0);
    cx.add(kFeasibility, "|N0 exp(-2 int r) - 1|", dev <= 1e-8, dev, 1e-8);
    bool refused = false;
    std::string what = "frontier was built";
    try {
        (void)frontier(market, {market.x0 * np.growth * 1.1}, cx.solver);
    } catch (const Error& e) {
        refused = e.code() == ErrorCode::DegenerateDual;
        what = e.what();
    }
    cx.add(kFeasibility, "frontier refuses with DegenerateDual", refused, refused ? 0.0 : 1.0, 0.0, what);
}

}  // namespace battery

/// Runs the acceptance battery and, if a problem is supplied, checks that it
/// validates, solves and satisfies every solution bound. Errors inside a
/// criterion are reported as failed checks carrying the error code.
inline VerificationReport run_suite(const VerifyConfig& cfg) {
    using namespace battery;
    VerificationReport report;
    Context cx{cfg, report, {}, SolverOptions{cfg.threads}};

    if (cfg.problem) {
        try {
            const RiccatiSolution s = cx.solve(*cfg.problem, "configured problem");
            cx.add("configured-problem", "validates and solves", true, s.floor, 0.0,
                   std::string(to_string(s.classification.case_class)) + " case");
        } catch (const Error& e) {
            cx.add("configured-problem", "validates and solves", false, exit_code(e.code()), 0.0,
                   e.what());
        }
    }

    const std::vector<std::pair<const char*, void (*)(Context&)>> steps{
        {kNoJump, no_jump_equivalence},       {kSeparable, separable_exactness},
        {kSymmetry, symmetry_and_cone},       {kHamiltonian, hamiltonian_battery},
        {kValueMC, value_monte_carlo},        {kDominance, optimality_dominance},
        {kFrontier, mean_variance_frontier},  {kFeasibility, feasibility_lemma}};
    auto wanted = [&](const char* id) {
        if (cfg.only.empty()) return true;
        for (const auto& o : cfg.only)
            if (o == id || (o == kCone && std::string(id) == kSymmetry)) return true;
        return false;
    };
    for (const auto& [id, fn] : steps) {
        if (!wanted(id)) continue;
        try {
            fn(cx);
        } catch (const Error& e) {
            cx.add(id, "completed without error", false, exit_code(e.code()), 0.0,
                   e.what());
        }
    }
    if (cfg.only.empty() || std::find(cfg.only.begin(), cfg.only.end(), kBounds) != cfg.only.end()) {
        const auto& b = cx.bounds;
        cx.add(kBounds, "worst bound margin over solved instances", b.solved > 0 && b.worst_margin >= -1e-9,
               b.worst_margin, -1e-9, std::to_string(b.solved) + " solutions; worst at " + b.worst_where);
        if (std::isfinite(b.singular_floor))
            cx.add(kBounds, "singular-case positivity floor c", b.singular_floor > 0.0, b.singular_floor, 0.0);
    }
    return report;
}

}  // namespace lqjump
