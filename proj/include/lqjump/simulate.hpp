#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/model.hpp"
#include "lqjump/parallel.hpp"
#include "lqjump/riccati.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace lqjump {

/// Anything that maps (grid node, default node if defaulted, state) to a control.
template <typename L>
concept ControlLaw = requires(const L& law, std::size_t i, std::optional<std::size_t> j, double x) {
    { law(i, j, x) } -> std::convertible_to<Vec>;
};

struct PathRecord {
    std::optional<double> tau;             // default time if within the horizon
    std::optional<std::size_t> jump_node;  // grid node where the jump was applied
    std::vector<double> X;                 // state at every grid node
    std::vector<Vec> u;                    // control on every step [t_i, t_{i+1})
    double cost = 0.0;
    double pre_jump_state = 0.0;
    double jump_size = 0.0;
    Vec jump_control;
};

struct MCEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
};

struct TerminalMoments {
    double mean = 0.0;
    double mean_se = 0.0;
    double variance = 0.0;
    double variance_se = 0.0;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
};

struct SimulationOptions {
    std::size_t paths = 100000;
    std::uint64_t seed = 42;
    std::size_t threads = 0;
};

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Random stream of one path; a pure function of (seed, path index).
inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(mix64(mix64(seed) ^ index));
}

/// Trapezoid-accumulated intensity at every node.
inline std::vector<double> cumulative_intensity(const std::vector<double>& lambda, const TimeGrid& grid) {
    if (lambda.size() != grid.nodes()) fail(ErrorCode::InvalidArgument, "intensity must have one value per grid node");
    std::vector<double> cum(grid.nodes(), 0.0);
    for (std::size_t i = 1; i < grid.nodes(); ++i) {
        if (!(lambda[i] >= 0.0) || !(lambda[i - 1] >= 0.0))
            fail(ErrorCode::ViolatedAssumption, "negative intensity at grid node " + std::to_string(i));
        cum[i] = cum[i - 1] + 0.5 * grid.step() * (lambda[i - 1] + lambda[i]);
    }
    return cum;
}

/// First passage of the accumulated intensity over the level theta.
inline std::optional<double> first_passage(const std::vector<double>& cum, const TimeGrid& grid, double level) {
    if (level <= 0.0) return 0.0;
    if (cum.back() < level) return std::nullopt;
    std::size_t i = 1;
    while (cum[i] < level) ++i;
    const double w = (level - cum[i - 1]) / (cum[i] - cum[i - 1]);
    return grid.time(i - 1) + w * grid.step();
}

/// Draws Theta ~ Exp(1) and returns the default time, or nullopt if the
/// accumulated intensity stays below Theta on the horizon.
template <typename Rng>
std::optional<double> sample_default(const std::vector<double>& lambda, const TimeGrid& grid, Rng& rng) {
    const std::vector<double> cum = cumulative_intensity(lambda, grid);
    std::exponential_distribution<double> exp1(1.0);
    return first_passage(cum, grid, exp1(rng));
}

inline std::vector<double> pre_default_intensity(const LQProblem& pb) {
    std::vector<double> lam(pb.grid.nodes());
    for (std::size_t i = 0; i < lam.size(); ++i) lam[i] = pb.pre.nodes[i].lambda;
    return lam;
}

namespace detail {

struct PathSummary {
    double cost = 0.0;
    double terminal = 0.0;
};

[[noreturn]] inline void non_finite(std::size_t step, double x) {
    std::ostringstream os;
    os << "state became " << x << " at step " << step;
    fail(ErrorCode::NonFinite, os.str());
}

/// Euler scheme for one path. Theta is drawn first and k normals per step are
/// always consumed, so two policies with the same (seed, index) share every
/// random number.
template <ControlLaw Law>
PathSummary run_path(const LQProblem& pb, const std::vector<double>& cum, const Law& law, double x0,
                     std::uint64_t seed, std::uint64_t index, PathRecord* rec) {
    const TimeGrid& grid = pb.grid;
    const std::size_t n = grid.steps();
    const double dt = grid.step();
    const double sqdt = std::sqrt(dt);
    const int k = pb.brownian_dim;

    std::mt19937_64 rng = path_stream(seed, index);
    std::exponential_distribution<double> exp1(1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::optional<double> tau = first_passage(cum, grid, exp1(rng));
    std::size_t jump_at = n + 1;
    if (tau) {
        const std::optional<std::size_t> node = grid.node_of(*tau);
        jump_at = node ? *node : grid.locate(*tau).index + 1;
    }

    if (rec) {
        rec->tau = tau;
        rec->jump_node.reset();
        rec->X.assign(n + 1, 0.0);
        rec->u.assign(n, Vec());
        rec->pre_jump_state = 0.0;
        rec->jump_size = 0.0;
        rec->jump_control = Vec();
    }

    std::optional<std::size_t> defaulted;
    double x = x0;
    double running = 0.0;
    Vec dW(k);
    CoefficientSlice post_local;
    for (std::size_t i = 0;; ++i) {
        if (!defaulted && i == jump_at) {
            const CoefficientSlice& s = pb.pre.nodes[i];
            const Vec u = law(i, std::nullopt, x);
            const double jump = s.E * x + s.F.dot(u);
            if (rec) {
                rec->pre_jump_state = x;
                rec->jump_size = jump;
                rec->jump_control = u;
                rec->jump_node = i;
            }
            x += jump;
            defaulted = i;
            if (!std::isfinite(x)) non_finite(i, x);
        }
        if (rec) rec->X[i] = x;
        if (i == n) break;

        for (int d = 0; d < k; ++d) dW[d] = sqdt * normal(rng);
        const Vec u = law(i, defaulted, x);
        if (rec) rec->u[i] = u;
        const CoefficientSlice* s;
        double drift;
        if (!defaulted) {
            s = &pb.pre.nodes[i];
            drift = (s->A - s->lambda * s->E) * x + (s->B - s->lambda * s->F).dot(u);
        } else {
            if (pb.post.mode == ThetaMode::Constant) {
                s = &pb.post.base[i];
            } else {
                post_local = post_slice_at_node(pb, i, *defaulted);
                s = &post_local;
            }
            drift = s->A * x + s->B.dot(u);
        }
        running += 0.5 * (s->Q * x * x + u.dot(s->R * u)) * dt;
        x += drift * dt + (s->C * x + s->D * u).dot(dW);
        if (!std::isfinite(x)) non_finite(i + 1, x);
    }
    const double G = defaulted ? pb.terminal.G1[*defaulted] : pb.terminal.G0;
    const double cost = running + 0.5 * G * x * x;
    if (rec) rec->cost = cost;
    return {cost, x};
}

inline void check_sim_options(const SimulationOptions& opt) {
    if (opt.paths < 2) fail(ErrorCode::InvalidArgument, "Monte Carlo needs at least 2 paths");
}

inline double sample_se(const std::vector<double>& v, double mean) {
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    const double n = static_cast<double>(v.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

inline double ordered_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Feedback law u = xi+ x^+ + xi- x^- read from a solved policy table.
inline auto policy_law(const FeedbackPolicy& pol) {
    return [&pol](std::size_t i, std::optional<std::size_t> j, double x) { return pol.control(i, j, x); };
}

/// The optimal law with every gain multiplied by a nonnegative factor.
inline auto scaled_law(const FeedbackPolicy& pol, double factor) {
    if (!(factor >= 0.0)) fail(ErrorCode::InvalidArgument, "gain scale factor must be nonnegative to stay in the cone");
    return [&pol, factor](std::size_t i, std::optional<std::size_t> j, double x) -> Vec {
        return factor * pol.control(i, j, x);
    };
}

/// Scalar-control law with gains held constant on each of a few equal time
/// intervals: u = g+ x^+ + g- x^-, the same gains in both phases.
struct PiecewiseGainLaw {
    struct Gains {
        double plus = 0.0;
        double minus = 0.0;
    };
    std::size_t steps = 1;
    std::vector<Gains> gains;  // one entry per interval

    Vec operator()(std::size_t i, std::optional<std::size_t>, double x) const {
        const std::size_t interval = std::min(gains.size() - 1, i * gains.size() / steps);
        Vec u(1);
        u[0] = gains[interval].plus * pos(x) + gains[interval].minus * neg(x);
        return u;
    }
};

template <ControlLaw Law>
PathRecord simulate_path(const LQProblem& pb, const Law& law, double x0, std::uint64_t seed, std::uint64_t index) {
    PathRecord rec;
    detail::run_path(pb, cumulative_intensity(pre_default_intensity(pb), pb.grid), law, x0, seed, index, &rec);
    return rec;
}

/// Runs paths [0, count) and keeps every record.
template <ControlLaw Law>
std::vector<PathRecord> simulate_paths(const LQProblem& pb, const Law& law, double x0, std::size_t count,
                                       std::uint64_t seed, std::size_t threads = 0) {
    const std::vector<double> cum = cumulative_intensity(pre_default_intensity(pb), pb.grid);
    std::vector<PathRecord> out(count);
    parallel_for(count, threads,
                 [&](std::size_t p) { detail::run_path(pb, cum, law, x0, seed, p, &out[p]); });
    return out;
}

template <ControlLaw Law>
MCEstimate mc_cost(const LQProblem& pb, const Law& law, double x0, const SimulationOptions& opt) {
    detail::check_sim_options(opt);
    const std::vector<double> cum = cumulative_intensity(pre_default_intensity(pb), pb.grid);
    std::vector<double> cost(opt.paths);
    parallel_for(opt.paths, opt.threads,
                 [&](std::size_t p) { cost[p] = detail::run_path(pb, cum, law, x0, opt.seed, p, nullptr).cost; });
    const double mean = detail::ordered_mean(cost);
    return {mean, detail::sample_se(cost, mean), opt.paths, opt.seed};
}

template <ControlLaw Law>
TerminalMoments mc_terminal_moments(const LQProblem& pb, const Law& law, double x0, const SimulationOptions& opt) {
    detail::check_sim_options(opt);
    const std::vector<double> cum = cumulative_intensity(pre_default_intensity(pb), pb.grid);
    std::vector<double> xt(opt.paths);
    parallel_for(opt.paths, opt.threads,
                 [&](std::size_t p) { xt[p] = detail::run_path(pb, cum, law, x0, opt.seed, p, nullptr).terminal; });
    TerminalMoments m;
    m.paths = opt.paths;
    m.seed = opt.seed;
    m.mean = detail::ordered_mean(xt);
    m.mean_se = detail::sample_se(xt, m.mean);
    std::vector<double> sq(opt.paths);
    for (std::size_t p = 0; p < opt.paths; ++p) sq[p] = (xt[p] - m.mean) * (xt[p] - m.mean);
    const double raw = detail::ordered_mean(sq);
    m.variance = raw * static_cast<double>(opt.paths) / static_cast<double>(opt.paths - 1);
    m.variance_se = detail::sample_se(sq, raw);
    return m;
}

}  // namespace lqjump
