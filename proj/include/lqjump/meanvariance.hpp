#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/model.hpp"
#include "lqjump/riccati.hpp"
#include "lqjump/simulate.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <vector>

namespace lqjump {

/// Single-stock market with a default event. Pre-default quantities are given
/// per grid node; post-default drift and volatility are affine in the default
/// time, b1(t, theta) = b1[t] + theta * b1_slope[t].
struct MarketSpec {
    TimeGrid grid;
    ConeSpec cone = ConeSpec::nonneg_orthant(1);
    int brownian_dim = 1;
    std::vector<double> r, b0, gamma, lambda;
    std::vector<Vec> sigma0;
    std::vector<double> b1, b1_slope;
    std::vector<Vec> sigma1, sigma1_slope;
    double x0 = 1.0;

    static MarketSpec constant(const TimeGrid& grid, double r, double b0, double sigma0, double gamma, double lambda,
                               double b1, double sigma1, double x0, ConeKind cone = ConeKind::NonNegOrthant) {
        MarketSpec m;
        m.grid = grid;
        m.cone = {cone, 1};
        const std::size_t n = grid.nodes();
        m.r.assign(n, r);
        m.b0.assign(n, b0);
        m.gamma.assign(n, gamma);
        m.lambda.assign(n, lambda);
        m.sigma0.assign(n, Vec::Constant(1, sigma0));
        m.b1.assign(n, b1);
        m.b1_slope.assign(n, 0.0);
        m.sigma1.assign(n, Vec::Constant(1, sigma1));
        m.sigma1_slope.assign(n, Vec::Zero(1));
        m.x0 = x0;
        return m;
    }

    bool theta_dependent() const {
        for (std::size_t i = 0; i < b1_slope.size(); ++i)
            if (b1_slope[i] != 0.0 || !sigma1_slope[i].isZero(0.0)) return true;
        return false;
    }
};

struct FrontierPoint {
    double z = 0.0;
    double eta = 0.0;
    double variance = 0.0;  // minimal Var(X_T)
    double N0 = 0.0;
    double P0 = 0.0;
};

enum class Feasibility { Feasible, Infeasible };

struct FeasibilityResult {
    Feasibility status = Feasibility::Infeasible;
    double integral = 0.0;
};

inline void validate_market(const MarketSpec& m) {
    const std::size_t n = m.grid.nodes();
    const bool sizes = m.r.size() == n && m.b0.size() == n && m.gamma.size() == n && m.lambda.size() == n &&
                       m.sigma0.size() == n && m.b1.size() == n && m.b1_slope.size() == n && m.sigma1.size() == n &&
                       m.sigma1_slope.size() == n;
    if (!sizes) fail(ErrorCode::InvalidArgument, "market arrays must have one entry per grid node");
    if (m.cone.dim != 1) fail(ErrorCode::InvalidArgument, "market has a single stock: control dimension must be 1");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(m.lambda[i] >= 0.0) || !std::isfinite(m.lambda[i]))
            fail(ErrorCode::ViolatedAssumption, "intensity must be finite and nonnegative at node " + std::to_string(i));
        if (m.sigma0[i].size() != m.brownian_dim || m.sigma1[i].size() != m.brownian_dim ||
            m.sigma1_slope[i].size() != m.brownian_dim)
            fail(ErrorCode::InvalidArgument, "volatility vectors must have the Brownian dimension");
    }
    if (!std::isfinite(m.x0)) fail(ErrorCode::InvalidArgument, "initial wealth must be finite");
}

/// Integral of r over [0, T] (trapezoid on the grid).
inline double integrated_rate(const MarketSpec& m) {
    double s = 0.0;
    for (std::size_t i = 1; i < m.grid.nodes(); ++i) s += 0.5 * m.grid.step() * (m.r[i - 1] + m.r[i]);
    return s;
}

/// Deterministic-coefficient form of the feasibility condition: expected
/// integrated positive excess return, split over survival and default.
inline FeasibilityResult feasibility_check(const MarketSpec& m) {
    validate_market(m);
    const TimeGrid& grid = m.grid;
    const std::size_t n = grid.nodes();
    const double h = grid.step();
    const std::vector<double> cum = cumulative_intensity(m.lambda, grid);
    std::vector<double> density(n);
    for (std::size_t j = 0; j < n; ++j) density[j] = m.lambda[j] * std::exp(-cum[j]);

    auto trap = [&](const std::vector<double>& f) {
        double s = 0.0;
        for (std::size_t i = 1; i < f.size(); ++i) s += 0.5 * h * (f[i - 1] + f[i]);
        return s;
    };
    std::vector<double> survive(n), defaulted(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        survive[i] = std::exp(-cum[i]) * pos(m.b0[i] - m.r[i] - m.lambda[i] * m.gamma[i]);
        std::vector<double> row(i + 1);
        for (std::size_t j = 0; j <= i; ++j)
            row[j] = density[j] * pos(m.b1[i] + grid.time(j) * m.b1_slope[i] - m.r[i]);
        defaulted[i] = trap(row);
    }
    const double total = trap(survive) + trap(defaulted);
    return {total > 1e-12 ? Feasibility::Feasible : Feasibility::Infeasible, total};
}

/// The embedded singular LQ problem for y_t = X_t - eta exp(-int_t^T r); the
/// problem itself does not depend on eta.
inline LQProblem embedded_problem(const MarketSpec& m) {
    validate_market(m);
    const TimeGrid& grid = m.grid;
    const std::size_t n = grid.nodes();
    const int k = m.brownian_dim;
    LQProblem pb;
    pb.grid = grid;
    pb.cone = m.cone;
    pb.brownian_dim = k;
    pb.pre.nodes.resize(n);
    pb.post.mode = m.theta_dependent() ? ThetaMode::Affine : ThetaMode::Constant;
    pb.post.base.resize(n);
    if (pb.post.mode == ThetaMode::Affine) pb.post.slope.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        CoefficientSlice s = CoefficientSlice::zero(1, k);
        s.A = m.r[i];
        s.B[0] = m.b0[i] - m.lambda[i] * m.gamma[i] - m.r[i];
        s.D.col(0) = m.sigma0[i];
        s.F[0] = -m.gamma[i];
        s.lambda = m.lambda[i];
        pb.pre.nodes[i] = s;

        CoefficientSlice p = CoefficientSlice::zero(1, k);
        p.A = m.r[i];
        p.B[0] = m.b1[i] - m.r[i];
        p.D.col(0) = m.sigma1[i];
        pb.post.base[i] = p;
        if (pb.post.mode == ThetaMode::Affine) {
            CoefficientSlice sl = CoefficientSlice::zero(1, k);
            sl.B[0] = m.b1_slope[i];
            sl.D.col(0) = m.sigma1_slope[i];
            pb.post.slope[i] = sl;
        }
    }
    pb.terminal = TerminalWeights::constant(grid, 1.0, 1.0);
    return pb;
}

struct Embedding {
    LQProblem problem;
    double y0 = 0.0;
};

/// y0 = x0 - eta exp(-int r), written as (x0 e^{int r} - eta) e^{-int r} so
/// that eta = x0 e^{int r} gives y0 = 0 exactly.
inline Embedding embed(const MarketSpec& m, double eta) {
    const double I = integrated_rate(m);
    return {embedded_problem(m), (m.x0 * std::exp(I) - eta) * std::exp(-I)};
}

struct NormalizedPair {
    RiccatiSolution solution;
    double P0 = 0.0;
    double N0 = 0.0;
    double discount = 1.0;  // exp(-int r)
    double growth = 1.0;    // exp(int r)

    double n_ratio() const { return N0 * discount * discount; }
    double p_ratio() const { return P0 * discount * discount; }
};

/// Riccati pair of the embedded problem, terminal value 1. With R = 0 the flow
/// is positively homogeneous, so these are also the coefficients of the
/// unhalved value P0 y^{+,2} + N0 y^{-,2}.
inline NormalizedPair normalized_pair(const MarketSpec& m, const SolverOptions& opt = {}) {
    NormalizedPair out;
    out.solution = assemble(embedded_problem(m), opt);
    out.P0 = out.solution.P0.front();
    out.N0 = out.solution.N0.front();
    const double I = integrated_rate(m);
    out.discount = std::exp(-I);
    out.growth = std::exp(I);
    return out;
}

inline double dual_value(const NormalizedPair& np, double x0, double eta, double z) {
    const double y0 = (x0 * np.growth - eta) * np.discount;
    return np.P0 * pos2(y0) + np.N0 * neg2(y0) - (eta - z) * (eta - z);
}

inline void check_target(const NormalizedPair& np, double x0, double z) {
    if (z < x0 * np.growth) {
        std::ostringstream os;
        os << "target " << z << " below the riskless wealth " << x0 * np.growth;
        fail(ErrorCode::InfeasibleTarget, os.str());
    }
}

/// Stationary point of the concave dual, written relative to the riskless
/// wealth: eta* = x0 e^{int r} + (z - x0 e^{int r}) / (1 - N0 e^{-2 int r}).
inline double optimal_eta(const NormalizedPair& np, double x0, double z) {
    check_target(np, x0, z);
    const double ratio = np.n_ratio();
    if (ratio >= 1.0 - 1e-12) {
        std::ostringstream os;
        os << "N0 exp(-2 int r) = " << ratio << " is not below 1; the market offers no risk premium to trade";
        fail(ErrorCode::DegenerateDual, os.str());
    }
    const double riskless = x0 * np.growth;
    return riskless + (z - riskless) / (1.0 - ratio);
}

inline FrontierPoint frontier_point(const NormalizedPair& np, double x0, double z) {
    const double eta = optimal_eta(np, x0, z);
    const double ratio = np.n_ratio();
    const double excess = z - x0 * np.growth;
    return {z, eta, ratio / (1.0 - ratio) * excess * excess, np.N0, np.P0};
}

inline std::vector<FrontierPoint> frontier(const MarketSpec& m, const std::vector<double>& targets,
                                           const SolverOptions& opt = {}) {
    const FeasibilityResult feas = feasibility_check(m);
    const NormalizedPair np = normalized_pair(m, opt);
    for (double z : targets) check_target(np, m.x0, z);
    if (feas.status == Feasibility::Infeasible) {
        std::ostringstream os;
        os << "market is infeasible (expected positive excess return " << feas.integral << ")";
        fail(ErrorCode::DegenerateDual, os.str());
    }
    std::vector<FrontierPoint> pts;
    pts.reserve(targets.size());
    for (double z : targets) pts.push_back(frontier_point(np, m.x0, z));
    return pts;
}

struct FrontierCheck {
    TerminalMoments moments;  // of X_T = y_T + eta
    bool zero_control = true; // every simulated control was exactly 0
};

/// Simulates the optimal portfolio for one frontier point on the embedded
/// problem and shifts the terminal moments back to wealth.
inline FrontierCheck simulate_frontier_point(const MarketSpec& m, const NormalizedPair& np, const FrontierPoint& pt,
                                             const SimulationOptions& opt) {
    const Embedding e = embed(m, pt.eta);
    const FeedbackPolicy pol = extract_policy(e.problem, np.solution);
    FrontierCheck out;
    std::atomic<bool> zero{true};
    const auto law = [&pol, &zero](std::size_t i, std::optional<std::size_t> j, double y) -> Vec {
        Vec u = pol.control(i, j, y);
        if (u[0] != 0.0) zero.store(false, std::memory_order_relaxed);
        return u;
    };
    out.moments = mc_terminal_moments(e.problem, law, e.y0, opt);
    out.moments.mean += pt.eta;
    out.zero_control = zero.load();
    return out;
}

}  // namespace lqjump
