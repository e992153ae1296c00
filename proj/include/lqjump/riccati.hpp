#pragma once

#include "lqjump/error.hpp"
#include "lqjump/hamiltonian.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/model.hpp"
#include "lqjump/parallel.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lqjump {

struct SolverOptions {
    std::size_t threads = 0;     // 0: hardware concurrency
    double blowup_factor = 1e8;  // ceiling = factor * (1 + sup |G|)
};

/// Post-default pair (P1, N1)(.; theta) on the nodes t_i >= theta, plus the
/// values at theta itself (equal to the first node value when theta is a node).
struct PostDefaultCurve {
    double theta = 0.0;
    std::size_t first_node = 0;
    std::vector<double> P;  // P[i - first_node] = P1(t_i; theta)
    std::vector<double> N;
    double P_theta = 0.0;
    double N_theta = 0.0;
};

struct Diagonals {
    std::vector<double> P;  // P1(t_i; t_i)
    std::vector<double> N;
};

struct PreDefaultCurves {
    std::vector<double> P;  // P0(t_i)
    std::vector<double> N;
};

struct RiccatiSolution {
    TimeGrid grid;
    Classification classification;
    std::vector<double> P0, N0;
    Triangle<double> P1, N1;  // (t_i, theta_j), j <= i
    std::vector<double> diagP, diagN;
    std::vector<double> Zbar, Lambdabar;  // diag - pre-default value
    double floor = 0.0;                   // min of P and N over both phases
    double sup_P = 0.0, sup_N = 0.0;
};

/// Gains per node for the feedback law u = xi+ x^+ + xi- x^-.
class GainTable {
public:
    GainTable() = default;
    GainTable(std::size_t rows, int m, bool shared_column)
        : rows_(rows), m_(m), shared_(shared_column),
          data_((shared_column ? rows : rows * (rows + 1) / 2) * static_cast<std::size_t>(m), 0.0) {}

    Vec at(std::size_t i, std::size_t j) const {
        const double* p = data_.data() + offset(i, j);
        Vec v(m_);
        for (int d = 0; d < m_; ++d) v[d] = p[d];
        return v;
    }

    void set(std::size_t i, std::size_t j, const Vec& v) {
        double* p = data_.data() + offset(i, j);
        for (int d = 0; d < m_; ++d) p[d] = v[d];
    }

    bool shared_column() const noexcept { return shared_; }
    std::size_t rows() const noexcept { return rows_; }

private:
    std::size_t offset(std::size_t i, std::size_t j) const {
        if (i >= rows_ || j > i) fail(ErrorCode::OutOfRange, "gain table index outside j <= i < rows");
        const std::size_t cell = shared_ ? i : i * (i + 1) / 2 + j;
        return cell * static_cast<std::size_t>(m_);
    }

    std::size_t rows_ = 0;
    int m_ = 1;
    bool shared_ = false;
    std::vector<double> data_;
};

struct FeedbackPolicy {
    TimeGrid grid;
    ConeSpec cone;
    std::vector<Vec> pre_plus, pre_minus;  // per grid node
    GainTable post_plus, post_minus;       // per triangle node

    /// Control at grid node i for state x; default_node is the node at which
    /// the default was applied, if any.
    Vec control(std::size_t i, std::optional<std::size_t> default_node, double x) const {
        if (!default_node) return pre_plus[i] * pos(x) + pre_minus[i] * neg(x);
        return post_plus.at(i, *default_node) * pos(x) + post_minus.at(i, *default_node) * neg(x);
    }
};

namespace detail {

using Pair = std::array<double, 2>;

/// One classical 4-stage step backward in time, from t to t - h. The drift
/// callback receives (stage index 0: t, 1: t - h/2, 2: t - h) and returns the
/// reversed-time derivative.
template <typename Drift>
Pair rk4_backward(const Pair& y, double h, Drift&& drift) {
    const Pair k1 = drift(0, y);
    const Pair k2 = drift(1, Pair{y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]});
    const Pair k3 = drift(1, Pair{y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]});
    const Pair k4 = drift(2, Pair{y[0] + h * k3[0], y[1] + h * k3[1]});
    return {y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

inline void check_ceiling(const Pair& y, double ceiling, double t, const char* what) {
    if (!std::isfinite(y[0]) || !std::isfinite(y[1]) || std::abs(y[0]) > ceiling || std::abs(y[1]) > ceiling) {
        std::ostringstream os;
        os << what << " left the bound " << ceiling << " at t=" << t << " (P=" << y[0] << ", N=" << y[1]
           << "); problem invalid or grid too coarse";
        fail(ErrorCode::BlowUp, os.str());
    }
}

inline double ceiling_of(const LQProblem& pb, const SolverOptions& opt) {
    return opt.blowup_factor * (1.0 + pb.sup_terminal());
}

/// Reversed-time drift of the post-default pair: 2AP + Q + h(theta)(t, P, 0).
inline Pair post_drift(const CoefficientSlice& s, double theta, const Pair& y, const ConeSpec& cone) {
    HamiltonianInput in;
    in.phase = Phase::post_default(theta);
    in.slice = s;
    in.cone = cone;
    in.q = Vec::Zero(s.brownian_dim());
    in.side = Side::Plus;
    in.p = y[0];
    const double hp = minimize(in).value;
    in.side = Side::Minus;
    in.p = y[1];
    const double hn = minimize(in).value;
    return {2.0 * s.A * y[0] + s.Q + hp, 2.0 * s.A * y[1] + s.Q + hn};
}

/// Integrates the post-default pair from T down to node `first` for a fixed
/// theta; returns node values for i = first..n.
inline void integrate_post(const LQProblem& pb, double theta, std::size_t first, const SolverOptions& opt,
                           std::vector<double>& P, std::vector<double>& N) {
    const TimeGrid& grid = pb.grid;
    const std::size_t n = grid.steps();
    const double h = grid.step();
    const double ceiling = ceiling_of(pb, opt);
    P.assign(n - first + 1, 0.0);
    N.assign(n - first + 1, 0.0);
    Pair y{pb.g1_at(theta), pb.g1_at(theta)};
    P.back() = y[0];
    N.back() = y[1];
    for (std::size_t i = n; i > first; --i) {
        const std::array<CoefficientSlice, 3> slices{
            detail::post_slice(pb, GridLocation{i - 1, 1.0}, theta),
            detail::post_slice(pb, GridLocation{i - 1, 0.5}, theta),
            detail::post_slice(pb, GridLocation{i - 1, 0.0}, theta)};
        y = rk4_backward(y, h, [&](int stage, const Pair& v) { return post_drift(slices[stage], theta, v, pb.cone); });
        check_ceiling(y, ceiling, grid.time(i - 1), "post-default solution");
        P[i - 1 - first] = y[0];
        N[i - 1 - first] = y[1];
    }
}

/// Four-point Lagrange interpolation of node data at the midpoint of
/// [t_{i-1}, t_i].
inline double midpoint_value(const std::vector<double>& v, std::size_t i) {
    const std::size_t nodes = v.size();
    if (nodes < 4) return 0.5 * (v[i - 1] + v[i]);
    if (i >= 2 && i + 1 < nodes)
        return (-v[i - 2] + 9.0 * v[i - 1] + 9.0 * v[i] - v[i + 1]) / 16.0;
    if (i < 2)  // [t0, t1], one-sided stencil on nodes 0..3
        return 0.3125 * v[0] + 0.9375 * v[1] - 0.3125 * v[2] + 0.0625 * v[3];
    const std::size_t e = nodes - 1;  // [t_{e-1}, t_e]
    return 0.3125 * v[e] + 0.9375 * v[e - 1] - 0.3125 * v[e - 2] + 0.0625 * v[e - 3];
}

}  // namespace detail

/// Solves the post-default pair for one default time theta in [0, T].
inline PostDefaultCurve solve_post_default(const LQProblem& pb, double theta, const SolverOptions& opt = {}) {
    const TimeGrid& grid = pb.grid;
    const GridLocation loc = grid.locate(theta);
    PostDefaultCurve c;
    c.theta = theta;
    if (loc.weight == 0.0 || loc.weight == 1.0) {
        c.first_node = loc.index + (loc.weight == 1.0 ? 1 : 0);
        detail::integrate_post(pb, theta, c.first_node, opt, c.P, c.N);
        c.P_theta = c.P.front();
        c.N_theta = c.N.front();
        return c;
    }
    c.first_node = loc.index + 1;
    detail::integrate_post(pb, theta, c.first_node, opt, c.P, c.N);
    // Partial step from the first node down to theta itself.
    const double t1 = grid.time(c.first_node);
    const double hs = t1 - theta;
    const std::array<CoefficientSlice, 3> slices{coefficient_at(pb, t1, Phase::post_default(theta)),
                                                 coefficient_at(pb, t1 - 0.5 * hs, Phase::post_default(theta)),
                                                 coefficient_at(pb, theta, Phase::post_default(theta))};
    const detail::Pair y = detail::rk4_backward(detail::Pair{c.P.front(), c.N.front()}, hs, [&](int stage, const auto& v) {
        return detail::post_drift(slices[stage], theta, v, pb.cone);
    });
    detail::check_ceiling(y, detail::ceiling_of(pb, opt), theta, "post-default solution");
    c.P_theta = y[0];
    c.N_theta = y[1];
    return c;
}

namespace detail {

/// Fills the post-default triangles; when every theta-slice coincides a
/// single integration from theta = 0 is copied into each column.
inline void solve_triangle(const LQProblem& pb, const SolverOptions& opt, Triangle<double>& P1, Triangle<double>& N1) {
    const std::size_t rows = pb.grid.nodes();
    P1 = Triangle<double>(rows);
    N1 = Triangle<double>(rows);
    if (pb.theta_independent()) {
        std::vector<double> P, N;
        integrate_post(pb, 0.0, 0, opt, P, N);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                P1.at(i, j) = P[i];
                N1.at(i, j) = N[i];
            }
        return;
    }
    parallel_for(rows, opt.threads, [&](std::size_t j) {
        std::vector<double> P, N;
        integrate_post(pb, pb.grid.time(j), j, opt, P, N);
        for (std::size_t i = j; i < rows; ++i) {
            P1.at(i, j) = P[i - j];
            N1.at(i, j) = N[i - j];
        }
    });
}

}  // namespace detail

/// Diagonal values P1(t_i; t_i), N1(t_i; t_i) for every grid node.
inline Diagonals solve_diagonals(const LQProblem& pb, const SolverOptions& opt = {}) {
    const std::size_t rows = pb.grid.nodes();
    Diagonals d{std::vector<double>(rows), std::vector<double>(rows)};
    if (pb.theta_independent()) {
        std::vector<double> P, N;
        detail::integrate_post(pb, 0.0, 0, opt, P, N);
        return {P, N};
    }
    parallel_for(rows, opt.threads, [&](std::size_t j) {
        std::vector<double> P, N;
        detail::integrate_post(pb, pb.grid.time(j), j, opt, P, N);
        d.P[j] = P.front();
        d.N[j] = N.front();
    });
    return d;
}

/// Coupled pre-default pair, integrated backward from P0_T = N0_T = G0 with the
/// diagonals entering through the jump slots and the lambda (diag - P0) term.
inline PreDefaultCurves solve_pre_default(const LQProblem& pb, const std::vector<double>& diagP,
                                          const std::vector<double>& diagN, const SolverOptions& opt = {}) {
    const TimeGrid& grid = pb.grid;
    const std::size_t n = grid.steps();
    if (diagP.size() != grid.nodes() || diagN.size() != grid.nodes())
        fail(ErrorCode::InvalidArgument, "diagonals must be computed on the problem grid");
    const double h = grid.step();
    const double ceiling = detail::ceiling_of(pb, opt);
    PreDefaultCurves out{std::vector<double>(grid.nodes()), std::vector<double>(grid.nodes())};
    detail::Pair y{pb.terminal.G0, pb.terminal.G0};
    out.P[n] = y[0];
    out.N[n] = y[1];

    HamiltonianInput in;
    in.phase = Phase::pre_default();
    in.cone = pb.cone;
    in.q = Vec::Zero(pb.brownian_dim);

    for (std::size_t i = n; i > 0; --i) {
        const std::array<CoefficientSlice, 3> slices{pb.pre.nodes[i], lerp(pb.pre.nodes[i - 1], pb.pre.nodes[i], 0.5),
                                                     pb.pre.nodes[i - 1]};
        const std::array<double, 3> dP{diagP[i], std::max(0.0, detail::midpoint_value(diagP, i)), diagP[i - 1]};
        const std::array<double, 3> dN{diagN[i], std::max(0.0, detail::midpoint_value(diagN, i)), diagN[i - 1]};
        auto drift = [&](int stage, const detail::Pair& v) -> detail::Pair {
            const CoefficientSlice& s = slices[stage];
            const double lam = s.lambda;
            in.slice = s;
            in.lambda = lam;
            in.side = Side::Plus;
            in.p = v[0];
            in.l1 = dP[stage] - v[0];
            in.l2 = dN[stage];
            const double hp = minimize(in).value;
            in.side = Side::Minus;
            in.p = v[1];
            in.l1 = dP[stage];
            in.l2 = dN[stage] - v[1];
            const double hn = minimize(in).value;
            const double a = 2.0 * (s.A - lam * s.E);
            return {a * v[0] + s.Q + hp + lam * (dP[stage] - v[0]), a * v[1] + s.Q + hn + lam * (dN[stage] - v[1])};
        };
        try {
            y = detail::rk4_backward(y, h, drift);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ConvexityViolated) throw;
            std::ostringstream os;
            os << "pre-default flow on step [" << grid.time(i - 1) << ", " << grid.time(i) << "]: " << e.message();
            fail(ErrorCode::ConvexityViolated, os.str());
        }
        detail::check_ceiling(y, ceiling, grid.time(i - 1), "pre-default solution");
        out.P[i - 1] = y[0];
        out.N[i - 1] = y[1];
    }
    return out;
}

namespace detail {

[[noreturn]] inline void invariant_failed(const std::string& what) { fail(ErrorCode::InvariantViolation, what); }

inline void check_solution(const LQProblem& pb, RiccatiSolution& s) {
    constexpr double slack = 1e-9;
    const TimeGrid& grid = s.grid;
    const std::size_t n = grid.steps();
    auto at = [&](std::size_t i) { return " at " + where(false, i, 0, grid); };
    if (s.P0[n] != pb.terminal.G0 || s.N0[n] != pb.terminal.G0) invariant_failed("terminal condition P0_T = N0_T = G0");
    for (std::size_t j = 0; j <= n; ++j)
        if (s.P1.at(n, j) != pb.terminal.G1[j] || s.N1.at(n, j) != pb.terminal.G1[j])
            invariant_failed("terminal condition P1_T(theta) = G1(theta) at theta=" + std::to_string(grid.time(j)));

    double lo = std::numeric_limits<double>::infinity();
    std::string lo_where;
    double supP = 0.0, supN = 0.0;
    auto track = [&](double v, bool post, std::size_t i, std::size_t j) {
        if (v < lo) {
            lo = v;
            lo_where = where(post, i, j, grid);
        }
    };
    for (std::size_t i = 0; i <= n; ++i) {
        track(s.P0[i], false, i, 0);
        track(s.N0[i], false, i, 0);
        supP = std::max(supP, std::abs(s.P0[i]));
        supN = std::max(supN, std::abs(s.N0[i]));
        for (std::size_t j = 0; j <= i; ++j) {
            track(s.P1.at(i, j), true, i, j);
            track(s.N1.at(i, j), true, i, j);
            supP = std::max(supP, std::abs(s.P1.at(i, j)));
            supN = std::max(supN, std::abs(s.N1.at(i, j)));
        }
    }
    s.floor = lo;
    s.sup_P = supP;
    s.sup_N = supN;
    if (s.classification.case_class == CaseClass::Standard) {
        if (lo < -slack) invariant_failed("nonnegativity: min of P, N is " + std::to_string(lo) + " at " + lo_where);
    } else if (!(lo > 0.0)) {
        invariant_failed("uniform positivity (singular case): min of P, N is " + std::to_string(lo) + " at " +
                         lo_where);
    }
    for (std::size_t i = 0; i <= n; ++i) {
        if (std::abs(s.Zbar[i]) > 2.0 * supP + slack) invariant_failed("|Zbar| <= 2 sup P" + at(i));
        if (std::abs(s.Lambdabar[i]) > 2.0 * supN + slack) invariant_failed("|Lambdabar| <= 2 sup N" + at(i));
        if (s.Zbar[i] + s.P0[i] < -slack) invariant_failed("Zbar + P0 >= 0" + at(i));
        if (s.Lambdabar[i] + s.N0[i] < -slack) invariant_failed("Lambdabar + N0 >= 0" + at(i));
    }
}

}  // namespace detail

/// Validates, solves the post-default triangle, the diagonals and the
/// pre-default pair, pastes them together and checks every solution bound.
inline RiccatiSolution assemble(const LQProblem& pb, const SolverOptions& opt = {}) {
    RiccatiSolution s;
    s.classification = validate_problem(pb);
    s.grid = pb.grid;
    detail::solve_triangle(pb, opt, s.P1, s.N1);
    const std::size_t rows = pb.grid.nodes();
    s.diagP.resize(rows);
    s.diagN.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        s.diagP[i] = s.P1.at(i, i);
        s.diagN[i] = s.N1.at(i, i);
    }
    PreDefaultCurves pre = solve_pre_default(pb, s.diagP, s.diagN, opt);
    s.P0 = std::move(pre.P);
    s.N0 = std::move(pre.N);
    s.Zbar.resize(rows);
    s.Lambdabar.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        s.Zbar[i] = s.diagP[i] - s.P0[i];
        s.Lambdabar[i] = s.diagN[i] - s.N0[i];
    }
    detail::check_solution(pb, s);
    return s;
}

/// Minimizers of the four Hamiltonians along the solved flow.
inline FeedbackPolicy extract_policy(const LQProblem& pb, const RiccatiSolution& sol, const SolverOptions& opt = {}) {
    const TimeGrid& grid = pb.grid;
    const std::size_t rows = grid.nodes();
    const int m = pb.control_dim();
    FeedbackPolicy pol;
    pol.grid = grid;
    pol.cone = pb.cone;
    pol.pre_plus.resize(rows);
    pol.pre_minus.resize(rows);
    const Vec q = Vec::Zero(pb.brownian_dim);
    for (std::size_t i = 0; i < rows; ++i) {
        HamiltonianInput in;
        in.phase = Phase::pre_default();
        in.slice = pb.pre.nodes[i];
        in.lambda = in.slice.lambda;
        in.cone = pb.cone;
        in.q = q;
        in.side = Side::Plus;
        in.p = sol.P0[i];
        in.l1 = sol.Zbar[i];
        in.l2 = sol.diagN[i];
        pol.pre_plus[i] = minimize(in).argmin;
        in.side = Side::Minus;
        in.p = sol.N0[i];
        in.l1 = sol.diagP[i];
        in.l2 = sol.Lambdabar[i];
        pol.pre_minus[i] = minimize(in).argmin;
    }
    const bool shared = pb.theta_independent();
    pol.post_plus = GainTable(rows, m, shared);
    pol.post_minus = GainTable(rows, m, shared);
    auto fill_column = [&](std::size_t j) {
        for (std::size_t i = j; i < rows; ++i) {
            HamiltonianInput in;
            in.phase = Phase::post_default(grid.time(j));
            in.slice = detail::post_slice_at_node(pb, i, j);
            in.cone = pb.cone;
            in.q = q;
            in.side = Side::Plus;
            in.p = sol.P1.at(i, j);
            pol.post_plus.set(i, j, minimize(in).argmin);
            in.side = Side::Minus;
            in.p = sol.N1.at(i, j);
            pol.post_minus.set(i, j, minimize(in).argmin);
        }
    };
    if (shared)
        fill_column(0);
    else
        parallel_for(rows, opt.threads, fill_column);
    return pol;
}

namespace detail {

/// Interpolates triangle data at (t, theta), theta <= t: bilinear in cells
/// below the diagonal, barycentric in diagonal cells.
inline double triangle_value(const Triangle<double>& tri, const TimeGrid& grid, double t, double theta) {
    const GridLocation a = grid.locate(t);
    const GridLocation b = grid.locate(theta);
    const std::size_t i = a.index, j = b.index;
    const double wt = a.weight, wh = b.weight;
    if (j < i) {
        const double lo = lerp(tri.at(i, j), tri.at(i + 1, j), wt);
        const double hi = lerp(tri.at(i, j + 1), tri.at(i + 1, j + 1), wt);
        return lerp(lo, hi, wh);
    }
    if (wh == 0.0) return lerp(tri.at(i, i), tri.at(i + 1, i), wt);
    return (1.0 - wt) * tri.at(i, i) + (wt - wh) * tri.at(i + 1, i) + wh * tri.at(i + 1, i + 1);
}

}  // namespace detail

/// V(t, x) = 1/2 P x^{+,2} + 1/2 N x^{-,2} with the phase-appropriate curves.
inline double value_at(const RiccatiSolution& sol, double t, double x, Phase phase = Phase::pre_default()) {
    const TimeGrid& grid = sol.grid;
    double P, N;
    if (!phase.defaulted) {
        const GridLocation loc = grid.locate(t);
        P = lerp(sol.P0[loc.index], sol.P0[loc.index + 1], loc.weight);
        N = lerp(sol.N0[loc.index], sol.N0[loc.index + 1], loc.weight);
    } else {
        if (phase.theta > t + 1e-12 * grid.horizon() || phase.theta < 0.0)
            fail(ErrorCode::OutOfRange, "post-default value needs 0 <= theta <= t");
        const double theta = std::min(phase.theta, t);
        P = detail::triangle_value(sol.P1, grid, t, theta);
        N = detail::triangle_value(sol.N1, grid, t, theta);
    }
    return 0.5 * P * pos2(x) + 0.5 * N * neg2(x);
}

}  // namespace lqjump
