#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lqjump {

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Position of a time inside a uniform grid: t = t[index] + weight * step,
/// with weight in [0, 1]. Node times map to weight exactly 0 (or 1 at T).
struct GridLocation {
    std::size_t index;
    double weight;
};

class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            fail(ErrorCode::InvalidArgument, "grid horizon must be a positive finite time");
        if (steps < 2) fail(ErrorCode::InvalidArgument, "grid needs at least 2 steps");
    }

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t nodes() const noexcept { return steps_ + 1; }
    double step() const noexcept { return horizon_ / static_cast<double>(steps_); }
    double time(std::size_t i) const noexcept {
        return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
    }

    bool contains(double t) const noexcept {
        const double slack = 1e-12 * horizon_;
        return t >= -slack && t <= horizon_ + slack;
    }

    /// Snaps to the nearest node when within rounding distance of it.
    GridLocation locate(double t) const {
        if (!contains(t)) {
            std::ostringstream os;
            os << "time " << t << " outside [0, " << horizon_ << "]";
            fail(ErrorCode::OutOfRange, os.str());
        }
        double s = t / horizon_ * static_cast<double>(steps_);
        const double r = std::round(s);
        if (std::abs(s - r) <= 1e-9 * std::max(1.0, r)) s = r;
        s = std::clamp(s, 0.0, static_cast<double>(steps_));
        auto i = static_cast<std::size_t>(std::floor(s));
        if (i >= steps_) i = steps_ - 1;
        return {i, s - static_cast<double>(i)};
    }

    /// Node index if t is (to rounding) a grid node.
    std::optional<std::size_t> node_of(double t) const {
        const GridLocation loc = locate(t);
        if (loc.weight == 0.0) return loc.index;
        if (loc.weight == 1.0) return loc.index + 1;
        return std::nullopt;
    }

private:
    double horizon_ = 1.0;
    std::size_t steps_ = 2;
};

// ---------------------------------------------------------------------------
// Cones
// ---------------------------------------------------------------------------

enum class ConeKind { FullSpace, NonNegOrthant };

struct ConeSpec {
    ConeKind kind = ConeKind::FullSpace;
    int dim = 1;

    static ConeSpec full_space(int m) { return {ConeKind::FullSpace, m}; }
    static ConeSpec nonneg_orthant(int m) { return {ConeKind::NonNegOrthant, m}; }

    bool contains(const Vec& u, double tol = 0.0) const {
        if (u.size() != dim) return false;
        if (kind == ConeKind::FullSpace) return true;
        for (Eigen::Index i = 0; i < u.size(); ++i)
            if (u[i] < -tol) return false;
        return true;
    }

    /// Euclidean projection onto the cone.
    Vec project(const Vec& u) const {
        if (kind == ConeKind::FullSpace) return u;
        return u.cwiseMax(0.0);
    }

    double lower_bound() const noexcept {
        return kind == ConeKind::NonNegOrthant ? 0.0 : -std::numeric_limits<double>::infinity();
    }
};

// ---------------------------------------------------------------------------
// Coefficients
// ---------------------------------------------------------------------------

/// Every coefficient of the controlled SDE and the cost at one (t) or (t, theta)
/// point. Post-default slices carry E = 0, F = 0, lambda = 0.
struct CoefficientSlice {
    double A = 0.0;
    Vec B;  // m
    Vec C;  // k
    Mat D;  // k x m
    double E = 0.0;
    Vec F;  // m
    double Q = 0.0;
    Mat R;  // m x m
    double lambda = 0.0;

    int control_dim() const noexcept { return static_cast<int>(B.size()); }
    int brownian_dim() const noexcept { return static_cast<int>(C.size()); }

    static CoefficientSlice zero(int m, int k) {
        CoefficientSlice s;
        s.B = Vec::Zero(m);
        s.C = Vec::Zero(k);
        s.D = Mat::Zero(k, m);
        s.F = Vec::Zero(m);
        s.R = Mat::Zero(m, m);
        return s;
    }
};

inline CoefficientSlice lerp(const CoefficientSlice& a, const CoefficientSlice& b, double w) {
    if (w == 0.0) return a;
    CoefficientSlice s;
    s.A = lerp(a.A, b.A, w);
    s.B = lerp(a.B, b.B, w);
    s.C = lerp(a.C, b.C, w);
    s.D = lerp(a.D, b.D, w);
    s.E = lerp(a.E, b.E, w);
    s.F = lerp(a.F, b.F, w);
    s.Q = lerp(a.Q, b.Q, w);
    s.R = lerp(a.R, b.R, w);
    s.lambda = lerp(a.lambda, b.lambda, w);
    return s;
}

/// base + theta * slope, field by field.
inline CoefficientSlice affine(const CoefficientSlice& base, const CoefficientSlice& slope, double theta) {
    CoefficientSlice s;
    s.A = base.A + theta * slope.A;
    s.B = base.B + theta * slope.B;
    s.C = base.C + theta * slope.C;
    s.D = base.D + theta * slope.D;
    s.E = base.E + theta * slope.E;
    s.F = base.F + theta * slope.F;
    s.Q = base.Q + theta * slope.Q;
    s.R = base.R + theta * slope.R;
    s.lambda = base.lambda + theta * slope.lambda;
    return s;
}

/// Weighted sum of three slices (barycentric interpolation).
inline CoefficientSlice combine(const CoefficientSlice& a, double wa, const CoefficientSlice& b, double wb,
                                const CoefficientSlice& c, double wc) {
    CoefficientSlice s;
    s.A = wa * a.A + wb * b.A + wc * c.A;
    s.B = wa * a.B + wb * b.B + wc * c.B;
    s.C = wa * a.C + wb * b.C + wc * c.C;
    s.D = wa * a.D + wb * b.D + wc * c.D;
    s.E = wa * a.E + wb * b.E + wc * c.E;
    s.F = wa * a.F + wb * b.F + wc * c.F;
    s.Q = wa * a.Q + wb * b.Q + wc * c.Q;
    s.R = wa * a.R + wb * b.R + wc * c.R;
    s.lambda = wa * a.lambda + wb * b.lambda + wc * c.lambda;
    return s;
}

/// Lower-triangular array over (t_i, theta_j), j <= i, stored row-major.
template <typename T>
class Triangle {
public:
    Triangle() = default;
    explicit Triangle(std::size_t rows, const T& fill = T{}) : rows_(rows), data_(rows * (rows + 1) / 2, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& at(std::size_t i, std::size_t j) { return data_[offset(i, j)]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[offset(i, j)]; }

    const std::vector<T>& data() const noexcept { return data_; }

private:
    std::size_t offset(std::size_t i, std::size_t j) const {
        if (i >= rows_ || j > i) fail(ErrorCode::OutOfRange, "triangle index outside j <= i < rows");
        return i * (i + 1) / 2 + j;
    }

    std::size_t rows_ = 0;
    std::vector<T> data_;
};

struct PreDefaultCoeffs {
    std::vector<CoefficientSlice> nodes;  // one slice per grid node

    static PreDefaultCoeffs constant(const TimeGrid& grid, const CoefficientSlice& s) {
        return {std::vector<CoefficientSlice>(grid.nodes(), s)};
    }
};

enum class ThetaMode { Constant, Affine, Table };

/// Post-default coefficients. Constant: base(t). Affine: base(t) + slope(t) theta.
/// Table: one slice per triangle node (t_i, theta_j), j <= i.
struct PostDefaultCoeffs {
    ThetaMode mode = ThetaMode::Constant;
    std::vector<CoefficientSlice> base;
    std::vector<CoefficientSlice> slope;
    Triangle<CoefficientSlice> table;

    static PostDefaultCoeffs constant(const TimeGrid& grid, const CoefficientSlice& s) {
        PostDefaultCoeffs p;
        p.base.assign(grid.nodes(), strip_jump(s));
        return p;
    }

    static PostDefaultCoeffs affine(const TimeGrid& grid, const CoefficientSlice& base, const CoefficientSlice& slope) {
        PostDefaultCoeffs p;
        p.mode = ThetaMode::Affine;
        p.base.assign(grid.nodes(), strip_jump(base));
        p.slope.assign(grid.nodes(), strip_jump(slope));
        return p;
    }

    static CoefficientSlice strip_jump(CoefficientSlice s) {
        s.E = 0.0;
        s.F = Vec::Zero(s.B.size());
        s.lambda = 0.0;
        return s;
    }
};

struct TerminalWeights {
    double G0 = 0.0;
    std::vector<double> G1;  // G1(theta_j) per grid node

    static TerminalWeights constant(const TimeGrid& grid, double g0, double g1) {
        return {g0, std::vector<double>(grid.nodes(), g1)};
    }
};

enum class CaseClass { Standard, Singular };

inline const char* to_string(CaseClass c) noexcept { return c == CaseClass::Standard ? "Standard" : "Singular"; }

/// Declared positivity floors used by the case classification.
struct ClassificationThresholds {
    double r_min = 1e-8;    // standard case: lambda_min(R) >= r_min
    double g_min = 1e-8;    // singular case: G >= g_min
    double dtd_min = 1e-8;  // singular case: lambda_min(D'D) >= dtd_min
};

struct LQProblem {
    TimeGrid grid;
    ConeSpec cone;
    int brownian_dim = 1;
    PreDefaultCoeffs pre;
    PostDefaultCoeffs post;
    TerminalWeights terminal;
    ClassificationThresholds thresholds;

    int control_dim() const noexcept { return cone.dim; }

    double g1_at(double theta) const {
        const GridLocation loc = grid.locate(theta);
        return lerp(terminal.G1[loc.index], terminal.G1[loc.index + 1], loc.weight);
    }

    double sup_terminal() const {
        double g = std::abs(terminal.G0);
        for (double v : terminal.G1) g = std::max(g, std::abs(v));
        return g;
    }

    bool constant_intensity_zero() const {
        for (const auto& s : pre.nodes)
            if (s.lambda != 0.0) return false;
        return true;
    }

    /// True when every theta-slice of the post-default problem coincides.
    bool theta_independent() const {
        if (post.mode != ThetaMode::Constant) return false;
        for (double g : terminal.G1)
            if (g != terminal.G1.front()) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Phase and coefficient lookup
// ---------------------------------------------------------------------------

struct Phase {
    bool defaulted = false;
    double theta = 0.0;

    static Phase pre_default() { return {false, 0.0}; }
    static Phase post_default(double theta) { return {true, theta}; }
};

namespace detail {

inline CoefficientSlice post_slice(const LQProblem& pb, GridLocation t, double theta) {
    const auto& post = pb.post;
    switch (post.mode) {
        case ThetaMode::Constant:
            return lerp(post.base[t.index], post.base[t.index + 1], t.weight);
        case ThetaMode::Affine: {
            const CoefficientSlice b = lerp(post.base[t.index], post.base[t.index + 1], t.weight);
            const CoefficientSlice s = lerp(post.slope[t.index], post.slope[t.index + 1], t.weight);
            return affine(b, s, theta);
        }
        case ThetaMode::Table: {
            const GridLocation th = pb.grid.locate(theta);
            const std::size_t i = t.index, j = th.index;
            const double wt = t.weight, wh = th.weight;
            if (wt == 0.0 && wh == 0.0) return post.table.at(i, j);
            if (j < i) {
                const CoefficientSlice lo = lerp(post.table.at(i, j), post.table.at(i + 1, j), wt);
                const CoefficientSlice hi = lerp(post.table.at(i, j + 1), post.table.at(i + 1, j + 1), wt);
                return lerp(lo, hi, wh);
            }
            // Same cell: the point lies in the lower half, barycentric over
            // (t_i, th_i), (t_i+1, th_i), (t_i+1, th_i+1).
            return combine(post.table.at(i, i), 1.0 - wt, post.table.at(i + 1, i), wt - wh,
                           post.table.at(i + 1, i + 1), wh);
        }
    }
    return {};
}

inline CoefficientSlice post_slice_at_node(const LQProblem& pb, std::size_t i, std::size_t j) {
    const auto& post = pb.post;
    switch (post.mode) {
        case ThetaMode::Constant: return post.base[i];
        case ThetaMode::Affine: return affine(post.base[i], post.slope[i], pb.grid.time(j));
        case ThetaMode::Table: return post.table.at(i, j);
    }
    return {};
}

}  // namespace detail

/// Coefficients at time t in the requested phase, linearly interpolated
/// between grid nodes. Post-default slices have E = F = lambda = 0.
inline CoefficientSlice coefficient_at(const LQProblem& pb, double t, Phase phase) {
    const GridLocation loc = pb.grid.locate(t);
    if (!phase.defaulted) return lerp(pb.pre.nodes[loc.index], pb.pre.nodes[loc.index + 1], loc.weight);
    if (phase.theta > t + 1e-12 * pb.grid.horizon() || phase.theta < -1e-12 * pb.grid.horizon()) {
        std::ostringstream os;
        os << "default time " << phase.theta << " must lie in [0, t] with t = " << t;
        fail(ErrorCode::OutOfRange, os.str());
    }
    return detail::post_slice(pb, loc, std::min(phase.theta, t));
}

// ---------------------------------------------------------------------------
// Validation and case classification
// ---------------------------------------------------------------------------

struct Classification {
    CaseClass case_class = CaseClass::Standard;
    double r_min = 0.0;    // smallest eigenvalue of R over both phases
    double g_min = 0.0;    // smallest terminal weight
    double dtd_min = 0.0;  // smallest eigenvalue of D'D over both phases
};

namespace detail {

inline std::string where(bool post, std::size_t i, std::size_t j, const TimeGrid& grid) {
    std::ostringstream os;
    if (post)
        os << "post-default node (t=" << grid.time(i) << ", theta=" << grid.time(j) << ")";
    else
        os << "pre-default node " << i << " (t=" << grid.time(i) << ")";
    return os.str();
}

inline void check_shapes(const CoefficientSlice& s, int m, int k, const std::string& loc) {
    const bool ok = s.B.size() == m && s.C.size() == k && s.D.rows() == k && s.D.cols() == m && s.F.size() == m &&
                    s.R.rows() == m && s.R.cols() == m;
    if (!ok) fail(ErrorCode::InvalidArgument, "coefficient shapes inconsistent with m=" + std::to_string(m) +
                                                  ", k=" + std::to_string(k) + " at " + loc);
}

struct Extremes {
    double r_min = std::numeric_limits<double>::infinity();
    std::string r_where;
    double dtd_min = std::numeric_limits<double>::infinity();
    std::string dtd_where;
};

inline void check_slice(const CoefficientSlice& s, const std::string& loc, Extremes& ex) {
    if (!std::isfinite(s.Q) || s.Q < 0.0) fail(ErrorCode::NotPSD, "Q = " + std::to_string(s.Q) + " < 0 at " + loc);
    const double scale = 1.0 + max_abs(s.R);
    if (max_abs(s.R - s.R.transpose()) > 1e-12 * scale) fail(ErrorCode::NotPSD, "R not symmetric at " + loc);
    if (!s.R.allFinite()) fail(ErrorCode::NotPSD, "R not finite at " + loc);
    const double rmin = min_eigenvalue(s.R);
    if (rmin < -1e-12 * scale) fail(ErrorCode::NotPSD, "R has eigenvalue " + std::to_string(rmin) + " at " + loc);
    if (rmin < ex.r_min) {
        ex.r_min = rmin;
        ex.r_where = loc;
    }
    const Mat dtd = s.D.transpose() * s.D;
    const double dmin = min_eigenvalue(dtd);
    if (dmin < ex.dtd_min) {
        ex.dtd_min = dmin;
        ex.dtd_where = loc;
    }
}

}  // namespace detail

/// Checks the standing assumptions and classifies the problem as standard or
/// singular. Throws ViolatedAssumption, NotPSD or NeitherCase naming the node.
inline Classification validate_problem(const LQProblem& pb) {
    const TimeGrid& grid = pb.grid;
    const int m = pb.cone.dim;
    const int k = pb.brownian_dim;
    if (m < 1 || m > kMaxDim || k < 1 || k > kMaxDim)
        fail(ErrorCode::InvalidArgument, "dimensions must satisfy 1 <= m, k <= " + std::to_string(kMaxDim));
    if (pb.pre.nodes.size() != grid.nodes())
        fail(ErrorCode::InvalidArgument, "pre-default coefficients must have one slice per grid node");
    if (pb.terminal.G1.size() != grid.nodes())
        fail(ErrorCode::InvalidArgument, "G1 must have one value per grid node");
    switch (pb.post.mode) {
        case ThetaMode::Affine:
            if (pb.post.slope.size() != grid.nodes())
                fail(ErrorCode::InvalidArgument, "affine post-default slope needs one slice per grid node");
            [[fallthrough]];
        case ThetaMode::Constant:
            if (pb.post.base.size() != grid.nodes())
                fail(ErrorCode::InvalidArgument, "post-default coefficients must have one slice per grid node");
            break;
        case ThetaMode::Table:
            if (pb.post.table.rows() != grid.nodes())
                fail(ErrorCode::InvalidArgument, "post-default table must cover the full grid triangle");
            break;
    }

    detail::Extremes ex;
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const auto& s = pb.pre.nodes[i];
        const std::string loc = detail::where(false, i, 0, grid);
        detail::check_shapes(s, m, k, loc);
        if (!(s.E >= -1.0)) fail(ErrorCode::ViolatedAssumption, "E0 = " + std::to_string(s.E) + " < -1 at " + loc);
        if (!(s.lambda >= 0.0) || !std::isfinite(s.lambda))
            fail(ErrorCode::ViolatedAssumption, "intensity " + std::to_string(s.lambda) + " not in [0, inf) at " + loc);
        detail::check_slice(s, loc, ex);
    }
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        if (pb.post.mode == ThetaMode::Constant) {
            const std::string loc = detail::where(true, i, 0, grid);
            detail::check_shapes(pb.post.base[i], m, k, loc);
            detail::check_slice(pb.post.base[i], loc, ex);
            continue;
        }
        for (std::size_t j = 0; j <= i; ++j) {
            const std::string loc = detail::where(true, i, j, grid);
            const CoefficientSlice s = detail::post_slice_at_node(pb, i, j);
            detail::check_shapes(s, m, k, loc);
            detail::check_slice(s, loc, ex);
        }
    }

    double g_min = pb.terminal.G0;
    std::string g_where = "G0";
    for (std::size_t j = 0; j < pb.terminal.G1.size(); ++j) {
        if (!std::isfinite(pb.terminal.G1[j])) fail(ErrorCode::InvalidArgument, "G1 not finite");
        if (pb.terminal.G1[j] < g_min) {
            g_min = pb.terminal.G1[j];
            g_where = "G1(theta=" + std::to_string(grid.time(j)) + ")";
        }
    }

    Classification c{CaseClass::Standard, ex.r_min, g_min, ex.dtd_min};
    const auto& th = pb.thresholds;
    if (ex.r_min >= th.r_min && g_min >= 0.0) return c;
    if (g_min >= th.g_min && ex.dtd_min >= th.dtd_min) {
        c.case_class = CaseClass::Singular;
        return c;
    }
    std::ostringstream os;
    os << "problem is neither standard nor singular: ";
    if (ex.r_min < th.r_min)
        os << "lambda_min(R) = " << ex.r_min << " at " << ex.r_where;
    else
        os << "terminal weight " << g_min << " at " << g_where;
    os << "; ";
    if (g_min < th.g_min)
        os << "terminal weight " << g_min << " < g_min at " << g_where;
    else
        os << "lambda_min(D'D) = " << ex.dtd_min << " at " << ex.dtd_where;
    fail(ErrorCode::NeitherCase, os.str());
}

}  // namespace lqjump
