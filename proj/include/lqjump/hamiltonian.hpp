#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/model.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace lqjump {

enum class Side { Plus, Minus };

inline const char* to_string(Side s) noexcept { return s == Side::Plus ? "plus" : "minus"; }

/// Arguments of one Hamiltonian evaluation. In the pre-default phase the
/// jump-coupling slots l1, l2 and the intensity are active; post-default they
/// are ignored. q is the Brownian integrand slot (zero for deterministic
/// coefficients, but carried through).
struct HamiltonianInput {
    Side side = Side::Plus;
    Phase phase;
    double p = 0.0;
    Vec q;
    double l1 = 0.0;
    double l2 = 0.0;
    double lambda = 0.0;
    CoefficientSlice slice;
    ConeSpec cone;
};

struct MinResult {
    double value = 0.0;
    Vec argmin;
    int iterations = 0;
    double residual = 0.0;
};

/// Ito-Tanaka jump correction:
///   plus:  1/2 ((1+E) x + y)^{+,2} - 1/2 x^{+,2}
///   minus: 1/2 ((1+E) x + y)^{-,2} - 1/2 x^{-,2}
inline double f_jump(Side side, double x, double y, double E) {
    const double after = (1.0 + E) * x + y;
    if (side == Side::Plus) return 0.5 * pos2(after) - 0.5 * pos2(x);
    return 0.5 * neg2(after) - 0.5 * neg2(x);
}

/// Convex piecewise quadratic
///   u'Hu + g'u + c0 + lambda (alpha (w^+)^2 + beta (w^-)^2),  w = w0 + F'u,
/// which is the common shape of all four Hamiltonian objectives.
struct PiecewiseQuadratic {
    Mat H;
    Vec g;
    double c0 = 0.0;
    double lambda = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double w0 = 0.0;
    Vec F;

    bool jump_active() const { return lambda != 0.0 && (alpha != 0.0 || beta != 0.0) && !F.isZero(0.0); }

    double value(const Vec& u) const {
        double v = u.dot(H * u) + g.dot(u) + c0;
        if (lambda != 0.0) {
            const double w = w0 + F.dot(u);
            v += lambda * (alpha * pos2(w) + beta * neg2(w));
        }
        return v;
    }

    Vec gradient(const Vec& u) const {
        Vec grad = 2.0 * (H * u) + g;
        if (lambda != 0.0) {
            const double w = w0 + F.dot(u);
            grad += (2.0 * lambda * (alpha * pos(w) - beta * neg(w))) * F;
        }
        return grad;
    }
};

namespace detail {

inline constexpr double kCertificateSlack = 1e-9;

[[noreturn]] inline void convexity_violated(const HamiltonianInput& in, const char* what, double value) {
    std::ostringstream os;
    os << to_string(in.side) << " Hamiltonian: " << what << " = " << value << " < 0 (p=" << in.p << ", l1=" << in.l1
       << ", l2=" << in.l2 << ")";
    fail(ErrorCode::ConvexityViolated, os.str());
}

}  // namespace detail

/// Assembles the objective of h+/h- (post-default) or h0+/h0- (pre-default)
/// after checking the convexity certificate.
inline PiecewiseQuadratic build_objective(const HamiltonianInput& in) {
    const CoefficientSlice& s = in.slice;
    const int m = s.control_dim();
    if (in.cone.dim != m) fail(ErrorCode::InvalidArgument, "cone dimension differs from control dimension");
    if (!std::isfinite(in.p)) fail(ErrorCode::NonFinite, "Hamiltonian called with non-finite p");
    if (in.p < -detail::kCertificateSlack) detail::convexity_violated(in, "p", in.p);
    if (in.p == 0.0 && s.R.isZero(0.0))
        fail(ErrorCode::NonCoercive, "R = 0 and p = 0: Hamiltonian has no quadratic part");

    const double sign = in.side == Side::Plus ? 1.0 : -1.0;
    const bool pre = !in.phase.defaulted;
    const double lam = pre ? in.lambda : 0.0;
    const Vec q = in.q.size() == s.brownian_dim() ? in.q : Vec::Zero(s.brownian_dim());

    PiecewiseQuadratic obj;
    obj.H = s.R + in.p * (s.D.transpose() * s.D);
    Vec drift = s.B;
    if (pre) drift -= lam * s.F;
    obj.g = (2.0 * sign) * (in.p * drift + in.p * (s.D.transpose() * s.C) + s.D.transpose() * q);
    obj.c0 = in.p * s.C.squaredNorm();
    obj.F = s.F;
    if (pre && lam != 0.0) {
        if (!(lam >= 0.0)) fail(ErrorCode::ConvexityViolated, "negative intensity in Hamiltonian");
        double a, b;
        if (in.side == Side::Plus) {
            a = in.l1 + in.p;
            b = in.l2;
            obj.c0 -= (in.l1 + in.p) * lam;
            obj.w0 = 1.0 + s.E;
        } else {
            a = in.l1;
            b = in.l2 + in.p;
            obj.c0 -= (in.l2 + in.p) * lam;
            obj.w0 = -(1.0 + s.E);
        }
        if (a < -detail::kCertificateSlack)
            detail::convexity_violated(in, in.side == Side::Plus ? "l1 + p" : "l1", a);
        if (b < -detail::kCertificateSlack)
            detail::convexity_violated(in, in.side == Side::Plus ? "l2" : "l2 + p", b);
        obj.lambda = lam;
        obj.alpha = std::max(a, 0.0);
        obj.beta = std::max(b, 0.0);
    } else {
        obj.w0 = sign * (1.0 + s.E);
        obj.F = Vec::Zero(m);
    }
    return obj;
}

/// Direct transcription of the Hamiltonian objective through f_jump. Shares
/// no code with build_objective; the grid oracle evaluates this.
inline double objective_direct(const HamiltonianInput& in, const Vec& u) {
    const CoefficientSlice& s = in.slice;
    const int k = s.brownian_dim();
    double qdot = 0.0;
    Vec Du = s.D * u;
    for (int i = 0; i < k && i < in.q.size(); ++i) qdot += Du[i] * in.q[i];
    const double Ru = u.dot(s.R * u);
    const double Bu = s.B.dot(u);
    const double Fu = s.F.dot(u);
    const double p = in.p;
    const bool pre = !in.phase.defaulted;
    const double lam = pre ? in.lambda : 0.0;
    if (in.side == Side::Plus) {
        const double diffusion = (s.C + Du).squaredNorm();
        double v = 2.0 * p * Bu + p * diffusion + 2.0 * qdot + Ru;
        if (pre) {
            v -= 2.0 * p * lam * Fu;
            v += 2.0 * (in.l1 + p) * lam * f_jump(Side::Plus, 1.0, Fu, s.E);
            v += 2.0 * in.l2 * lam * f_jump(Side::Minus, 1.0, Fu, s.E);
        }
        return v;
    }
    const double diffusion = (-s.C + Du).squaredNorm();
    double v = -2.0 * p * Bu + p * diffusion - 2.0 * qdot + Ru;
    if (pre) {
        v += 2.0 * p * lam * Fu;
        v += 2.0 * in.l1 * lam * f_jump(Side::Plus, -1.0, Fu, s.E);
        v += 2.0 * (in.l2 + p) * lam * f_jump(Side::Minus, -1.0, Fu, s.E);
    }
    return v;
}

namespace detail {

inline bool better(double v, const Vec& u, double best_v, const Vec& best_u) {
    const double tol = 1e-13 * (1.0 + std::abs(best_v));
    if (v < best_v - tol) return true;
    if (v <= best_v + tol && u.norm() < best_u.norm()) return true;
    return false;
}

[[noreturn]] inline void unbounded() {
    fail(ErrorCode::NonCoercive, "Hamiltonian objective is unbounded below on the cone");
}

/// Minimum of a u^2 + b u over [lo, hi] (either end may be infinite).
inline double minimize_1d_piece(double a, double b, double lo, double hi) {
    if (a > 0.0) return std::clamp(-b / (2.0 * a), lo, hi);
    if (b > 0.0) {
        if (!std::isfinite(lo)) unbounded();
        return lo;
    }
    if (b < 0.0) {
        if (!std::isfinite(hi)) unbounded();
        return hi;
    }
    return std::clamp(0.0, lo, hi);
}

/// Exact scalar minimization: each quadratic piece is minimized on its own
/// validity interval intersected with the cone, then the best piece wins.
inline MinResult minimize_scalar(const PiecewiseQuadratic& obj, const ConeSpec& cone) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double H = obj.H(0, 0), g = obj.g[0], F = obj.F[0];
    const double lo = cone.lower_bound(), hi = inf;

    Vec best = Vec::Zero(1);
    double best_v = obj.value(best);
    auto consider = [&](double u) {
        Vec v(1);
        v[0] = u;
        const double val = obj.value(v);
        if (better(val, v, best_v, best)) {
            best_v = val;
            best = v;
        }
    };

    if (!obj.jump_active()) {
        consider(minimize_1d_piece(H, g, lo, hi));
    } else {
        const double breakpoint = -obj.w0 / F;
        // w >= 0 on [breakpoint, inf) when F > 0, on (-inf, breakpoint] when F < 0.
        const double plus_lo = F > 0.0 ? breakpoint : -inf;
        const double plus_hi = F > 0.0 ? inf : breakpoint;
        const double minus_lo = F > 0.0 ? -inf : breakpoint;
        const double minus_hi = F > 0.0 ? breakpoint : inf;
        const std::array<std::array<double, 3>, 2> pieces{{{obj.alpha, plus_lo, plus_hi},
                                                           {obj.beta, minus_lo, minus_hi}}};
        for (const auto& [kappa, plo, phi] : pieces) {
            const double a = H + obj.lambda * kappa * F * F;
            const double b = g + 2.0 * obj.lambda * kappa * obj.w0 * F;
            const double L = std::max(plo, lo), U = std::min(phi, hi);
            if (L > U) continue;
            consider(minimize_1d_piece(a, b, L, U));
        }
    }
    if (!std::isfinite(best_v)) unbounded();
    return {best_v, best, 1, 0.0};
}

/// Stationary point of u'Hu + g'u over the whole space (minimum-norm if H is
/// singular but g lies in its range).
inline MinResult minimize_unconstrained_quadratic(const PiecewiseQuadratic& obj) {
    Eigen::LLT<Mat> llt(obj.H);
    Vec u;
    if (llt.info() == Eigen::Success && min_eigenvalue(obj.H) > 1e-14 * (1.0 + max_abs(obj.H))) {
        u = llt.solve(-0.5 * obj.g);
    } else {
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(obj.H);
        u = cod.solve(-0.5 * obj.g);
        const double res = (obj.H * u + 0.5 * obj.g).norm();
        if (!(res <= 1e-10 * (1.0 + obj.g.norm()))) unbounded();
    }
    return {obj.value(u), u, 1, (2.0 * (obj.H * u) + obj.g).norm()};
}

/// Accelerated projected gradient with backtracking; monotone via restart.
inline MinResult minimize_projected_gradient(const PiecewiseQuadratic& obj, const ConeSpec& cone) {
    constexpr int kMaxIter = 10000;
    constexpr double kTol = 1e-10;
    const int m = static_cast<int>(obj.g.size());
    double lip = 2.0 * obj.H.norm() + 2.0 * obj.lambda * std::max(obj.alpha, obj.beta) * obj.F.squaredNorm();
    if (!(lip > 0.0)) lip = 1.0;
    double step = 2.0 / lip;

    Vec x = Vec::Zero(m);
    double fx = obj.value(x);
    Vec y = x;
    double t = 1.0;
    double residual = std::numeric_limits<double>::infinity();
    const double blowup = 1e12 * (1.0 + obj.g.norm());
    int it = 0;
    for (; it < kMaxIter; ++it) {
        const Vec gy = obj.gradient(y);
        const double fy = obj.value(y);
        Vec xn;
        double fxn;
        for (;;) {
            xn = cone.project(y - step * gy);
            fxn = obj.value(xn);
            const Vec d = xn - y;
            if (fxn <= fy + gy.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(fy)) break;
            step *= 0.5;
        }
        if (fxn > fx) {
            // Momentum overshoot: restart from the last accepted iterate.
            if (y == x) {
                residual = 0.0;
                break;
            }
            y = x;
            t = 1.0;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = xn + ((t - 1.0) / tn) * (xn - x);
        x = xn;
        fx = fxn;
        t = tn;
        if (!all_finite(x) || x.norm() > blowup) unbounded();
        const Vec gm = (x - cone.project(x - step * obj.gradient(x))) / step;
        residual = gm.norm();
        if (residual <= kTol) break;
    }
    return {fx, cone.project(x), it + 1, residual};
}

}  // namespace detail

/// Infimum and minimizer of the Hamiltonian over the cone. Scalar controls use
/// the exact piecewise solution, pure quadratics over the full space use the
/// stationary point, everything else the projected gradient method.
inline MinResult minimize(const HamiltonianInput& in) {
    const PiecewiseQuadratic obj = build_objective(in);
    MinResult r;
    if (obj.g.size() == 1)
        r = detail::minimize_scalar(obj, in.cone);
    else if (in.cone.kind == ConeKind::FullSpace && !obj.jump_active())
        r = detail::minimize_unconstrained_quadratic(obj);
    else
        r = detail::minimize_projected_gradient(obj, in.cone);
    // Argmin may carry -1e-12 scale noise from the solvers; the cone is closed.
    for (Eigen::Index i = 0; i < r.argmin.size(); ++i)
        if (in.cone.kind == ConeKind::NonNegOrthant && r.argmin[i] < 0.0) r.argmin[i] = 0.0;
    r.value = obj.value(r.argmin);
    const Vec zero = Vec::Zero(r.argmin.size());
    const double v0 = obj.value(zero);
    if (v0 < r.value) {
        r.value = v0;
        r.argmin = zero;
    }
    return r;
}

inline MinResult minimize_h_post(Side side, double theta, double t, double p, const Vec& q, const LQProblem& pb) {
    HamiltonianInput in;
    in.side = side;
    in.phase = Phase::post_default(theta);
    in.p = p;
    in.q = q;
    in.slice = coefficient_at(pb, t, in.phase);
    in.cone = pb.cone;
    return minimize(in);
}

inline MinResult minimize_h_pre(Side side, double t, double p, const Vec& q, double l1, double l2,
                                const LQProblem& pb) {
    HamiltonianInput in;
    in.side = side;
    in.phase = Phase::pre_default();
    in.p = p;
    in.q = q;
    in.l1 = l1;
    in.l2 = l2;
    in.slice = coefficient_at(pb, t, in.phase);
    in.lambda = in.slice.lambda;
    in.cone = pb.cone;
    return minimize(in);
}

// ---------------------------------------------------------------------------
// Verification oracle
// ---------------------------------------------------------------------------

/// Radius containing every minimizer over the cone, from the strong convexity
/// of u'(R + p D'D)u and a finite-difference gradient of objective_direct at 0.
/// Returns +inf when R + p D'D is not positive definite.
inline double oracle_search_radius(const HamiltonianInput& in) {
    const CoefficientSlice& s = in.slice;
    const Mat curvature = s.R + in.p * (s.D.transpose() * s.D);
    const double mu = min_eigenvalue(curvature);
    if (!(mu > 0.0)) return std::numeric_limits<double>::infinity();
    const int m = s.control_dim();
    Vec grad(m);
    const double h = 1e-6;
    for (int i = 0; i < m; ++i) {
        Vec e = Vec::Zero(m);
        e[i] = h;
        grad[i] = (objective_direct(in, e) - objective_direct(in, -e)) / (2.0 * h);
    }
    return grad.norm() / mu;
}

/// Exhaustive lattice search over [lo, u_max]^m (lo = 0 on the orthant,
/// -u_max otherwise), followed by local refinement: nested lattices around
/// the incumbent, recentred until the incumbent is interior, then a
/// coordinate-wise parabola step. Every evaluated point is feasible, so the
/// result never undercuts the true infimum.
inline MinResult grid_oracle_min(const HamiltonianInput& in, double u_max, double resolution) {
    const int m = in.slice.control_dim();
    if (m > 2) fail(ErrorCode::InvalidArgument, "grid oracle supports m <= 2 only");
    if (!(u_max > 0.0) || !(resolution > 0.0)) fail(ErrorCode::InvalidArgument, "grid oracle needs positive bounds");
    const double lo = in.cone.kind == ConeKind::NonNegOrthant ? 0.0 : -u_max;
    const double hi = u_max;

    MinResult best;
    best.argmin = Vec::Zero(m);
    best.value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    auto eval = [&](const Vec& u) {
        ++evaluations;
        const double v = objective_direct(in, u);
        if (v < best.value) {
            best.value = v;
            best.argmin = u;
        }
    };
    auto scan = [&](const Vec& centre, double half, int per_dim) {
        Vec l(m), h(m);
        for (int d = 0; d < m; ++d) {
            l[d] = std::max(lo, centre[d] - half);
            h[d] = std::min(hi, centre[d] + half);
        }
        const int n1 = m == 2 ? per_dim : 1;
        for (int a = 0; a < per_dim; ++a)
            for (int b = 0; b < n1; ++b) {
                Vec u(m);
                u[0] = per_dim == 1 ? l[0] : l[0] + (h[0] - l[0]) * a / (per_dim - 1);
                if (m == 2) u[1] = per_dim == 1 ? l[1] : l[1] + (h[1] - l[1]) * b / (per_dim - 1);
                eval(u);
            }
    };

    const int coarse = static_cast<int>(std::ceil((hi - lo) / resolution)) + 1;
    if (std::pow(static_cast<double>(coarse), m) > 5e7) fail(ErrorCode::InvalidArgument, "grid oracle lattice too large");
    Vec centre(m);
    centre.setConstant(0.5 * (lo + hi));
    scan(centre, 0.5 * (hi - lo), coarse);

    double spacing = (hi - lo) / (coarse - 1);
    constexpr int kPerDim = 21;
    for (int level = 0; level < 200 && spacing > 1e-11 * (1.0 + best.argmin.norm()); ++level) {
        const Vec before = best.argmin;
        const double half = 2.0 * spacing;
        scan(before, half, kPerDim);
        const double new_spacing = 2.0 * half / (kPerDim - 1);
        bool on_edge = false;
        for (int d = 0; d < m; ++d) {
            const double off = std::abs(best.argmin[d] - before[d]);
            const bool at_bound = best.argmin[d] <= lo || best.argmin[d] >= hi;
            if (off >= half * (1.0 - 1e-12) && !at_bound) on_edge = true;
        }
        if (!on_edge) spacing = new_spacing;
    }
    // Parabola through three points per coordinate.
    for (int d = 0; d < m; ++d) {
        const double h = std::max(spacing, 1e-9);
        Vec a = best.argmin, c = best.argmin;
        a[d] -= h;
        c[d] += h;
        if (a[d] < lo || c[d] > hi) continue;
        const double fa = objective_direct(in, a), fb = best.value, fc = objective_direct(in, c);
        const double curv = fa - 2.0 * fb + fc;
        if (curv <= 0.0) continue;
        Vec u = best.argmin;
        u[d] += 0.5 * h * (fa - fc) / curv;
        u[d] = std::clamp(u[d], lo, hi);
        eval(u);
    }
    best.iterations = evaluations;
    best.residual = spacing;
    return best;
}

}  // namespace lqjump
