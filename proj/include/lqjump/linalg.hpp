#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace lqjump {

/// Upper bound on the control dimension m and the Brownian dimension k.
/// Small fixed-capacity storage keeps the inner Riccati loop free of heap
/// allocations.
inline constexpr int kMaxDim = 6;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline double pos(double x) noexcept { return x > 0.0 ? x : 0.0; }
inline double neg(double x) noexcept { return x < 0.0 ? -x : 0.0; }
inline double pos2(double x) noexcept { return x > 0.0 ? x * x : 0.0; }
inline double neg2(double x) noexcept { return x < 0.0 ? x * x : 0.0; }

/// a + w (b - a); returns a bitwise when a == b.
inline double lerp(double a, double b, double w) noexcept { return a + w * (b - a); }

template <typename Derived>
auto lerp(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b, double w) {
    using Plain = typename Derived::PlainObject;
    Plain out = a;
    out += w * (b - a);
    return out;
}

/// Smallest eigenvalue of a symmetric matrix (upper triangle read).
inline double min_eigenvalue(const Mat& m) {
    if (m.rows() == 0) return 0.0;
    if (m.rows() == 1) return m(0, 0);
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

}  // namespace lqjump
