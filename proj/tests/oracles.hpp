#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's numerical routines.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "conic_purge/geometry.hpp"
#include "conic_purge/random.hpp"

namespace oracle {

/// Cyclic Jacobi rotations on a dense symmetric matrix; eigenvalues ascending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, int max_sweeps = 100) {
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Generalized eigenvalues of L f = lambda D f for diagonal D, via the
/// symmetric similarity D^-1/2 L D^-1/2.
inline std::vector<double> generalized_eigenvalues(const Eigen::MatrixXd& l, const Eigen::VectorXd& d) {
    const Eigen::VectorXd s = d.cwiseSqrt().cwiseInverse();
    return jacobi_eigenvalues(s.asDiagonal() * l * s.asDiagonal());
}

/// Heat-kernel Laplacian built from the definitions, entry by entry.
inline void laplacian_from_points(const std::vector<Eigen::Vector2d>& pts, double t, Eigen::MatrixXd& l,
                                  Eigen::VectorXd& d) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd w(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dx = pts[i].x() - pts[j].x(), dy = pts[i].y() - pts[j].y();
            w(i, j) = std::exp(-(dx * dx + dy * dy) / t);
        }
    d = w.rowwise().sum();
    l = -w;
    l.diagonal() += d;
}

/// Intersection area of two circles.
inline double circle_overlap(double r1, double r2, double dist) {
    if (dist >= r1 + r2) return 0.0;
    if (dist <= std::abs(r1 - r2)) return std::numbers::pi * std::min(r1, r2) * std::min(r1, r2);
    const double a1 = std::acos((dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist * r1));
    const double a2 = std::acos((dist * dist + r2 * r2 - r1 * r1) / (2.0 * dist * r2));
    return r1 * r1 * a1 + r2 * r2 * a2 -
           0.5 * std::sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2));
}

/// Point on an ellipse from its parameters, written out without the library.
inline Eigen::Vector2d ellipse_point(double cx, double cy, double a, double b, double theta, double phi) {
    const double u = a * std::cos(phi), v = b * std::sin(phi);
    return {cx + std::cos(theta) * u - std::sin(theta) * v, cy + std::sin(theta) * u + std::cos(theta) * v};
}

/// Implicit value ((R^T(p-c)).x/a)^2 + ((R^T(p-c)).y/b)^2 - 1.
inline double ellipse_implicit(double cx, double cy, double a, double b, double theta, const Eigen::Vector2d& p) {
    const double dx = p.x() - cx, dy = p.y() - cy;
    const double u = std::cos(theta) * dx + std::sin(theta) * dy;
    const double v = -std::sin(theta) * dx + std::cos(theta) * dy;
    return u * u / (a * a) + v * v / (b * b) - 1.0;
}

inline Eigen::Matrix3d random_rotation(conic_purge::Rng& rng) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = rng.normal();
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(m);
    Eigen::Matrix3d q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) = -q.col(0);
    return q;
}

inline conic_purge::EllipseParams random_ellipse(conic_purge::Rng& rng) {
    conic_purge::EllipseParams e;
    e.center = {rng.uniform(-10, 10), rng.uniform(-10, 10)};
    e.a = rng.uniform(0.5, 10.0);
    e.b = e.a * rng.uniform(0.1, 0.95);
    e.theta = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    return e;
}

inline conic_purge::EllipsoidParams random_ellipsoid(conic_purge::Rng& rng) {
    conic_purge::EllipsoidParams e;
    e.center = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const double a = rng.uniform(1.0, 10.0);
    const double b = a * rng.uniform(0.3, 0.9);
    const double c = b * rng.uniform(0.3, 0.9);
    e.semi_axes = {a, b, c};
    e.orientation = conic_purge::canonical_orientation(random_rotation(rng));
    return e;
}

/// Angle difference modulo a half turn (an ellipse's axis is a line).
inline double axis_angle_distance(double t1, double t2) {
    double d = std::fmod(std::abs(t1 - t2), std::numbers::pi);
    return std::min(d, std::numbers::pi - d);
}

/// Axis lines agree: |cos| of the angle between matching columns is 1.
inline double axis_misalignment(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, 1.0 - std::abs(r1.col(i).dot(r2.col(i))));
    return worst;
}

} // namespace oracle
