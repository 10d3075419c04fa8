#pragma once

// Parametric and algebraic ellipse/ellipsoid models, conversions between
// them, the Sampson point-to-model deviation and the non-overlap error.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace conic_purge {

template <int Dim>
using Point = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using PointSet = std::vector<Point<Dim>>;

using Point2 = Point<2>;
using Point3 = Point<3>;

namespace detail {

// Unit Euclidean norm, then the first nonzero coefficient made positive.
template <std::size_t N>
std::array<double, N> normalize_coefficients(std::array<double, N> c) {
    double norm = 0.0;
    for (double v : c) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw Error(ErrorCode::ZeroVector, "coefficient vector has zero or non-finite norm");
    double sign = 1.0;
    for (double v : c) {
        if (v != 0.0) {
            sign = v > 0.0 ? 1.0 : -1.0;
            break;
        }
    }
    for (double& v : c) v *= sign / norm;
    return c;
}

inline double wrap_half_turn(double theta) {
    // maps to [-pi/2, pi/2)
    constexpr double pi = std::numbers::pi;
    double t = std::fmod(theta + pi / 2.0, pi);
    if (t < 0.0) t += pi;
    t -= pi / 2.0;
    if (t >= pi / 2.0) t -= pi;
    return t;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Ellipse

struct EllipseParams {
    Point2 center = Point2::Zero();
    double a = 1.0;      // semi-major
    double b = 1.0;      // semi-minor
    double theta = 0.0;  // rotation of the major axis, [-pi/2, pi/2)

    bool valid() const {
        return center.allFinite() && std::isfinite(a) && std::isfinite(b) && std::isfinite(theta) &&
               a >= b && b > 0.0 && theta >= -std::numbers::pi / 2.0 && theta < std::numbers::pi / 2.0;
    }

    double area() const { return std::numbers::pi * a * b; }

    Point2 at(double phi) const {
        const double c = std::cos(theta), s = std::sin(theta);
        const double u = a * std::cos(phi), v = b * std::sin(phi);
        return center + Point2(c * u - s * v, s * u + c * v);
    }

    bool contains(const Point2& p) const {
        const double c = std::cos(theta), s = std::sin(theta);
        const Point2 d = p - center;
        const double u = (c * d.x() + s * d.y()) / a;
        const double v = (-s * d.x() + c * d.y()) / b;
        return u * u + v * v <= 1.0;
    }

    /// Half-widths of the axis-aligned bounding box.
    Point2 half_extent() const {
        const double c = std::cos(theta), s = std::sin(theta);
        return {std::hypot(a * c, b * s), std::hypot(a * s, b * c)};
    }
};

/// Coefficients of A x^2 + B xy + C y^2 + D x + E y + F = 0. May hold an
/// unnormalized vector; conversions always return the canonical form.
struct ConicCoeffs {
    std::array<double, 6> c{};

    double A() const { return c[0]; }
    double B() const { return c[1]; }
    double C() const { return c[2]; }
    double D() const { return c[3]; }
    double E() const { return c[4]; }
    double F() const { return c[5]; }

    double discriminant() const { return B() * B() - 4.0 * A() * C(); }
    bool is_ellipse() const { return discriminant() < 0.0; }

    ConicCoeffs normalized() const { return {detail::normalize_coefficients(c)}; }

    double residual(const Point2& p) const {
        const double x = p.x(), y = p.y();
        return A() * x * x + B() * x * y + C() * y * y + D() * x + E() * y + F();
    }

    Point2 gradient(const Point2& p) const {
        const double x = p.x(), y = p.y();
        return {2.0 * A() * x + B() * y + D(), B() * x + 2.0 * C() * y + E()};
    }

    /// Symmetric 3x3 matrix of the homogeneous form.
    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d m;
        m << A(), B() / 2, D() / 2,
             B() / 2, C(), E() / 2,
             D() / 2, E() / 2, F();
        return m;
    }

    static ConicCoeffs from_matrix(const Eigen::Matrix3d& m) {
        return {{m(0, 0), m(0, 1) + m(1, 0), m(1, 1), m(0, 2) + m(2, 0), m(1, 2) + m(2, 1), m(2, 2)}};
    }
};

inline ConicCoeffs conic_from_ellipse(const EllipseParams& e) {
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double a2 = e.a * e.a, b2 = e.b * e.b;
    const double A = a2 * s * s + b2 * c * c;
    const double B = 2.0 * (b2 - a2) * s * c;
    const double C = a2 * c * c + b2 * s * s;
    const double x0 = e.center.x(), y0 = e.center.y();
    const double D = -2.0 * A * x0 - B * y0;
    const double E = -B * x0 - 2.0 * C * y0;
    const double F = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 - a2 * b2;
    return ConicCoeffs{{A, B, C, D, E, F}}.normalized();
}

inline EllipseParams ellipse_from_conic(const ConicCoeffs& input) {
    const ConicCoeffs k = input.normalized();
    if (!(k.discriminant() < 0.0))
        throw Error(ErrorCode::NotAnEllipse, "B^2 - 4AC >= 0");

    // A + C > 0 after the sign flip: the quadratic part is positive definite.
    const double sign = (k.A() + k.C()) > 0.0 ? 1.0 : -1.0;
    const double A = sign * k.A(), B = sign * k.B(), C = sign * k.C();
    const double D = sign * k.D(), E = sign * k.E(), F = sign * k.F();

    const double det = 4.0 * A * C - B * B;
    const double x0 = (B * E - 2.0 * C * D) / det;
    const double y0 = (B * D - 2.0 * A * E) / det;
    const double f0 = F + 0.5 * (D * x0 + E * y0);
    if (!(f0 < 0.0))
        throw Error(ErrorCode::NotAnEllipse, "conic is imaginary or degenerate");

    const double mean = 0.5 * (A + C);
    const double radius = std::hypot(0.5 * (A - C), 0.5 * B);
    const double lambda_small = mean - radius;
    const double lambda_large = mean + radius;
    if (!(lambda_small > 0.0))
        throw Error(ErrorCode::NotAnEllipse, "quadratic part is not definite");

    EllipseParams e;
    e.center = Point2(x0, y0);
    e.a = std::sqrt(-f0 / lambda_small);
    e.b = std::sqrt(-f0 / lambda_large);
    e.theta = detail::wrap_half_turn(0.5 * std::atan2(-B, C - A));
    if (!e.valid())
        throw Error(ErrorCode::NotAnEllipse, "recovered parameters are not finite");
    return e;
}

// ---------------------------------------------------------------------------
// Ellipsoid

struct EllipsoidParams {
    Point3 center = Point3::Zero();
    Eigen::Vector3d semi_axes = Eigen::Vector3d::Ones();          // a >= b >= c
    Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();   // columns are the axis directions

    bool valid() const {
        const double a = semi_axes[0], b = semi_axes[1], c = semi_axes[2];
        if (!center.allFinite() || !semi_axes.allFinite() || !orientation.allFinite()) return false;
        if (!(a >= b && b >= c && c > 0.0)) return false;
        const double ortho = (orientation.transpose() * orientation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        return ortho < 1e-9 && orientation.determinant() > 0.0;
    }

    double volume() const { return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod(); }

    Point3 at(const Eigen::Vector3d& unit_direction) const {
        return center + orientation * semi_axes.cwiseProduct(unit_direction);
    }

    bool contains(const Point3& p) const {
        const Eigen::Vector3d v = orientation.transpose() * (p - center);
        return v.cwiseQuotient(semi_axes).squaredNorm() <= 1.0;
    }

    Point3 half_extent() const {
        Point3 h;
        for (int i = 0; i < 3; ++i) h[i] = orientation.row(i).transpose().cwiseProduct(semi_axes).norm();
        return h;
    }
};

/// Columns 0 and 1 get their largest-magnitude entry positive; column 2 is
/// their cross product. Makes the orientation of a distinct-axis ellipsoid unique.
inline Eigen::Matrix3d canonical_orientation(const Eigen::Matrix3d& r) {
    Eigen::Matrix3d out = r;
    for (int j = 0; j < 2; ++j) {
        Eigen::Index idx;
        out.col(j).cwiseAbs().maxCoeff(&idx);
        if (out(idx, j) < 0.0) out.col(j) = -out.col(j);
    }
    out.col(2) = out.col(0).cross(out.col(1));
    return out;
}

/// Coefficients over (x^2, y^2, z^2, xy, xz, yz, x, y, z, 1).
struct QuadricCoeffs {
    std::array<double, 10> c{};

    QuadricCoeffs normalized() const { return {detail::normalize_coefficients(c)}; }

    Eigen::Matrix3d quadratic() const {
        Eigen::Matrix3d m;
        m << c[0], c[3] / 2, c[4] / 2,
             c[3] / 2, c[1], c[5] / 2,
             c[4] / 2, c[5] / 2, c[2];
        return m;
    }

    Eigen::Vector3d linear() const { return {c[6], c[7], c[8]}; }
    double constant() const { return c[9]; }

    double residual(const Point3& p) const {
        return p.dot(quadratic() * p) + linear().dot(p) + constant();
    }

    Point3 gradient(const Point3& p) const { return 2.0 * quadratic() * p + linear(); }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m;
        m.topLeftCorner<3, 3>() = quadratic();
        m.topRightCorner<3, 1>() = linear() / 2;
        m.bottomLeftCorner<1, 3>() = linear().transpose() / 2;
        m(3, 3) = constant();
        return m;
    }

    static QuadricCoeffs from_matrix(const Eigen::Matrix4d& m) {
        const Eigen::Matrix4d s = 0.5 * (m + m.transpose());
        return {{s(0, 0), s(1, 1), s(2, 2), 2 * s(0, 1), 2 * s(0, 2), 2 * s(1, 2),
                 2 * s(0, 3), 2 * s(1, 3), 2 * s(2, 3), s(3, 3)}};
    }
};

inline QuadricCoeffs quadric_from_ellipsoid(const EllipsoidParams& e) {
    const Eigen::Vector3d inv_sq = e.semi_axes.cwiseProduct(e.semi_axes).cwiseInverse();
    const Eigen::Matrix3d A = e.orientation * inv_sq.asDiagonal() * e.orientation.transpose();
    const Eigen::Vector3d b = -2.0 * A * e.center;
    const double f = e.center.dot(A * e.center) - 1.0;
    return QuadricCoeffs{{A(0, 0), A(1, 1), A(2, 2), 2 * A(0, 1), 2 * A(0, 2), 2 * A(1, 2),
                          b[0], b[1], b[2], f}}
        .normalized();
}

inline EllipsoidParams ellipsoid_from_quadric(const QuadricCoeffs& input) {
    const QuadricCoeffs q = input.normalized();
    Eigen::Matrix3d A = q.quadratic();
    Eigen::Vector3d b = q.linear();
    double f = q.constant();
    if (A.trace() < 0.0) {
        A = -A;
        b = -b;
        f = -f;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
    const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
    if (eig.info() != Eigen::Success || !(lambda[0] > 0.0))
        throw Error(ErrorCode::NotAnEllipsoid, "quadratic part is not positive definite");

    const Eigen::Vector3d center = -0.5 * eig.eigenvectors() *
                                   (eig.eigenvectors().transpose() * b).cwiseQuotient(lambda);
    const double f0 = f + 0.5 * b.dot(center);
    if (!(f0 < 0.0))
        throw Error(ErrorCode::NotAnEllipsoid, "quadric is imaginary or degenerate");

    EllipsoidParams e;
    e.center = center;
    for (int i = 0; i < 3; ++i) e.semi_axes[i] = std::sqrt(-f0 / lambda[i]);
    e.orientation = canonical_orientation(eig.eigenvectors());
    if (!e.valid())
        throw Error(ErrorCode::NotAnEllipsoid, "recovered parameters are not finite");
    return e;
}

// ---------------------------------------------------------------------------
// Deviation

/// residual / |gradient|, signed. Infinite (positive) where the gradient vanishes.
template <typename Coeffs, typename P>
double signed_sampson_distance(const P& p, const Coeffs& model) {
    const double r = model.residual(p);
    const double g = model.gradient(p).norm();
    if (!(g > 0.0)) return std::numeric_limits<double>::infinity();
    return r / g;
}

template <typename Coeffs, typename P>
double sampson_distance(const P& p, const Coeffs& model) {
    return std::abs(signed_sampson_distance(p, model));
}

// ---------------------------------------------------------------------------
// Fitting error

inline constexpr int kDefaultGridResolution = 512;
inline constexpr std::size_t kDefaultMonteCarloSamples = 1'000'000;

/// Area of the symmetric difference over the area of `truth`, counted on a
/// resolution x resolution grid of cell centers over the union bounding box.
inline double nonoverlap_ratio(const EllipseParams& fit, const EllipseParams& truth,
                               int resolution = kDefaultGridResolution) {
    if (resolution < 64) throw Error(ErrorCode::InvalidArgument, "grid resolution must be >= 64");
    const Point2 lo = (fit.center - fit.half_extent()).cwiseMin(truth.center - truth.half_extent());
    const Point2 hi = (fit.center + fit.half_extent()).cwiseMax(truth.center + truth.half_extent());
    const Point2 cell = (hi - lo) / resolution;
    std::int64_t count = 0;
    for (int i = 0; i < resolution; ++i) {
        const double x = lo.x() + (i + 0.5) * cell.x();
        for (int j = 0; j < resolution; ++j) {
            const Point2 p(x, lo.y() + (j + 0.5) * cell.y());
            if (fit.contains(p) != truth.contains(p)) ++count;
        }
    }
    return static_cast<double>(count) * cell.x() * cell.y() / truth.area();
}

/// Volume of the symmetric difference over the volume of `truth`, by seeded
/// Monte Carlo over the union bounding box.
inline double nonoverlap_ratio(const EllipsoidParams& fit, const EllipsoidParams& truth,
                               std::size_t samples = kDefaultMonteCarloSamples,
                               std::uint64_t seed = 0x5EED) {
    if (samples < kDefaultMonteCarloSamples)
        throw Error(ErrorCode::InvalidArgument, "Monte Carlo estimate needs >= 1e6 samples");
    const Point3 lo = (fit.center - fit.half_extent()).cwiseMin(truth.center - truth.half_extent());
    const Point3 hi = (fit.center + fit.half_extent()).cwiseMax(truth.center + truth.half_extent());
    Rng rng(seed);
    std::size_t count = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const Point3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
        if (fit.contains(p) != truth.contains(p)) ++count;
    }
    const double box = (hi - lo).prod();
    return box * static_cast<double>(count) / static_cast<double>(samples) / truth.volume();
}

// ---------------------------------------------------------------------------
// Dimension dispatch

template <int Dim>
struct ModelTraits;

template <>
struct ModelTraits<2> {
    using Params = EllipseParams;
    using Coeffs = ConicCoeffs;
    static constexpr std::size_t min_points = 5;
    static Coeffs to_coeffs(const Params& p) { return conic_from_ellipse(p); }
    static Params to_params(const Coeffs& c) { return ellipse_from_conic(c); }
};

template <>
struct ModelTraits<3> {
    using Params = EllipsoidParams;
    using Coeffs = QuadricCoeffs;
    static constexpr std::size_t min_points = 9;
    static Coeffs to_coeffs(const Params& p) { return quadric_from_ellipsoid(p); }
    static Params to_params(const Coeffs& c) { return ellipsoid_from_quadric(c); }
};

} // namespace conic_purge
