#pragma once

// Stage 2: direct least-squares ellipse/ellipsoid fitting, iterative
// model-based reclassification, and a plain RANSAC baseline.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "labels.hpp"
#include "random.hpp"

namespace conic_purge {

namespace detail {

template <int Dim>
struct Normalization {
    Point<Dim> mean;
    double scale = 1.0;

    // Homogeneous map from original to normalized coordinates.
    Eigen::Matrix<double, Dim + 1, Dim + 1> forward() const {
        Eigen::Matrix<double, Dim + 1, Dim + 1> h = Eigen::Matrix<double, Dim + 1, Dim + 1>::Identity();
        h.template topLeftCorner<Dim, Dim>() /= scale;
        h.template topRightCorner<Dim, 1>() = -mean / scale;
        return h;
    }
};

template <int Dim, typename Index>
Normalization<Dim> normalization_for(const PointSet<Dim>& points, std::span<const Index> idx) {
    Normalization<Dim> n;
    n.mean = Point<Dim>::Zero();
    for (auto i : idx) n.mean += points[i];
    n.mean /= static_cast<double>(idx.size());
    double ss = 0.0;
    for (auto i : idx) ss += (points[i] - n.mean).squaredNorm();
    n.scale = std::sqrt(ss / static_cast<double>(idx.size() * Dim));
    if (!(n.scale > 0.0) || !std::isfinite(n.scale))
        throw Error(ErrorCode::DegenerateConfiguration, "points are coincident or non-finite");
    return n;
}

template <typename Index>
ConicCoeffs fit_ellipse_indices(const PointSet<2>& points, std::span<const Index> idx) {
    if (idx.size() < 5) throw Error(ErrorCode::TooFewPoints, "ellipse fit needs at least 5 points");
    const auto norm = normalization_for<2>(points, idx);
    const auto n = static_cast<Eigen::Index>(idx.size());

    Eigen::MatrixX3d quad(n, 3), lin(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Point2 p = (points[idx[r]] - norm.mean) / norm.scale;
        quad.row(r) << p.x() * p.x(), p.x() * p.y(), p.y() * p.y();
        lin.row(r) << p.x(), p.y(), 1.0;
    }
    const Eigen::Matrix3d s1 = quad.transpose() * quad;
    const Eigen::Matrix3d s2 = quad.transpose() * lin;
    const Eigen::Matrix3d s3 = lin.transpose() * lin;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> s3_eig(s3, Eigen::EigenvaluesOnly);
    if (!(s3_eig.eigenvalues()[0] > 1e-12 * s3_eig.eigenvalues()[2]))
        throw Error(ErrorCode::DegenerateConfiguration, "points are collinear");

    const Eigen::Matrix3d t = -s3.ldlt().solve(s2.transpose());
    const Eigen::Matrix3d reduced = s1 + s2 * t;
    // Inverse of the constraint matrix of 4AC - B^2 applied to the reduced scatter.
    Eigen::Matrix3d m;
    m.row(0) = reduced.row(2) / 2.0;
    m.row(1) = -reduced.row(1);
    m.row(2) = reduced.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> eig(m);
    if (eig.info() != Eigen::Success)
        throw Error(ErrorCode::DegenerateConfiguration, "constraint eigenproblem failed");
    int best = -1;
    double best_cond = 0.0;
    for (int c = 0; c < 3; ++c) {
        Eigen::Vector3d v = eig.eigenvectors().col(c).real();
        if (v.norm() == 0.0) continue;
        v.normalize();
        const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if (cond > best_cond) {
            best_cond = cond;
            best = c;
        }
    }
    if (best < 0) throw Error(ErrorCode::DegenerateConfiguration, "no eigenvector satisfies the ellipse constraint");

    const Eigen::Vector3d a1 = eig.eigenvectors().col(best).real();
    const Eigen::Vector3d a2 = t * a1;
    const ConicCoeffs local{{a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]}};
    const Eigen::Matrix3d h = norm.forward();
    ConicCoeffs out = ConicCoeffs::from_matrix(h.transpose() * local.matrix() * h).normalized();
    if (!out.is_ellipse()) throw Error(ErrorCode::DegenerateConfiguration, "fit is not an ellipse");
    return out;
}

template <typename Index>
QuadricCoeffs fit_ellipsoid_indices(const PointSet<3>& points, std::span<const Index> idx) {
    if (idx.size() < 9) throw Error(ErrorCode::TooFewPoints, "ellipsoid fit needs at least 9 points");
    const auto norm = normalization_for<3>(points, idx);
    const auto n = static_cast<Eigen::Index>(idx.size());

    Eigen::Matrix<double, Eigen::Dynamic, 10> design(n, 10);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Point3 p = (points[idx[r]] - norm.mean) / norm.scale;
        const double x = p.x(), y = p.y(), z = p.z();
        design.row(r) << x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, 1.0;
    }
    Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 10>> svd(design, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * sv[0]) ++rank;
    if (rank < 9) throw Error(ErrorCode::DegenerateConfiguration, "points do not determine a unique quadric");

    const Eigen::Matrix<double, 10, 1> v = svd.matrixV().col(9);
    QuadricCoeffs local;
    for (int i = 0; i < 10; ++i) local.c[i] = v[i];
    const Eigen::Matrix4d h = norm.forward();
    QuadricCoeffs out = QuadricCoeffs::from_matrix(h.transpose() * local.matrix() * h).normalized();
    ellipsoid_from_quadric(out);  // throws NotAnEllipsoid
    return out;
}

} // namespace detail

inline ConicCoeffs fit_ellipse_direct(const PointSet<2>& points) {
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return detail::fit_ellipse_indices<std::size_t>(points, idx);
}

inline QuadricCoeffs fit_ellipsoid_direct(const PointSet<3>& points) {
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return detail::fit_ellipsoid_indices<std::size_t>(points, idx);
}

/// Direct fit of the model for `Dim` to the points at `idx`.
template <int Dim>
typename ModelTraits<Dim>::Coeffs fit_model(const PointSet<Dim>& points, std::span<const std::size_t> idx) {
    if constexpr (Dim == 2)
        return detail::fit_ellipse_indices<std::size_t>(points, idx);
    else
        return detail::fit_ellipsoid_indices<std::size_t>(points, idx);
}

template <int Dim>
typename ModelTraits<Dim>::Coeffs fit_model(const PointSet<Dim>& points) {
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return fit_model<Dim>(points, idx);
}

// ---------------------------------------------------------------------------

inline constexpr double kMadToSigma = 1.4826;

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
}

/// median(|v - median(v)|)
inline double median_absolute_deviation(const std::vector<double>& v) {
    const double med = median_of(v);
    std::vector<double> dev(v.size());
    std::transform(v.begin(), v.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
    return median_of(std::move(dev));
}

struct RefineConfig {
    double tau_scale = 3.0;
    int max_iter = 50;
    std::size_t min_points = 0;  // 0 selects 5 for ellipses, 9 for ellipsoids
    std::size_t cycle_window = 8;
    double threshold_floor = 1e-12;

    void validate() const {
        if (!(tau_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau_scale must be > 0");
        if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
    }

    template <int Dim>
    std::size_t min_points_for() const {
        return min_points > 0 ? min_points : ModelTraits<Dim>::min_points;
    }
};

template <int Dim>
struct FitResult {
    typename ModelTraits<Dim>::Coeffs model;
    DetectionLabels labels;
    int iterations = 0;
    bool converged = false;
    double threshold = 0.0;
};

template <int Dim>
std::vector<double> signed_distances(const PointSet<Dim>& points, const typename ModelTraits<Dim>::Coeffs& model) {
    std::vector<double> d(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) d[i] = signed_sampson_distance(points[i], model);
    return d;
}

/// Robust inlier threshold: tau_scale * 1.4826 * MAD of the signed Sampson
/// distances of the current inliers, floored.
inline double mad_threshold(const std::vector<double>& signed_dist, const DetectionLabels& labels,
                            double tau_scale, double floor) {
    std::vector<double> in;
    in.reserve(signed_dist.size());
    for (std::size_t i = 0; i < signed_dist.size(); ++i)
        if (labels.is_inlier(i) && std::isfinite(signed_dist[i])) in.push_back(signed_dist[i]);
    return std::max(floor, tau_scale * kMadToSigma * median_absolute_deviation(in));
}

namespace detail {

inline std::uint64_t hash_labels(const DetectionLabels& l) {
    std::uint64_t h = 0x84222325CBF29CE4ULL;
    for (auto v : l.labels) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
    return h;
}

template <int Dim>
double median_inlier_distance(const PointSet<Dim>& points, const FitResult<Dim>& r) {
    std::vector<double> d;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (r.labels.is_inlier(i)) d.push_back(sampson_distance(points[i], r.model));
    return median_of(std::move(d));
}

} // namespace detail

/// Fit to the current inliers, reclassify every point against the fit,
/// refit, until the labels stop changing. Points whose final label differs
/// from `initial` are tagged Stage::Model; the others keep their tag.
template <int Dim>
FitResult<Dim> refine(const PointSet<Dim>& points, const DetectionLabels& initial, const RefineConfig& cfg = {}) {
    cfg.validate();
    if (initial.size() != points.size()) throw Error(ErrorCode::LengthMismatch, "labels and points differ in length");
    const std::size_t min_points = cfg.min_points_for<Dim>();
    if (initial.inlier_count() < min_points)
        throw Error(ErrorCode::TooFewPoints, "initial labels leave fewer inliers than the minimal sample");

    FitResult<Dim> current;
    current.labels = initial;
    {
        const auto idx = initial.inlier_indices();
        current.model = fit_model<Dim>(points, idx);
    }

    std::vector<std::pair<std::uint64_t, FitResult<Dim>>> history;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        current.iterations = iter;
        const auto d = signed_distances<Dim>(points, current.model);
        const double tau = mad_threshold(d, current.labels, cfg.tau_scale, cfg.threshold_floor);
        current.threshold = tau;

        DetectionLabels next = current.labels;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Label l = std::abs(d[i]) > tau ? Label::Outlier : Label::Inlier;
            next.labels[i] = l;
            next.stages[i] = l == initial.labels[i] ? initial.stages[i] : Stage::Model;
        }
        if (next.inlier_count() < min_points) break;
        if (next.same_labels(current.labels)) {
            current.converged = true;
            break;
        }

        const std::uint64_t h = detail::hash_labels(next);
        auto seen = std::find_if(history.begin(), history.end(), [&](const auto& e) {
            return e.first == h && e.second.labels.same_labels(next);
        });
        if (seen != history.end()) {
            // Cycle: keep the member with the tightest inliers.
            const auto start = static_cast<std::size_t>(seen - history.begin());
            history.emplace_back(detail::hash_labels(current.labels), current);
            FitResult<Dim> best = history[start].second;
            double best_med = detail::median_inlier_distance(points, best);
            for (std::size_t j = start + 1; j < history.size(); ++j) {
                const double med = detail::median_inlier_distance(points, history[j].second);
                if (med < best_med) {
                    best_med = med;
                    best = history[j].second;
                }
            }
            best.iterations = iter;
            best.converged = false;
            return best;
        }
        history.emplace_back(detail::hash_labels(current.labels), current);
        if (history.size() > cfg.cycle_window) history.erase(history.begin());

        try {
            const auto idx = next.inlier_indices();
            current.model = fit_model<Dim>(points, idx);
        } catch (const Error& e) {
            if (!e.numerical() && e.code() != ErrorCode::TooFewPoints) throw;
            current.converged = false;
            return current;
        }
        current.labels = std::move(next);
    }
    return current;
}

// ---------------------------------------------------------------------------

struct RansacConfig {
    int iterations = 1000;
    // <= 0 derives the threshold from the least-median trial:
    // tau_scale * 1.4826 * (1 + 5 / (K - n)) * median |d|.
    double inlier_threshold = 0.0;
    double tau_scale = 3.0;
};

/// Best-consensus model over random minimal samples, refit on its consensus.
template <int Dim>
FitResult<Dim> vanilla_ransac(const PointSet<Dim>& points, const RansacConfig& cfg, std::uint64_t seed) {
    using Coeffs = typename ModelTraits<Dim>::Coeffs;
    const std::size_t n = ModelTraits<Dim>::min_points;
    const std::size_t k = points.size();
    if (k < n) throw Error(ErrorCode::TooFewPoints, "fewer points than the minimal sample");
    if (cfg.iterations < 1) throw Error(ErrorCode::InvalidArgument, "RANSAC needs at least one iteration");

    std::vector<std::optional<Coeffs>> models(static_cast<std::size_t>(cfg.iterations));
    std::vector<std::size_t> pool(k), sample(n);
    for (int trial = 0; trial < cfg.iterations; ++trial) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(trial)}));
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t s = 0; s < n; ++s) {
            const auto j = s + static_cast<std::size_t>(rng.below(k - s));
            std::swap(pool[s], pool[j]);
            sample[s] = pool[s];
        }
        try {
            models[trial] = fit_model<Dim>(points, sample);
        } catch (const Error& e) {
            if (!e.numerical()) throw;
        }
    }

    auto abs_dist = [&](const Coeffs& m) {
        std::vector<double> d(k);
        for (std::size_t i = 0; i < k; ++i) d[i] = sampson_distance(points[i], m);
        return d;
    };

    double tau = cfg.inlier_threshold;
    if (!(tau > 0.0)) {
        double best_med = std::numeric_limits<double>::infinity();
        for (const auto& m : models) {
            if (!m) continue;
            best_med = std::min(best_med, median_of(abs_dist(*m)));
        }
        if (!std::isfinite(best_med)) throw Error(ErrorCode::NoValidModel, "every minimal sample was degenerate");
        const double small_sample = k > n ? 1.0 + 5.0 / static_cast<double>(k - n) : 1.0;
        tau = std::max(1e-12, cfg.tau_scale * kMadToSigma * small_sample * best_med);
    }

    int best = -1;
    std::size_t best_count = 0;
    for (int trial = 0; trial < cfg.iterations; ++trial) {
        if (!models[trial]) continue;
        const auto d = abs_dist(*models[trial]);
        const auto count = static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [tau](double x) { return x <= tau; }));
        if (best < 0 || count > best_count) {
            best = trial;
            best_count = count;
        }
    }
    if (best < 0) throw Error(ErrorCode::NoValidModel, "every minimal sample was degenerate");

    FitResult<Dim> r;
    r.model = *models[best];
    r.iterations = cfg.iterations;
    r.threshold = tau;
    r.labels = DetectionLabels::all_inliers(k, Stage::Model);
    auto classify = [&](const Coeffs& m) {
        DetectionLabels l = DetectionLabels::all_inliers(k, Stage::Model);
        const auto d = abs_dist(m);
        for (std::size_t i = 0; i < k; ++i)
            if (d[i] > tau) l.labels[i] = Label::Outlier;
        return l;
    };
    r.labels = classify(r.model);
    r.converged = true;
    if (r.labels.inlier_count() >= n) {
        try {
            const auto idx = r.labels.inlier_indices();
            const Coeffs refit = fit_model<Dim>(points, idx);
            DetectionLabels relabeled = classify(refit);
            if (relabeled.inlier_count() >= n) {
                r.model = refit;
                r.labels = std::move(relabeled);
            }
        } catch (const Error& e) {
            if (!e.numerical()) throw;
        }
    }
    return r;
}

/// p = 1 - (1 - w^n)^k
inline double ransac_success_prob(double w, int n, long long k) {
    if (!(w > 0.0 && w <= 1.0) || n < 1 || k < 0)
        throw Error(ErrorCode::InvalidArgument, "need w in (0,1], n >= 1, k >= 0");
    return 1.0 - std::pow(1.0 - std::pow(w, n), static_cast<double>(k));
}

} // namespace conic_purge
