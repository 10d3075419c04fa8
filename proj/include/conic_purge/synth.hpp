#pragma once

// Seeded synthetic scenarios: noisy samples of a known ellipse/ellipsoid
// plus strongly perturbed outliers, with ground-truth labels.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "labels.hpp"
#include "model_detect.hpp"
#include "proximity_detect.hpp"
#include "random.hpp"

namespace conic_purge {

inline EllipseParams ellipse_from_eccentricity(double a, double eccentricity, const Point2& center = Point2::Zero(),
                                               double theta = 0.0) {
    if (!(a > 0.0) || !(eccentricity >= 0.0 && eccentricity < 1.0))
        throw Error(ErrorCode::InvalidArgument, "need a > 0 and eccentricity in [0, 1)");
    EllipseParams e;
    e.center = center;
    e.a = a;
    e.b = a * std::sqrt(1.0 - eccentricity * eccentricity);
    e.theta = theta;
    return e;
}

enum class OutlierMode {
    Gaussian,  // model point plus N(0, sigma1^2) per coordinate
    Uniform    // uniform over the model's bounding box grown by 3 sigma1
};

using ModelParams = std::variant<EllipseParams, EllipsoidParams>;

struct ExperimentConfig {
    ModelParams model = ellipse_from_eccentricity(5.0, 0.95);
    std::size_t N = 100;
    std::size_t M = 50;
    double sigma0 = 0.01;
    double sigma1 = 2.0;
    std::uint64_t seed = 1;
    OutlierMode outlier_mode = OutlierMode::Gaussian;
    EligibilityConfig eligibility;
    RefineConfig refine;

    int dimension() const { return std::holds_alternative<EllipseParams>(model) ? 2 : 3; }

    void validate() const {
        if (N < 12) throw Error(ErrorCode::InvalidArgument, "N must be >= 12");
        if (!(sigma0 >= 0.0 && sigma1 >= sigma0)) throw Error(ErrorCode::InvalidArgument, "need sigma1 >= sigma0 >= 0");
        const bool ok = std::visit([](const auto& m) { return m.valid(); }, model);
        if (!ok) throw Error(ErrorCode::InvalidArgument, "model parameters are invalid");
        eligibility.validate();
        refine.validate();
    }
};

template <int Dim>
struct LabeledDataset {
    PointSet<Dim> points;
    DetectionLabels truth;
    ExperimentConfig config;
};

namespace detail {

inline Point2 sample_on_model(const EllipseParams& e, Rng& rng) {
    return e.at(rng.uniform(0.0, 2.0 * std::numbers::pi));
}

// Parametric angles with uniform azimuth and uniform cosine of the polar angle.
inline Point3 sample_on_model(const EllipsoidParams& e, Rng& rng) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double z = rng.uniform(-1.0, 1.0);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return e.at(Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z));
}

template <int Dim>
Point<Dim> gaussian_offset(Rng& rng, double sigma) {
    Point<Dim> p;
    for (int i = 0; i < Dim; ++i) p[i] = rng.normal(0.0, sigma);
    return p;
}

} // namespace detail

/// N inliers at uniform random parametric angles plus N(0, sigma0^2) noise,
/// M outliers per the outlier mode, shuffled. Deterministic per seed.
template <int Dim>
LabeledDataset<Dim> make_dataset(const ExperimentConfig& cfg) {
    using Params = typename ModelTraits<Dim>::Params;
    cfg.validate();
    if (cfg.dimension() != Dim) throw Error(ErrorCode::InvalidArgument, "config dimension does not match");
    const Params& model = std::get<Params>(cfg.model);

    LabeledDataset<Dim> ds;
    ds.config = cfg;
    const std::size_t k = cfg.N + cfg.M;
    ds.points.reserve(k);
    std::vector<Label> labels;
    labels.reserve(k);

    Rng inlier_rng(derive_seed(cfg.seed, {1}));
    for (std::size_t i = 0; i < cfg.N; ++i) {
        const Point<Dim> on = detail::sample_on_model(model, inlier_rng);
        ds.points.push_back(on + detail::gaussian_offset<Dim>(inlier_rng, cfg.sigma0));
        labels.push_back(Label::Inlier);
    }

    Rng outlier_rng(derive_seed(cfg.seed, {2}));
    const Point<Dim> lo = model.center - model.half_extent() - Point<Dim>::Constant(3.0 * cfg.sigma1);
    const Point<Dim> hi = model.center + model.half_extent() + Point<Dim>::Constant(3.0 * cfg.sigma1);
    for (std::size_t i = 0; i < cfg.M; ++i) {
        Point<Dim> p;
        if (cfg.outlier_mode == OutlierMode::Gaussian) {
            const Point<Dim> on = detail::sample_on_model(model, outlier_rng);
            p = on + detail::gaussian_offset<Dim>(outlier_rng, cfg.sigma1);
        } else {
            for (int c = 0; c < Dim; ++c) p[c] = outlier_rng.uniform(lo[c], hi[c]);
        }
        ds.points.push_back(p);
        labels.push_back(Label::Outlier);
    }

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {3}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    PointSet<Dim> shuffled(k);
    ds.truth = DetectionLabels::all_inliers(k);
    for (std::size_t i = 0; i < k; ++i) {
        shuffled[i] = ds.points[order[i]];
        ds.truth.labels[i] = labels[order[i]];
    }
    ds.points = std::move(shuffled);
    return ds;
}

} // namespace conic_purge
