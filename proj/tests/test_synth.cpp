#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "conic_purge/synth.hpp"

using namespace conic_purge;

namespace {

double sample_std(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

std::vector<std::array<double, 3>> keyed(const PointSet<2>& pts, const DetectionLabels& l) {
    std::vector<std::array<double, 3>> out;
    for (std::size_t i = 0; i < pts.size(); ++i) out.push_back({pts[i].x(), pts[i].y(), l.is_outlier(i) ? 1.0 : 0.0});
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST(Eccentricity, Circle) {
    const auto e = ellipse_from_eccentricity(3.0, 0.0);
    EXPECT_EQ(e.b, 3.0);
}

TEST(Eccentricity, TypicalModel) {
    const auto e = ellipse_from_eccentricity(5.0, 0.95);
    EXPECT_NEAR(e.b, 1.5612494995995996, 1e-15);
    EXPECT_NEAR(e.b * e.b, 25.0 * (1 - 0.95 * 0.95), 1e-13);
}

TEST(Eccentricity, Boundary) {
    const auto e = ellipse_from_eccentricity(5.0, 0.999999);
    EXPECT_GT(e.b, 0.0);
    EXPECT_TRUE(e.valid());
    EXPECT_THROW(ellipse_from_eccentricity(5.0, 1.0), Error);
    EXPECT_THROW(ellipse_from_eccentricity(0.0, 0.5), Error);
}

TEST(Synth, NoiselessPointsLieOnTheModel) {
    ExperimentConfig cfg;
    cfg.sigma0 = cfg.sigma1 = 0.0;
    const auto ds = make_dataset<2>(cfg);
    const auto c = conic_from_ellipse(std::get<EllipseParams>(cfg.model));
    for (const auto& p : ds.points) EXPECT_LT(std::abs(c.residual(p)), 1e-12);

    EllipsoidParams s;
    s.semi_axes = {5, 4, 3};
    cfg.model = s;
    const auto ds3 = make_dataset<3>(cfg);
    const auto q = quadric_from_ellipsoid(s);
    for (const auto& p : ds3.points) EXPECT_LT(std::abs(q.residual(p)), 1e-12);
}

TEST(Synth, CountsAndLabels) {
    ExperimentConfig cfg;
    const auto ds = make_dataset<2>(cfg);
    EXPECT_EQ(ds.points.size(), 150u);
    EXPECT_EQ(ds.truth.outlier_count(), 50u);
}

TEST(Synth, SameSeedIdentical) {
    ExperimentConfig cfg;
    cfg.seed = 77;
    const auto a = make_dataset<2>(cfg), b = make_dataset<2>(cfg);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        EXPECT_EQ(a.points[i], b.points[i]);
        EXPECT_EQ(a.truth.labels[i], b.truth.labels[i]);
    }
    cfg.seed = 78;
    EXPECT_NE(make_dataset<2>(cfg).points[0], a.points[0]);
}

TEST(Synth, NoiseLevels) {
    // Inlier Sampson spread tracks sigma0; outliers are model points plus
    // N(0, sigma1^2) per coordinate, reconstructed from the outlier stream.
    std::vector<double> inlier_std, dev;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        const auto ds = make_dataset<2>(cfg);
        const auto& model = std::get<EllipseParams>(cfg.model);
        const auto c = conic_from_ellipse(model);
        std::vector<double> d;
        for (std::size_t i = 0; i < ds.points.size(); ++i)
            if (ds.truth.is_inlier(i)) d.push_back(signed_sampson_distance(ds.points[i], c));
        inlier_std.push_back(sample_std(d));

        Rng rng(derive_seed(seed, {2}));
        for (std::size_t i = 0; i < cfg.M; ++i) {
            const Point2 base = model.at(rng.uniform(0.0, 2 * std::numbers::pi));
            const double dx = rng.normal(0, cfg.sigma1), dy = rng.normal(0, cfg.sigma1);
            const Point2 off(dx, dy);
            const Point2 p = base + off;
            const bool present = std::any_of(ds.points.begin(), ds.points.end(), [&](const Point2& q) { return q == p; });
            EXPECT_TRUE(present);
            dev.push_back(off.x());
            dev.push_back(off.y());
        }
    }
    for (double s : inlier_std) {
        EXPECT_GT(s, 0.01 / 1.5);
        EXPECT_LT(s, 0.01 * 1.5);
    }
    EXPECT_GT(sample_std(dev), 2.0 / 1.2);
    EXPECT_LT(sample_std(dev), 2.0 * 1.2);
}

TEST(Synth, EqualNoiseClassesIndistinguishable) {
    int rejected = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ExperimentConfig cfg;
        cfg.sigma0 = cfg.sigma1 = 0.05;
        cfg.seed = 900 + seed;
        const auto ds = make_dataset<2>(cfg);
        const auto c = conic_from_ellipse(std::get<EllipseParams>(cfg.model));
        std::vector<double> in, out;
        for (std::size_t i = 0; i < ds.points.size(); ++i)
            (ds.truth.is_outlier(i) ? out : in).push_back(sampson_distance(ds.points[i], c));
        const double n = static_cast<double>(in.size()), m = static_cast<double>(out.size());
        const double critical = 1.628 * std::sqrt((n + m) / (n * m));  // alpha = 0.01
        rejected += ks_statistic(in, out) > critical;
    }
    EXPECT_LE(rejected, 2);
}

TEST(Synth, ShuffleKeepsPointLabelPairs) {
    ExperimentConfig cfg;
    cfg.seed = 31;
    const auto ds = make_dataset<2>(cfg);
    // Rebuild the unshuffled set from the generator streams.
    const auto& model = std::get<EllipseParams>(cfg.model);
    PointSet<2> pts;
    std::vector<bool> out;
    Rng in_rng(derive_seed(cfg.seed, {1}));
    for (std::size_t i = 0; i < cfg.N; ++i) {
        const Point2 base = model.at(in_rng.uniform(0.0, 2 * std::numbers::pi));
        const double dx = in_rng.normal(0, cfg.sigma0), dy = in_rng.normal(0, cfg.sigma0);
        pts.push_back(base + Point2(dx, dy));
        out.push_back(false);
    }
    Rng out_rng(derive_seed(cfg.seed, {2}));
    for (std::size_t i = 0; i < cfg.M; ++i) {
        const Point2 base = model.at(out_rng.uniform(0.0, 2 * std::numbers::pi));
        const double dx = out_rng.normal(0, cfg.sigma1), dy = out_rng.normal(0, cfg.sigma1);
        pts.push_back(base + Point2(dx, dy));
        out.push_back(true);
    }
    EXPECT_EQ(keyed(ds.points, ds.truth), keyed(pts, DetectionLabels::from_outlier_mask(out, Stage::Proximity)));
}

TEST(Synth, UniformOutliersStayInBox) {
    ExperimentConfig cfg;
    cfg.outlier_mode = OutlierMode::Uniform;
    const auto ds = make_dataset<2>(cfg);
    for (std::size_t i = 0; i < ds.points.size(); ++i) {
        if (!ds.truth.is_outlier(i)) continue;
        EXPECT_LE(std::abs(ds.points[i].x()), 5.0 + 6.0);
        EXPECT_LE(std::abs(ds.points[i].y()), 1.5613 + 6.0);
    }
}

TEST(Synth, ConfigValidation) {
    ExperimentConfig cfg;
    cfg.N = 11;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.sigma1 = 0.001;  // below sigma0
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    EXPECT_THROW(make_dataset<3>(cfg), Error);
}
