#pragma once

// Stage 1: pick near-binary eigenvectors with small eigenvalues and run an
// iterative quartile-interval detector over the entries of each one.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "labels.hpp"
#include "random.hpp"
#include "spectral.hpp"

namespace conic_purge {

enum class Aggregation {
    Union,          // any flag from any eligible eigenvector
    ProtrudingOnes  // only entries above the interval
};

struct EligibilityConfig {
    double eig_threshold = 0.1;
    double hf_threshold = 0.9;
    double gamma = 2.5;
    int max_iter = 100;
    int p = 4;
    int repeats = 1;
    Aggregation aggregation = Aggregation::Union;
    // Eigenvector entries are snapped to this grid before detection so that
    // round-off inside a constant block does not read as spread.
    double value_resolution = 1e-9;
    // Floor on each side of the detection interval, in units of the
    // eigenvector's max-norm: spread below it is not structure.
    double min_half_width = 0.2;
    // A vector flagging more than this fraction of points is not a
    // few-ones indicator; its flags are dropped.
    double max_flag_fraction = 0.07;

    void validate() const {
        if (!(eig_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "eig_threshold must be > 0");
        if (!(hf_threshold > 0.0 && hf_threshold <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "hf_threshold must lie in (0, 1]");
        if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be > 0");
        if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
        if (p < 1) throw Error(ErrorCode::InvalidArgument, "p must be >= 1");
        if (repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be >= 1");
        if (!(value_resolution >= 0.0)) throw Error(ErrorCode::InvalidArgument, "value_resolution must be >= 0");
        if (!(min_half_width >= 0.0)) throw Error(ErrorCode::InvalidArgument, "min_half_width must be >= 0");
        if (!(max_flag_fraction > 0.0 && max_flag_fraction <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "max_flag_fraction must lie in (0, 1]");
    }
};

/// (sum|f| - |sum f|) / sum|f|: 0 for one-signed vectors, 1 for full cancellation.
inline double high_frequency_measure(std::span<const double> f) {
    double abs_sum = 0.0, sum = 0.0;
    for (double v : f) {
        abs_sum += std::abs(v);
        sum += v;
    }
    if (!(abs_sum > 0.0)) throw Error(ErrorCode::ZeroVector, "high-frequency measure of a zero vector");
    return (abs_sum - std::abs(sum)) / abs_sum;
}

inline double high_frequency_measure(const Eigen::VectorXd& f) {
    return high_frequency_measure(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
}

/// Indices (ascending eigenvalue) of eigenvectors with eigenvalue below the
/// cutoff and a high-frequency measure below its threshold. Empty when none.
inline std::vector<Eigen::Index> select_eligible(const Spectrum& s, const EligibilityConfig& cfg) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (!(s.eigenvalues[i] < cfg.eig_threshold)) continue;
        const Eigen::VectorXd f = s.eigenvectors.col(i);
        if (high_frequency_measure(f) < cfg.hf_threshold) out.push_back(i);
    }
    return out;
}

/// Linear interpolation between order statistics of a sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || sorted[hi] == sorted[lo]) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Detect1dResult {
    std::vector<bool> outlier;
    double lower = 0.0;
    double upper = 0.0;
    int iterations = 0;
    bool converged = false;
    bool all_flagged = false;  // interval rejected everything; reported as no outliers

    std::size_t outlier_count() const {
        return static_cast<std::size_t>(std::count(outlier.begin(), outlier.end(), true));
    }
};

/// Iterates the quartile interval [mu - g(mu - q1), mu + g(q3 - mu)] of the
/// current inliers until the classification stops changing.
inline Detect1dResult detect_1d_from(std::span<const double> values, double gamma,
                                     std::vector<bool> inlier, int max_iter, double min_half_width = 0.0) {
    const std::size_t n = values.size();
    if (n < 4) throw Error(ErrorCode::TooFewPoints, "1-D detection needs at least 4 values");
    if (inlier.size() != n) throw Error(ErrorCode::LengthMismatch, "initial inlier mask length");
    if (!(gamma > 0.0) || max_iter < 1) throw Error(ErrorCode::InvalidArgument, "gamma > 0 and max_iter >= 1 required");

    Detect1dResult r;
    std::vector<double> sample;
    sample.reserve(n);
    for (int iter = 1; iter <= max_iter; ++iter) {
        sample.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (inlier[i]) sample.push_back(values[i]);
        if (sample.empty()) {
            r.all_flagged = true;
            break;
        }
        std::sort(sample.begin(), sample.end());
        const double q1 = sorted_quantile(sample, 0.25);
        const double mu = sorted_quantile(sample, 0.5);
        const double q3 = sorted_quantile(sample, 0.75);
        r.lower = mu - std::max(gamma * (mu - q1), min_half_width);
        r.upper = mu + std::max(gamma * (q3 - mu), min_half_width);

        std::vector<bool> next(n);
        bool any_inlier = false;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = values[i] >= r.lower && values[i] <= r.upper;
            any_inlier = any_inlier || next[i];
        }
        r.iterations = iter;
        if (!any_inlier) {
            r.all_flagged = true;
            break;
        }
        if (next == inlier) {
            r.converged = true;
            break;
        }
        inlier = std::move(next);
    }

    r.outlier.assign(n, false);
    if (!r.all_flagged)
        for (std::size_t i = 0; i < n; ++i) r.outlier[i] = !inlier[i];
    return r;
}

/// Starts from a seeded random half. The half is drawn from indices ordered
/// by (value, position), so the selected values do not depend on input order.
inline Detect1dResult detect_1d(std::span<const double> values, double gamma, std::uint64_t seed, int max_iter,
                                double min_half_width = 0.0) {
    const std::size_t n = values.size();
    if (n < 4) throw Error(ErrorCode::TooFewPoints, "1-D detection needs at least 4 values");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<bool> inlier(n, false);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) inlier[order[i]] = true;
    return detect_1d_from(values, gamma, std::move(inlier), max_iter, min_half_width);
}

/// Sum over both classes of squared deviations from the class mean.
inline double intra_class_deviation(std::span<const double> values, const std::vector<bool>& outlier) {
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int c = outlier[i] ? 1 : 0;
        sum[c] += values[i];
        sq[c] += values[i] * values[i];
        ++cnt[c];
    }
    double total = 0.0;
    for (int c = 0; c < 2; ++c)
        if (cnt[c] > 0) total += sq[c] - sum[c] * sum[c] / static_cast<double>(cnt[c]);
    return total;
}

struct EligibleVector {
    Eigen::Index index = 0;
    double eigenvalue = 0.0;
    double hf_measure = 0.0;
    std::size_t flagged = 0;  // contributed to the aggregate
    std::size_t detected = 0; // flagged by the 1-D detector
    bool dropped = false;
};

struct ProximityResult {
    DetectionLabels labels;
    double bandwidth_t = 0.0;
    Spectrum spectrum;
    std::vector<EligibleVector> eligible;
    std::vector<std::string> diagnostics;
};

namespace detail {

inline std::uint64_t hash_sorted_values(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double x : v) {
        if (x == 0.0) x = 0.0;  // fold -0
        h = splitmix64(h ^ std::bit_cast<std::uint64_t>(x));
    }
    return h;
}

} // namespace detail

template <int Dim>
ProximityResult proximity_stage(const PointSet<Dim>& points, const EligibilityConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t k = points.size();
    if (k < 12) throw Error(ErrorCode::TooFewPoints, "proximity stage needs at least 12 points");

    ProximityResult out;
    const DistanceMatrix q = pairwise_distances<Dim>(points);
    out.bandwidth_t = select_bandwidth(q, cfg.p);
    const LaplacianPair lp = graph_laplacian(heat_kernel_weights(q, out.bandwidth_t));
    out.spectrum = generalized_eigs(lp);

    std::vector<bool> flagged(k, false);
    const auto eligible = select_eligible(out.spectrum, cfg);
    if (eligible.empty()) out.diagnostics.push_back("no eligible eigenvectors; proximity stage flags nothing");

    std::vector<double> values(k);
    for (Eigen::Index idx : eligible) {
        const auto f = out.spectrum.eigenvectors.col(idx);
        for (std::size_t i = 0; i < k; ++i)
            values[i] = cfg.value_resolution > 0.0
                            ? std::round(f[static_cast<Eigen::Index>(i)] / cfg.value_resolution) * cfg.value_resolution
                            : f[static_cast<Eigen::Index>(i)];

        const std::uint64_t vec_seed = derive_seed(seed, {detail::hash_sorted_values(values)});
        Detect1dResult best;
        double best_dev = 0.0;
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            Detect1dResult r = detect_1d(values, cfg.gamma, derive_seed(vec_seed, {static_cast<std::uint64_t>(rep)}),
                                         cfg.max_iter, cfg.min_half_width);
            const double dev = intra_class_deviation(values, r.outlier);
            if (rep == 0 || dev < best_dev) {
                best = std::move(r);
                best_dev = dev;
            }
        }
        if (best.all_flagged)
            out.diagnostics.push_back("eigenvector " + std::to_string(idx) + ": interval collapsed, no outliers taken");
        const std::size_t raw = best.outlier_count();
        const bool dropped = static_cast<double>(raw) > cfg.max_flag_fraction * static_cast<double>(k);

        std::size_t count = 0;
        for (std::size_t i = 0; i < k; ++i) {
            bool hit = best.outlier[i];
            if (cfg.aggregation == Aggregation::ProtrudingOnes) hit = hit && values[i] > best.upper;
            if (hit && !dropped) {
                flagged[i] = true;
                ++count;
            }
        }
        const Eigen::VectorXd fv = f;
        out.eligible.push_back({idx, out.spectrum.eigenvalues[idx], high_frequency_measure(fv), count, raw, dropped});
    }

    const auto total = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
    if (2 * total > k) {
        out.diagnostics.push_back("proximity stage flagged " + std::to_string(total) + " of " + std::to_string(k) +
                                  " points; inliers must be the majority, so no outliers are taken");
        std::fill(flagged.begin(), flagged.end(), false);
    }
    out.labels = DetectionLabels::from_outlier_mask(flagged, Stage::Proximity);
    return out;
}

} // namespace conic_purge
