#pragma once

// End-to-end pipelines over a point set and the seeded sweep harness that
// drives them over synthetic scenarios.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "labels.hpp"
#include "model_detect.hpp"
#include "proximity_detect.hpp"
#include "synth.hpp"

namespace conic_purge {

enum class Pipeline { TwoStage, NoElimination, Ransac };

inline std::string_view to_string(Pipeline p) {
    switch (p) {
    case Pipeline::TwoStage: return "two_stage";
    case Pipeline::NoElimination: return "no_elimination";
    case Pipeline::Ransac: return "ransac";
    }
    return "unknown";
}

inline Pipeline pipeline_from_string(std::string_view s) {
    if (s == "two_stage" || s == "with_elimination") return Pipeline::TwoStage;
    if (s == "no_elimination" || s == "without_elimination") return Pipeline::NoElimination;
    if (s == "ransac") return Pipeline::Ransac;
    throw Error(ErrorCode::InvalidArgument, "unknown pipeline '" + std::string(s) + "'");
}

template <int Dim>
struct TwoStageResult {
    ProximityResult proximity;
    FitResult<Dim> fit;
    double proximity_ms = 0.0;
    double model_ms = 0.0;
};

namespace detail {
inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}
} // namespace detail

template <int Dim>
TwoStageResult<Dim> run_two_stage(const PointSet<Dim>& points, const EligibilityConfig& eligibility,
                                  const RefineConfig& refine_cfg, std::uint64_t seed) {
    TwoStageResult<Dim> r;
    auto t0 = std::chrono::steady_clock::now();
    r.proximity = proximity_stage<Dim>(points, eligibility, seed);
    r.proximity_ms = detail::elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    r.fit = refine<Dim>(points, r.proximity.labels, refine_cfg);
    r.model_ms = detail::elapsed_ms(t0);
    return r;
}

struct TrialOutcome {
    double error = std::numeric_limits<double>::infinity();
    DetectionMetrics metrics;
    std::string failure;  // empty on success
};

template <int Dim>
double fitting_error(const typename ModelTraits<Dim>::Coeffs& fit, const typename ModelTraits<Dim>::Params& truth) {
    try {
        return nonoverlap_ratio(ModelTraits<Dim>::to_params(fit), truth);
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

struct TrialOptions {
    RansacConfig ransac;
};

/// One pipeline on one dataset: fitting error against the true model and
/// outlier-detection metrics. Numerical failures score an infinite error.
template <int Dim>
TrialOutcome run_trial(const LabeledDataset<Dim>& ds, Pipeline pipeline, const TrialOptions& opts = {}) {
    using Params = typename ModelTraits<Dim>::Params;
    const Params& truth = std::get<Params>(ds.config.model);
    const std::uint64_t algo_seed = derive_seed(ds.config.seed, {0xA160});
    TrialOutcome out;
    try {
        FitResult<Dim> fit;
        switch (pipeline) {
        case Pipeline::TwoStage:
            fit = run_two_stage<Dim>(ds.points, ds.config.eligibility, ds.config.refine, algo_seed).fit;
            break;
        case Pipeline::NoElimination:
            fit.model = fit_model<Dim>(ds.points);
            fit.labels = DetectionLabels::all_inliers(ds.points.size(), Stage::Model);
            break;
        case Pipeline::Ransac:
            fit = vanilla_ransac<Dim>(ds.points, opts.ransac, algo_seed);
            break;
        }
        out.error = fitting_error<Dim>(fit.model, truth);
        out.metrics = detection_metrics(fit.labels, ds.truth);
    } catch (const Error& e) {
        if (!e.numerical()) throw;
        out.failure = e.what();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
    ExperimentConfig base;
    std::string parameter = "M";
    std::vector<double> grid;
    int trials = 20;
    std::vector<Pipeline> pipelines{Pipeline::TwoStage};
    RansacConfig ransac;
    std::uint64_t master_seed = 0;
};

struct SweepRow {
    double param_value = 0.0;
    Pipeline pipeline = Pipeline::TwoStage;
    double mean_error = 0.0;
    double median_error = 0.0;
    double p90_error = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    std::size_t failures = 0;
};

inline void apply_parameter(ExperimentConfig& cfg, const std::string& name, double value) {
    auto count = [&](double v) {
        if (!(v >= 0.0) || v != std::floor(v)) throw Error(ErrorCode::InvalidArgument, name + " must be a nonnegative integer");
        return static_cast<std::size_t>(v);
    };
    if (name == "M") cfg.M = count(value);
    else if (name == "N") cfg.N = count(value);
    else if (name == "sigma0") cfg.sigma0 = value;
    else if (name == "sigma1") cfg.sigma1 = value;
    else if (name == "gamma") cfg.eligibility.gamma = value;
    else if (name == "p") cfg.eligibility.p = static_cast<int>(count(value));
    else if (name == "eig_threshold") cfg.eligibility.eig_threshold = value;
    else if (name == "hf_threshold") cfg.eligibility.hf_threshold = value;
    else if (name == "tau_scale") cfg.refine.tau_scale = value;
    else throw Error(ErrorCode::InvalidArgument, "parameter '" + name + "' cannot be swept");
}

/// Linear-interpolated quantile; infinities sort last.
inline double quantile_of(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    return sorted_quantile(v, q);
}

/// Thread cap from CONIC_PURGE_THREADS, else the hardware concurrency.
inline unsigned default_thread_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CONIC_PURGE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = static_cast<unsigned>(v);
    }
    return n;
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                if (failed) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

/// Trial seeds are derive_seed(master, {param_index, trial}); every pipeline
/// sees the same dataset within a trial. Rows come out in (grid, pipeline) order.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned threads = default_thread_count()) {
    if (spec.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (spec.pipelines.empty()) throw Error(ErrorCode::InvalidArgument, "no pipelines requested");
    const std::size_t points = spec.grid.size();
    const std::size_t pipes = spec.pipelines.size();
    const auto trials = static_cast<std::size_t>(spec.trials);

    std::vector<ExperimentConfig> configs;
    for (std::size_t g = 0; g < points; ++g) {
        ExperimentConfig cfg = spec.base;
        apply_parameter(cfg, spec.parameter, spec.grid[g]);
        cfg.validate();
        configs.push_back(cfg);
    }

    std::vector<TrialOutcome> outcomes(points * trials * pipes);
    TrialOptions opts{spec.ransac};
    parallel_for(points * trials, threads, [&](std::size_t job) {
        const std::size_t g = job / trials, t = job % trials;
        ExperimentConfig cfg = configs[g];
        cfg.seed = derive_seed(spec.master_seed, {g, t});
        auto run_all = [&]<int Dim>() {
            const auto ds = make_dataset<Dim>(cfg);
            for (std::size_t p = 0; p < pipes; ++p)
                outcomes[(g * trials + t) * pipes + p] = run_trial<Dim>(ds, spec.pipelines[p], opts);
        };
        if (cfg.dimension() == 2) run_all.template operator()<2>();
        else run_all.template operator()<3>();
    });

    std::vector<SweepRow> rows;
    for (std::size_t g = 0; g < points; ++g) {
        for (std::size_t p = 0; p < pipes; ++p) {
            std::vector<double> errors;
            SweepRow row;
            row.param_value = spec.grid[g];
            row.pipeline = spec.pipelines[p];
            double sum_err = 0.0, sum_p = 0.0, sum_r = 0.0;
            for (std::size_t t = 0; t < trials; ++t) {
                const auto& o = outcomes[(g * trials + t) * pipes + p];
                errors.push_back(o.error);
                sum_err += o.error;
                sum_p += o.metrics.precision;
                sum_r += o.metrics.recall;
                row.failures += o.failure.empty() ? 0 : 1;
            }
            const auto n = static_cast<double>(trials);
            row.mean_error = sum_err / n;
            row.median_error = quantile_of(errors, 0.5);
            row.p90_error = quantile_of(errors, 0.9);
            row.mean_precision = sum_p / n;
            row.mean_recall = sum_r / n;
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace conic_purge
