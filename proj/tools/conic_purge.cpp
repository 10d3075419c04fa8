// conic_purge: generate synthetic datasets, detect outliers and fit
// ellipses/ellipsoids, and run seeded parameter sweeps.
//
// Exit codes: 0 ok, 1 usage/config/input error, 2 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "conic_purge/conic_purge.hpp"

using namespace conic_purge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    return in;
}

// "-" or empty means stdout.
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
}

ExperimentConfig load_config(const std::string& path) {
    auto in = open_input(path);
    return config_from_json(parse_json(in, path));
}

template <typename Fn>
void with_dimension(int dim, Fn&& fn) {
    if (dim == 2) fn.template operator()<2>();
    else fn.template operator()<3>();
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    std::string out;
};

void cmd_generate(const GenerateArgs& a) {
    const ExperimentConfig cfg = load_config(a.config);
    std::ostringstream text;
    with_dimension(cfg.dimension(), [&]<int Dim>() {
        const auto ds = make_dataset<Dim>(cfg);
        write_dataset<Dim>(text, ds.points, ds.truth);
    });
    emit(a.out, text.str());
}

// ---------------------------------------------------------------------------

struct DetectArgs {
    std::string data;
    std::string out;
    std::string model_out;
    std::string config;
    std::string stage = "both";
    std::string baseline;
    std::optional<double> gamma, eig_threshold, hf_threshold, tau_scale;
    std::optional<int> p;
    std::uint64_t seed = 1;
    int ransac_k = 1000;
    double ransac_threshold = 0.0;
    std::string truth;
    std::string truth_model;
    std::string dump_spectrum;
    std::string dump_eligible;
    bool timing = false;
};

Json labels_summary(const DetectionLabels& labels) {
    std::size_t by_proximity = 0, by_model = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels.is_outlier(i)) (labels.stages[i] == Stage::Proximity ? by_proximity : by_model) += 1;
    return Json{{"outliers", labels.outlier_count()},
                {"outliers_by_proximity", by_proximity},
                {"outliers_by_model", by_model}};
}

template <int Dim>
Json fit_summary(const FitResult<Dim>& fit) {
    return Json{{"iterations", fit.iterations},
                {"converged", fit.converged},
                {"threshold", detail::number_json(fit.threshold)},
                {"outliers", fit.labels.outlier_count()}};
}

void cmd_detect(const DetectArgs& a) {
    EligibilityConfig elig;
    RefineConfig ref;
    if (!a.config.empty()) {
        const ExperimentConfig c = load_config(a.config);
        elig = c.eligibility;
        ref = c.refine;
    }
    if (a.gamma) elig.gamma = *a.gamma;
    if (a.p) elig.p = *a.p;
    if (a.eig_threshold) elig.eig_threshold = *a.eig_threshold;
    if (a.hf_threshold) elig.hf_threshold = *a.hf_threshold;
    if (a.tau_scale) ref.tau_scale = *a.tau_scale;
    elig.validate();
    ref.validate();
    RansacConfig ransac;
    ransac.iterations = a.ransac_k;
    ransac.inlier_threshold = a.ransac_threshold;
    ransac.tau_scale = ref.tau_scale;
    if (ransac.iterations < 1) throw Error(ErrorCode::InvalidArgument, "--k must be >= 1");

    std::string pipeline = a.stage;
    if (!a.baseline.empty()) pipeline = a.baseline;
    if (pipeline == "proximity" && !a.model_out.empty())
        throw Error(ErrorCode::InvalidArgument, "--model-out needs a stage that fits a model");

    auto in = open_input(a.data);
    const PointTable table = read_point_table(in);
    if (table.size() < 12) throw Error(ErrorCode::TooFewPoints, "need at least 12 points, got " + std::to_string(table.size()));

    std::optional<DetectionLabels> truth;
    if (!a.truth.empty()) {
        auto tin = open_input(a.truth);
        const PointTable t = read_point_table(tin);
        if (t.size() != table.size()) throw Error(ErrorCode::LengthMismatch, "truth file has a different row count");
        truth = t.detection_labels();
    }
    std::optional<ModelParams> truth_model;
    if (!a.truth_model.empty()) {
        auto min = open_input(a.truth_model);
        truth_model = model_from_json(parse_json(min, a.truth_model));
        const int dim = std::holds_alternative<EllipseParams>(*truth_model) ? 2 : 3;
        if (dim != table.dimension) throw Error(ErrorCode::InvalidArgument, "truth model dimension does not match the data");
    }

    Json record;
    record["command"] = "detect";
    record["input"] = Json{{"rows", table.size()}, {"dimension", table.dimension}};
    record["pipeline"] = pipeline;
    record["seed"] = a.seed;
    record["eligibility"] = to_json(elig);
    record["refine"] = to_json(ref);
    if (pipeline == "ransac") record["ransac"] = to_json(ransac);

    std::ostringstream labels_csv, model_json, spectrum_csv, eligible_csv;
    double proximity_ms = 0.0, model_ms = 0.0;

    with_dimension(table.dimension, [&]<int Dim>() {
        const PointSet<Dim> points = table.points<Dim>();
        DetectionLabels final_labels;
        std::optional<typename ModelTraits<Dim>::Coeffs> model;

        auto run_proximity = [&]() {
            const auto t0 = std::chrono::steady_clock::now();
            ProximityResult pr = proximity_stage<Dim>(points, elig, a.seed);
            proximity_ms = detail::elapsed_ms(t0);
            Json d = Json::array();
            for (const auto& msg : pr.diagnostics) d.push_back(msg);
            record["proximity"] = Json{{"bandwidth_t", detail::number_json(pr.bandwidth_t)},
                                       {"eligible_vectors", pr.eligible.size()},
                                       {"outliers", pr.labels.outlier_count()},
                                       {"diagnostics", d}};
            write_spectrum_csv(spectrum_csv, pr.spectrum);
            write_eligible_csv(eligible_csv, pr.eligible);
            return pr.labels;
        };
        auto run_model = [&](const DetectionLabels& initial) {
            const auto t0 = std::chrono::steady_clock::now();
            FitResult<Dim> fit = refine<Dim>(points, initial, ref);
            model_ms = detail::elapsed_ms(t0);
            record["model_stage"] = fit_summary(fit);
            model = fit.model;
            return fit.labels;
        };

        if (pipeline == "proximity") {
            final_labels = run_proximity();
        } else if (pipeline == "model") {
            const DetectionLabels initial =
                table.labels ? table.detection_labels() : DetectionLabels::all_inliers(points.size());
            final_labels = run_model(initial);
        } else if (pipeline == "both") {
            final_labels = run_model(run_proximity());
        } else if (pipeline == "ransac") {
            const auto t0 = std::chrono::steady_clock::now();
            FitResult<Dim> fit = vanilla_ransac<Dim>(points, ransac, a.seed);
            model_ms = detail::elapsed_ms(t0);
            record["model_stage"] = fit_summary(fit);
            model = fit.model;
            final_labels = fit.labels;
        } else if (pipeline == "no_elimination") {
            const auto t0 = std::chrono::steady_clock::now();
            model = fit_model<Dim>(points);
            model_ms = detail::elapsed_ms(t0);
            final_labels = DetectionLabels::all_inliers(points.size(), Stage::Model);
        }

        write_detection<Dim>(labels_csv, points, final_labels);
        record["labels"] = labels_summary(final_labels);
        record["model"] = model ? to_json(*model) : Json(nullptr);
        if (model) model_json << to_json(*model).dump(2) << '\n';

        Json metrics = Json::object();
        if (truth) {
            const DetectionMetrics m = detection_metrics(final_labels, *truth);
            metrics["precision"] = m.precision;
            metrics["recall"] = m.recall;
            metrics["f1"] = m.f1;
        }
        if (truth_model && model) {
            using Params = typename ModelTraits<Dim>::Params;
            metrics["nonoverlap_ratio"] =
                detail::number_json(fitting_error<Dim>(*model, std::get<Params>(*truth_model)));
        }
        record["metrics"] = metrics;
    });

    if (!a.out.empty()) emit(a.out, labels_csv.str());
    if (!a.model_out.empty()) emit(a.model_out, model_json.str());
    if (!a.dump_spectrum.empty()) emit(a.dump_spectrum, spectrum_csv.str());
    if (!a.dump_eligible.empty()) emit(a.dump_eligible, eligible_csv.str());
    std::cout << record.dump(2) << '\n';
    if (a.timing)
        std::cerr << "proximity_ms=" << proximity_ms << " model_ms=" << model_ms << '\n';
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string spec;
    std::string out;
    unsigned threads = 0;
};

void cmd_sweep(const SweepArgs& a) {
    auto in = open_input(a.spec);
    const SweepSpec spec = sweep_from_json(parse_json(in, a.spec));
    const auto rows = run_sweep(spec, a.threads ? a.threads : default_thread_count());
    std::ostringstream text;
    write_sweep_csv(text, rows);
    emit(a.out, text.str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust ellipse/ellipsoid fitting with two-stage outlier elimination"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic labeled dataset from a config JSON");
    g->add_option("config", gen.config, "Experiment config JSON")->required();
    g->add_option("-o,--out", gen.out, "Output CSV (default stdout)");

    DetectArgs det;
    auto* d = app.add_subcommand("detect", "Label outliers and fit the model to a point CSV");
    d->add_option("data", det.data, "Point CSV: x,y[,z][,label][,stage]")->required();
    d->add_option("-o,--out", det.out, "Labels CSV output");
    d->add_option("--model-out", det.model_out, "Model JSON output");
    d->add_option("--config", det.config, "Take eligibility/refine settings from a config JSON");
    d->add_option("--stage", det.stage, "Stages to run")->check(CLI::IsMember({"proximity", "model", "both"}));
    d->add_option("--baseline", det.baseline, "Run a baseline instead of the two stages")
        ->check(CLI::IsMember({"ransac", "no_elimination"}));
    d->add_option("--gamma", det.gamma, "Quartile interval multiplier");
    d->add_option("--p", det.p, "Bandwidth rank multiplier");
    d->add_option("--eig-threshold", det.eig_threshold, "Eigenvalue eligibility bound");
    d->add_option("--hf-threshold", det.hf_threshold, "High-frequency eligibility bound");
    d->add_option("--tau-scale", det.tau_scale, "Residual threshold multiplier");
    d->add_option("--seed", det.seed, "Random seed");
    d->add_option("--k", det.ransac_k, "RANSAC trials");
    d->add_option("--ransac-threshold", det.ransac_threshold, "RANSAC inlier distance (<= 0: automatic)");
    d->add_option("--truth", det.truth, "Ground-truth labeled CSV for precision/recall");
    d->add_option("--truth-model", det.truth_model, "Ground-truth model JSON for the non-overlap ratio");
    d->add_option("--dump-spectrum", det.dump_spectrum, "Write index,eigenvalue CSV");
    d->add_option("--dump-eligible", det.dump_eligible, "Write eigenvalue,hf_measure,flagged_count CSV");
    d->add_flag("--timing", det.timing, "Print per-stage wall-clock times to stderr");

    SweepArgs sw;
    auto* s = app.add_subcommand("sweep", "Run a seeded parameter sweep into a curves CSV");
    s->add_option("spec", sw.spec, "Sweep spec JSON")->required();
    s->add_option("-o,--out", sw.out, "Output CSV (default stdout)");
    s->add_option("--threads", sw.threads, "Worker threads (default: CONIC_PURGE_THREADS or all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*g) cmd_generate(gen);
        else if (*d) cmd_detect(det);
        else if (*s) cmd_sweep(sw);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.numerical() ? kExitNumerical : kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}
