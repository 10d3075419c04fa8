#pragma once

// CSV point tables, JSON configs/models, and the small CSV reports the CLI
// writes. Numbers are printed in shortest round-trip form so that re-runs
// produce identical bytes.

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "experiment.hpp"
#include "geometry.hpp"
#include "labels.hpp"
#include "proximity_detect.hpp"
#include "spectral.hpp"
#include "synth.hpp"

namespace conic_purge {

using Json = nlohmann::ordered_json;

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline Label parse_label(std::string_view s, std::size_t line) {
    if (s == "inlier" || s == "0") return Label::Inlier;
    if (s == "outlier" || s == "1") return Label::Outlier;
    throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": bad label '" + std::string(s) + "'");
}

inline Stage parse_stage(std::string_view s, std::size_t line) {
    if (s == "proximity") return Stage::Proximity;
    if (s == "model") return Stage::Model;
    throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": bad stage '" + std::string(s) + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Point tables

/// Rows of a point CSV. Coordinates beyond `dimension` are zero.
struct PointTable {
    int dimension = 2;
    std::vector<Eigen::Vector3d> coords;
    std::optional<std::vector<Label>> labels;
    std::optional<std::vector<Stage>> stages;

    std::size_t size() const { return coords.size(); }

    template <int Dim>
    PointSet<Dim> points() const {
        if (Dim != dimension) throw Error(ErrorCode::InvalidArgument, "table dimension does not match");
        PointSet<Dim> out(coords.size());
        for (std::size_t i = 0; i < coords.size(); ++i) out[i] = coords[i].template head<Dim>();
        return out;
    }

    /// Label column as detection labels; stage tags default to `fallback`.
    DetectionLabels detection_labels(Stage fallback = Stage::Proximity) const {
        if (!labels) throw Error(ErrorCode::InvalidArgument, "table has no label column");
        DetectionLabels d{*labels, stages ? *stages : std::vector<Stage>(labels->size(), fallback)};
        return d;
    }
};

/// Reads `x,y[,z][,label][,stage]`. A header row is optional; without one
/// the columns are taken positionally as coordinates.
inline PointTable read_point_table(std::istream& in) {
    PointTable t;
    std::string raw;
    std::size_t line_no = 0;
    int col_x = 0, col_y = 1, col_z = -1, col_label = -1, col_stage = -1;
    std::size_t columns = 0;
    bool header_done = false;

    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split_fields(line);

        if (!header_done) {
            header_done = true;
            if (!detail::parse_number(fields[0])) {
                col_x = col_y = -1;
                for (std::size_t c = 0; c < fields.size(); ++c) {
                    const auto& f = fields[c];
                    const int ci = static_cast<int>(c);
                    int* slot = f == "x" ? &col_x : f == "y" ? &col_y : f == "z" ? &col_z
                              : f == "label" ? &col_label : f == "stage" ? &col_stage : nullptr;
                    if (!slot) throw Error(ErrorCode::InvalidArgument, "unknown column '" + std::string(f) + "'");
                    if (*slot >= 0) throw Error(ErrorCode::InvalidArgument, "duplicate column '" + std::string(f) + "'");
                    *slot = ci;
                }
                if (col_x < 0 || col_y < 0) throw Error(ErrorCode::InvalidArgument, "header needs x and y columns");
                if (col_stage >= 0 && col_label < 0)
                    throw Error(ErrorCode::InvalidArgument, "a stage column needs a label column");
                columns = fields.size();
                t.dimension = col_z >= 0 ? 3 : 2;
                if (col_label >= 0) t.labels.emplace();
                if (col_stage >= 0) t.stages.emplace();
                continue;
            }
            columns = fields.size();
            if (columns == 3) col_z = 2;
            else if (columns != 2)
                throw Error(ErrorCode::InvalidArgument, "headerless input needs 2 or 3 numeric columns");
            t.dimension = columns == 3 ? 3 : 2;
        }

        if (fields.size() != columns)
            throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected " +
                                                        std::to_string(columns) + " fields");
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        const int coord_cols[3] = {col_x, col_y, col_z};
        for (int d = 0; d < t.dimension; ++d) {
            const auto v = detail::parse_number(fields[static_cast<std::size_t>(coord_cols[d])]);
            if (!v || !std::isfinite(*v))
                throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": bad coordinate");
            p[d] = *v;
        }
        t.coords.push_back(p);
        if (col_label >= 0) t.labels->push_back(detail::parse_label(fields[static_cast<std::size_t>(col_label)], line_no));
        if (col_stage >= 0) t.stages->push_back(detail::parse_stage(fields[static_cast<std::size_t>(col_stage)], line_no));
    }
    return t;
}

template <int Dim>
void write_point_rows(std::ostream& out, const PointSet<Dim>& points, const DetectionLabels* labels, bool with_stage) {
    out << (Dim == 2 ? "x,y" : "x,y,z");
    if (labels) out << ",label";
    if (with_stage) out << ",stage";
    out << '\n';
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (int d = 0; d < Dim; ++d) out << (d ? "," : "") << format_number(points[i][d]);
        if (labels) out << ',' << to_string(labels->labels[i]);
        if (with_stage) out << ',' << to_string(labels->stages[i]);
        out << '\n';
    }
}

/// Ground-truth dataset: `x,y[,z],label`.
template <int Dim>
void write_dataset(std::ostream& out, const PointSet<Dim>& points, const DetectionLabels& truth) {
    write_point_rows<Dim>(out, points, &truth, false);
}

/// Detection output: `x,y[,z],label,stage`. Readable back as the initial
/// labeling of a model-only run.
template <int Dim>
void write_detection(std::ostream& out, const PointSet<Dim>& points, const DetectionLabels& labels) {
    write_point_rows<Dim>(out, points, &labels, true);
}

// ---------------------------------------------------------------------------
// Reports

inline void write_spectrum_csv(std::ostream& out, const Spectrum& s) {
    out << "index,eigenvalue\n";
    for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) out << i << ',' << format_number(s.eigenvalues[i]) << '\n';
}

inline void write_eligible_csv(std::ostream& out, const std::vector<EligibleVector>& eligible) {
    out << "eigenvalue,hf_measure,flagged_count\n";
    for (const auto& e : eligible)
        out << format_number(e.eigenvalue) << ',' << format_number(e.hf_measure) << ',' << e.flagged << '\n';
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "param_value,pipeline,mean_error,median_error,p90_error,mean_precision,mean_recall\n";
    for (const auto& r : rows)
        out << format_number(r.param_value) << ',' << to_string(r.pipeline) << ',' << format_number(r.mean_error) << ','
            << format_number(r.median_error) << ',' << format_number(r.p90_error) << ','
            << format_number(r.mean_precision) << ',' << format_number(r.mean_recall) << '\n';
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Json number_json(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);  // JSON has no inf/nan literals
}

template <typename Derived>
Json vector_json(const Eigen::MatrixBase<Derived>& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_json(v(i)));
    return a;
}

template <std::size_t N>
Json array_json(const std::array<double, N>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(number_json(x));
    return a;
}

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto a : allowed) ok = ok || it.key() == a;
        if (!ok) throw Error(ErrorCode::InvalidArgument, "unknown key '" + it.key() + "' in " + std::string(where));
    }
}

template <typename T>
void read_field(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
    }
}

template <int N>
Eigen::Matrix<double, N, 1> read_vector(const Json& j, const char* key) {
    const Json& a = j.at(key);
    if (!a.is_array() || a.size() != static_cast<std::size_t>(N))
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' needs " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        if (!a[static_cast<std::size_t>(i)].is_number())
            throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' must hold numbers");
        v[i] = a[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

} // namespace detail

inline Json to_json(const EllipseParams& e) {
    Json j;
    j["type"] = "ellipse";
    j["center"] = detail::vector_json(e.center);
    j["semi_axes"] = Json::array({detail::number_json(e.a), detail::number_json(e.b)});
    j["rotation"] = detail::number_json(e.theta);
    j["coefficients"] = detail::array_json(conic_from_ellipse(e).c);
    return j;
}

inline Json to_json(const EllipsoidParams& e) {
    Json j;
    j["type"] = "ellipsoid";
    j["center"] = detail::vector_json(e.center);
    j["semi_axes"] = detail::vector_json(e.semi_axes);
    Json r = Json::array();
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) r.push_back(detail::number_json(e.orientation(row, col)));
    j["orientation"] = r;
    j["coefficients"] = detail::array_json(quadric_from_ellipsoid(e).c);
    return j;
}

/// Fitted coefficients with their geometric reading when there is one.
inline Json to_json(const ConicCoeffs& c) {
    try {
        Json j = to_json(ellipse_from_conic(c));
        j["coefficients"] = detail::array_json(c.normalized().c);
        return j;
    } catch (const Error&) {
        return Json{{"type", "conic"}, {"coefficients", detail::array_json(c.c)}};
    }
}

inline Json to_json(const QuadricCoeffs& c) {
    try {
        Json j = to_json(ellipsoid_from_quadric(c));
        j["coefficients"] = detail::array_json(c.normalized().c);
        return j;
    } catch (const Error&) {
        return Json{{"type", "quadric"}, {"coefficients", detail::array_json(c.c)}};
    }
}

inline Json to_json(const ModelParams& m) {
    return std::visit([](const auto& p) { return to_json(p); }, m);
}

/// Ellipse: {center, semi_axes:[a,b], rotation} or {center, a, eccentricity,
/// rotation}. Ellipsoid: {center, semi_axes:[a,b,c], orientation: 9 numbers
/// row-major}. A `coefficients` field is ignored on read.
inline ModelParams model_from_json(const Json& j) {
    detail::check_keys(j, {"type", "center", "semi_axes", "rotation", "a", "eccentricity", "orientation", "coefficients"},
                       "model");
    std::string type = "ellipse";
    detail::read_field(j, "type", type);
    if (type == "ellipse") {
        EllipseParams e;
        if (j.contains("center")) e.center = detail::read_vector<2>(j, "center");
        detail::read_field(j, "rotation", e.theta);
        if (j.contains("semi_axes")) {
            const auto ab = detail::read_vector<2>(j, "semi_axes");
            e.a = ab[0];
            e.b = ab[1];
        } else {
            double a = 0.0, ecc = -1.0;
            detail::read_field(j, "a", a);
            detail::read_field(j, "eccentricity", ecc);
            e = ellipse_from_eccentricity(a, ecc, e.center, e.theta);
        }
        if (!e.valid()) throw Error(ErrorCode::InvalidArgument, "ellipse needs a >= b > 0");
        return e;
    }
    if (type == "ellipsoid") {
        EllipsoidParams e;
        if (j.contains("center")) e.center = detail::read_vector<3>(j, "center");
        if (!j.contains("semi_axes")) throw Error(ErrorCode::InvalidArgument, "ellipsoid needs semi_axes");
        e.semi_axes = detail::read_vector<3>(j, "semi_axes");
        if (j.contains("orientation")) {
            const auto r = detail::read_vector<9>(j, "orientation");
            for (int row = 0; row < 3; ++row)
                for (int col = 0; col < 3; ++col) e.orientation(row, col) = r[row * 3 + col];
        }
        if (!e.valid()) throw Error(ErrorCode::InvalidArgument, "ellipsoid needs a >= b >= c > 0 and a rotation matrix");
        return e;
    }
    throw Error(ErrorCode::InvalidArgument, "model type must be ellipse or ellipsoid");
}

inline Json to_json(const EligibilityConfig& c) {
    return Json{{"eig_threshold", c.eig_threshold},
                {"hf_threshold", c.hf_threshold},
                {"gamma", c.gamma},
                {"max_iter", c.max_iter},
                {"p", c.p},
                {"repeats", c.repeats},
                {"aggregation", c.aggregation == Aggregation::Union ? "union" : "protruding_ones"},
                {"value_resolution", c.value_resolution},
                {"min_half_width", c.min_half_width},
                {"max_flag_fraction", c.max_flag_fraction}};
}

inline EligibilityConfig eligibility_from_json(const Json& j, EligibilityConfig c = {}) {
    detail::check_keys(j, {"eig_threshold", "hf_threshold", "gamma", "max_iter", "p", "repeats", "aggregation",
                           "value_resolution", "min_half_width", "max_flag_fraction"},
                       "eligibility");
    detail::read_field(j, "eig_threshold", c.eig_threshold);
    detail::read_field(j, "hf_threshold", c.hf_threshold);
    detail::read_field(j, "gamma", c.gamma);
    detail::read_field(j, "max_iter", c.max_iter);
    detail::read_field(j, "p", c.p);
    detail::read_field(j, "repeats", c.repeats);
    detail::read_field(j, "value_resolution", c.value_resolution);
    detail::read_field(j, "min_half_width", c.min_half_width);
    detail::read_field(j, "max_flag_fraction", c.max_flag_fraction);
    if (j.contains("aggregation")) {
        std::string a;
        detail::read_field(j, "aggregation", a);
        if (a == "union") c.aggregation = Aggregation::Union;
        else if (a == "protruding_ones") c.aggregation = Aggregation::ProtrudingOnes;
        else throw Error(ErrorCode::InvalidArgument, "aggregation must be union or protruding_ones");
    }
    c.validate();
    return c;
}

inline Json to_json(const RefineConfig& c) {
    return Json{{"tau_scale", c.tau_scale},
                {"max_iter", c.max_iter},
                {"min_points", c.min_points},
                {"cycle_window", c.cycle_window},
                {"threshold_floor", c.threshold_floor}};
}

inline RefineConfig refine_from_json(const Json& j, RefineConfig c = {}) {
    detail::check_keys(j, {"tau_scale", "max_iter", "min_points", "cycle_window", "threshold_floor"}, "refine");
    detail::read_field(j, "tau_scale", c.tau_scale);
    detail::read_field(j, "max_iter", c.max_iter);
    detail::read_field(j, "min_points", c.min_points);
    detail::read_field(j, "cycle_window", c.cycle_window);
    detail::read_field(j, "threshold_floor", c.threshold_floor);
    c.validate();
    return c;
}

inline Json to_json(const ExperimentConfig& c) {
    return Json{{"model", to_json(c.model)},
                {"N", c.N},
                {"M", c.M},
                {"sigma0", c.sigma0},
                {"sigma1", c.sigma1},
                {"seed", c.seed},
                {"outlier_mode", c.outlier_mode == OutlierMode::Gaussian ? "gaussian" : "uniform"},
                {"eligibility", to_json(c.eligibility)},
                {"refine", to_json(c.refine)}};
}

inline ExperimentConfig config_from_json(const Json& j) {
    detail::check_keys(j, {"dimension", "model", "N", "M", "sigma0", "sigma1", "seed", "outlier_mode", "eligibility",
                           "refine"},
                       "config");
    ExperimentConfig c;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("dimension")) {
        int dim = 0;
        detail::read_field(j, "dimension", dim);
        if (dim != c.dimension()) throw Error(ErrorCode::InvalidArgument, "dimension does not match the model type");
    }
    detail::read_field(j, "N", c.N);
    detail::read_field(j, "M", c.M);
    detail::read_field(j, "sigma0", c.sigma0);
    detail::read_field(j, "sigma1", c.sigma1);
    detail::read_field(j, "seed", c.seed);
    if (j.contains("outlier_mode")) {
        std::string m;
        detail::read_field(j, "outlier_mode", m);
        if (m == "gaussian") c.outlier_mode = OutlierMode::Gaussian;
        else if (m == "uniform") c.outlier_mode = OutlierMode::Uniform;
        else throw Error(ErrorCode::InvalidArgument, "outlier_mode must be gaussian or uniform");
    }
    if (j.contains("eligibility")) c.eligibility = eligibility_from_json(j.at("eligibility"));
    if (j.contains("refine")) c.refine = refine_from_json(j.at("refine"));
    c.validate();
    return c;
}

inline Json to_json(const RansacConfig& c) {
    return Json{{"iterations", c.iterations}, {"inlier_threshold", c.inlier_threshold}, {"tau_scale", c.tau_scale}};
}

inline RansacConfig ransac_from_json(const Json& j) {
    detail::check_keys(j, {"iterations", "inlier_threshold", "tau_scale"}, "ransac");
    RansacConfig c;
    detail::read_field(j, "iterations", c.iterations);
    detail::read_field(j, "inlier_threshold", c.inlier_threshold);
    detail::read_field(j, "tau_scale", c.tau_scale);
    if (c.iterations < 1) throw Error(ErrorCode::InvalidArgument, "ransac iterations must be >= 1");
    if (!(c.tau_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "ransac tau_scale must be > 0");
    return c;
}

inline SweepSpec sweep_from_json(const Json& j) {
    detail::check_keys(j, {"base", "parameter", "grid", "trials", "pipelines", "ransac", "master_seed"}, "sweep spec");
    SweepSpec s;
    if (j.contains("base")) s.base = config_from_json(j.at("base"));
    detail::read_field(j, "parameter", s.parameter);
    detail::read_field(j, "grid", s.grid);
    detail::read_field(j, "trials", s.trials);
    detail::read_field(j, "master_seed", s.master_seed);
    if (j.contains("pipelines")) {
        std::vector<std::string> names;
        detail::read_field(j, "pipelines", names);
        s.pipelines.clear();
        for (const auto& n : names) s.pipelines.push_back(pipeline_from_string(n));
    }
    if (j.contains("ransac")) s.ransac = ransac_from_json(j.at("ransac"));
    if (s.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (s.pipelines.empty()) throw Error(ErrorCode::InvalidArgument, "no pipelines requested");
    // Catch a bad parameter name or grid value before any work is done.
    for (double v : s.grid) {
        ExperimentConfig probe = s.base;
        apply_parameter(probe, s.parameter, v);
        probe.validate();
    }
    return s;
}

inline Json parse_json(std::istream& in, std::string_view what) {
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": " + e.what());
    }
}

} // namespace conic_purge
