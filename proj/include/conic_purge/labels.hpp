#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace conic_purge {

enum class Label : std::uint8_t { Inlier, Outlier };

/// Which stage decided a point's final label.
enum class Stage : std::uint8_t { Proximity, Model };

inline std::string_view to_string(Label l) { return l == Label::Inlier ? "inlier" : "outlier"; }
inline std::string_view to_string(Stage s) { return s == Stage::Proximity ? "proximity" : "model"; }

struct DetectionLabels {
    std::vector<Label> labels;
    std::vector<Stage> stages;

    static DetectionLabels all_inliers(std::size_t k, Stage stage = Stage::Proximity) {
        return {std::vector<Label>(k, Label::Inlier), std::vector<Stage>(k, stage)};
    }

    static DetectionLabels from_outlier_mask(const std::vector<bool>& outlier, Stage stage) {
        DetectionLabels d = all_inliers(outlier.size(), stage);
        for (std::size_t i = 0; i < outlier.size(); ++i)
            if (outlier[i]) d.labels[i] = Label::Outlier;
        return d;
    }

    std::size_t size() const { return labels.size(); }
    bool is_outlier(std::size_t i) const { return labels[i] == Label::Outlier; }
    bool is_inlier(std::size_t i) const { return labels[i] == Label::Inlier; }

    std::size_t outlier_count() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Outlier));
    }
    std::size_t inlier_count() const { return size() - outlier_count(); }

    std::vector<std::size_t> inlier_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < size(); ++i)
            if (is_inlier(i)) idx.push_back(i);
        return idx;
    }

    bool same_labels(const DetectionLabels& other) const { return labels == other.labels; }
};

struct DetectionMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision/recall/F1 of the outlier class. An empty denominator scores 1
/// when its counterpart is empty too, 0 otherwise.
inline DetectionMetrics detection_metrics(const DetectionLabels& predicted, const DetectionLabels& truth) {
    if (predicted.size() != truth.size())
        throw Error(ErrorCode::LengthMismatch, "predicted and true labels differ in length");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted.is_outlier(i), t = truth.is_outlier(i);
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    DetectionMetrics m;
    m.precision = (tp + fp) == 0 ? (fn == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = (tp + fn) == 0 ? (fp == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

} // namespace conic_purge
