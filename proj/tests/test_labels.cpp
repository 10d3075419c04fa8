#include <gtest/gtest.h>

#include "conic_purge/labels.hpp"

using namespace conic_purge;

namespace {

DetectionLabels mask(std::initializer_list<int> outliers, std::size_t k) {
    std::vector<bool> m(k, false);
    for (int i : outliers) m[static_cast<std::size_t>(i)] = true;
    return DetectionLabels::from_outlier_mask(m, Stage::Model);
}

} // namespace

TEST(Metrics, PerfectPrediction) {
    const auto t = mask({1, 4, 7}, 10);
    const auto m = detection_metrics(t, t);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, AllInliersPredicted) {
    const auto m = detection_metrics(DetectionLabels::all_inliers(10), mask({2, 3}, 10));
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.precision, 0.0);
}

TEST(Metrics, HandCountEightOfTen) {
    // truth: 0..9 are outliers; predicted: 0..7 plus inliers 20, 21
    const auto truth = mask({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 30);
    const auto pred = mask({0, 1, 2, 3, 4, 5, 6, 7, 20, 21}, 30);
    const auto m = detection_metrics(pred, truth);
    EXPECT_DOUBLE_EQ(m.precision, 0.8);
    EXPECT_DOUBLE_EQ(m.recall, 0.8);
    EXPECT_DOUBLE_EQ(m.f1, 0.8);
}

TEST(Metrics, NoOutliersAnywhere) {
    const auto m = detection_metrics(DetectionLabels::all_inliers(5), DetectionLabels::all_inliers(5));
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
}

TEST(Metrics, LengthMismatch) {
    try {
        detection_metrics(DetectionLabels::all_inliers(5), DetectionLabels::all_inliers(6));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
}

TEST(Labels, CountsAndIndices) {
    const auto l = mask({1, 3}, 5);
    EXPECT_EQ(l.outlier_count(), 2u);
    EXPECT_EQ(l.inlier_count(), 3u);
    EXPECT_EQ(l.inlier_indices(), (std::vector<std::size_t>{0, 2, 4}));
    EXPECT_EQ(to_string(l.labels[1]), "outlier");
    EXPECT_EQ(to_string(l.stages[0]), "model");
}
