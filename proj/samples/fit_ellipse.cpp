// Generates the typical 2-D scenario, runs both stages, and prints the fit
// against the true ellipse.

#include <iostream>

#include "conic_purge/conic_purge.hpp"

using namespace conic_purge;

int main(int argc, char** argv) {
    ExperimentConfig cfg;  // a = 5, eccentricity 0.95, N = 100, M = 50
    cfg.seed = argc > 1 ? std::stoull(argv[1]) : 1;
    const auto ds = make_dataset<2>(cfg);

    const auto result = run_two_stage<2>(ds.points, cfg.eligibility, cfg.refine, cfg.seed);
    const auto& truth_model = std::get<EllipseParams>(cfg.model);
    const EllipseParams fit = ellipse_from_conic(result.fit.model);
    const DetectionMetrics m = detection_metrics(result.fit.labels, ds.truth);

    std::cout << "proximity stage flagged " << result.proximity.labels.outlier_count() << " of "
              << ds.points.size() << " points\n"
              << "model stage: " << result.fit.labels.outlier_count() << " outliers after "
              << result.fit.iterations << " iterations\n"
              << "center (" << fit.center.x() << ", " << fit.center.y() << ")  axes " << fit.a << " x " << fit.b
              << "  rotation " << fit.theta << '\n'
              << "precision " << m.precision << "  recall " << m.recall << "  non-overlap "
              << nonoverlap_ratio(fit, truth_model) << '\n';
}
