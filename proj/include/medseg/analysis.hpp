#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/harness.hpp"
#include "medseg/seg.hpp"

namespace medseg {

// Normalized area under a learning-curve metric: trapezoidal integral over
// the step axis divided by the step span (mean height), so curves with
// different budgets are comparable.
double curve_auc(const LearningCurve& curve, const std::string& metric);
double curve_auc(const std::vector<long>& steps, const std::vector<double>& values);

struct ConvergenceResult {
    long step = 0;
    bool converged = false;
    double plateau = 0.0;  // mean of the last 10% of the curve
};

// Smallest recorded step at which the metric reaches plateau_fraction times
// the curve's own tail plateau (mean of the last 10% of points).
ConvergenceResult convergence_steps(const std::vector<long>& steps,
                                    const std::vector<double>& values,
                                    double plateau_fraction = 0.95);
ConvergenceResult convergence_steps(const LearningCurve& curve, const std::string& metric,
                                    double plateau_fraction = 0.95);

struct ScalingFit {
    double exponent = 0.0;   // alpha in error ~ c * n^-alpha
    double intercept = 0.0;  // c
    double r_squared = 0.0;
    double n_min = 0.0;
    double n_max = 0.0;
};

// Least squares on (log n, log e); alpha = -slope.
ScalingFit fit_power_law(const std::vector<double>& sizes, const std::vector<double>& errors,
                         std::optional<std::pair<double, double>> range = std::nullopt);

// Heuristic transition detector: local log-log slopes between consecutive
// points; the power-law slope is the median slope over the smallest third of
// sizes; the transition is the first consecutive pair whose local slope
// magnitude falls below slope_ratio_threshold times the power-law slope
// magnitude.
std::optional<std::pair<double, double>> detect_transition(const std::vector<double>& sizes,
                                                           const std::vector<double>& errors,
                                                           double slope_ratio_threshold = 0.5);

// Stable per-pipeline color used across all figures.
std::string pipeline_color(const std::string& pipeline);

// Pipelines ordered by median curve AUC (eval IoU), the x-order of the AUC
// distribution figure.
std::vector<std::string> auc_order_by_median(const std::vector<RunRecord>& records);

// Mean +/- std learning-curve bands per pipeline, AUC distributions ordered
// by median, and test-loss-vs-size grouped boxes on log-log axes; each as SVG
// and PNG. Returns the emitted files.
std::vector<std::filesystem::path> emit_figures(const std::vector<RunRecord>& records,
                                                const std::filesystem::path& out_dir);

// Markdown table, one row per (pipeline, size): convergence steps, AUC and
// final IoU mean/std, plus a per-pipeline power-law fit of final test loss.
std::string summary_report(const std::vector<RunRecord>& records);

}  // namespace medseg
