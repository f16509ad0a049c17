#include "medseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "medseg/errors.hpp"
#include "medseg/metrics.hpp"

namespace medseg {

namespace {

const std::vector<double>& curve_metric(const LearningCurve& curve, const std::string& metric) {
    if (metric == "train_loss") return curve.train_loss;
    if (metric == "eval_iou") return curve.eval_iou;
    if (metric == "eval_loss") return curve.eval_loss;
    throw ArgumentError("unknown curve metric: " + metric);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double curve_auc(const std::vector<long>& steps, const std::vector<double>& values) {
    if (steps.size() != values.size()) throw ArgumentError("curve_auc: length mismatch");
    if (steps.size() < 2) throw ArgumentError("curve_auc: need >= 2 points");
    double integral = 0.0;
    for (size_t i = 1; i < steps.size(); ++i) {
        const double dx = static_cast<double>(steps[i] - steps[i - 1]);
        if (dx <= 0) throw ArgumentError("curve_auc: steps must be strictly increasing");
        integral += 0.5 * (values[i] + values[i - 1]) * dx;
    }
    const double span = static_cast<double>(steps.back() - steps.front());
    return integral / span;
}

double curve_auc(const LearningCurve& curve, const std::string& metric) {
    return curve_auc(curve.steps, curve_metric(curve, metric));
}

ConvergenceResult convergence_steps(const std::vector<long>& steps,
                                    const std::vector<double>& values, double plateau_fraction) {
    if (steps.empty() || steps.size() != values.size())
        throw ArgumentError("convergence_steps: empty or mismatched curve");
    const size_t n = steps.size();
    const size_t tail = std::max<size_t>(1, static_cast<size_t>(
                                                std::ceil(0.1 * static_cast<double>(n))));
    double plateau = 0.0;
    for (size_t i = n - tail; i < n; ++i) plateau += values[i];
    plateau /= static_cast<double>(tail);

    ConvergenceResult r;
    r.plateau = plateau;
    const double threshold = plateau_fraction * plateau;
    for (size_t i = 0; i < n; ++i) {
        if (values[i] >= threshold) {
            r.step = steps[i];
            r.converged = true;
            return r;
        }
    }
    r.step = steps.back();
    r.converged = false;
    return r;
}

ConvergenceResult convergence_steps(const LearningCurve& curve, const std::string& metric,
                                    double plateau_fraction) {
    return convergence_steps(curve.steps, curve_metric(curve, metric), plateau_fraction);
}

ScalingFit fit_power_law(const std::vector<double>& sizes, const std::vector<double>& errors,
                         std::optional<std::pair<double, double>> range) {
    if (sizes.size() != errors.size()) throw ArgumentError("fit_power_law: length mismatch");
    std::vector<double> lx, ly;
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (range && (sizes[i] < range->first || sizes[i] > range->second)) continue;
        if (!(sizes[i] > 0.0) || !(errors[i] > 0.0))
            throw ArgumentError("fit_power_law: sizes and errors must be positive");
        lx.push_back(std::log(sizes[i]));
        ly.push_back(std::log(errors[i]));
    }
    if (lx.size() < 2) throw ArgumentError("fit_power_law: need >= 2 in-range points");

    const double n = static_cast<double>(lx.size());
    const double mx = mean_of(lx), my = mean_of(ly);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw ArgumentError("fit_power_law: sizes are all equal");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;

    ScalingFit fit;
    fit.exponent = -slope;
    fit.intercept = std::exp(intercept);
    if (syy == 0.0) {
        fit.r_squared = 1.0;  // exactly flat data is fit exactly by the flat line
    } else {
        double ss_res = 0.0;
        for (size_t i = 0; i < lx.size(); ++i) {
            const double pred = intercept + slope * lx[i];
            ss_res += (ly[i] - pred) * (ly[i] - pred);
        }
        fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    }
    auto [mn, mxel] = std::minmax_element(sizes.begin(), sizes.end());
    fit.n_min = range ? range->first : *mn;
    fit.n_max = range ? range->second : *mxel;
    (void)n;
    return fit;
}

std::optional<std::pair<double, double>> detect_transition(const std::vector<double>& sizes,
                                                           const std::vector<double>& errors,
                                                           double slope_ratio_threshold) {
    if (sizes.size() != errors.size()) throw ArgumentError("detect_transition: length mismatch");
    const size_t n = sizes.size();
    if (n < 4) throw ArgumentError("detect_transition: need >= 4 points");
    for (size_t i = 1; i < n; ++i)
        if (!(sizes[i] > sizes[i - 1]))
            throw ArgumentError("detect_transition: sizes must be sorted ascending");
    for (size_t i = 0; i < n; ++i)
        if (!(sizes[i] > 0.0) || !(errors[i] > 0.0))
            throw ArgumentError("detect_transition: sizes and errors must be positive");

    std::vector<double> slopes(n - 1);
    for (size_t i = 0; i + 1 < n; ++i)
        slopes[i] = (std::log(errors[i + 1]) - std::log(errors[i])) /
                    (std::log(sizes[i + 1]) - std::log(sizes[i]));

    // reference slope from the smallest third of the size grid
    const size_t head = std::max<size_t>(1, (n + 2) / 3 - 1);  // slopes among first ceil(n/3) pts
    std::vector<double> head_slopes(slopes.begin(),
                                    slopes.begin() + static_cast<long>(std::min(head, n - 1)));
    const double ref = std::abs(median_of(head_slopes));
    if (ref == 0.0) return std::nullopt;

    for (size_t i = 0; i + 1 < n; ++i) {
        if (std::abs(slopes[i]) < slope_ratio_threshold * ref)
            return std::make_pair(sizes[i], sizes[i + 1]);
    }
    return std::nullopt;
}

std::string pipeline_color(const std::string& pipeline) {
    static const std::map<std::string, std::string> palette = {
        {"random-init", "#7f7f7f"},
        {"sup-imagenet", "#1f77b4"},
        {"byol-imagenet", "#ff7f0e"},
        {"byol-domain", "#2ca02c"},
        {"sup-imagenet+byol-domain", "#d62728"},
        {"byol-imagenet+byol-domain", "#9467bd"},
    };
    if (auto it = palette.find(pipeline); it != palette.end()) return it->second;
    // stable fallback (epoch-<k> ablation keys etc.)
    static const char* cycle[] = {"#8c564b", "#e377c2", "#17becf", "#bcbd22",
                                  "#aec7e8", "#98df8a", "#ff9896", "#c5b0d5"};
    return cycle[fnv1a64(pipeline) % 8];
}

std::vector<std::string> auc_order_by_median(const std::vector<RunRecord>& records) {
    std::map<std::string, std::vector<double>> aucs;
    for (const auto& r : records) {
        if (r.status != "DONE" || r.curve.size() < 2) continue;
        aucs[r.pipeline].push_back(curve_auc(r.curve, "eval_iou"));
    }
    std::vector<std::pair<double, std::string>> med;
    for (auto& [name, vals] : aucs) med.emplace_back(median_of(vals), name);
    std::sort(med.begin(), med.end());
    std::vector<std::string> out;
    for (auto& [m, name] : med) out.push_back(name);
    return out;
}

namespace {

struct PipelineGroup {
    std::vector<const RunRecord*> records;  // DONE only
};

std::map<std::string, PipelineGroup> group_by_pipeline(const std::vector<RunRecord>& records) {
    std::map<std::string, PipelineGroup> groups;
    for (const auto& r : records)
        if (r.status == "DONE") groups[r.pipeline].records.push_back(&r);
    return groups;
}

}  // namespace

std::string summary_report(const std::vector<RunRecord>& records) {
    std::string out;
    out += "| pipeline | subset size | runs | conv. steps (mean) | AUC(eval IoU) mean±std | "
           "final test IoU mean±std | final test loss mean±std |\n";
    out += "|---|---|---|---|---|---|---|\n";

    // deterministic ordering: (pipeline, size)
    std::map<std::pair<std::string, long>, std::vector<const RunRecord*>> cells;
    for (const auto& r : records)
        if (r.status == "DONE") cells[{r.pipeline, r.subset_size}].push_back(&r);

    for (const auto& [key, rs] : cells) {
        std::vector<double> aucs, ious, losses, convs;
        for (const RunRecord* r : rs) {
            if (r->curve.size() >= 2) {
                aucs.push_back(curve_auc(r->curve, "eval_iou"));
                convs.push_back(static_cast<double>(
                    convergence_steps(r->curve, "eval_iou").step));
            }
            ious.push_back(r->final_test_iou);
            losses.push_back(r->final_test_loss);
        }
        out += "| " + key.first + " | " + std::to_string(key.second) + " | " +
               std::to_string(rs.size()) + " | " + format_fixed(mean_of(convs), 1) + " | " +
               format_fixed(mean_of(aucs), 4) + " ± " + format_fixed(std_of(aucs), 4) + " | " +
               format_fixed(mean_of(ious), 4) + " ± " + format_fixed(std_of(ious), 4) + " | " +
               format_fixed(mean_of(losses), 4) + " ± " + format_fixed(std_of(losses), 4) +
               " |\n";
    }

    // per-pipeline scaling fit over subset sizes (needs >= 2 distinct sizes)
    auto groups = group_by_pipeline(records);
    std::string fits;
    for (const auto& [name, g] : groups) {
        std::map<long, std::vector<double>> by_size;
        for (const RunRecord* r : g.records)
            by_size[r->subset_size].push_back(r->final_test_loss);
        if (by_size.size() < 2) continue;
        std::vector<double> sizes, errs;
        bool positive = true;
        for (auto& [size, vals] : by_size) {
            const double m = mean_of(vals);
            if (!(m > 0.0)) positive = false;
            sizes.push_back(static_cast<double>(size));
            errs.push_back(m);
        }
        if (!positive) continue;
        const ScalingFit fit = fit_power_law(sizes, errs);
        fits += "- " + name + ": test loss ≈ " + format_fixed(fit.intercept, 4) + " · n^-" +
                format_fixed(fit.exponent, 3) + " (r² = " + format_fixed(fit.r_squared, 3) +
                ")\n";
    }
    if (!fits.empty()) out += "\nPower-law fits (final test loss vs subset size):\n" + fits;
    return out;
}

}  // namespace medseg
