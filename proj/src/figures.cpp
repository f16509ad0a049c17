// Figure emission: a small chart model rendered twice, natively to SVG and
// through OpenCV drawing primitives to PNG. Colors per pipeline are fixed by
// pipeline_color() and therefore consistent across all figures.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "medseg/analysis.hpp"
#include "medseg/errors.hpp"
#include "medseg/metrics.hpp"

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-enum-enum-conversion"
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#pragma GCC diagnostic pop

namespace medseg {

namespace fs = std::filesystem;

namespace {

struct Chart {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;

    struct Band {
        std::string color;
        std::vector<double> x, lo, hi;
    };
    struct Series {
        std::string color;
        std::vector<double> x, y;
    };
    struct Box {
        std::string color;
        double x = 0, half = 0, lo = 0, q1 = 0, med = 0, q3 = 0, hi = 0;
    };
    struct Violin {
        std::string color;
        double x = 0, max_half = 0.35;
        std::vector<double> values;
    };
    struct Marker {
        std::string color;
        double x = 0, y = 0;
    };
    struct Tick {
        double v = 0;
        std::string label;
    };

    std::vector<Band> bands;
    std::vector<Series> series;
    std::vector<Box> boxes;
    std::vector<Violin> violins;
    std::vector<Marker> markers;
    std::vector<std::pair<std::string, std::string>> legend;  // label, color
    std::vector<Tick> xticks_override;
};

struct Range {
    double lo = 0, hi = 1;
};

void expand(Range& r, double v, bool log_axis) {
    if (log_axis && !(v > 0.0)) return;
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
}

std::pair<Range, Range> data_ranges(const Chart& c) {
    Range rx{1e300, -1e300}, ry{1e300, -1e300};
    for (const auto& b : c.bands)
        for (size_t i = 0; i < b.x.size(); ++i) {
            expand(rx, b.x[i], c.logx);
            expand(ry, b.lo[i], c.logy);
            expand(ry, b.hi[i], c.logy);
        }
    for (const auto& s : c.series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            expand(rx, s.x[i], c.logx);
            expand(ry, s.y[i], c.logy);
        }
    for (const auto& b : c.boxes) {
        expand(rx, b.x - b.half, c.logx);
        expand(rx, b.x + b.half, c.logx);
        expand(ry, b.lo, c.logy);
        expand(ry, b.hi, c.logy);
    }
    for (const auto& v : c.violins) {
        expand(rx, v.x - v.max_half, c.logx);
        expand(rx, v.x + v.max_half, c.logx);
        for (double y : v.values) expand(ry, y, c.logy);
    }
    for (const auto& m : c.markers) {
        expand(rx, m.x, c.logx);
        expand(ry, m.y, c.logy);
    }
    if (rx.lo > rx.hi) rx = {0, 1};
    if (ry.lo > ry.hi) ry = {0, 1};
    if (rx.lo == rx.hi) {
        rx.lo -= 0.5;
        rx.hi += 0.5;
    }
    if (ry.lo == ry.hi) {
        ry.lo -= ry.lo != 0.0 ? std::abs(ry.lo) * 0.1 : 0.5;
        ry.hi += ry.hi != 0.0 ? std::abs(ry.hi) * 0.1 : 0.5;
    }
    return {rx, ry};
}

double axis_pos(double v, const Range& r, bool log_axis) {
    if (log_axis) return (std::log10(v) - std::log10(r.lo)) /
                         (std::log10(r.hi) - std::log10(r.lo));
    return (v - r.lo) / (r.hi - r.lo);
}

std::vector<Chart::Tick> linear_ticks(const Range& r) {
    const double span = r.hi - r.lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    std::vector<Chart::Tick> ticks;
    const double first = std::ceil(r.lo / step) * step;
    for (double v = first; v <= r.hi + 1e-9 * span; v += step) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v == 0.0 ? 0.0 : v);
        ticks.push_back({v, buf});
    }
    return ticks;
}

std::vector<Chart::Tick> log_ticks(const Range& r) {
    std::vector<Chart::Tick> ticks;
    const int lo = static_cast<int>(std::floor(std::log10(r.lo)));
    const int hi = static_cast<int>(std::ceil(std::log10(r.hi)));
    for (int e = lo; e <= hi; ++e)
        for (double m : {1.0, 2.0, 5.0}) {
            const double v = m * std::pow(10.0, e);
            if (v < r.lo * 0.999 || v > r.hi * 1.001) continue;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%g", v);
            ticks.push_back({v, buf});
        }
    return ticks;
}

// Gaussian KDE polygon of a violin, as (offset, y) pairs down one side.
std::vector<std::pair<double, double>> violin_profile(const std::vector<double>& values,
                                                      double max_half) {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double sd = 0.0;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / std::max(1.0, n - 1.0));
    const double iqr = v[static_cast<size_t>(0.75 * (n - 1))] -
                       v[static_cast<size_t>(0.25 * (n - 1))];
    double bw = 0.9 * std::min(sd, iqr / 1.34) * std::pow(n, -0.2);
    if (!(bw > 0.0)) bw = std::max(1e-6, 0.1 * std::abs(mean) + 1e-6);

    const double lo = v.front() - 2.0 * bw, hi = v.back() + 2.0 * bw;
    std::vector<std::pair<double, double>> prof;
    double peak = 0.0;
    const int samples = 41;
    for (int i = 0; i < samples; ++i) {
        const double y = lo + (hi - lo) * static_cast<double>(i) / (samples - 1);
        double dens = 0.0;
        for (double x : v) {
            const double z = (y - x) / bw;
            dens += std::exp(-0.5 * z * z);
        }
        prof.emplace_back(dens, y);
        peak = std::max(peak, dens);
    }
    for (auto& [d, y] : prof) d = peak > 0 ? d / peak * max_half : 0.0;
    return prof;
}

std::string lighten(const std::string& hex, double keep) {
    // blend toward white: keep in (0,1], 1 = original color
    auto channel = [&](int i) {
        const int v = std::stoi(hex.substr(static_cast<size_t>(1 + 2 * i), 2), nullptr, 16);
        const int out = static_cast<int>(std::lround(255.0 - (255.0 - v) * keep));
        return std::clamp(out, 0, 255);
    };
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", channel(0), channel(1), channel(2));
    return buf;
}

// ------------------------------------------------------------------ SVG ---

class SvgWriter {
public:
    SvgWriter(const Chart& c, int width, int height) : c_(c), w_(width), h_(height) {
        std::tie(rx_, ry_) = data_ranges(c);
    }

    void write(const fs::path& path) {
        std::string s;
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w_) +
             "\" height=\"" + std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) +
             " " + std::to_string(h_) + "\">\n";
        s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

        for (const auto& b : c_.bands) {
            if (b.x.size() < 2) continue;
            std::string pts;
            for (size_t i = 0; i < b.x.size(); ++i) pts += pt(b.x[i], b.hi[i]) + " ";
            for (size_t i = b.x.size(); i-- > 0;) pts += pt(b.x[i], b.lo[i]) + " ";
            s += "<polygon points=\"" + pts + "\" fill=\"" + b.color +
                 "\" fill-opacity=\"0.3\" stroke=\"none\"/>\n";
        }
        for (const auto& se : c_.series) {
            std::string pts;
            for (size_t i = 0; i < se.x.size(); ++i) pts += pt(se.x[i], se.y[i]) + " ";
            s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + se.color +
                 "\" stroke-width=\"1.8\"/>\n";
        }
        for (const auto& b : c_.boxes) {
            const auto [x0, yq1] = xy(b.x - b.half, b.q1);
            const auto [x1, yq3] = xy(b.x + b.half, b.q3);
            const auto [xc, ylo] = xy(b.x, b.lo);
            const auto [xm, yhi] = xy(b.x, b.hi);
            const auto [xl, ymed] = xy(b.x - b.half, b.med);
            const auto [xr, ymed2] = xy(b.x + b.half, b.med);
            s += line(xc, ylo, xm, yhi, b.color, 1.0);
            s += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(yq3) + "\" width=\"" + fmt(x1 - x0) +
                 "\" height=\"" + fmt(yq1 - yq3) + "\" fill=\"" + lighten(b.color, 0.4) +
                 "\" stroke=\"" + b.color + "\"/>\n";
            s += line(xl, ymed, xr, ymed2, b.color, 2.0);
        }
        for (const auto& v : c_.violins) {
            const auto prof = violin_profile(v.values, v.max_half);
            std::string pts;
            for (const auto& [d, y] : prof) pts += pt(v.x - d, y) + " ";
            for (size_t i = prof.size(); i-- > 0;) pts += pt(v.x + prof[i].first, prof[i].second) + " ";
            s += "<polygon points=\"" + pts + "\" fill=\"" + lighten(v.color, 0.45) +
                 "\" stroke=\"" + v.color + "\"/>\n";
        }
        for (const auto& m : c_.markers) {
            const auto [x, y] = xy(m.x, m.y);
            s += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"3\" fill=\"" +
                 m.color + "\"/>\n";
        }

        s += axes();
        s += legend();
        s += "<text x=\"" + fmt(w_ / 2.0) + "\" y=\"20\" text-anchor=\"middle\" " + font(14) +
             ">" + c_.title + "</text>\n";
        s += "</svg>\n";

        std::ofstream out(path);
        if (!out) throw FormatError("cannot write figure: " + path.string());
        out << s;
    }

private:
    static std::string fmt(double v) { return format_fixed(v, 2); }
    static std::string font(int size) {
        return "font-family=\"Helvetica,Arial,sans-serif\" font-size=\"" +
               std::to_string(size) + "\"";
    }

    std::pair<double, double> xy(double x, double y) const {
        const double px = ml_ + axis_pos(x, rx_, c_.logx) * (w_ - ml_ - mr_);
        const double py = h_ - mb_ - axis_pos(y, ry_, c_.logy) * (h_ - mt_ - mb_);
        return {px, py};
    }
    std::string pt(double x, double y) const {
        const auto [px, py] = xy(x, y);
        return fmt(px) + "," + fmt(py);
    }
    static std::string line(double x0, double y0, double x1, double y1, const std::string& color,
                            double width) {
        return "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) +
               "\" y2=\"" + fmt(y1) + "\" stroke=\"" + color + "\" stroke-width=\"" +
               fmt(width) + "\"/>\n";
    }

    std::string axes() const {
        std::string s;
        s += line(ml_, h_ - mb_, w_ - mr_, h_ - mb_, "#333333", 1.0);
        s += line(ml_, mt_, ml_, h_ - mb_, "#333333", 1.0);
        const auto xticks = c_.xticks_override.empty()
                                ? (c_.logx ? log_ticks(rx_) : linear_ticks(rx_))
                                : c_.xticks_override;
        for (const auto& t : xticks) {
            const auto [px, py] = xy(t.v, ry_.lo);
            s += line(px, h_ - mb_, px, h_ - mb_ + 4, "#333333", 1.0);
            s += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(h_ - mb_ + 16) +
                 "\" text-anchor=\"middle\" " + font(10) + ">" + t.label + "</text>\n";
            (void)py;
        }
        for (const auto& t : c_.logy ? log_ticks(ry_) : linear_ticks(ry_)) {
            const double py = h_ - mb_ - axis_pos(t.v, ry_, c_.logy) * (h_ - mt_ - mb_);
            s += line(ml_ - 4, py, ml_, py, "#333333", 1.0);
            s += "<text x=\"" + fmt(ml_ - 7) + "\" y=\"" + fmt(py + 3.5) +
                 "\" text-anchor=\"end\" " + font(10) + ">" + t.label + "</text>\n";
        }
        s += "<text x=\"" + fmt((ml_ + w_ - mr_) / 2.0) + "\" y=\"" + fmt(h_ - 8.0) +
             "\" text-anchor=\"middle\" " + font(12) + ">" + c_.xlabel + "</text>\n";
        s += "<text x=\"14\" y=\"" + fmt((mt_ + h_ - mb_) / 2.0) +
             "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
             fmt((mt_ + h_ - mb_) / 2.0) + ")\" " + font(12) + ">" + c_.ylabel + "</text>\n";
        return s;
    }

    std::string legend() const {
        std::string s;
        double y = mt_ + 8;
        for (const auto& [label, color] : c_.legend) {
            const double x = w_ - mr_ - 200;
            s += line(x, y, x + 18, y, color, 2.5);
            s += "<text x=\"" + fmt(x + 24) + "\" y=\"" + fmt(y + 4) + "\" " + font(11) + ">" +
                 label + "</text>\n";
            y += 16;
        }
        return s;
    }

    const Chart& c_;
    int w_, h_;
    Range rx_, ry_;
    double ml_ = 64, mr_ = 18, mt_ = 36, mb_ = 48;
};

// ------------------------------------------------------------------ PNG ---

cv::Scalar color_bgr(const std::string& hex) {
    const int r = std::stoi(hex.substr(1, 2), nullptr, 16);
    const int g = std::stoi(hex.substr(3, 2), nullptr, 16);
    const int b = std::stoi(hex.substr(5, 2), nullptr, 16);
    return {static_cast<double>(b), static_cast<double>(g), static_cast<double>(r)};
}

class PngWriter {
public:
    PngWriter(const Chart& c, int width, int height) : c_(c), w_(width), h_(height) {
        std::tie(rx_, ry_) = data_ranges(c);
    }

    void write(const fs::path& path) {
        cv::Mat img(h_, w_, CV_8UC3, cv::Scalar(255, 255, 255));

        for (const auto& b : c_.bands) {
            if (b.x.size() < 2) continue;
            std::vector<cv::Point> poly;
            for (size_t i = 0; i < b.x.size(); ++i) poly.push_back(px(b.x[i], b.hi[i]));
            for (size_t i = b.x.size(); i-- > 0;) poly.push_back(px(b.x[i], b.lo[i]));
            cv::fillPoly(img, std::vector<std::vector<cv::Point>>{poly},
                         color_bgr(lighten(b.color, 0.3)), cv::LINE_AA);
        }
        for (const auto& se : c_.series) {
            for (size_t i = 1; i < se.x.size(); ++i)
                cv::line(img, px(se.x[i - 1], se.y[i - 1]), px(se.x[i], se.y[i]),
                         color_bgr(se.color), 2, cv::LINE_AA);
        }
        for (const auto& b : c_.boxes) {
            cv::line(img, px(b.x, b.lo), px(b.x, b.hi), color_bgr(b.color), 1, cv::LINE_AA);
            cv::rectangle(img, px(b.x - b.half, b.q3), px(b.x + b.half, b.q1),
                          color_bgr(lighten(b.color, 0.4)), cv::FILLED);
            cv::rectangle(img, px(b.x - b.half, b.q3), px(b.x + b.half, b.q1),
                          color_bgr(b.color), 1, cv::LINE_AA);
            cv::line(img, px(b.x - b.half, b.med), px(b.x + b.half, b.med), color_bgr(b.color),
                     2, cv::LINE_AA);
        }
        for (const auto& v : c_.violins) {
            const auto prof = violin_profile(v.values, v.max_half);
            std::vector<cv::Point> poly;
            for (const auto& [d, y] : prof) poly.push_back(px(v.x - d, y));
            for (size_t i = prof.size(); i-- > 0;)
                poly.push_back(px(v.x + prof[i].first, prof[i].second));
            cv::fillPoly(img, std::vector<std::vector<cv::Point>>{poly},
                         color_bgr(lighten(v.color, 0.45)), cv::LINE_AA);
            cv::polylines(img, std::vector<std::vector<cv::Point>>{poly}, true,
                          color_bgr(v.color), 1, cv::LINE_AA);
        }
        for (const auto& m : c_.markers)
            cv::circle(img, px(m.x, m.y), 3, color_bgr(m.color), cv::FILLED, cv::LINE_AA);

        draw_axes(img);
        draw_legend(img);
        cv::putText(img, c_.title, {w_ / 2 - static_cast<int>(c_.title.size()) * 4, 22},
                    cv::FONT_HERSHEY_SIMPLEX, 0.5, {30, 30, 30}, 1, cv::LINE_AA);

        if (!cv::imwrite(path.string(), img))
            throw FormatError("cannot write figure: " + path.string());
    }

private:
    cv::Point px(double x, double y) const {
        const double fx = ml_ + axis_pos(x, rx_, c_.logx) * (w_ - ml_ - mr_);
        const double fy = h_ - mb_ - axis_pos(y, ry_, c_.logy) * (h_ - mt_ - mb_);
        return {static_cast<int>(std::lround(fx)), static_cast<int>(std::lround(fy))};
    }

    void draw_axes(cv::Mat& img) const {
        const cv::Scalar axis(51, 51, 51);
        cv::line(img, {static_cast<int>(ml_), h_ - static_cast<int>(mb_)},
                 {w_ - static_cast<int>(mr_), h_ - static_cast<int>(mb_)}, axis, 1, cv::LINE_AA);
        cv::line(img, {static_cast<int>(ml_), static_cast<int>(mt_)},
                 {static_cast<int>(ml_), h_ - static_cast<int>(mb_)}, axis, 1, cv::LINE_AA);
        const auto xticks = c_.xticks_override.empty()
                                ? (c_.logx ? log_ticks(rx_) : linear_ticks(rx_))
                                : c_.xticks_override;
        for (const auto& t : xticks) {
            const cv::Point p = px(t.v, ry_.lo);
            cv::line(img, {p.x, h_ - static_cast<int>(mb_)},
                     {p.x, h_ - static_cast<int>(mb_) + 4}, axis, 1);
            cv::putText(img, t.label,
                        {p.x - static_cast<int>(t.label.size()) * 4,
                         h_ - static_cast<int>(mb_) + 18},
                        cv::FONT_HERSHEY_SIMPLEX, 0.38, axis, 1, cv::LINE_AA);
        }
        for (const auto& t : c_.logy ? log_ticks(ry_) : linear_ticks(ry_)) {
            const int py = h_ - static_cast<int>(mb_) -
                           static_cast<int>(std::lround(axis_pos(t.v, ry_, c_.logy) *
                                                        (h_ - mt_ - mb_)));
            cv::line(img, {static_cast<int>(ml_) - 4, py}, {static_cast<int>(ml_), py}, axis, 1);
            cv::putText(img, t.label,
                        {static_cast<int>(ml_) - 10 - static_cast<int>(t.label.size()) * 7, py + 4},
                        cv::FONT_HERSHEY_SIMPLEX, 0.38, axis, 1, cv::LINE_AA);
        }
        cv::putText(img, c_.xlabel, {(w_ + static_cast<int>(ml_)) / 2 - 60, h_ - 10},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
        cv::putText(img, c_.ylabel, {8, static_cast<int>(mt_) - 6}, cv::FONT_HERSHEY_SIMPLEX,
                    0.45, axis, 1, cv::LINE_AA);
    }

    void draw_legend(cv::Mat& img) const {
        int y = static_cast<int>(mt_) + 10;
        for (const auto& [label, color] : c_.legend) {
            const int x = w_ - static_cast<int>(mr_) - 230;
            cv::line(img, {x, y}, {x + 18, y}, color_bgr(color), 3, cv::LINE_AA);
            cv::putText(img, label, {x + 24, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {30, 30, 30},
                        1, cv::LINE_AA);
            y += 18;
        }
    }

    const Chart& c_;
    int w_, h_;
    Range rx_, ry_;
    double ml_ = 64, mr_ = 18, mt_ = 36, mb_ = 48;
};

void write_chart(const Chart& c, const fs::path& base, std::vector<fs::path>& files) {
    const fs::path svg = base.string() + ".svg";
    const fs::path png = base.string() + ".png";
    SvgWriter(c, 900, 600).write(svg);
    PngWriter(c, 900, 600).write(png);
    files.push_back(svg);
    files.push_back(png);
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

std::vector<fs::path> emit_figures(const std::vector<RunRecord>& records,
                                   const fs::path& out_dir) {
    if (records.empty()) throw ArgumentError("emit_figures: records are empty");
    fs::create_directories(out_dir);
    std::vector<fs::path> files;

    std::vector<const RunRecord*> done;
    for (const auto& r : records)
        if (r.status == "DONE" && r.curve.size() >= 1) done.push_back(&r);
    if (done.empty()) throw ArgumentError("emit_figures: no DONE records");

    // figures (a) and (b) use the largest subset size present, the analog of
    // full-dataset learning curves
    long max_size = 0;
    for (const auto* r : done) max_size = std::max(max_size, r->subset_size);
    std::map<std::string, std::vector<const RunRecord*>> curves_by_pipeline;
    for (const auto* r : done)
        if (r->subset_size == max_size) curves_by_pipeline[r->pipeline].push_back(r);

    {  // (a) learning curves: mean line +/- std band per pipeline
        Chart c;
        c.title = "Downstream learning curves (subset size " + std::to_string(max_size) + ")";
        c.xlabel = "fine-tuning step";
        c.ylabel = "eval IoU";
        for (const auto& [name, rs] : curves_by_pipeline) {
            const std::string color = pipeline_color(name);
            const size_t npts = rs.front()->curve.size();
            Chart::Band band;
            Chart::Series mean_line;
            band.color = color;
            mean_line.color = color;
            for (size_t i = 0; i < npts; ++i) {
                double m = 0.0, count = 0.0;
                for (const auto* r : rs)
                    if (i < r->curve.size()) {
                        m += r->curve.eval_iou[i];
                        count += 1.0;
                    }
                m /= count;
                double sd = 0.0;
                if (count > 1.5) {
                    for (const auto* r : rs)
                        if (i < r->curve.size())
                            sd += (r->curve.eval_iou[i] - m) * (r->curve.eval_iou[i] - m);
                    sd = std::sqrt(sd / (count - 1.0));
                }
                const double x = static_cast<double>(rs.front()->curve.steps[i]);
                band.x.push_back(x);
                band.lo.push_back(m - sd);
                band.hi.push_back(m + sd);
                mean_line.x.push_back(x);
                mean_line.y.push_back(m);
            }
            c.bands.push_back(std::move(band));
            c.series.push_back(std::move(mean_line));
            c.legend.emplace_back(name, color);
        }
        write_chart(c, out_dir / "learning_curves", files);
    }

    {  // (b) AUC distribution ordered by median
        Chart c;
        c.title = "Area under learning curves (eval IoU)";
        c.xlabel = "";
        c.ylabel = "curve AUC";
        const std::vector<std::string> order = auc_order_by_median(records);
        double x = 1.0;
        for (const std::string& name : order) {
            auto it = curves_by_pipeline.find(name);
            if (it == curves_by_pipeline.end()) continue;
            std::vector<double> aucs;
            for (const auto* r : it->second)
                if (r->curve.size() >= 2) aucs.push_back(curve_auc(r->curve, "eval_iou"));
            const std::string color = pipeline_color(name);
            if (aucs.size() >= 3) {
                Chart::Violin v;
                v.color = color;
                v.x = x;
                v.max_half = 0.32;
                v.values = aucs;
                c.violins.push_back(std::move(v));
            } else {
                for (double a : aucs) c.markers.push_back({color, x, a});
            }
            c.xticks_override.push_back({x, name});
            x += 1.0;
        }
        write_chart(c, out_dir / "learning_curve_auc", files);
    }

    {  // (c) final test loss vs subset size, grouped boxes, log-log
        Chart c;
        c.title = "Test loss vs annotated subset size";
        c.xlabel = "labeled slices";
        c.ylabel = "test Jaccard loss";
        c.logx = true;
        c.logy = true;
        std::map<std::string, std::map<long, std::vector<double>>> by_pipe_size;
        std::set<long> sizes;
        for (const auto* r : done) {
            by_pipe_size[r->pipeline][r->subset_size].push_back(r->final_test_loss);
            sizes.insert(r->subset_size);
        }
        const double group = static_cast<double>(by_pipe_size.size());
        double slot = 0.0;
        for (const auto& [name, per_size] : by_pipe_size) {
            const std::string color = pipeline_color(name);
            c.legend.emplace_back(name, color);
            for (const auto& [size, losses] : per_size) {
                // multiplicative x offsets keep groups readable on log axes
                const double offset = std::pow(1.13, slot - (group - 1.0) / 2.0);
                Chart::Box b;
                b.color = color;
                b.x = static_cast<double>(size) * offset;
                b.half = static_cast<double>(size) * offset * 0.05;
                std::vector<double> v = losses;
                b.lo = *std::min_element(v.begin(), v.end());
                b.hi = *std::max_element(v.begin(), v.end());
                b.q1 = quantile(v, 0.25);
                b.med = quantile(v, 0.5);
                b.q3 = quantile(v, 0.75);
                c.boxes.push_back(b);
            }
            slot += 1.0;
        }
        write_chart(c, out_dir / "test_loss_vs_size", files);
    }

    return files;
}

}  // namespace medseg
