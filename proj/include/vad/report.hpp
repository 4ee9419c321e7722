#pragma once

// Comparison figures rendered from metrics files only, never from in-memory
// state: F1 vs. regularity threshold and precision-recall, one labeled curve
// per model. SVG output keeps report bytes deterministic.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "vad/error.hpp"
#include "vad/eval.hpp"

namespace vad {

struct CurveSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x,y), NaN points are skipped
};

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace detail

inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label, const std::vector<CurveSeries>& series) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    const double width = 640.0, height = 480.0;
    const double left = 64.0, right = 24.0, top = 44.0, bottom = 52.0;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    auto sx = [&](double v) { return left + v * plot_w; };
    auto sy = [&](double v) { return top + (1.0 - v) * plot_h; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
    svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           title + "</text>\n";

    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        svg += "<line x1=\"" + detail::svg_num(sx(v)) + "\" y1=\"" + detail::svg_num(top) + "\" x2=\"" +
               detail::svg_num(sx(v)) + "\" y2=\"" + detail::svg_num(top + plot_h) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<line x1=\"" + detail::svg_num(left) + "\" y1=\"" + detail::svg_num(sy(v)) + "\" x2=\"" +
               detail::svg_num(left + plot_w) + "\" y2=\"" + detail::svg_num(sy(v)) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        char tick[16];
        std::snprintf(tick, sizeof(tick), "%.1f", v);
        svg += "<text x=\"" + detail::svg_num(sx(v)) + "\" y=\"" + detail::svg_num(top + plot_h + 18.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + tick + "</text>\n";
        svg += "<text x=\"" + detail::svg_num(left - 8.0) + "\" y=\"" + detail::svg_num(sy(v) + 4.0) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick + "</text>\n";
    }
    svg += "<rect x=\"" + detail::svg_num(left) + "\" y=\"" + detail::svg_num(top) + "\" width=\"" +
           detail::svg_num(plot_w) + "\" height=\"" + detail::svg_num(plot_h) +
           "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + detail::svg_num(left + plot_w / 2.0) + "\" y=\"" + detail::svg_num(height - 12.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label + "</text>\n";
    svg += "<text x=\"16\" y=\"" + detail::svg_num(top + plot_h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " +
           detail::svg_num(top + plot_h / 2.0) + ")\">" + y_label + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % 6];
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (std::isnan(x) || std::isnan(y)) continue;
            if (!pts.empty()) pts += " ";
            pts += detail::svg_num(sx(x)) + "," + detail::svg_num(sy(y));
        }
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";

        const double ly = top + 16.0 + 18.0 * static_cast<double>(s);
        svg += "<line x1=\"" + detail::svg_num(left + plot_w - 150.0) + "\" y1=\"" + detail::svg_num(ly - 4.0) +
               "\" x2=\"" + detail::svg_num(left + plot_w - 126.0) + "\" y2=\"" + detail::svg_num(ly - 4.0) +
               "\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + detail::svg_num(left + plot_w - 120.0) + "\" y=\"" + detail::svg_num(ly) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + series[s].label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

struct ModelMetrics {
    std::string name;
    MetricsTable table;
};

// Writes f1_vs_threshold.svg, pr_curves.svg and summary.txt; returns the
// summary text (also what cmd_report prints).
inline std::string write_report(const std::vector<ModelMetrics>& models, const std::filesystem::path& out_dir,
                                double highlight_threshold = 0.85) {
    if (models.empty()) throw ConfigError("report: no metrics tables");
    std::filesystem::create_directories(out_dir);

    std::vector<CurveSeries> f1_series, pr_series;
    for (const auto& m : models) {
        CurveSeries f1;
        f1.label = m.name;
        for (const auto& r : m.table.rows) f1.points.emplace_back(r.threshold, r.f1);
        f1_series.push_back(std::move(f1));

        CurveSeries pr;
        pr.label = m.name;
        pr.points = pr_curve(m.table);
        pr_series.push_back(std::move(pr));
    }
    {
        std::ofstream out(out_dir / "f1_vs_threshold.svg");
        if (!out) throw DataError("cannot write f1_vs_threshold.svg");
        out << render_line_chart("F1 score vs. regularity threshold", "regularity threshold", "F1 score",
                                 f1_series);
    }
    {
        std::ofstream out(out_dir / "pr_curves.svg");
        if (!out) throw DataError("cannot write pr_curves.svg");
        out << render_line_chart("Precision-recall", "recall", "precision", pr_series);
    }

    std::string summary;
    char buf[240];
    for (const auto& m : models) {
        const auto [theta, f1] = best_f1(m.table);
        std::snprintf(buf, sizeof(buf), "%s: best F1 = %.4f at threshold %.2f", m.name.c_str(), f1, theta);
        summary += buf;
        const MetricsRow* at = nullptr;
        for (const auto& r : m.table.rows)
            if (std::abs(r.threshold - highlight_threshold) < 1e-9) at = &r;
        if (at) {
            std::snprintf(buf, sizeof(buf), "; F1 at threshold %.2f = %.4f (precision %.4f, recall %.4f)",
                          highlight_threshold, at->f1, at->precision, at->tpr);
            summary += buf;
        }
        std::snprintf(buf, sizeof(buf), "; evaluated %lld frames, excluded %lld\n", m.table.evaluated_frames,
                      m.table.excluded_frames);
        summary += buf;
    }
    std::ofstream out(out_dir / "summary.txt");
    if (!out) throw DataError("cannot write summary.txt");
    out << summary;
    return summary;
}

}  // namespace vad
