#pragma once

// Threshold sweeps against frame-level ground truth. Anomalous is the positive
// class; a frame is predicted anomalous iff s_r < theta (ties count as normal).
// Scores are indexed by window start and mapped to frames via the start frame;
// frames without a full scoring window are excluded and counted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "vad/dataio.hpp"
#include "vad/error.hpp"
#include "vad/score.hpp"

namespace vad {

struct ConfusionCounts {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline ConfusionCounts confusion_at_threshold(const std::vector<double>& s_r,
                                              const std::vector<std::uint8_t>& anomalous, double theta) {
    if (s_r.size() != anomalous.size())
        throw DataError("confusion_at_threshold: " + std::to_string(s_r.size()) + " scores vs " +
                        std::to_string(anomalous.size()) + " labels");
    ConfusionCounts c;
    for (std::size_t i = 0; i < s_r.size(); ++i) {
        const bool predicted = s_r[i] < theta;
        if (anomalous[i])
            (predicted ? c.tp : c.fn) += 1;
        else
            (predicted ? c.fp : c.tn) += 1;
    }
    return c;
}

struct MetricsRow {
    double threshold = 0.0;
    long long tp = 0, fp = 0, tn = 0, fn = 0;
    double fpr = 0.0, tpr = 0.0, precision = 0.0, f1 = 0.0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
    long long evaluated_frames = 0;
    long long excluded_frames = 0;
};

inline MetricsRow metrics_row(double theta, const ConfusionCounts& c) {
    MetricsRow r;
    r.threshold = theta;
    r.tp = c.tp;
    r.fp = c.fp;
    r.tn = c.tn;
    r.fn = c.fn;
    r.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    r.tpr = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    r.fpr = (c.fp + c.tn) > 0 ? static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn) : 0.0;
    r.f1 = (r.precision + r.tpr) > 0.0 ? 2.0 * r.precision * r.tpr / (r.precision + r.tpr) : 0.0;
    return r;
}

inline MetricsTable sweep(const std::vector<double>& s_r, const std::vector<std::uint8_t>& anomalous,
                          const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("sweep: empty threshold grid");
    MetricsTable t;
    t.evaluated_frames = static_cast<long long>(s_r.size());
    for (double theta : grid) t.rows.push_back(metrics_row(theta, confusion_at_threshold(s_r, anomalous, theta)));
    return t;
}

// 0.00 .. 1.00 step 0.01.
inline std::vector<double> default_threshold_grid() {
    std::vector<double> g;
    g.reserve(101);
    for (int i = 0; i <= 100; ++i) g.push_back(static_cast<double>(i) / 100.0);
    return g;
}

inline std::vector<double> threshold_grid(double start, double stop, double step) {
    if (!(step > 0.0) || stop < start) throw ConfigError("bad threshold grid");
    std::vector<double> g;
    for (int i = 0;; ++i) {
        const double v = start + i * step;
        if (v > stop + 1e-12) break;
        g.push_back(std::min(v, stop));
    }
    return g;
}

// (recall, precision) pairs sorted by recall; duplicates collapse.
inline std::vector<std::pair<double, double>> pr_curve(const MetricsTable& t) {
    if (t.rows.empty()) throw DataError("pr_curve: empty metrics table");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(t.rows.size());
    for (const auto& r : t.rows) pts.emplace_back(r.tpr, r.precision);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

// Best row by F1; ties break toward the smaller threshold.
inline std::pair<double, double> best_f1(const MetricsTable& t) {
    if (t.rows.empty()) throw DataError("best_f1: empty metrics table");
    const MetricsRow* best = &t.rows.front();
    for (const auto& r : t.rows)
        if (r.f1 > best->f1 || (r.f1 == best->f1 && r.threshold < best->threshold)) best = &r;
    return {best->threshold, best->f1};
}

// ---------------------------------------------------------------------------
// Pairing scores with ground truth
// ---------------------------------------------------------------------------

struct EvalSeries {
    std::vector<double> s_r;
    std::vector<std::uint8_t> anomalous;
    long long excluded = 0;
};

// One (score, label) pair per frame that is a valid window start.
inline EvalSeries collect_eval_frames(const ScoreSeries& scores, const FrameLabels& labels) {
    labels.validate_against_length(scores.n_frames());
    EvalSeries out;
    for (int t = 0; t < scores.n_frames(); ++t) {
        const double r = scores.regularity[static_cast<std::size_t>(t)];
        if (std::isnan(r)) {
            out.excluded += 1;
            continue;
        }
        out.s_r.push_back(r);
        out.anomalous.push_back(labels.frame_is_anomalous(t) ? 1 : 0);
    }
    return out;
}

inline void append_eval_series(EvalSeries& into, const EvalSeries& from) {
    into.s_r.insert(into.s_r.end(), from.s_r.begin(), from.s_r.end());
    into.anomalous.insert(into.anomalous.end(), from.anomalous.begin(), from.anomalous.end());
    into.excluded += from.excluded;
}

// ---------------------------------------------------------------------------
// Files (formats documented in docs/formats.md)
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const MetricsTable& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics file: " + path.string());
    out << "# evaluated=" << t.evaluated_frames << " excluded=" << t.excluded_frames << "\n";
    out << "threshold,tp,fp,tn,fn,fpr,tpr,precision,f1\n";
    char buf[240];
    for (const auto& r : t.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%lld,%lld,%lld,%lld,%.17g,%.17g,%.17g,%.17g\n", r.threshold,
                      r.tp, r.fp, r.tn, r.fn, r.fpr, r.tpr, r.precision, r.f1);
        out << buf;
    }
}

inline MetricsTable read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metrics file: " + path.string());
    MetricsTable t;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::sscanf(line.c_str(), "# evaluated=%lld excluded=%lld", &t.evaluated_frames,
                        &t.excluded_frames);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto f = detail::split_csv(line);
        if (f.size() != 9) throw DataError("metrics file " + path.string() + ": malformed row \"" + line + "\"");
        MetricsRow r;
        r.threshold = std::stod(f[0]);
        r.tp = std::stoll(f[1]);
        r.fp = std::stoll(f[2]);
        r.tn = std::stoll(f[3]);
        r.fn = std::stoll(f[4]);
        r.fpr = std::stod(f[5]);
        r.tpr = std::stod(f[6]);
        r.precision = std::stod(f[7]);
        r.f1 = std::stod(f[8]);
        t.rows.push_back(r);
    }
    if (t.rows.empty()) throw DataError("metrics file " + path.string() + ": no rows");
    return t;
}

inline void write_pr_csv(const std::vector<std::pair<double, double>>& pts,
                         const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write PR file: " + path.string());
    out << "recall,precision\n";
    char buf[96];
    for (const auto& [recall, precision] : pts) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", recall, precision);
        out << buf;
    }
}

}  // namespace vad
