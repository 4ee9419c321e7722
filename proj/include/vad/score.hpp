#pragma once

// Reconstruction-error regularity pipeline:
//   e(x,y,t) = |I(x,y,t) - f_W(I)(x,y,t)|          per-pixel error
//   e(t)     = sum_(x,y) e(x,y,t)                   frame error
//   cost(t)  = sum_{t'=t}^{t+T-1} e(t')             windowed cost (T terms)
//   s_a(t)   = scaled cost (minmax or the literal printed form)
//   s_r(t)   = 1 - s_a(t)                           regularity
// Frames not covered by any clip, and starts without a full window, carry NaN
// and are written as empty CSV fields. All accumulation is in double.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vad/dataio.hpp"
#include "vad/error.hpp"
#include "vad/models.hpp"

namespace vad {

enum class NormalizationMode { minmax, paper_literal };

inline std::string normalization_mode_name(NormalizationMode m) {
    return m == NormalizationMode::minmax ? "minmax" : "paper_literal";
}

inline NormalizationMode normalization_mode_from_name(const std::string& s) {
    if (s == "minmax") return NormalizationMode::minmax;
    if (s == "paper_literal") return NormalizationMode::paper_literal;
    throw ConfigError("unknown normalization mode \"" + s + "\" (expected minmax|paper_literal)");
}

struct ScoreSeries {
    std::string video;
    int window = 10;
    NormalizationMode normalization = NormalizationMode::minmax;
    std::vector<double> frame_error;  // e(t), NaN where no clip covers t
    std::vector<double> cost;         // per start index, NaN without a full window
    std::vector<double> anomaly;      // s_a, aligned with cost
    std::vector<double> regularity;   // s_r = 1 - s_a

    int n_frames() const { return static_cast<int>(frame_error.size()); }
};

inline double score_nan() { return std::numeric_limits<double>::quiet_NaN(); }

// |frame - reconstruction| per pixel.
inline std::vector<double> pixel_error(const Frame& frame, const Frame& reconstruction) {
    if (frame.height != reconstruction.height || frame.width != reconstruction.width)
        throw ShapeError("pixel_error: frame sizes differ");
    std::vector<double> map(frame.pixels.size());
    for (std::size_t i = 0; i < map.size(); ++i)
        map[i] = std::abs(static_cast<double>(frame.pixels[i]) - static_cast<double>(reconstruction.pixels[i]));
    return map;
}

inline double frame_error(const std::vector<double>& error_map) {
    double acc = 0.0;
    for (double v : error_map) acc += v;
    return acc;
}

// Exactly `window` terms starting at t.
inline double sequence_cost(const std::vector<double>& e, int t, int window) {
    if (t < 0 || t + window > static_cast<int>(e.size()))
        throw DataError("sequence_cost: start " + std::to_string(t) + " out of range for " +
                        std::to_string(e.size()) + " frames, window " + std::to_string(window));
    double acc = 0.0;
    for (int i = t; i < t + window; ++i) acc += e[static_cast<std::size_t>(i)];
    return acc;
}

// minmax: (c - min)/(max - min); paper_literal: (c - min)/max, as printed.
// Degenerate series (max == min, or max == 0 in literal mode) score zero.
inline std::vector<double> anomaly_score(const std::vector<double>& costs, NormalizationMode mode) {
    if (costs.empty()) throw DataError("anomaly_score: empty cost series");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (double c : costs) {
        if (std::isnan(c)) continue;
        any = true;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    std::vector<double> out(costs.size(), score_nan());
    if (!any) return out;
    const double denom = mode == NormalizationMode::minmax ? hi - lo : hi;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        if (std::isnan(costs[i])) continue;
        out[i] = denom > 0.0 ? (costs[i] - lo) / denom : 0.0;
    }
    return out;
}

inline std::vector<double> regularity(const std::vector<double>& anomaly) {
    std::vector<double> out(anomaly.size());
    for (std::size_t i = 0; i < anomaly.size(); ++i) out[i] = 1.0 - anomaly[i];
    return out;
}

namespace detail {

inline Frame tensor_slice_to_frame(const Tensor<float>& clip, int t) {
    const int h = clip.dim(1), w = clip.dim(2);
    Frame f;
    f.height = h;
    f.width = w;
    f.pixels.assign(static_cast<std::size_t>(h) * w, 0.0f);
    const float* p = clip.ptr() + static_cast<long long>(t) * h * w;
    std::copy(p, p + static_cast<long long>(h) * w, f.pixels.begin());
    return f;
}

}  // namespace detail

// Reconstruct sliding clips, average per-frame errors over all covering
// clips, then cost / anomaly / regularity per start. Normalization statistics
// are per video. `reconstruct_fn` maps a (T,H,W,1) clip tensor to its
// reconstruction.
template <class ReconFn>
ScoreSeries score_video_with(ReconFn&& reconstruct_fn, const std::vector<Frame>& frames, int window,
                             int stride, NormalizationMode mode, const std::string& video_id = "") {
    if (stride < 1 || stride > window)
        throw ConfigError("score_video: stride must lie in [1, window]");
    const int n = static_cast<int>(frames.size());
    ClipDataset clips = make_clips(frames, window, stride, video_id);

    std::vector<double> err_sum(static_cast<std::size_t>(n), 0.0);
    std::vector<int> err_count(static_cast<std::size_t>(n), 0);
    for (const Clip& clip : clips.clips) {
        Tensor<float> x = clip_to_tensor<float>(clip);
        Tensor<float> recon = reconstruct_fn(x);
        if (recon.shape != x.shape) throw ShapeError("score_video: reconstruction shape mismatch");
        for (int t = 0; t < window; ++t) {
            const Frame original = detail::tensor_slice_to_frame(x, t);
            const Frame rebuilt = detail::tensor_slice_to_frame(recon, t);
            err_sum[static_cast<std::size_t>(clip.start_index + t)] += frame_error(pixel_error(original, rebuilt));
            err_count[static_cast<std::size_t>(clip.start_index + t)] += 1;
        }
    }

    ScoreSeries s;
    s.video = video_id;
    s.window = window;
    s.normalization = mode;
    s.frame_error.assign(static_cast<std::size_t>(n), score_nan());
    for (int t = 0; t < n; ++t)
        if (err_count[static_cast<std::size_t>(t)] > 0)
            s.frame_error[static_cast<std::size_t>(t)] =
                err_sum[static_cast<std::size_t>(t)] / err_count[static_cast<std::size_t>(t)];

    s.cost.assign(static_cast<std::size_t>(n), score_nan());
    for (int t = 0; t + window <= n; ++t) {
        double acc = 0.0;
        bool ok = true;
        for (int i = t; i < t + window; ++i) {
            const double e = s.frame_error[static_cast<std::size_t>(i)];
            if (std::isnan(e)) {
                ok = false;
                break;
            }
            acc += e;
        }
        if (ok) s.cost[static_cast<std::size_t>(t)] = acc;
    }
    s.anomaly = anomaly_score(s.cost, mode);
    s.regularity = regularity(s.anomaly);
    return s;
}

// Model path: mean-latent reconstructions (deterministic scoring).
inline ScoreSeries score_video(ModelInstance<float>& model, const std::vector<Frame>& frames, int window,
                               int stride, NormalizationMode mode, const std::string& video_id = "") {
    return score_video_with(
        [&model](const Tensor<float>& clip) { return reconstruct(model, clip, RngMode::mean).first; },
        frames, window, stride, mode, video_id);
}

// ---------------------------------------------------------------------------
// Scores file: one row per frame; cost/s_a/s_r are empty for starts without a
// full window. Format documented in docs/formats.md.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_field(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_field(const std::string& s) {
    if (s.empty()) return score_nan();
    return std::stod(s);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline void write_scores_csv(const ScoreSeries& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scores file: " + path.string());
    out << "# video=" << s.video << " window=" << s.window
        << " normalization=" << normalization_mode_name(s.normalization) << "\n";
    out << "frame,e,cost,s_a,s_r\n";
    for (int t = 0; t < s.n_frames(); ++t) {
        out << t << ',' << detail::fmt_field(s.frame_error[static_cast<std::size_t>(t)]) << ','
            << detail::fmt_field(s.cost[static_cast<std::size_t>(t)]) << ','
            << detail::fmt_field(s.anomaly[static_cast<std::size_t>(t)]) << ','
            << detail::fmt_field(s.regularity[static_cast<std::size_t>(t)]) << "\n";
    }
}

inline ScoreSeries read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scores file: " + path.string());
    ScoreSeries s;
    s.video = path.stem().string();
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string tok;
            while (meta >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
                if (key == "video" && !value.empty()) s.video = value;
                if (key == "window") s.window = std::stoi(value);
                if (key == "normalization") s.normalization = normalization_mode_from_name(value);
            }
            continue;
        }
        if (!header_seen) {  // column header
            header_seen = true;
            continue;
        }
        const auto f = detail::split_csv(line);
        if (f.size() != 5) throw DataError("scores file " + path.string() + ": malformed row \"" + line + "\"");
        s.frame_error.push_back(detail::parse_field(f[1]));
        s.cost.push_back(detail::parse_field(f[2]));
        s.anomaly.push_back(detail::parse_field(f[3]));
        s.regularity.push_back(detail::parse_field(f[4]));
    }
    if (s.frame_error.empty()) throw DataError("scores file " + path.string() + ": no rows");
    return s;
}

}  // namespace vad
