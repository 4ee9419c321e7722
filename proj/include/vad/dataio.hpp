#pragma once

// Frame-directory videos, frame labels and the synthetic sprite generator.
// A video is a directory of still images, frame order = lexicographic filename
// order. Synthetic output uses the same layout, so real and synthetic data
// flow through one loading path.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vad/error.hpp"
#include "vad/rng.hpp"
#include "vad/tensor.hpp"

namespace vad {

struct Frame {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // row-major, intensities in [0,1]

    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct Clip {
    std::vector<Frame> frames;
    int start_index = 0;
};

struct ClipDataset {
    std::vector<Clip> clips;
    std::string source;
    int window = 10;
    int stride = 1;
};

struct FrameLabels {
    std::string video;
    std::vector<std::array<int, 2>> anomalous_ranges;  // inclusive [start,end], 0-based, sorted

    bool frame_is_anomalous(int i) const {
        for (const auto& r : anomalous_ranges)
            if (i >= r[0] && i <= r[1]) return true;
        return false;
    }

    void validate() const {
        int prev_end = -1;
        for (const auto& r : anomalous_ranges) {
            if (r[0] < 0 || r[1] < r[0])
                throw DataError("labels for \"" + video + "\": bad range [" + std::to_string(r[0]) + "," +
                                std::to_string(r[1]) + "]");
            if (r[0] <= prev_end)
                throw DataError("labels for \"" + video + "\": range [" + std::to_string(r[0]) + "," +
                                std::to_string(r[1]) + "] overlaps or is out of order");
            prev_end = r[1];
        }
    }

    void validate_against_length(int n_frames) const {
        validate();
        for (const auto& r : anomalous_ranges)
            if (r[1] >= n_frames)
                throw DataError("labels for \"" + video + "\": range end " + std::to_string(r[1]) +
                                " outside video of " + std::to_string(n_frames) + " frames");
    }
};

enum class AnomalyKind { fast_sprite, large_sprite, reversed_direction };

inline std::string anomaly_kind_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::fast_sprite: return "fast_sprite";
        case AnomalyKind::large_sprite: return "large_sprite";
        case AnomalyKind::reversed_direction: return "reversed_direction";
    }
    return "?";
}

inline AnomalyKind anomaly_kind_from_name(const std::string& s) {
    if (s == "fast_sprite") return AnomalyKind::fast_sprite;
    if (s == "large_sprite") return AnomalyKind::large_sprite;
    if (s == "reversed_direction") return AnomalyKind::reversed_direction;
    throw ConfigError("unknown anomaly kind \"" + s +
                      "\" (expected fast_sprite|large_sprite|reversed_direction)");
}

struct SynthConfig {
    int n_videos = 4;
    int frames_per_video = 100;
    int frame_h = 64, frame_w = 64;
    double normal_speed = 2.0;  // pixels per frame
    std::vector<AnomalyKind> anomaly_kinds = {AnomalyKind::fast_sprite, AnomalyKind::large_sprite,
                                              AnomalyKind::reversed_direction};
    double anomaly_fraction = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_videos < 1) throw ConfigError("synth: n_videos must be >= 1");
        if (frames_per_video < 1) throw ConfigError("synth: frames_per_video must be >= 1");
        if (frame_h < 16 || frame_w < 16) throw ConfigError("synth: frame_size must be at least 16x16");
        if (!(normal_speed > 0.0)) throw ConfigError("synth: normal_speed must be positive");
        if (anomaly_fraction < 0.0 || anomaly_fraction > 1.0)
            throw ConfigError("synth: anomaly_fraction must be in [0,1]");
        if (anomaly_fraction > 0.0 && anomaly_kinds.empty())
            throw ConfigError("synth: anomaly_fraction > 0 requires at least one anomaly kind");
    }
};

struct SynthVideo {
    std::string id;
    std::vector<Frame> frames;
    FrameLabels labels;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

// Decode to grayscale [0,1]: divide by the format's max value, luma weights
// 0.299/0.587/0.114 for color inputs.
inline cv::Mat1f decode_gray(const std::filesystem::path& file) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot decode image: " + file.string());

    double max_value = 0.0;
    switch (raw.depth()) {
        case CV_8U: max_value = 255.0; break;
        case CV_16U: max_value = 65535.0; break;
        default:
            throw DataError("unsupported pixel depth in " + file.string() + " (expected 8- or 16-bit)");
    }
    cv::Mat as_float;
    raw.convertTo(as_float, CV_32F, 1.0 / max_value);

    switch (as_float.channels()) {
        case 1:
            return as_float;
        case 3:
        case 4: {
            std::vector<cv::Mat1f> ch;
            cv::split(as_float, ch);  // BGR(A)
            return 0.114f * ch[0] + 0.587f * ch[1] + 0.299f * ch[2];
        }
        default:
            throw DataError("unsupported channel count (" + std::to_string(as_float.channels()) + ") in " +
                            file.string());
    }
}

}  // namespace detail

// Frames sorted by lexicographic filename; bilinear resize to (resize_h, resize_w).
inline std::vector<Frame> load_frame_dir(const std::filesystem::path& dir, int resize_h, int resize_w) {
    if (resize_h < 8 || resize_w < 8) throw ConfigError("resize target must be at least 8x8");
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    if (files.empty()) throw DataError("no frames in directory: " + dir.string());

    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (const auto& file : files) {
        cv::Mat1f gray = detail::decode_gray(file);
        if (gray.rows != resize_h || gray.cols != resize_w)
            cv::resize(gray, gray, cv::Size(resize_w, resize_h), 0.0, 0.0, cv::INTER_LINEAR);
        Frame f;
        f.height = resize_h;
        f.width = resize_w;
        f.pixels.assign(static_cast<std::size_t>(resize_h) * resize_w, 0.0f);
        for (int y = 0; y < resize_h; ++y)
            for (int x = 0; x < resize_w; ++x)
                f.pixels[static_cast<std::size_t>(y) * resize_w + x] =
                    std::clamp(gray(y, x), 0.0f, 1.0f);
        frames.push_back(std::move(f));
    }
    return frames;
}

// 8-bit binary PGM, deterministic bytes for identical frames.
inline void write_frame_dir(const std::filesystem::path& dir, const std::vector<Frame>& frames) {
    std::filesystem::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        std::snprintf(name, sizeof(name), "f%05zu.pgm", i);
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw DataError("cannot write frame file in " + dir.string());
        out << "P5\n" << f.width << " " << f.height << "\n255\n";
        for (float p : f.pixels)
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f))));
    }
}

// Sliding windows at starts 0, s, 2s, ...; count = floor((n-T)/s) + 1.
inline ClipDataset make_clips(const std::vector<Frame>& frames, int window, int stride,
                              std::string source = "") {
    if (window < 1) throw ConfigError("make_clips: window must be >= 1");
    if (stride < 1) throw ConfigError("make_clips: stride must be >= 1");
    const int n = static_cast<int>(frames.size());
    if (n < window)
        throw DataError("make_clips: need at least " + std::to_string(window) + " frames, have " +
                        std::to_string(n));
    ClipDataset ds;
    ds.source = std::move(source);
    ds.window = window;
    ds.stride = stride;
    for (int start = 0; start + window <= n; start += stride) {
        Clip c;
        c.start_index = start;
        c.frames.assign(frames.begin() + start, frames.begin() + start + window);
        ds.clips.push_back(std::move(c));
    }
    return ds;
}

inline ClipDataset concat_clips(std::vector<ClipDataset> parts) {
    ClipDataset all;
    all.source = "merged";
    for (auto& p : parts) {
        if (all.clips.empty()) {
            all.window = p.window;
            all.stride = p.stride;
        }
        for (auto& c : p.clips) all.clips.push_back(std::move(c));
    }
    return all;
}

// ---------------------------------------------------------------------------
// Labels file (JSON; schema documented in docs/formats.md)
// ---------------------------------------------------------------------------

inline std::vector<FrameLabels> load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("labels file " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "vad-labels")
        throw DataError("labels file " + path.string() + ": missing format marker \"vad-labels\"");
    std::vector<FrameLabels> out;
    for (const auto& v : j.at("videos")) {
        FrameLabels l;
        l.video = v.at("id").get<std::string>();
        for (const auto& r : v.at("ranges")) {
            if (!r.is_array() || r.size() != 2)
                throw DataError("labels for \"" + l.video + "\": ranges must be [start,end] pairs");
            l.anomalous_ranges.push_back({r[0].get<int>(), r[1].get<int>()});
        }
        l.validate();
        out.push_back(std::move(l));
    }
    return out;
}

inline void save_labels(const std::vector<FrameLabels>& labels, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "vad-labels";
    j["version"] = 1;
    j["videos"] = nlohmann::json::array();
    for (const auto& l : labels) {
        nlohmann::json v;
        v["id"] = l.video;
        v["ranges"] = nlohmann::json::array();
        for (const auto& r : l.anomalous_ranges) v["ranges"].push_back({r[0], r[1]});
        j["videos"].push_back(std::move(v));
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write labels file: " + path.string());
    out << j.dump(2) << "\n";
}

inline const FrameLabels& find_labels(const std::vector<FrameLabels>& labels, const std::string& video) {
    for (const auto& l : labels)
        if (l.video == video) return l;
    throw DataError("no labels for video \"" + video + "\"");
}

// ---------------------------------------------------------------------------
// Synthetic videos: a bright square translating on a black background. During
// an anomalous segment the sprite moves 3x faster, doubles its side, or
// reverses direction. Positions clamp at the borders (the velocity component
// reflects so motion continues); nothing wraps.
// ---------------------------------------------------------------------------

inline std::vector<SynthVideo> synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int h = cfg.frame_h, w = cfg.frame_w;
    const int side = std::max(2, std::min(h, w) / 8);

    std::vector<SynthVideo> out;
    out.reserve(static_cast<std::size_t>(cfg.n_videos));
    for (int v = 0; v < cfg.n_videos; ++v) {
        SynthVideo video;
        char id[16];
        std::snprintf(id, sizeof(id), "v%03d", v);
        video.id = id;
        video.labels.video = id;

        double px = rng.uniform(0.0, static_cast<double>(w - side));
        double py = rng.uniform(0.0, static_cast<double>(h - side));
        const double angle = rng.uniform(0.0, 6.283185307179586);
        double vx = cfg.normal_speed * std::cos(angle);
        double vy = cfg.normal_speed * std::sin(angle);

        const int anom_len = static_cast<int>(std::lround(cfg.anomaly_fraction * cfg.frames_per_video));
        int anom_start = -1;
        AnomalyKind kind = AnomalyKind::fast_sprite;
        if (anom_len > 0) {
            anom_start = static_cast<int>(rng.uniform_int(0, cfg.frames_per_video - anom_len));
            kind = cfg.anomaly_kinds[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<long long>(cfg.anomaly_kinds.size()) - 1))];
            video.labels.anomalous_ranges.push_back({anom_start, anom_start + anom_len - 1});
        }

        video.frames.reserve(static_cast<std::size_t>(cfg.frames_per_video));
        for (int t = 0; t < cfg.frames_per_video; ++t) {
            const bool anomalous = anom_len > 0 && t >= anom_start && t < anom_start + anom_len;
            int eff_side = side;
            double speed_mult = 1.0;
            if (anomalous) {
                switch (kind) {
                    case AnomalyKind::fast_sprite: speed_mult = 3.0; break;
                    case AnomalyKind::large_sprite: eff_side = 2 * side; break;
                    case AnomalyKind::reversed_direction: speed_mult = -1.0; break;
                }
            }

            Frame f;
            f.height = h;
            f.width = w;
            f.pixels.assign(static_cast<std::size_t>(h) * w, 0.0f);
            const int ix = static_cast<int>(std::lround(px));
            const int iy = static_cast<int>(std::lround(py));
            for (int y = std::max(0, iy); y < std::min(h, iy + eff_side); ++y)
                for (int x = std::max(0, ix); x < std::min(w, ix + eff_side); ++x)
                    f.at(y, x) = 1.0f;
            video.frames.push_back(std::move(f));

            px += speed_mult * vx;
            py += speed_mult * vy;
            const double hi_x = static_cast<double>(w - eff_side);
            const double hi_y = static_cast<double>(h - eff_side);
            if (px < 0.0) { px = 0.0; vx = -vx; }
            if (px > hi_x) { px = hi_x; vx = -vx; }
            if (py < 0.0) { py = 0.0; vy = -vy; }
            if (py > hi_y) { py = hi_y; vy = -vy; }
        }
        out.push_back(std::move(video));
    }
    return out;
}

// Writes one directory per video plus labels.json at the root.
inline void write_synth_dataset(const std::vector<SynthVideo>& videos, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<FrameLabels> labels;
    for (const auto& v : videos) {
        write_frame_dir(dir / v.id, v.frames);
        labels.push_back(v.labels);
    }
    save_labels(labels, dir / "labels.json");
}

// Sorted list of video subdirectories under a dataset root.
inline std::vector<std::filesystem::path> list_video_dirs(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + root.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("no video subdirectories in " + root.string());
    return dirs;
}

// ---------------------------------------------------------------------------
// Tensor bridging
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> clip_to_tensor(const Clip& clip) {
    const int t_len = static_cast<int>(clip.frames.size());
    const int h = clip.frames.at(0).height, w = clip.frames.at(0).width;
    Tensor<S> x({t_len, h, w, 1});
    S* p = x.ptr();
    for (const Frame& f : clip.frames) {
        if (f.height != h || f.width != w) throw ShapeError("clip frames disagree on size");
        for (float v : f.pixels) *p++ = static_cast<S>(v);
    }
    return x;
}

template <class S>
Tensor<S> clips_to_batch(const std::vector<const Clip*>& clips) {
    if (clips.empty()) throw ShapeError("empty batch");
    const int t_len = static_cast<int>(clips[0]->frames.size());
    const int h = clips[0]->frames.at(0).height, w = clips[0]->frames.at(0).width;
    Tensor<S> x({static_cast<int>(clips.size()), t_len, h, w, 1});
    S* p = x.ptr();
    for (const Clip* c : clips) {
        Tensor<S> one = clip_to_tensor<S>(*c);
        if (one.dim(0) != t_len || one.dim(1) != h || one.dim(2) != w)
            throw ShapeError("batch clips disagree on shape");
        p = std::copy(one.ptr(), one.ptr() + one.size(), p);
    }
    return x;
}

}  // namespace vad
