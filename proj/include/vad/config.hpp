#pragma once

// Run configuration: JSON with sections for data, model, train, score, eval
// and synth. Unknown keys are rejected; every default is documented in
// docs/formats.md.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vad/dataio.hpp"
#include "vad/error.hpp"
#include "vad/eval.hpp"
#include "vad/models.hpp"
#include "vad/score.hpp"
#include "vad/train.hpp"

namespace vad {

struct DataSection {
    std::string train_dir, test_dir, labels;
    int resize_h = 64, resize_w = 64;
    int window = 10;
    int stride = 1;
};

struct ModelSection {
    ModelKind kind = ModelKind::baseline_ae;
    double beta = 4.0;  // used by beta_vae; vae pins beta = 1
    int latent_dim = 32;
    double scale = 1.0;
};

struct ScoreSection {
    NormalizationMode normalization = NormalizationMode::minmax;
    int stride = 1;
};

struct EvalSection {
    double threshold_start = 0.0;
    double threshold_stop = 1.0;
    double threshold_step = 0.01;
    double highlight = 0.85;

    std::vector<double> grid() const { return threshold_grid(threshold_start, threshold_stop, threshold_step); }
};

struct SynthSection {
    SynthConfig base;     // n_videos used by `synth`
    int train_videos = 8;  // used by `pipeline`
    int test_videos = 4;
};

struct RunConfig {
    DataSection data;
    ModelSection model;
    TrainConfig train;
    ScoreSection score;
    EvalSection eval;
    SynthSection synth;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& section,
                       std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in config section \"" + section + "\"");
    }
}

template <class T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::check_keys(j, "<root>", {"data", "model", "train", "score", "eval", "synth"});
    RunConfig cfg;

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_keys(d, "data", {"train_dir", "test_dir", "labels", "resize", "window", "stride"});
        cfg.data.train_dir = detail::get_or<std::string>(d, "train_dir", "");
        cfg.data.test_dir = detail::get_or<std::string>(d, "test_dir", "");
        cfg.data.labels = detail::get_or<std::string>(d, "labels", "");
        if (d.contains("resize")) {
            const auto r = d.at("resize").get<std::vector<int>>();
            if (r.size() != 2) throw ConfigError("data.resize must be [H,W]");
            cfg.data.resize_h = r[0];
            cfg.data.resize_w = r[1];
        }
        cfg.data.window = detail::get_or(d, "window", cfg.data.window);
        cfg.data.stride = detail::get_or(d, "stride", cfg.data.stride);
        if (cfg.data.window < 1 || cfg.data.stride < 1)
            throw ConfigError("data.window and data.stride must be >= 1");
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, "model", {"kind", "beta", "latent_dim", "scale"});
        if (m.contains("kind")) cfg.model.kind = model_kind_from_name(m.at("kind").get<std::string>());
        cfg.model.beta = detail::get_or(m, "beta", cfg.model.beta);
        cfg.model.latent_dim = detail::get_or(m, "latent_dim", cfg.model.latent_dim);
        cfg.model.scale = detail::get_or(m, "scale", cfg.model.scale);
        if (cfg.model.kind == ModelKind::beta_vae && cfg.model.beta <= 1.0)
            throw ConfigError("model.beta must be > 1 for beta_vae, got " + std::to_string(cfg.model.beta));
        if (!(cfg.model.scale > 0.0)) throw ConfigError("model.scale must be positive");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, "train",
                           {"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                            "clip_norm", "seed", "shuffle", "reduction"});
        cfg.train.epochs = detail::get_or(t, "epochs", cfg.train.epochs);
        cfg.train.batch_size = detail::get_or(t, "batch_size", cfg.train.batch_size);
        cfg.train.learning_rate = detail::get_or(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.adam_beta1 = detail::get_or(t, "adam_beta1", cfg.train.adam_beta1);
        cfg.train.adam_beta2 = detail::get_or(t, "adam_beta2", cfg.train.adam_beta2);
        cfg.train.adam_eps = detail::get_or(t, "adam_eps", cfg.train.adam_eps);
        cfg.train.clip_norm = detail::get_or(t, "clip_norm", cfg.train.clip_norm);
        cfg.train.seed = detail::get_or(t, "seed", cfg.train.seed);
        cfg.train.shuffle = detail::get_or(t, "shuffle", cfg.train.shuffle);
        if (t.contains("reduction")) {
            const std::string r = t.at("reduction").get<std::string>();
            if (r == "mean_per_pixel")
                cfg.train.loss.reduction = Reduction::mean_per_pixel;
            else if (r == "sum")
                cfg.train.loss.reduction = Reduction::sum;
            else
                throw ConfigError("train.reduction must be mean_per_pixel|sum, got \"" + r + "\"");
        }
        cfg.train.validate();
    }
    if (j.contains("score")) {
        const auto& s = j.at("score");
        detail::check_keys(s, "score", {"normalization", "stride"});
        if (s.contains("normalization"))
            cfg.score.normalization = normalization_mode_from_name(s.at("normalization").get<std::string>());
        cfg.score.stride = detail::get_or(s, "stride", cfg.score.stride);
        if (cfg.score.stride < 1) throw ConfigError("score.stride must be >= 1");
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::check_keys(e, "eval", {"threshold_start", "threshold_stop", "threshold_step", "highlight"});
        cfg.eval.threshold_start = detail::get_or(e, "threshold_start", cfg.eval.threshold_start);
        cfg.eval.threshold_stop = detail::get_or(e, "threshold_stop", cfg.eval.threshold_stop);
        cfg.eval.threshold_step = detail::get_or(e, "threshold_step", cfg.eval.threshold_step);
        cfg.eval.highlight = detail::get_or(e, "highlight", cfg.eval.highlight);
        cfg.eval.grid();  // validates
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        detail::check_keys(s, "synth",
                           {"n_videos", "frames_per_video", "frame_size", "normal_speed", "anomaly_kinds",
                            "anomaly_fraction", "seed", "train_videos", "test_videos"});
        cfg.synth.base.n_videos = detail::get_or(s, "n_videos", cfg.synth.base.n_videos);
        cfg.synth.base.frames_per_video = detail::get_or(s, "frames_per_video", cfg.synth.base.frames_per_video);
        if (s.contains("frame_size")) {
            const auto fs = s.at("frame_size").get<std::vector<int>>();
            if (fs.size() != 2) throw ConfigError("synth.frame_size must be [H,W]");
            cfg.synth.base.frame_h = fs[0];
            cfg.synth.base.frame_w = fs[1];
        }
        cfg.synth.base.normal_speed = detail::get_or(s, "normal_speed", cfg.synth.base.normal_speed);
        if (s.contains("anomaly_kinds")) {
            cfg.synth.base.anomaly_kinds.clear();
            for (const auto& k : s.at("anomaly_kinds"))
                cfg.synth.base.anomaly_kinds.push_back(anomaly_kind_from_name(k.get<std::string>()));
        }
        cfg.synth.base.anomaly_fraction = detail::get_or(s, "anomaly_fraction", cfg.synth.base.anomaly_fraction);
        cfg.synth.base.seed = detail::get_or(s, "seed", cfg.synth.base.seed);
        cfg.synth.train_videos = detail::get_or(s, "train_videos", cfg.synth.train_videos);
        cfg.synth.test_videos = detail::get_or(s, "test_videos", cfg.synth.test_videos);
        cfg.synth.base.validate();
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

// Loss function implied by the model kind: pixel MSE for the baseline,
// MSE + beta * KL for the VAEs.
inline LossConfig loss_for_model(const ModelSection& m) {
    LossConfig loss;
    if (m.kind == ModelKind::baseline_ae) {
        loss.kind = LossKind::mse;
        loss.beta = 0.0;
    } else {
        loss.kind = LossKind::vae;
        loss.beta = m.kind == ModelKind::vae ? 1.0 : m.beta;
    }
    return loss;
}

}  // namespace vad
