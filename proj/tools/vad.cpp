// vad — train convolutional-LSTM (variational) autoencoders on short video
// clips, score videos with reconstruction-error regularity, and evaluate
// frame-level anomaly detection.
//
// Subcommands: synth | train | score | eval | report | pipeline
// Exit codes: 0 success, 1 usage/config error, 2 runtime/data error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vad/config.hpp"
#include "vad/dataio.hpp"
#include "vad/eval.hpp"
#include "vad/models.hpp"
#include "vad/report.hpp"
#include "vad/score.hpp"
#include "vad/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --set section.key=value overrides applied to the raw config JSON.
void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw vad::ConfigError("--set expects section.key=value, got \"" + assignment + "\"");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const std::exception&) {
        value = raw;  // unquoted strings
    }

    json* node = &root;
    std::size_t at = 0;
    while (true) {
        const auto dot = path.find('.', at);
        const std::string key = path.substr(at, dot == std::string::npos ? std::string::npos : dot - at);
        if (key.empty()) throw vad::ConfigError("--set path has an empty segment: \"" + path + "\"");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        at = dot + 1;
    }
}

vad::RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets) {
    json raw = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw vad::ConfigError("cannot open config file: " + config_path);
        try {
            in >> raw;
        } catch (const std::exception& e) {
            throw vad::ConfigError("config file " + config_path + ": " + e.what());
        }
    }
    for (const auto& s : sets) apply_override(raw, s);
    return vad::parse_run_config(raw);
}

void print_epoch(int epoch, const vad::LossRecord& rec) {
    std::printf("epoch %3d  total %.6f  recon %.6f  kl %.6f\n", epoch, rec.total, rec.recon, rec.kl);
    std::fflush(stdout);
}

vad::ModelInstance<float> do_train(const vad::RunConfig& cfg, vad::ModelKind kind, const fs::path& data_dir,
                                   const fs::path& out_dir) {
    const vad::Shape input_shape{cfg.data.window, cfg.data.resize_h, cfg.data.resize_w, 1};
    std::vector<vad::ClipDataset> parts;
    for (const auto& dir : vad::list_video_dirs(data_dir)) {
        auto frames = vad::load_frame_dir(dir, cfg.data.resize_h, cfg.data.resize_w);
        parts.push_back(vad::make_clips(frames, cfg.data.window, cfg.data.stride, dir.filename().string()));
    }
    vad::ClipDataset clips = vad::concat_clips(std::move(parts));
    std::printf("training %s on %zu clips from %s\n", vad::model_kind_name(kind).c_str(), clips.clips.size(),
                data_dir.string().c_str());

    vad::ModelSection msec = cfg.model;
    msec.kind = kind;
    auto model = vad::build_model<float>(kind, input_shape, msec.latent_dim, msec.beta, msec.scale);
    vad::xavier_init(model, cfg.train.seed);

    vad::TrainConfig tcfg = cfg.train;
    tcfg.loss = vad::loss_for_model(msec);
    vad::train(model, clips, tcfg, print_epoch);

    vad::save_checkpoint(model, out_dir);
    vad::write_loss_csv(model.loss_history, out_dir / "loss.csv");
    std::printf("checkpoint written to %s\n", out_dir.string().c_str());
    return model;
}

void do_score(vad::ModelInstance<float>& model, const vad::RunConfig& cfg, const fs::path& data_dir,
              const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const int window = model.input_shape[0];
    const int h = model.input_shape[1], w = model.input_shape[2];
    for (const auto& dir : vad::list_video_dirs(data_dir)) {
        auto frames = vad::load_frame_dir(dir, h, w);
        auto series = vad::score_video(model, frames, window, cfg.score.stride, cfg.score.normalization,
                                       dir.filename().string());
        vad::write_scores_csv(series, out_dir / (series.video + ".csv"));
    }
    std::printf("scores written to %s\n", out_dir.string().c_str());
}

vad::MetricsTable do_eval(const vad::RunConfig& cfg, const fs::path& scores_dir, const fs::path& labels_path,
                          const fs::path& out_metrics) {
    const auto labels = vad::load_labels(labels_path);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(scores_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw vad::DataError("no scores files in " + scores_dir.string());

    vad::EvalSeries pooled;
    for (const auto& f : files) {
        const auto series = vad::read_scores_csv(f);
        vad::append_eval_series(pooled, vad::collect_eval_frames(series, vad::find_labels(labels, series.video)));
    }
    vad::MetricsTable table = vad::sweep(pooled.s_r, pooled.anomalous, cfg.eval.grid());
    table.excluded_frames = pooled.excluded;

    if (out_metrics.has_parent_path()) fs::create_directories(out_metrics.parent_path());
    vad::write_metrics_csv(table, out_metrics);
    fs::path pr_path = out_metrics;
    pr_path.replace_filename(out_metrics.stem().string() + "_pr.csv");
    vad::write_pr_csv(vad::pr_curve(table), pr_path);

    const auto [theta, f1] = vad::best_f1(table);
    std::printf("metrics written to %s (best F1 %.4f at threshold %.2f)\n", out_metrics.string().c_str(), f1,
                theta);
    return table;
}

void do_report(const std::vector<fs::path>& metrics_files, const fs::path& out_dir, double highlight) {
    std::vector<vad::ModelMetrics> models;
    for (const auto& f : metrics_files) {
        std::string name = f.stem().string();
        models.push_back({std::move(name), vad::read_metrics_csv(f)});
    }
    const std::string summary = vad::write_report(models, out_dir, highlight);
    std::fputs(summary.c_str(), stdout);
    std::printf("report written to %s\n", out_dir.string().c_str());
}

void do_pipeline(const vad::RunConfig& cfg, const fs::path& out) {
    // normal-only training set; test set keeps the configured anomaly mix
    vad::SynthConfig train_synth = cfg.synth.base;
    train_synth.n_videos = cfg.synth.train_videos;
    train_synth.anomaly_fraction = 0.0;
    vad::SynthConfig test_synth = cfg.synth.base;
    test_synth.n_videos = cfg.synth.test_videos;
    test_synth.seed = cfg.synth.base.seed + 1;
    if (test_synth.anomaly_fraction <= 0.0) test_synth.anomaly_fraction = 0.25;

    const fs::path train_dir = out / "data" / "train";
    const fs::path test_dir = out / "data" / "test";
    vad::write_synth_dataset(vad::synth_generate(train_synth), train_dir);
    vad::write_synth_dataset(vad::synth_generate(test_synth), test_dir);
    std::printf("synthetic data written to %s\n", (out / "data").string().c_str());

    const vad::ModelKind kinds[] = {vad::ModelKind::baseline_ae, vad::ModelKind::vae, vad::ModelKind::beta_vae};
    std::vector<fs::path> metrics_files;
    for (vad::ModelKind kind : kinds) {
        const std::string name = vad::model_kind_name(kind);
        auto model = do_train(cfg, kind, train_dir, out / "models" / name);
        do_score(model, cfg, test_dir, out / "scores" / name);
        do_eval(cfg, out / "scores" / name, test_dir / "labels.json", out / "metrics" / (name + ".csv"));
        metrics_files.push_back(out / "metrics" / (name + ".csv"));
    }
    do_report(metrics_files, out / "report", cfg.eval.highlight);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"video anomaly detection via reconstruction-error regularity"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "run configuration (JSON)")->expected(1);
    app.add_option("--set", sets, "override a config key, e.g. --set train.epochs=12");

    std::string out_dir, data_dir, checkpoint_dir, scores_dir, labels_path, out_file, model_name;
    std::vector<std::string> metrics_files;

    auto* synth = app.add_subcommand("synth", "generate a synthetic frame-directory dataset");
    synth->add_option("--out", out_dir, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train a model on a dataset of video directories");
    train->add_option("--data", data_dir, "dataset root (one subdirectory per video)")->required();
    train->add_option("--out", checkpoint_dir, "checkpoint output directory")->required();
    train->add_option("--model", model_name, "model kind: baseline_ae|vae|beta_vae (overrides config)");

    auto* score = app.add_subcommand("score", "score videos with a trained checkpoint");
    score->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    score->add_option("--data", data_dir, "dataset root to score")->required();
    score->add_option("--out", out_dir, "directory for per-video scores files")->required();

    auto* eval = app.add_subcommand("eval", "sweep thresholds against frame labels");
    eval->add_option("--scores", scores_dir, "directory of scores files")->required();
    eval->add_option("--labels", labels_path, "labels file")->required();
    eval->add_option("--out", out_file, "metrics output file (PR curve lands next to it)")->required();

    auto* report = app.add_subcommand("report", "render comparison figures from metrics files");
    report->add_option("--metrics", metrics_files, "metrics files, one per model")->required();
    report->add_option("--out", out_dir, "report output directory")->required();

    auto* pipeline = app.add_subcommand("pipeline", "synth -> train x3 -> score -> eval -> report");
    pipeline->add_option("--out", out_dir, "pipeline output directory")->required();

    try {
        app.parse(argc, argv);
        const vad::RunConfig cfg = resolve_config(config_path, sets);

        if (synth->parsed()) {
            const auto videos = vad::synth_generate(cfg.synth.base);
            vad::write_synth_dataset(videos, out_dir);
            long long labeled = 0;
            for (const auto& v : videos)
                for (const auto& r : v.labels.anomalous_ranges) labeled += r[1] - r[0] + 1;
            std::printf("wrote %zu videos (%d frames each, %lld anomalous) to %s\n", videos.size(),
                        cfg.synth.base.frames_per_video, labeled, out_dir.c_str());
        } else if (train->parsed()) {
            vad::RunConfig run = cfg;
            if (!model_name.empty()) run.model.kind = vad::model_kind_from_name(model_name);
            if (run.model.kind == vad::ModelKind::beta_vae && run.model.beta <= 1.0)
                throw vad::ConfigError("model.beta must be > 1 for beta_vae");
            do_train(run, run.model.kind, data_dir, checkpoint_dir);
        } else if (score->parsed()) {
            auto model = vad::load_checkpoint(checkpoint_dir);
            do_score(model, cfg, data_dir, out_dir);
        } else if (eval->parsed()) {
            do_eval(cfg, scores_dir, labels_path, out_file);
        } else if (report->parsed()) {
            std::vector<fs::path> files(metrics_files.begin(), metrics_files.end());
            do_report(files, out_dir, cfg.eval.highlight);
        } else if (pipeline->parsed()) {
            do_pipeline(cfg, out_dir);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const vad::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
