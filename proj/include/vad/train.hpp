#pragma once

// Initialization, Adam optimization and checkpointing. Training is fully
// deterministic for a given (seed, config, dataset) in this single-threaded
// implementation.

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vad/dataio.hpp"
#include "vad/error.hpp"
#include "vad/loss.hpp"
#include "vad/models.hpp"
#include "vad/rng.hpp"

namespace vad {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 5.0;  // global-norm gradient clipping; 0 disables
    std::uint64_t seed = 1;
    LossConfig loss;
    bool shuffle = true;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (learning_rate < 0.0) throw ConfigError("train: learning_rate must be >= 0");
        if (!(adam_beta1 > 0.0) || adam_beta1 >= 1.0 || !(adam_beta2 > 0.0) || adam_beta2 >= 1.0)
            throw ConfigError("train: adam betas must lie in (0,1)");
        if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
        if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
        if (loss.beta < 0.0) throw ConfigError("train: loss beta must be >= 0");
    }
};

// Weights uniform in +-sqrt(6/(fan_in+fan_out)); biases and shifts zero,
// gains and running variances one. Deterministic given the seed.
template <class S>
void xavier_init(ModelInstance<S>& model, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1a57));
    for (auto& [name, p] : model.store.entries()) {
        switch (p.init) {
            case ParamInit::xavier_uniform: {
                const double limit = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
                rng.fill_uniform(p.value, -limit, limit);
                break;
            }
            case ParamInit::zeros:
                std::fill(p.value.begin(), p.value.end(), S(0));
                break;
            case ParamInit::ones:
                std::fill(p.value.begin(), p.value.end(), S(1));
                break;
        }
    }
}

template <class S>
class AdamOptimizer {
public:
    AdamOptimizer(ParameterStore<S>& store, const TrainConfig& cfg) : cfg_(cfg) {
        for (auto& [name, p] : store.entries())
            if (p.trainable) params_.push_back(&p);
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->value.size(), S(0));
            v_[i].assign(params_[i]->value.size(), S(0));
        }
    }

    double global_grad_norm() const {
        double acc = 0.0;
        for (const Param<S>* p : params_) {
            if (p->grad.empty()) continue;
            for (S g : p->grad) acc += static_cast<double>(g) * static_cast<double>(g);
        }
        return std::sqrt(acc);
    }

    // One bias-corrected Adam update; grads may be pre-scaled by `grad_scale`.
    void step(double grad_scale = 1.0) {
        ++t_;
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, t_);
        const double corr2 = 1.0 - std::pow(b2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param<S>* p = params_[i];
            if (p->grad.empty()) continue;
            S* value = p->value.data();
            const S* grad = p->grad.data();
            S* m = m_[i].data();
            S* v = v_[i].data();
            for (std::size_t j = 0; j < p->value.size(); ++j) {
                const double g = grad_scale * static_cast<double>(grad[j]);
                const double mj = b1 * m[j] + (1.0 - b1) * g;
                const double vj = b2 * v[j] + (1.0 - b2) * g * g;
                m[j] = static_cast<S>(mj);
                v[j] = static_cast<S>(vj);
                value[j] -= static_cast<S>(cfg_.learning_rate * (mj / corr1) /
                                           (std::sqrt(vj / corr2) + cfg_.adam_eps));
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<Param<S>*> params_;
    std::vector<std::vector<S>> m_, v_;
    long long t_ = 0;
};

// Adam over the dataset. Loss history carries one record per epoch, with the
// reconstruction and KL components logged separately for VAE losses. An
// optional progress callback fires after every epoch.
template <class S>
std::vector<LossRecord> train(ModelInstance<S>& model, const ClipDataset& data, const TrainConfig& cfg,
                              const std::function<void(int, const LossRecord&)>& progress = {}) {
    cfg.validate();
    if (data.clips.empty()) throw DataError("train: empty dataset");
    if (cfg.loss.kind == LossKind::vae && !model.is_vae())
        throw ConfigError("train: vae loss requires a latent-producing model");
    {
        const Clip& c0 = data.clips.front();
        const Shape got{static_cast<int>(c0.frames.size()), c0.frames.at(0).height, c0.frames.at(0).width, 1};
        if (got != model.input_shape)
            throw ShapeError("train: clip shape " + shape_str(got) + " != model input " +
                             shape_str(model.input_shape));
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 0x51));
    Rng eps_rng(mix_seed(cfg.seed, 0xe5));
    AdamOptimizer<S> adam(model.store, cfg);

    std::vector<std::size_t> order(data.clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<LossRecord> history;
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) shuffle_rng.shuffle(order);
        double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
        long long n_clips = 0;

        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t take = std::min(order.size() - at, static_cast<std::size_t>(cfg.batch_size));
            std::vector<const Clip*> batch(take);
            for (std::size_t i = 0; i < take; ++i) batch[i] = &data.clips[order[at + i]];
            Tensor<S> x = clips_to_batch<S>(batch);

            model.store.zero_grads();
            const bool use_vae_loss = cfg.loss.kind == LossKind::vae;
            Tensor<S> eps;
            if (model.is_vae()) {
                eps = Tensor<S>({static_cast<int>(take), model.latent_dim});
                eps_rng.fill_normal(eps.data);
            }
            auto fwd = model.forward(x, Mode::train, model.is_vae() ? &eps : nullptr);

            const double recon = recon_loss(x, fwd.output, cfg.loss.reduction);
            Tensor<S> d_out = recon_loss_grad(x, fwd.output, cfg.loss.reduction);
            double kl = 0.0;
            double total = recon;
            if (use_vae_loss) {
                kl = kl_gaussian(fwd.mu, fwd.logvar);
                total = recon + cfg.loss.beta * kl;
                Tensor<S> d_mu(fwd.mu.shape), d_lv(fwd.logvar.shape);
                kl_gaussian_grad(fwd.mu, fwd.logvar, cfg.loss.beta, d_mu, d_lv);
                model.backward(d_out, &d_mu, &d_lv);
            } else {
                model.backward(d_out);
            }
            ++step;
            if (!std::isfinite(total))
                throw TrainError("train: non-finite loss at step " + std::to_string(step) + " (epoch " +
                                 std::to_string(epoch + 1) + ")");

            double grad_scale = 1.0;
            if (cfg.clip_norm > 0.0) {
                const double norm = adam.global_grad_norm();
                if (norm > cfg.clip_norm) grad_scale = cfg.clip_norm / norm;
            }
            adam.step(grad_scale);

            sum_total += total * static_cast<double>(take);
            sum_recon += recon * static_cast<double>(take);
            sum_kl += kl * static_cast<double>(take);
            n_clips += static_cast<long long>(take);
        }

        LossRecord rec;
        rec.total = sum_total / static_cast<double>(n_clips);
        rec.recon = sum_recon / static_cast<double>(n_clips);
        rec.kl = sum_kl / static_cast<double>(n_clips);
        history.push_back(rec);
        if (progress) progress(epoch + 1, rec);
    }

    model.loss_history = history;
    model.train_seed = cfg.seed;
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoints: directory with manifest.json + params.bin (32-bit little-endian
// floats, manifest order). Round-trips bitwise.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const ModelInstance<float>& model, const std::filesystem::path& dir) {
    static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["format"] = "vad-checkpoint";
    manifest["version"] = kCheckpointVersion;
    manifest["kind"] = model_kind_name(model.kind);
    manifest["beta"] = model.beta;
    manifest["latent_dim"] = model.latent_dim;
    manifest["scale"] = model.scale;
    manifest["input_shape"] = model.input_shape;
    manifest["seed"] = model.train_seed;
    manifest["loss_history"] = nlohmann::json::array();
    for (const auto& r : model.loss_history)
        manifest["loss_history"].push_back({{"total", r.total}, {"recon", r.recon}, {"kl", r.kl}});

    manifest["params"] = nlohmann::json::array();
    long long offset = 0;
    for (const auto& [name, p] : model.store.entries()) {
        manifest["params"].push_back(
            {{"name", name}, {"shape", p.shape}, {"trainable", p.trainable}, {"offset", offset}});
        offset += p.size();
    }

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";

    std::ofstream pf(dir / "params.bin", std::ios::binary);
    if (!pf) throw DataError("cannot write " + (dir / "params.bin").string());
    for (const auto& [name, p] : model.store.entries())
        pf.write(reinterpret_cast<const char*>(p.value.data()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(float)));
}

inline ModelInstance<float> load_checkpoint(const std::filesystem::path& dir) {
    static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot open checkpoint manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw DataError("checkpoint manifest " + dir.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "vad-checkpoint")
        throw DataError("checkpoint " + dir.string() + ": missing format marker");
    if (manifest.value("version", -1) != kCheckpointVersion)
        throw DataError("checkpoint " + dir.string() + ": unsupported version");

    const ModelKind kind = model_kind_from_name(manifest.at("kind").get<std::string>());
    const Shape input_shape = manifest.at("input_shape").get<Shape>();
    ModelInstance<float> model = build_model<float>(kind, input_shape,
                                                    manifest.value("latent_dim", 0),
                                                    manifest.value("beta", 1.0),
                                                    manifest.value("scale", 1.0));
    model.train_seed = manifest.value("seed", std::uint64_t{0});
    for (const auto& r : manifest.value("loss_history", nlohmann::json::array()))
        model.loss_history.push_back({r.value("total", 0.0), r.value("recon", 0.0), r.value("kl", 0.0)});

    // manifest must agree with the rebuilt architecture
    long long total = 0;
    for (const auto& jp : manifest.at("params")) {
        const std::string name = jp.at("name").get<std::string>();
        const Shape shape = jp.at("shape").get<Shape>();
        const Param<float>* p = model.store.find(name);
        if (!p)
            throw DataError("checkpoint " + dir.string() + ": unknown parameter \"" + name + "\"");
        if (p->shape != shape)
            throw DataError("checkpoint " + dir.string() + ": parameter \"" + name + "\" shape " +
                            shape_str(shape) + " does not match model " + shape_str(p->shape));
        total += numel(shape);
    }
    const ParamCount counts = model.store.counts();
    if (total != counts.total)
        throw DataError("checkpoint " + dir.string() + ": manifest lists " + std::to_string(total) +
                        " scalars, model has " + std::to_string(counts.total));

    std::ifstream pf(dir / "params.bin", std::ios::binary);
    if (!pf) throw DataError("cannot open checkpoint payload: " + (dir / "params.bin").string());
    pf.seekg(0, std::ios::end);
    const long long bytes = static_cast<long long>(pf.tellg());
    if (bytes != total * static_cast<long long>(sizeof(float)))
        throw DataError("checkpoint payload " + (dir / "params.bin").string() + ": expected " +
                        std::to_string(total * sizeof(float)) + " bytes, found " + std::to_string(bytes));
    pf.seekg(0);
    for (auto& [name, p] : model.store.entries()) {
        pf.read(reinterpret_cast<char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
        if (!pf) throw DataError("checkpoint payload truncated while reading \"" + name + "\"");
    }
    return model;
}

inline void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,total,recon,kl\n";
    char line[160];
    for (std::size_t i = 0; i < history.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", i + 1, history[i].total,
                      history[i].recon, history[i].kl);
        out << line;
    }
}

}  // namespace vad
