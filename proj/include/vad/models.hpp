#pragma once

// The three architectures: baseline convolutional-LSTM autoencoder, VAE
// (beta = 1) and beta-VAE (beta > 1), assembled as explicit layer pipelines
// over one ParameterStore. Parameter and shape parity with the reference
// 256x256 / T=10 configuration is exercised by the test suite.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vad/error.hpp"
#include "vad/layers.hpp"
#include "vad/rng.hpp"
#include "vad/tensor.hpp"

namespace vad {

enum class ModelKind { baseline_ae, vae, beta_vae };

inline std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::baseline_ae: return "baseline_ae";
        case ModelKind::vae: return "vae";
        case ModelKind::beta_vae: return "beta_vae";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "baseline_ae" || s == "ae") return ModelKind::baseline_ae;
    if (s == "vae") return ModelKind::vae;
    if (s == "beta_vae" || s == "beta-vae") return ModelKind::beta_vae;
    throw ConfigError("unknown model kind \"" + s + "\" (expected baseline_ae|vae|beta_vae)");
}

template <class S>
struct LatentDistributionT {
    std::vector<S> mu, logvar, z;
};
using LatentDistribution = LatentDistributionT<float>;

// z = mu + exp(0.5*logvar) ⊙ epsilon; differentiable in mu and logvar,
// epsilon is treated as a constant.
template <class S>
Tensor<S> sample_latent(const Tensor<S>& mu, const Tensor<S>& logvar, const Tensor<S>& epsilon) {
    if (mu.shape != logvar.shape || mu.shape != epsilon.shape)
        throw ShapeError("sample_latent: shapes must match");
    Tensor<S> z(mu.shape);
    for (long long i = 0; i < mu.size(); ++i)
        z.ptr()[i] = mu.ptr()[i] + std::exp(S(0.5) * logvar.ptr()[i]) * epsilon.ptr()[i];
    return z;
}

struct LossRecord {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

template <class S>
struct ModelForward {
    Tensor<S> output;              // same shape as the input batch
    Tensor<S> mu, logvar, z;       // (B,latent); empty for the baseline
};

template <class S>
class ModelInstance {
public:
    ModelKind kind = ModelKind::baseline_ae;
    double beta = 1.0;
    int latent_dim = 0;
    double scale = 1.0;
    Shape input_shape;  // (T,H,W,1)

    ParameterStore<S> store;
    std::vector<std::unique_ptr<Layer<S>>> encoder;
    std::unique_ptr<Dense<S>> mu_head, logvar_head;
    std::vector<std::unique_ptr<Layer<S>>> decoder;

    std::vector<LossRecord> loss_history;
    std::uint64_t train_seed = 0;

    ModelInstance() = default;
    ModelInstance(ModelInstance&&) = default;
    ModelInstance& operator=(ModelInstance&&) = default;
    ModelInstance(const ModelInstance&) = delete;
    ModelInstance& operator=(const ModelInstance&) = delete;

    bool is_vae() const { return kind != ModelKind::baseline_ae; }

    // epsilon: (B,latent) standard-normal draws; null selects the deterministic
    // mean-latent path (z = mu). The baseline ignores it entirely.
    ModelForward<S> forward(const Tensor<S>& x, Mode mode, const Tensor<S>* epsilon = nullptr) {
        check_batch(x.shape);
        ModelForward<S> out;
        Tensor<S> h = x;
        for (auto& layer : encoder) h = layer->forward(h, mode);
        if (!is_vae()) {
            out.output = std::move(h);
            return out;
        }
        out.mu = mu_head->forward(h, mode);
        out.logvar = logvar_head->forward(h, mode);
        if (epsilon) {
            if (epsilon->shape != out.mu.shape)
                throw ShapeError("model forward: epsilon shape " + shape_str(epsilon->shape) + " != latent " +
                                 shape_str(out.mu.shape));
            out.z = sample_latent(out.mu, out.logvar, *epsilon);
        } else {
            out.z = out.mu;  // mean-latent scoring path
        }
        mu_cache_ = out.mu;
        z_cache_ = out.z;
        Tensor<S> d = out.z;
        for (auto& layer : decoder) d = layer->forward(d, mode);
        out.output = std::move(d);
        return out;
    }

    // d_output is dL/d(reconstruction); d_mu/d_logvar are optional extra terms
    // (e.g. the KL gradients). Returns dL/d(input).
    Tensor<S> backward(const Tensor<S>& d_output, const Tensor<S>* d_mu = nullptr,
                       const Tensor<S>* d_logvar = nullptr) {
        if (!is_vae()) {
            Tensor<S> g = d_output;
            for (auto it = encoder.rbegin(); it != encoder.rend(); ++it) g = (*it)->backward(g);
            return g;
        }
        Tensor<S> dz = d_output;
        for (auto it = decoder.rbegin(); it != decoder.rend(); ++it) dz = (*it)->backward(dz);

        Tensor<S> dmu = dz;
        Tensor<S> dlv(dz.shape);
        // z = mu + exp(0.5*logvar)*eps  =>  dz/dlogvar = 0.5*(z - mu)
        for (long long i = 0; i < dz.size(); ++i)
            dlv.ptr()[i] = dz.ptr()[i] * S(0.5) * (z_cache_.ptr()[i] - mu_cache_.ptr()[i]);
        if (d_mu)
            for (long long i = 0; i < dmu.size(); ++i) dmu.ptr()[i] += d_mu->ptr()[i];
        if (d_logvar)
            for (long long i = 0; i < dlv.size(); ++i) dlv.ptr()[i] += d_logvar->ptr()[i];

        Tensor<S> dh = mu_head->backward(dmu);
        Tensor<S> dh2 = logvar_head->backward(dlv);
        for (long long i = 0; i < dh.size(); ++i) dh.ptr()[i] += dh2.ptr()[i];
        for (auto it = encoder.rbegin(); it != encoder.rend(); ++it) dh = (*it)->backward(dh);
        return dh;
    }

    // Static (name, output shape) walk for a batch of one; no forward needed.
    std::vector<std::pair<std::string, Shape>> layer_shapes() const {
        std::vector<std::pair<std::string, Shape>> out;
        Shape s{1};
        s.insert(s.end(), input_shape.begin(), input_shape.end());
        for (const auto& layer : encoder) {
            s = layer->output_shape(s);
            out.emplace_back(layer->name(), s);
        }
        if (is_vae()) {
            Shape latent = mu_head->output_shape(s);
            out.emplace_back(mu_head->name(), latent);
            out.emplace_back(logvar_head->name(), logvar_head->output_shape(s));
            s = latent;
            for (const auto& layer : decoder) {
                s = layer->output_shape(s);
                out.emplace_back(layer->name(), s);
            }
        }
        return out;
    }

    ParamCount encoder_counts() const {
        ParamCount c = store.counts_with_prefix("enc");
        return c;
    }
    ParamCount decoder_counts() const { return store.counts_with_prefix("dec"); }

private:
    void check_batch(const Shape& s) const {
        Shape want{s.empty() ? 0 : s[0]};
        want.insert(want.end(), input_shape.begin(), input_shape.end());
        if (s.size() != want.size() || s != want)
            throw ShapeError("model expects (B," + shape_str(input_shape) + "), got " + shape_str(s));
    }

    Tensor<S> mu_cache_, z_cache_;
};

inline int scale_filters(int filters, double scale) {
    return std::max(1, static_cast<int>(std::lround(filters * scale)));
}

namespace detail {

inline void check_model_input(const Shape& input_shape) {
    if (input_shape.size() != 4 || input_shape[3] != 1)
        throw ConfigError("model input shape must be (T,H,W,1), got " + shape_str(input_shape));
    if (input_shape[0] < 1) throw ConfigError("model input needs at least one frame");
    if (input_shape[1] % 8 != 0 || input_shape[2] % 8 != 0)
        throw ConfigError("model input H and W must be divisible by 8, got " + shape_str(input_shape));
}

template <class S>
void verify_roundtrip_shape(const ModelInstance<S>& m) {
    const auto shapes = m.layer_shapes();
    Shape want{1};
    want.insert(want.end(), m.input_shape.begin(), m.input_shape.end());
    if (shapes.empty() || shapes.back().second != want)
        throw Error("model " + model_kind_name(m.kind) + ": reconstruction shape " +
                    shape_str(shapes.back().second) + " != input " + shape_str(want));
}

}  // namespace detail

// Spatial encoder (strided convs), temporal encoder/decoder (ConvLSTM stack),
// mirrored deconvolution decoder; layer normalization after every stage and a
// sigmoid on the reconstruction. `scale` multiplies filter counts (rounded)
// for desk-scale runs.
template <class S>
ModelInstance<S> build_baseline_ae(const Shape& input_shape = {10, 256, 256, 1}, double scale = 1.0) {
    detail::check_model_input(input_shape);
    ModelInstance<S> m;
    m.kind = ModelKind::baseline_ae;
    m.beta = 0.0;
    m.scale = scale;
    m.input_shape = input_shape;

    const int c1 = scale_filters(128, scale);
    const int c2 = scale_filters(64, scale);
    const int r1 = scale_filters(64, scale);
    const int r2 = scale_filters(32, scale);
    const int r3 = scale_filters(64, scale);

    auto& e = m.encoder;
    auto& st = m.store;
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "l00_tdconv", Conv2DSpec{1, c1, 11, 11, 4, 4, Padding::same, false, Activation::linear}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l01_lnorm", NormSpec{NormKind::layer_norm, c1}, st));
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "l02_tdconv", Conv2DSpec{c1, c2, 5, 5, 2, 2, Padding::same, false, Activation::linear}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l03_lnorm", NormSpec{NormKind::layer_norm, c2}, st));
    e.push_back(std::make_unique<ConvLSTM<S>>("l04_convlstm", ConvLSTMSpec{c2, r1, 3, 3, true}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l05_lnorm", NormSpec{NormKind::layer_norm, r1}, st));
    e.push_back(std::make_unique<ConvLSTM<S>>("l06_convlstm", ConvLSTMSpec{r1, r2, 3, 3, true}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l07_lnorm", NormSpec{NormKind::layer_norm, r2}, st));
    e.push_back(std::make_unique<ConvLSTM<S>>("l08_convlstm", ConvLSTMSpec{r2, r3, 3, 3, true}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l09_lnorm", NormSpec{NormKind::layer_norm, r3}, st));
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "l10_tdeconv", Conv2DSpec{r3, c2, 5, 5, 2, 2, Padding::same, true, Activation::linear}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l11_lnorm", NormSpec{NormKind::layer_norm, c2}, st));
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "l12_tdeconv", Conv2DSpec{c2, c1, 11, 11, 4, 4, Padding::same, true, Activation::linear}, st));
    e.push_back(std::make_unique<LayerNorm<S>>("l13_lnorm", NormSpec{NormKind::layer_norm, c1}, st));
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "l14_tdconv", Conv2DSpec{c1, 1, 11, 11, 1, 1, Padding::same, false, Activation::sigmoid}, st));

    detail::verify_roundtrip_shape(m);
    return m;
}

// Encoder flattens the whole (T,H/4,W/4,C) activation into one latent per
// clip, matching the reference tables; decoder mirrors it.
template <class S>
ModelInstance<S> build_vae(const Shape& input_shape = {10, 256, 256, 1}, int latent_dim = 32,
                           double beta = 1.0, double scale = 1.0) {
    detail::check_model_input(input_shape);
    if (latent_dim < 1) throw ConfigError("latent_dim must be positive");
    if (beta <= 0.0) throw ConfigError("beta must be positive, got " + std::to_string(beta));
    ModelInstance<S> m;
    m.kind = beta > 1.0 ? ModelKind::beta_vae : ModelKind::vae;
    m.beta = beta;
    m.latent_dim = latent_dim;
    m.scale = scale;
    m.input_shape = input_shape;

    const int t_len = input_shape[0], h = input_shape[1], w = input_shape[2];
    const int c1 = scale_filters(64, scale);
    const int cl = scale_filters(16, scale);
    const int h4 = (h + 3) / 4, w4 = (w + 3) / 4;
    const long long flat = static_cast<long long>(t_len) * h4 * w4 * cl;

    auto& st = m.store;
    auto& e = m.encoder;
    e.push_back(std::make_unique<TimeDistConv2D<S>>(
        "enc00_tdconv", Conv2DSpec{1, c1, 5, 5, 4, 4, Padding::same, false, Activation::linear}, st));
    e.push_back(std::make_unique<BatchNorm<S>>("enc01_bnorm", NormSpec{NormKind::batch_norm, c1}, st));
    e.push_back(std::make_unique<ConvLSTM<S>>("enc02_convlstm", ConvLSTMSpec{c1, cl, 3, 3, true}, st));
    e.push_back(std::make_unique<BatchNorm<S>>("enc03_bnorm", NormSpec{NormKind::batch_norm, cl}, st));
    e.push_back(std::make_unique<Flatten<S>>("enc04_flatten"));
    e.push_back(std::make_unique<Dense<S>>("enc05_dense", DenseSpec{flat, latent_dim}, st));
    e.push_back(std::make_unique<BatchNorm<S>>("enc06_bnorm", NormSpec{NormKind::batch_norm, latent_dim}, st));
    m.mu_head = std::make_unique<Dense<S>>("enc07_latent_mu", DenseSpec{latent_dim, latent_dim}, st);
    m.logvar_head = std::make_unique<Dense<S>>("enc08_latent_logvar", DenseSpec{latent_dim, latent_dim}, st);

    auto& d = m.decoder;
    d.push_back(std::make_unique<Dense<S>>("dec00_dense", DenseSpec{latent_dim, flat}, st));
    d.push_back(std::make_unique<BatchNorm<S>>("dec01_bnorm", NormSpec{NormKind::batch_norm, static_cast<int>(flat)}, st));
    d.push_back(std::make_unique<Reshape<S>>("dec02_reshape", Shape{t_len, h4, w4, cl}));
    d.push_back(std::make_unique<ConvLSTM<S>>("dec03_convlstm", ConvLSTMSpec{cl, cl, 3, 3, true}, st));
    d.push_back(std::make_unique<BatchNorm<S>>("dec04_bnorm", NormSpec{NormKind::batch_norm, cl}, st));
    d.push_back(std::make_unique<TimeDistConv2D<S>>(
        "dec05_tdeconv", Conv2DSpec{cl, c1, 5, 5, 4, 4, Padding::same, true, Activation::linear}, st));
    d.push_back(std::make_unique<BatchNorm<S>>("dec06_bnorm", NormSpec{NormKind::batch_norm, c1}, st));
    d.push_back(std::make_unique<TimeDistConv2D<S>>(
        "dec07_tdconv", Conv2DSpec{c1, 1, 11, 11, 1, 1, Padding::same, false, Activation::sigmoid}, st));

    detail::verify_roundtrip_shape(m);
    return m;
}

template <class S>
ModelInstance<S> build_model(ModelKind kind, const Shape& input_shape, int latent_dim, double beta,
                             double scale) {
    switch (kind) {
        case ModelKind::baseline_ae:
            return build_baseline_ae<S>(input_shape, scale);
        case ModelKind::vae:
            return build_vae<S>(input_shape, latent_dim, 1.0, scale);
        case ModelKind::beta_vae:
            if (beta <= 1.0)
                throw ConfigError("beta_vae requires beta > 1, got " + std::to_string(beta));
            return build_vae<S>(input_shape, latent_dim, beta, scale);
    }
    throw ConfigError("unknown model kind");
}

enum class RngMode { stochastic, mean };

// Reconstruct one clip tensor (T,H,W,1). The baseline ignores rng_mode and
// yields no latent; VAEs in mean mode are deterministic (z = mu).
template <class S>
std::pair<Tensor<S>, std::optional<LatentDistributionT<S>>> reconstruct(ModelInstance<S>& model,
                                                                        const Tensor<S>& clip,
                                                                        RngMode rng_mode = RngMode::mean,
                                                                        Rng* rng = nullptr) {
    Shape batched{1};
    batched.insert(batched.end(), clip.shape.begin(), clip.shape.end());
    Tensor<S> x = clip.reshaped(batched);

    const bool stochastic = model.is_vae() && rng_mode == RngMode::stochastic;
    Tensor<S> eps;
    if (stochastic) {
        if (!rng) throw ConfigError("reconstruct: stochastic mode needs an Rng");
        eps = Tensor<S>({1, model.latent_dim});
        rng->fill_normal(eps.data);
    }
    auto fwd = model.forward(x, Mode::infer, stochastic ? &eps : nullptr);

    std::optional<LatentDistributionT<S>> latent;
    if (model.is_vae()) {
        LatentDistributionT<S> l;
        l.mu = fwd.mu.data;
        l.logvar = fwd.logvar.data;
        l.z = fwd.z.data;
        latent = std::move(l);
    }
    return {fwd.output.reshaped(clip.shape), std::move(latent)};
}

}  // namespace vad
