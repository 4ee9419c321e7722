#pragma once

// Training objectives: pixel-wise MSE, closed-form diagonal-Gaussian KL
// divergence against a unit-Gaussian prior, and the beta-weighted VAE loss.
// Scalars are accumulated in double regardless of the tensor scalar type.

#include <cmath>
#include <string>

#include "vad/error.hpp"
#include "vad/tensor.hpp"

namespace vad {

enum class LossKind { mse, vae };
enum class Reduction { mean_per_pixel, sum };

struct LossConfig {
    LossKind kind = LossKind::mse;
    double beta = 1.0;
    Reduction reduction = Reduction::mean_per_pixel;
};

// Mean over all elements of (x - xhat)^2.
template <class S>
double mse_loss(const Tensor<S>& x, const Tensor<S>& xhat) {
    if (x.shape != xhat.shape)
        throw ShapeError("mse_loss: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(xhat.shape));
    double acc = 0.0;
    for (long long i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x.ptr()[i]) - static_cast<double>(xhat.ptr()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

template <class S>
double recon_loss(const Tensor<S>& x, const Tensor<S>& xhat, Reduction reduction) {
    const double mean = mse_loss(x, xhat);
    return reduction == Reduction::mean_per_pixel ? mean : mean * static_cast<double>(x.size());
}

// d(recon_loss)/d(xhat)
template <class S>
Tensor<S> recon_loss_grad(const Tensor<S>& x, const Tensor<S>& xhat, Reduction reduction) {
    if (x.shape != xhat.shape) throw ShapeError("recon_loss_grad: shape mismatch");
    Tensor<S> g(x.shape);
    const double scale = reduction == Reduction::mean_per_pixel ? 2.0 / static_cast<double>(x.size()) : 2.0;
    for (long long i = 0; i < x.size(); ++i)
        g.ptr()[i] = static_cast<S>(scale * (static_cast<double>(xhat.ptr()[i]) - static_cast<double>(x.ptr()[i])));
    return g;
}

// KL(N(mu, exp(logvar)) || N(0, I)) = -0.5 * sum_d (1 + logvar - mu^2 - exp(logvar)).
// For a (B,L) batch the per-sample sums are averaged over B.
template <class S>
double kl_gaussian(const Tensor<S>& mu, const Tensor<S>& logvar) {
    if (mu.shape != logvar.shape)
        throw ShapeError("kl_gaussian: shape mismatch " + shape_str(mu.shape) + " vs " + shape_str(logvar.shape));
    if (mu.rank() < 1 || mu.rank() > 2) throw ShapeError("kl_gaussian: expected (L) or (B,L)");
    double acc = 0.0;
    for (long long i = 0; i < mu.size(); ++i) {
        const double m = mu.ptr()[i];
        const double lv = logvar.ptr()[i];
        if (!std::isfinite(m) || !std::isfinite(lv)) throw Error("kl_gaussian: non-finite input");
        acc += 1.0 + lv - m * m - std::exp(lv);
    }
    const int batch = mu.rank() == 2 ? mu.dim(0) : 1;
    return -0.5 * acc / static_cast<double>(batch);
}

// Gradients of scale * kl_gaussian w.r.t. mu and logvar, accumulated into dmu/dlogvar.
template <class S>
void kl_gaussian_grad(const Tensor<S>& mu, const Tensor<S>& logvar, double scale, Tensor<S>& dmu,
                      Tensor<S>& dlogvar) {
    const int batch = mu.rank() == 2 ? mu.dim(0) : 1;
    const double s = scale / static_cast<double>(batch);
    for (long long i = 0; i < mu.size(); ++i) {
        dmu.ptr()[i] += static_cast<S>(s * mu.ptr()[i]);
        dlogvar.ptr()[i] += static_cast<S>(s * 0.5 * (std::exp(static_cast<double>(logvar.ptr()[i])) - 1.0));
    }
}

// Negated ELBO with the reconstruction likelihood realized as MSE.
template <class S>
double vae_loss(const Tensor<S>& x, const Tensor<S>& xhat, const Tensor<S>& mu, const Tensor<S>& logvar,
                double beta) {
    if (beta < 0.0) throw ConfigError("vae_loss: beta must be nonnegative, got " + std::to_string(beta));
    return mse_loss(x, xhat) + beta * kl_gaussian(mu, logvar);
}

}  // namespace vad
