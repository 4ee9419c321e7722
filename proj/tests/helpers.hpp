#pragma once

// Shared test utilities: random tensors and the finite-difference gradient
// checker used across layer/loss/model tests. The checker is the independent
// oracle for every analytic backward pass: loss L = sum w_ij * y_ij with
// fixed random weights w, numeric gradients by central differences.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "vad/layers.hpp"
#include "vad/rng.hpp"
#include "vad/tensor.hpp"

namespace vadtest {

inline void fill_random(vad::Tensor<double>& t, vad::Rng& rng, double lo = -1.0, double hi = 1.0) {
    rng.fill_uniform(t.data, lo, hi);
}

inline void randomize_params(vad::ParameterStore<double>& store, vad::Rng& rng) {
    for (auto& [name, p] : store.entries()) {
        if (p.init == vad::ParamInit::ones)
            rng.fill_uniform(p.value, 0.5, 1.5);  // keep variances positive
        else
            rng.fill_uniform(p.value, -0.5, 0.5);
    }
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string where;
};

// Relative error |analytic - numeric| / (|numeric| + 1e-8), maximized over all
// trainable parameter elements and all input elements.
inline GradCheckResult gradcheck_layer(vad::Layer<double>& layer, vad::ParameterStore<double>& store,
                                       vad::Tensor<double> x, vad::Mode mode, vad::Rng& rng,
                                       double h = 1e-5) {
    vad::Tensor<double> y = layer.forward(x, mode);
    vad::Tensor<double> w(y.shape);
    fill_random(w, rng);

    auto loss = [&]() {
        vad::Tensor<double> out = layer.forward(x, mode);
        double acc = 0.0;
        for (long long i = 0; i < out.size(); ++i) acc += w.ptr()[i] * out.ptr()[i];
        return acc;
    };

    store.zero_grads();
    layer.forward(x, mode);
    vad::Tensor<double> dx = layer.backward(w);

    std::vector<std::pair<std::string, std::vector<double>>> analytic;
    for (auto& [name, p] : store.entries())
        if (p.trainable) analytic.emplace_back(name, p.g());

    GradCheckResult res;
    auto consider = [&](double a, double n, const std::string& where) {
        const double rel = std::abs(a - n) / (std::abs(n) + 1e-8);
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.where = where;
        }
    };

    std::size_t pi = 0;
    for (auto& [name, p] : store.entries()) {
        if (!p.trainable) continue;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double keep = p.value[j];
            p.value[j] = keep + h;
            const double up = loss();
            p.value[j] = keep - h;
            const double dn = loss();
            p.value[j] = keep;
            consider(analytic[pi].second[j], (up - dn) / (2.0 * h), name + "[" + std::to_string(j) + "]");
        }
        ++pi;
    }
    for (long long j = 0; j < x.size(); ++j) {
        const double keep = x.ptr()[j];
        x.ptr()[j] = keep + h;
        const double up = loss();
        x.ptr()[j] = keep - h;
        const double dn = loss();
        x.ptr()[j] = keep;
        consider(dx.ptr()[j], (up - dn) / (2.0 * h), "input[" + std::to_string(j) + "]");
    }
    return res;
}

// Same recipe for a scalar function of flat vectors: f(params) -> double with
// analytic gradient g.
inline double max_rel_err_vector(const std::function<double()>& f, std::vector<double>& v,
                                 const std::vector<double>& analytic, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = f();
        v[i] = keep - h;
        const double dn = f();
        v[i] = keep;
        const double num = (up - dn) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - num) / (std::abs(num) + 1e-8));
    }
    return worst;
}

}  // namespace vadtest
