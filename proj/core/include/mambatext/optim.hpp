#pragma once

#include <cstdint>
#include <vector>

#include "mambatext/tensor.hpp"

namespace mambatext {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Per-parameter first/second moments plus the shared step counter.
template <typename T>
struct AdamWState {
    AdamWConfig cfg;
    std::int64_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    static AdamWState init(const std::vector<const Tensor<T>*>& params, AdamWConfig cfg) {
        AdamWState s;
        s.cfg = cfg;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor<T>* p : params) {
            s.m.emplace_back(p->shape());
            s.v.emplace_back(p->shape());
        }
        return s;
    }
};

// One AdamW update with bias correction and decoupled weight decay.
template <typename T>
void adamw_step(std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
                AdamWState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatch("adamw_step: parameter/gradient/state counts differ");
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = state.cfg.lr, eps = state.cfg.eps, wd = state.cfg.weight_decay;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor<T>& p = *params[t];
        const Tensor<T>& g = grads[t];
        if (!p.same_shape(g) || !p.same_shape(state.m[t]))
            throw ShapeMismatch("adamw_step: shape mismatch at tensor " + std::to_string(t));
        Tensor<T>& m = state.m[t];
        Tensor<T>& v = state.v[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps) + wd * static_cast<double>(p[i]);
            p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * upd);
        }
    }
}

}  // namespace mambatext
