#pragma once
// Adam optimizer over a ParamStore.

#include <cmath>

#include "dreamlab/params.hpp"

namespace dreamlab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update from the accumulated gradients; moment buffers live in
// the slots, the shared step counter in the store. Gradients are zeroed
// after the update.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.adam_step_count += 1;
    const double t = static_cast<double>(store.adam_step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& slot : store.slots()) {
        if (slot.adam_m.empty()) {
            slot.adam_m = Tensor::zeros(slot.value.shape());
            slot.adam_v = Tensor::zeros(slot.value.shape());
        }
        double* theta = slot.value.data();
        double* g = slot.grad.data();
        double* m = slot.adam_m.data();
        double* v = slot.adam_v.data();
        const std::size_t n = slot.value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            g[i] = 0.0;
        }
    }
}

inline void adam_step(ParamStore& store, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    adam_step(store, AdamConfig{lr, beta1, beta2, eps});
}

}  // namespace dreamlab
