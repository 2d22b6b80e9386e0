#pragma once
// Temperature-scaled softmax and distribution helpers.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dreamlab/tensor.hpp"

namespace dreamlab {

struct NonPositiveTemperature : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// q_i = exp(z_i / T) / sum_j exp(z_j / T), computed with max subtraction.
// T = 1 reproduces the plain softmax bit for bit (z / 1.0 == z).
inline std::vector<double> softmax_with_temperature(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw NonPositiveTemperature("softmax temperature must be > 0");
    }
    std::vector<double> q(logits.size());
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        q[i] = logits[i] / temperature;
        zmax = std::max(zmax, q[i]);
    }
    double total = 0.0;
    for (double& v : q) {
        v = std::exp(v - zmax);
        total += v;
    }
    for (double& v : q) v /= total;
    return q;
}

inline Tensor softmax_with_temperature(const Tensor& logits, double temperature) {
    if (logits.rank() != 1) throw std::invalid_argument("softmax: rank-1 tensor expected");
    auto q = softmax_with_temperature(logits.span(), temperature);
    return Tensor({q.size()}, std::move(q));
}

inline std::vector<double> softmax(std::span<const double> logits) {
    return softmax_with_temperature(logits, 1.0);
}

// Shannon entropy in nats, with 0 ln 0 := 0.
inline double entropy_nats(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// log softmax(z)[target] via logsumexp; shares the arithmetic of the
// cross-entropy forward pass.
inline double log_softmax_at(std::span<const double> logits, std::size_t target) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (double z : logits) zmax = std::max(zmax, z);
    double total = 0.0;
    for (double z : logits) total += std::exp(z - zmax);
    return (logits[target] - zmax) - std::log(total);
}

}  // namespace dreamlab
