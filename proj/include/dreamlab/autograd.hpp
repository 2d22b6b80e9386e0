#pragma once
// Tape-based reverse-mode differentiation over rank-1/2 tensors.
//
// A forward pass appends nodes in execution order; backward replays the
// records strictly in reverse, which is a valid topological order because
// every operation only consumes already-recorded nodes. Parameter leaves
// flush their accumulated gradient into the owning ParamStore slot.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dreamlab/common.hpp"
#include "dreamlab/params.hpp"
#include "dreamlab/softmax.hpp"
#include "dreamlab/tensor.hpp"

namespace dreamlab::ad {

using NodeId = std::int32_t;
constexpr NodeId kNoNode = -1;

struct EmptyTape : std::logic_error {
    using std::logic_error::logic_error;
};

struct TargetOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

namespace detail {

// out += W x   (W: [m x n], x: [n], out: [m])
inline void matvec_acc(const Tensor& w, const Tensor& x, double* out) {
    const std::size_t m = w.dim(0), n = w.dim(1);
    const double* wp = w.data();
    const double* xp = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = wp + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * xp[j];
        out[i] += acc;
    }
}

// gw += gy (outer) x ; gx += W^T gy
inline void matvec_backward(const Tensor& w, const Tensor& x, const Tensor& gy,
                            Tensor& gw, Tensor& gx) {
    const std::size_t m = w.dim(0), n = w.dim(1);
    const double* wp = w.data();
    const double* xp = x.data();
    const double* gyp = gy.data();
    double* gwp = gw.data();
    double* gxp = gx.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double g = gyp[i];
        const double* wrow = wp + i * n;
        double* gwrow = gwp + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            gwrow[j] += g * xp[j];
            gxp[j] += wrow[j] * g;
        }
    }
}

}  // namespace detail

class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // empty for leaves
        ParamSlot* flush = nullptr;       // parameter leaves only
    };

    NodeId leaf(Tensor v) {
        return push(std::move(v), nullptr, nullptr);
    }

    NodeId param(ParamSlot& slot) {
        return push(slot.value, nullptr, &slot);
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    Tensor& grad(NodeId id) { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // ---- operations ---------------------------------------------------

    NodeId matvec(NodeId w, NodeId x) {
        Tensor out = Tensor::zeros({nodes_[w].value.dim(0)});
        detail::matvec_acc(nodes_[w].value, nodes_[x].value, out.data());
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [w, x, id](Tape& t) {
            detail::matvec_backward(t.nodes_[w].value, t.nodes_[x].value,
                                    t.nodes_[id].grad, t.nodes_[w].grad, t.nodes_[x].grad);
        };
        return id;
    }

    // W x + b
    NodeId affine(NodeId w, NodeId x, NodeId b) {
        Tensor out = nodes_[b].value;
        detail::matvec_acc(nodes_[w].value, nodes_[x].value, out.data());
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [w, x, b, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            detail::matvec_backward(t.nodes_[w].value, t.nodes_[x].value, gy,
                                    t.nodes_[w].grad, t.nodes_[x].grad);
            double* gb = t.nodes_[b].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
        };
        return id;
    }

    // Wx x + Wh h + b, the fused recurrent-gate preactivation
    NodeId affine2(NodeId wx, NodeId x, NodeId wh, NodeId h, NodeId b) {
        Tensor out = nodes_[b].value;
        detail::matvec_acc(nodes_[wx].value, nodes_[x].value, out.data());
        detail::matvec_acc(nodes_[wh].value, nodes_[h].value, out.data());
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [wx, x, wh, h, b, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            detail::matvec_backward(t.nodes_[wx].value, t.nodes_[x].value, gy,
                                    t.nodes_[wx].grad, t.nodes_[x].grad);
            detail::matvec_backward(t.nodes_[wh].value, t.nodes_[h].value, gy,
                                    t.nodes_[wh].grad, t.nodes_[h].grad);
            double* gb = t.nodes_[b].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
        };
        return id;
    }

    NodeId add(NodeId a, NodeId b) {
        Tensor out = nodes_[a].value;
        const double* bp = nodes_[b].value.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [a, b, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            double* ga = t.nodes_[a].grad.data();
            double* gb = t.nodes_[b].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        };
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        Tensor out = nodes_[a].value;
        const double* bp = nodes_[b].value.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [a, b, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            const double* av = t.nodes_[a].value.data();
            const double* bv = t.nodes_[b].value.data();
            double* ga = t.nodes_[a].grad.data();
            double* gb = t.nodes_[b].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * bv[i];
                gb[i] += gy[i] * av[i];
            }
        };
        return id;
    }

    NodeId sigmoid(NodeId a) {
        Tensor out = nodes_[a].value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [a, id](Tape& t) {
            const Tensor& y = t.nodes_[id].value;
            const Tensor& gy = t.nodes_[id].grad;
            double* ga = t.nodes_[a].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * y[i] * (1.0 - y[i]);
            }
        };
        return id;
    }

    NodeId tanh(NodeId a) {
        Tensor out = nodes_[a].value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [a, id](Tape& t) {
            const Tensor& y = t.nodes_[id].value;
            const Tensor& gy = t.nodes_[id].grad;
            double* ga = t.nodes_[a].grad.data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * (1.0 - y[i] * y[i]);
            }
        };
        return id;
    }

    NodeId slice(NodeId a, std::size_t offset, std::size_t len) {
        const Tensor& av = nodes_[a].value;
        Tensor out({len}, std::vector<double>(av.data() + offset, av.data() + offset + len));
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [a, offset, len, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            double* ga = t.nodes_[a].grad.data() + offset;
            for (std::size_t i = 0; i < len; ++i) ga[i] += gy[i];
        };
        return id;
    }

    // row of a rank-2 parameter (embedding lookup)
    NodeId embed_row(NodeId e, std::size_t row) {
        const Tensor& ev = nodes_[e].value;
        const std::size_t n = ev.dim(1);
        Tensor out({n}, std::vector<double>(ev.data() + row * n, ev.data() + (row + 1) * n));
        NodeId id = push(std::move(out), nullptr, nullptr);
        nodes_[id].back = [e, row, n, id](Tape& t) {
            const Tensor& gy = t.nodes_[id].grad;
            double* ge = t.nodes_[e].grad.data() + row * n;
            for (std::size_t i = 0; i < n; ++i) ge[i] += gy[i];
        };
        return id;
    }

    // -ln softmax(logits)[target]; gradient is softmax - one_hot(target).
    // The softmax is recomputed in the backward rule rather than stored.
    NodeId cross_entropy(NodeId logits, int target) {
        const Tensor& z = nodes_[logits].value;
        if (target < 0 || static_cast<std::size_t>(target) >= z.size()) {
            throw TargetOutOfRange("cross_entropy: target id out of range");
        }
        const double loss = -log_softmax_at(z.span(), static_cast<std::size_t>(target));
        NodeId id = push(Tensor::scalar(loss), nullptr, nullptr);
        nodes_[id].back = [logits, target, id](Tape& t) {
            const double g = t.nodes_[id].grad[0];
            const Tensor& z = t.nodes_[logits].value;
            auto p = softmax(z.span());
            double* gz = t.nodes_[logits].grad.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                gz[i] += g * (p[i] - (static_cast<int>(i) == target ? 1.0 : 0.0));
            }
        };
        return id;
    }

    NodeId mean(std::vector<NodeId> scalars) {
        if (scalars.empty()) throw std::invalid_argument("mean: empty node list");
        double total = 0.0;
        for (NodeId s : scalars) total += nodes_[s].value[0];
        const double inv = 1.0 / static_cast<double>(scalars.size());
        NodeId id = push(Tensor::scalar(total * inv), nullptr, nullptr);
        nodes_[id].back = [xs = std::move(scalars), inv, id](Tape& t) {
            const double g = t.nodes_[id].grad[0] * inv;
            for (NodeId s : xs) t.nodes_[s].grad[0] += g;
        };
        return id;
    }

    // ---- reverse pass ---------------------------------------------------

    void backward(NodeId loss, double seed = 1.0) {
        if (nodes_.empty()) throw EmptyTape("backward on empty tape");
        if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
            throw std::out_of_range("backward: loss node id out of range");
        }
        if (nodes_[loss].value.size() != 1) {
            throw std::invalid_argument("backward: loss must be scalar");
        }
        nodes_[loss].grad[0] += seed;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back(*this);
        }
        for (auto& n : nodes_) {
            if (n.flush) {
                double* g = n.flush->grad.data();
                const double* ng = n.grad.data();
                for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += ng[i];
            }
        }
    }

private:
    NodeId push(Tensor v, std::function<void(Tape&)> back, ParamSlot* flush) {
        Node n;
        n.grad = Tensor::zeros(v.shape());
        n.value = std::move(v);
        n.back = std::move(back);
        n.flush = flush;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

// Central-difference verification of tape gradients. The closure runs a
// deterministic forward+backward pass, leaving gradients in `store`, and
// returns the loss. At most `max_coords` coordinates are sampled.
inline double gradient_check(const std::function<double()>& forward_backward,
                             ParamStore& store, double epsilon,
                             std::size_t max_coords = 200,
                             std::uint64_t sample_seed = 0x5eedc0ffee) {
    const std::size_t n = store.param_count();
    if (n == 0) return 0.0;

    store.zero_grad();
    forward_backward();
    const std::vector<double> analytic = store.flatten_grads();

    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (n > max_coords) {
        Rng rng(sample_seed);
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * double(n - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords);
    }

    double max_rel = 0.0;
    for (std::size_t c : coords) {
        double& theta = store.value_coord(c);
        const double saved = theta;
        theta = saved + epsilon;
        store.zero_grad();
        const double fp = forward_backward();
        theta = saved - epsilon;
        store.zero_grad();
        const double fm = forward_backward();
        theta = saved;
        const double fd = (fp - fm) / (2.0 * epsilon);
        const double denom = std::max(1e-8, std::abs(analytic[c]) + std::abs(fd));
        max_rel = std::max(max_rel, std::abs(analytic[c] - fd) / denom);
    }
    store.zero_grad();
    return max_rel;
}

}  // namespace dreamlab::ad
