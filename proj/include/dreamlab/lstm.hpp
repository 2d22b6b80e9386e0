#pragma once
// Stacked-LSTM next-token model with temperature sampling.
//
// Training passes run on the autograd tape; generation uses a value-only
// path built from the same kernels so both produce bit-identical logits.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dreamlab/autograd.hpp"
#include "dreamlab/common.hpp"
#include "dreamlab/markov.hpp"
#include "dreamlab/params.hpp"
#include "dreamlab/softmax.hpp"

namespace dreamlab {

struct TokenOutOfVocab : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 32;
    int hidden_dim = 64;
    int n_layers = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
        if (embed_dim < 1 || hidden_dim < 1) {
            throw std::invalid_argument("ModelConfig: dims must be >= 1");
        }
        if (n_layers < 1 || n_layers > 8) {
            throw std::invalid_argument("ModelConfig: n_layers must be in [1,8]");
        }
    }
};

struct HiddenState {
    std::vector<Tensor> h;  // one per layer
    std::vector<Tensor> c;

    static HiddenState zeros(const ModelConfig& cfg) {
        HiddenState s;
        const auto H = static_cast<std::size_t>(cfg.hidden_dim);
        for (int l = 0; l < cfg.n_layers; ++l) {
            s.h.push_back(Tensor::zeros({H}));
            s.c.push_back(Tensor::zeros({H}));
        }
        return s;
    }
};

struct SampledSequence {
    TokenSequence tokens;
    double temperature = 1.0;
    long source_step = -1;
};

// Gate order within the fused preactivation: input, forget, cell, output.
class RecurrentModel {
public:
    explicit RecurrentModel(const ModelConfig& cfg) : config(cfg) {
        config.validate();
        Rng rng(config.seed);
        const auto V = static_cast<std::size_t>(config.vocab_size);
        const auto E = static_cast<std::size_t>(config.embed_dim);
        const auto H = static_cast<std::size_t>(config.hidden_dim);
        const double k = 1.0 / std::sqrt(static_cast<double>(H));

        params.add("embed", init_uniform(rng, {V, E}, 0.5));
        for (int l = 0; l < config.n_layers; ++l) {
            const std::size_t in = (l == 0) ? E : H;
            const std::string p = "lstm" + std::to_string(l);
            params.add(p + ".wx", init_uniform(rng, {4 * H, in}, k));
            params.add(p + ".wh", init_uniform(rng, {4 * H, H}, k));
            Tensor b = init_uniform(rng, {4 * H}, k);
            for (std::size_t i = H; i < 2 * H; ++i) b[i] = 1.0;  // forget-gate bias
            params.add(p + ".b", std::move(b));
        }
        params.add("out.w", init_uniform(rng, {V, H}, k));
        params.add("out.b", Tensor::zeros({V}));
    }

    ModelConfig config;
    ParamStore params;

private:
    static Tensor init_uniform(Rng& rng, std::vector<std::size_t> shape, double k) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-k, k);
        return t;
    }
};

struct ForwardResult {
    std::vector<ad::NodeId> logits;  // one per input position
    HiddenState final_state;
};

// Unrolled forward over a token window. logits[t] predicts tokens[t+1];
// the returned state is detached from the tape.
inline ForwardResult forward_on_tape(ad::Tape& tape, RecurrentModel& model,
                                     const std::vector<std::int32_t>& tokens,
                                     const HiddenState& initial) {
    if (tokens.empty()) throw std::invalid_argument("forward: empty token window");
    const auto& cfg = model.config;
    for (auto t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) throw TokenOutOfVocab("forward: token outside vocab");
    }
    const std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);

    const ad::NodeId embed = tape.param(model.params.slot("embed"));
    struct LayerNodes {
        ad::NodeId wx, wh, b;
    };
    std::vector<LayerNodes> layers;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "lstm" + std::to_string(l);
        layers.push_back({tape.param(model.params.slot(p + ".wx")),
                          tape.param(model.params.slot(p + ".wh")),
                          tape.param(model.params.slot(p + ".b"))});
    }
    const ad::NodeId out_w = tape.param(model.params.slot("out.w"));
    const ad::NodeId out_b = tape.param(model.params.slot("out.b"));

    std::vector<ad::NodeId> h_prev(cfg.n_layers), c_prev(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
        h_prev[l] = tape.leaf(initial.h[l]);
        c_prev[l] = tape.leaf(initial.c[l]);
    }

    ForwardResult res;
    res.logits.reserve(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        ad::NodeId x = tape.embed_row(embed, static_cast<std::size_t>(tokens[t]));
        for (int l = 0; l < cfg.n_layers; ++l) {
            const ad::NodeId z = tape.affine2(layers[l].wx, x, layers[l].wh, h_prev[l], layers[l].b);
            const ad::NodeId i_g = tape.sigmoid(tape.slice(z, 0, H));
            const ad::NodeId f_g = tape.sigmoid(tape.slice(z, H, H));
            const ad::NodeId g_g = tape.tanh(tape.slice(z, 2 * H, H));
            const ad::NodeId o_g = tape.sigmoid(tape.slice(z, 3 * H, H));
            const ad::NodeId c = tape.add(tape.mul(f_g, c_prev[l]), tape.mul(i_g, g_g));
            const ad::NodeId h = tape.mul(o_g, tape.tanh(c));
            c_prev[l] = c;
            h_prev[l] = h;
            x = h;
        }
        res.logits.push_back(tape.affine(out_w, x, out_b));
    }
    res.final_state = HiddenState::zeros(cfg);
    for (int l = 0; l < cfg.n_layers; ++l) {
        res.final_state.h[l] = tape.value(h_prev[l]);
        res.final_state.c[l] = tape.value(c_prev[l]);
    }
    return res;
}

// Value-only single step: consumes one token, advances the state in place,
// writes the next-token logits. Mirrors the tape arithmetic exactly.
inline void step_infer(const RecurrentModel& model, int token, HiddenState& state,
                       std::vector<double>& logits_out) {
    const auto& cfg = model.config;
    if (token < 0 || token >= cfg.vocab_size) throw TokenOutOfVocab("step: token outside vocab");
    const std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);

    const Tensor& embed = model.params.slot("embed").value;
    const std::size_t E = embed.dim(1);
    std::vector<double> x(embed.data() + static_cast<std::size_t>(token) * E,
                          embed.data() + (static_cast<std::size_t>(token) + 1) * E);

    std::vector<double> z(4 * H);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "lstm" + std::to_string(l);
        const Tensor& wx = model.params.slot(p + ".wx").value;
        const Tensor& wh = model.params.slot(p + ".wh").value;
        const Tensor& b = model.params.slot(p + ".b").value;

        std::copy(b.data(), b.data() + 4 * H, z.begin());
        const Tensor xt({x.size()}, x);
        ad::detail::matvec_acc(wx, xt, z.data());
        ad::detail::matvec_acc(wh, state.h[l], z.data());

        Tensor& h = state.h[l];
        Tensor& c = state.c[l];
        x.resize(H);
        for (std::size_t j = 0; j < H; ++j) {
            const double ig = 1.0 / (1.0 + std::exp(-z[j]));
            const double fg = 1.0 / (1.0 + std::exp(-z[H + j]));
            const double gg = std::tanh(z[2 * H + j]);
            const double og = 1.0 / (1.0 + std::exp(-z[3 * H + j]));
            const double cj = fg * c[j] + ig * gg;
            c[j] = cj;
            const double hj = og * std::tanh(cj);
            h[j] = hj;
            x[j] = hj;
        }
    }

    const Tensor& out_w = model.params.slot("out.w").value;
    const Tensor& out_b = model.params.slot("out.b").value;
    logits_out.assign(out_b.data(), out_b.data() + out_b.size());
    const Tensor xt({x.size()}, x);
    ad::detail::matvec_acc(out_w, xt, logits_out.data());
}

// Draw the next token at temperature T. T <= 1e-3 degenerates to argmax.
inline int sample_next(const RecurrentModel& model, HiddenState& state, int last_token,
                       double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw NonPositiveTemperature("sample_next: T must be > 0");
    std::vector<double> logits;
    step_infer(model, last_token, state, logits);
    if (temperature <= 1e-3) {
        return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    const auto p = softmax_with_temperature(std::span<const double>(logits), temperature);
    return rng.categorical(p);
}

// Ancestral sampling continued from an explicit state and last token.
inline SampledSequence generate_from_state(const RecurrentModel& model, HiddenState state,
                                           int last_token, std::size_t length, double temperature,
                                           Rng& rng, long source_step = -1) {
    if (length < 1) throw std::invalid_argument("generate: length must be >= 1");
    std::vector<std::int32_t> toks;
    toks.reserve(length);
    int tok = last_token;
    for (std::size_t i = 0; i < length; ++i) {
        tok = sample_next(model, state, tok, temperature, rng);
        toks.push_back(tok);
    }
    SampledSequence out;
    out.tokens = TokenSequence(std::move(toks), model.config.vocab_size);
    out.temperature = temperature;
    out.source_step = source_step;
    return out;
}

// Warm the hidden state on a context window, then sample.
inline SampledSequence generate(const RecurrentModel& model, const TokenSequence& seed_context,
                                std::size_t length, double temperature, Rng& rng,
                                long source_step = -1) {
    if (seed_context.tokens.empty()) {
        throw std::invalid_argument("generate: seed context must be non-empty");
    }
    HiddenState state = HiddenState::zeros(model.config);
    std::vector<double> logits;
    for (std::size_t i = 0; i + 1 < seed_context.tokens.size(); ++i) {
        step_infer(model, seed_context.tokens[i], state, logits);
    }
    return generate_from_state(model, std::move(state), seed_context.tokens.back(), length,
                               temperature, rng, source_step);
}

}  // namespace dreamlab
