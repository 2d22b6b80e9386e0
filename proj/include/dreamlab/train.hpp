#pragma once
// Vanilla and dreaming training loops.
//
// A run walks the corpus in sequential BPTT windows. With dreaming on,
// every `dream_every` standard steps the model generates a sequence at
// sampling temperature T_s from frozen parameters and takes one training
// step on it. Standard steps never train on generated tokens and dream
// steps never train on corpus tokens.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dreamlab/lstm.hpp"
#include "dreamlab/markov.hpp"
#include "dreamlab/optim.hpp"
#include "dreamlab/pool.hpp"

namespace dreamlab {

struct DreamBeforeTraining : std::logic_error {
    using std::logic_error::logic_error;
};

struct TrainConfig {
    int bptt_len = 32;
    int batch_size = 1;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool dream_enabled = false;
    double sampling_temperature = 1.5;  // T_s
    int dream_len = 32;
    int dream_every = 1;  // standard steps per dream step
    double dream_lr_scale = 1.0;
    long max_steps = 2000;  // standard steps in the run
    std::uint64_t seed = 0;

    void validate() const {
        if (bptt_len < 1) throw std::invalid_argument("TrainConfig: bptt_len must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
        if (!(sampling_temperature > 0.0)) {
            throw std::invalid_argument("TrainConfig: sampling temperature must be > 0");
        }
        if (dream_every < 1) throw std::invalid_argument("TrainConfig: dream_every must be >= 1");
        if (dream_len < 1) throw std::invalid_argument("TrainConfig: dream_len must be >= 1");
        if (!(dream_lr_scale >= 0.0)) {
            throw std::invalid_argument("TrainConfig: dream_lr_scale must be >= 0");
        }
        if (max_steps < 1) throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
    }
};

enum class Phase { standard, dream };

inline const char* phase_name(Phase p) { return p == Phase::standard ? "standard" : "dream"; }

struct TraceRecord {
    long step = 0;  // global event index, strictly increasing across phases
    Phase phase = Phase::standard;
    double loss = 0.0;
    long corpus_pos = 0;
};

struct LossTrace {
    std::vector<TraceRecord> records;
    std::vector<long> change_points;    // event indices of first step in each new regime
    std::vector<double> lower_bounds;   // per-segment entropy rates, nats/token
};

// standard-phase losses from the k-th change point onward (k = 0 means
// the first boundary); used for critical-time extraction
inline std::vector<double> standard_losses_after_change(const LossTrace& trace,
                                                        std::size_t boundary = 0) {
    if (boundary >= trace.change_points.size()) {
        throw std::out_of_range("no such change point in trace");
    }
    const long cp = trace.change_points[boundary];
    std::vector<double> out;
    for (const auto& r : trace.records) {
        if (r.phase == Phase::standard && r.step >= cp) out.push_back(r.loss);
    }
    return out;
}

struct DreamDiag {
    long step = 0;          // global event index of the dream record
    double loss = 0.0;      // cross entropy on the sampled tokens, T = 1
    double pred_entropy = 0.0;  // mean entropy of the T = 1 prediction
    double exact_kl = 0.0;      // mean KL(P_1 || P_Ts) over dream positions
};

struct ValRecord {
    long step = 0;  // standard-step index of the evaluation
    double loss = 0.0;
};

struct PhaseCounters {
    long standard_steps = 0;
    long dream_steps = 0;
    long corpus_targets_in_standard = 0;
    long generated_targets_in_dream = 0;
    long corpus_targets_in_dream = 0;      // must stay zero
    long generated_targets_in_standard = 0;  // must stay zero
};

struct RunResult {
    LossTrace trace;
    TrainConfig config;
    ModelConfig model_config;
    std::vector<DreamDiag> dream_diags;
    std::vector<ValRecord> val_records;
    std::vector<double> grad_norms;  // L2 gradient norm per trace record
    PhaseCounters counters;
    double wall_seconds = 0.0;
    std::shared_ptr<RecurrentModel> model;
};

struct ValConfig {
    TokenSequence seq;
    int eval_every = 100;
    int max_windows = 64;
};

class Trainer {
public:
    Trainer(RecurrentModel& model, const TrainConfig& cfg)
        : model_(model),
          cfg_(cfg),
          state_(HiddenState::zeros(model.config)),
          dream_rng_(mix_seed(cfg.seed, 0xD1EA)) {
        cfg.validate();
        adam_.lr = cfg.lr;
        adam_.beta1 = cfg.beta1;
        adam_.beta2 = cfg.beta2;
        adam_.eps = cfg.adam_eps;
    }

    // One optimizer update from batch_size consecutive windows starting at
    // `pos`. Requires pos + batch_size*bptt_len < corpus size. Returns the
    // pre-update mean loss.
    double standard_step(const TokenSequence& corpus, std::size_t pos) {
        const std::size_t bptt = static_cast<std::size_t>(cfg_.bptt_len);
        const std::size_t nwin = static_cast<std::size_t>(cfg_.batch_size);
        if (pos + nwin * bptt >= corpus.size()) {
            throw std::out_of_range("standard_step: window exceeds corpus");
        }
        double mean_loss = 0.0;
        for (std::size_t w = 0; w < nwin; ++w) {
            const std::size_t base = pos + w * bptt;
            std::vector<std::int32_t> inputs(corpus.tokens.begin() + base,
                                             corpus.tokens.begin() + base + bptt);
            ad::Tape tape;
            auto fwd = forward_on_tape(tape, model_, inputs, state_);
            std::vector<ad::NodeId> losses;
            losses.reserve(bptt);
            for (std::size_t t = 0; t < bptt; ++t) {
                losses.push_back(tape.cross_entropy(fwd.logits[t], corpus.tokens[base + t + 1]));
            }
            const ad::NodeId loss = tape.mean(losses);
            tape.backward(loss, 1.0 / static_cast<double>(nwin));
            mean_loss += tape.value(loss)[0];
            state_ = fwd.final_state;  // detached carry across windows
        }
        mean_loss /= static_cast<double>(nwin);

        last_grad_norm_ = grad_norm();
        adam_step(model_.params, adam_);
        counters_.standard_steps += 1;
        counters_.corpus_targets_in_standard += static_cast<long>(nwin * bptt);
        dream_context_token_ = corpus.tokens[pos + nwin * bptt];
        has_trained_ = true;
        return mean_loss;
    }

    // Generate at T_s from frozen parameters, then one training step on
    // the generated tokens with loss at temperature 1 and lr scaled by
    // dream_lr_scale. The trainer's corpus-side hidden state is untouched.
    double dream_step(double sampling_temperature, int dream_len, Rng& rng) {
        if (!has_trained_) {
            throw DreamBeforeTraining("dream_step before any standard step");
        }
        // phase 1: sample with parameters frozen (generation takes no tape)
        HiddenState gen_state = state_;
        SampledSequence dream = generate_from_state(model_, gen_state, dream_context_token_,
                                                    static_cast<std::size_t>(dream_len),
                                                    sampling_temperature, rng,
                                                    counters_.standard_steps);

        // phase 2: train on the sampled tokens as data
        std::vector<std::int32_t> inputs;
        inputs.reserve(dream.tokens.size());
        inputs.push_back(dream_context_token_);
        inputs.insert(inputs.end(), dream.tokens.tokens.begin(), dream.tokens.tokens.end() - 1);

        ad::Tape tape;
        auto fwd = forward_on_tape(tape, model_, inputs, state_);
        std::vector<ad::NodeId> losses;
        losses.reserve(inputs.size());
        double entropy_sum = 0.0, kl_sum = 0.0;
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            losses.push_back(tape.cross_entropy(fwd.logits[t], dream.tokens.tokens[t]));
            const auto& z = tape.value(fwd.logits[t]);
            const auto p1 = softmax(z.span());
            entropy_sum += entropy_nats(p1);
            if (sampling_temperature != 1.0) {
                const auto pt = softmax_with_temperature(z.span(), sampling_temperature);
                for (std::size_t i = 0; i < p1.size(); ++i) {
                    if (p1[i] > 0.0) kl_sum += p1[i] * (std::log(p1[i]) - std::log(pt[i]));
                }
            }
        }
        const ad::NodeId loss = tape.mean(losses);
        tape.backward(loss);
        const double loss_v = tape.value(loss)[0];

        last_grad_norm_ = grad_norm();
        AdamConfig dream_adam = adam_;
        dream_adam.lr = adam_.lr * cfg_.dream_lr_scale;
        adam_step(model_.params, dream_adam);

        counters_.dream_steps += 1;
        counters_.generated_targets_in_dream += static_cast<long>(inputs.size());
        last_dream_diag_ = DreamDiag{
            .step = 0,  // caller stamps the event index
            .loss = loss_v,
            .pred_entropy = entropy_sum / static_cast<double>(inputs.size()),
            .exact_kl = kl_sum / static_cast<double>(inputs.size()),
        };
        return loss_v;
    }

    double eval_loss(const ValConfig& val) const {
        const std::size_t bptt = static_cast<std::size_t>(cfg_.bptt_len);
        if (val.seq.size() < bptt + 1) {
            throw std::invalid_argument("eval: validation sequence shorter than one window");
        }
        const std::size_t usable = val.seq.size() - bptt - 1;
        const std::size_t nwin =
            std::min<std::size_t>(static_cast<std::size_t>(val.max_windows), usable / bptt + 1);
        double total = 0.0;
        std::size_t count = 0;
        std::vector<double> logits;
        for (std::size_t w = 0; w < nwin; ++w) {
            const std::size_t base = (nwin == 1) ? 0 : w * usable / (nwin - 1);
            HiddenState s = HiddenState::zeros(model_.config);
            for (std::size_t t = 0; t < bptt; ++t) {
                step_infer(model_, val.seq.tokens[base + t], s, logits);
                total -= log_softmax_at(logits, static_cast<std::size_t>(val.seq.tokens[base + t + 1]));
                count += 1;
            }
        }
        return total / static_cast<double>(count);
    }

    void reset_state() { state_ = HiddenState::zeros(model_.config); }

    const PhaseCounters& counters() const { return counters_; }
    double last_grad_norm() const { return last_grad_norm_; }
    const DreamDiag& last_dream_diag() const { return last_dream_diag_; }
    Rng& dream_rng() { return dream_rng_; }
    const TrainConfig& config() const { return cfg_; }

private:
    double grad_norm() const {
        double acc = 0.0;
        for (const auto& slot : model_.params.slots()) {
            for (std::size_t i = 0; i < slot.grad.size(); ++i) {
                acc += slot.grad[i] * slot.grad[i];
            }
        }
        return std::sqrt(acc);
    }

    RecurrentModel& model_;
    TrainConfig cfg_;
    AdamConfig adam_;
    HiddenState state_;
    Rng dream_rng_;
    int dream_context_token_ = 0;
    bool has_trained_ = false;
    double last_grad_norm_ = 0.0;
    DreamDiag last_dream_diag_;
    PhaseCounters counters_;
};

// Full training run over a scripted corpus.
//
// Standard steps are budgeted per segment in proportion to segment token
// counts, so the regime shift lands at a fixed scripted step. The corpus
// position wraps within the current segment when a window would cross its
// end; it never crosses a change point mid-window.
inline RunResult train_run(const ModelConfig& model_cfg, const TrainConfig& cfg,
                           const RegimeCorpus& corpus, const ValConfig* val = nullptr) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const std::size_t consumed_per_step =
        static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.bptt_len);

    // segment boundaries in tokens and scripted steps
    std::vector<std::size_t> seg_starts{0};
    for (auto cp : corpus.change_points) seg_starts.push_back(cp);
    std::vector<std::size_t> seg_ends(corpus.change_points.begin(), corpus.change_points.end());
    seg_ends.push_back(corpus.seq.size());
    const std::size_t n_segs = seg_starts.size();
    for (std::size_t k = 0; k < n_segs; ++k) {
        if (seg_ends[k] - seg_starts[k] < consumed_per_step + 1) {
            throw std::invalid_argument("train_run: segment shorter than one step window");
        }
    }
    std::vector<long> seg_step_bounds(n_segs + 1, 0);
    const double total_tokens = static_cast<double>(corpus.seq.size());
    for (std::size_t k = 1; k <= n_segs; ++k) {
        seg_step_bounds[k] = (k == n_segs)
                                 ? cfg.max_steps
                                 : std::lround(static_cast<double>(cfg.max_steps) *
                                               static_cast<double>(seg_ends[k - 1]) / total_tokens);
    }

    RunResult res;
    res.config = cfg;
    res.model_config = model_cfg;
    res.trace.lower_bounds = corpus.segment_entropy_rates;
    res.model = std::make_shared<RecurrentModel>(model_cfg);

    Trainer trainer(*res.model, cfg);
    long ev = 0;
    std::size_t seg = 0;
    std::size_t pos = 0;

    for (long s = 0; s < cfg.max_steps; ++s) {
        if (seg + 1 < n_segs && s == seg_step_bounds[seg + 1]) {
            seg += 1;
            pos = seg_starts[seg];  // state carries across the boundary
            res.trace.change_points.push_back(ev);
        }
        if (pos + consumed_per_step >= seg_ends[seg]) {
            pos = seg_starts[seg];
            trainer.reset_state();
        }
        const double loss = trainer.standard_step(corpus.seq, pos);
        res.trace.records.push_back({ev, Phase::standard, loss, static_cast<long>(pos)});
        res.grad_norms.push_back(trainer.last_grad_norm());
        ev += 1;
        pos += consumed_per_step;

        if (cfg.dream_enabled && (s + 1) % cfg.dream_every == 0) {
            const double dl =
                trainer.dream_step(cfg.sampling_temperature, cfg.dream_len, trainer.dream_rng());
            res.trace.records.push_back({ev, Phase::dream, dl, static_cast<long>(pos)});
            res.grad_norms.push_back(trainer.last_grad_norm());
            DreamDiag diag = trainer.last_dream_diag();
            diag.step = ev;
            res.dream_diags.push_back(diag);
            ev += 1;
        }
        if (val && ((s + 1) % val->eval_every == 0 || s + 1 == cfg.max_steps)) {
            res.val_records.push_back({s + 1, trainer.eval_loss(*val)});
        }
    }

    res.counters = trainer.counters();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct PairedRun {
    std::uint64_t seed = 0;
    RunResult vanilla;
    RunResult dreaming;
};

// Vanilla and dreaming on the same corpus realization and the same
// initial parameters; only the dream stream differs between arms.
inline std::vector<PairedRun> paired_experiment(const ModelConfig& model_cfg,
                                                const TrainConfig& cfg, const RegimeScript& script,
                                                const std::vector<std::uint64_t>& seeds,
                                                unsigned jobs = 1) {
    if (seeds.empty()) throw std::invalid_argument("paired_experiment: need at least one seed");
    std::vector<PairedRun> results(seeds.size());
    std::vector<RegimeCorpus> corpora(seeds.size());
    parallel_for(seeds.size(), jobs, [&](std::size_t i) {
        corpora[i] = build_regime_corpus(script, mix_seed(seeds[i], 0xC0B95ull));
    });
    parallel_for(seeds.size() * 2, jobs, [&](std::size_t t) {
        const std::size_t i = t / 2;
        const bool dreaming = (t % 2) == 1;
        ModelConfig mc = model_cfg;
        mc.seed = mix_seed(seeds[i], 0x11317ull);
        TrainConfig tc = cfg;
        tc.seed = mix_seed(seeds[i], 0x7247ull);
        tc.dream_enabled = dreaming;
        RunResult r = train_run(mc, tc, corpora[i]);
        results[i].seed = seeds[i];
        (dreaming ? results[i].dreaming : results[i].vanilla) = std::move(r);
    });
    return results;
}

}  // namespace dreamlab
