#pragma once
// Markov chain sources: entropy-targeted transition matrices, stationary
// distributions, entropy rates, and regime-shift corpora with known
// change points and loss lower bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dreamlab/common.hpp"
#include "dreamlab/special.hpp"

namespace dreamlab {

struct ReducibleChain : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EntropyUnreachable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VocabMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TokenSequence {
    std::vector<std::int32_t> tokens;
    std::int32_t vocab_size = 0;

    TokenSequence() = default;
    TokenSequence(std::vector<std::int32_t> toks, std::int32_t vocab)
        : tokens(std::move(toks)), vocab_size(vocab) {
        if (vocab_size <= 0) throw std::invalid_argument("TokenSequence: vocab_size must be positive");
        for (auto t : tokens) {
            if (t < 0 || t >= vocab_size) {
                throw std::invalid_argument("TokenSequence: token id out of range");
            }
        }
    }

    std::size_t size() const { return tokens.size(); }
};

// Row-stochastic transition matrix P(next = j | current = i).
class TransitionMatrix {
public:
    TransitionMatrix(int n_states, std::vector<double> rows)
        : n_(n_states), rows_(std::move(rows)) {
        if (n_ < 2) throw std::invalid_argument("TransitionMatrix: need at least 2 states");
        if (rows_.size() != static_cast<std::size_t>(n_) * n_) {
            throw std::invalid_argument("TransitionMatrix: row data size mismatch");
        }
        for (int i = 0; i < n_; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n_; ++j) {
                const double p = at(i, j);
                if (p < 0.0) throw std::invalid_argument("TransitionMatrix: negative entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12) {
                throw std::invalid_argument("TransitionMatrix: row " + std::to_string(i) +
                                            " does not sum to 1");
            }
        }
    }

    int n_states() const { return n_; }
    double at(int i, int j) const { return rows_[static_cast<std::size_t>(i) * n_ + j]; }
    const double* row(int i) const { return rows_.data() + static_cast<std::size_t>(i) * n_; }
    const std::vector<double>& data() const { return rows_; }

private:
    int n_;
    std::vector<double> rows_;
};

struct StationaryDistribution {
    std::vector<double> probs;

    explicit StationaryDistribution(std::vector<double> p) : probs(std::move(p)) {
        double sum = 0.0;
        for (double v : probs) {
            if (v < 0.0) throw std::invalid_argument("StationaryDistribution: negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw std::invalid_argument("StationaryDistribution: does not sum to 1");
        }
    }
};

struct MarkovSpec {
    int n_states = 10;
    double target_norm_entropy = 0.5;
    double entropy_tolerance = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_states < 2) throw std::invalid_argument("MarkovSpec: n_states must be >= 2");
        if (target_norm_entropy < 0.0 || target_norm_entropy > 1.0) {
            throw std::invalid_argument("MarkovSpec: target_norm_entropy outside [0,1]");
        }
        if (!(entropy_tolerance > 0.0) || entropy_tolerance > 0.05) {
            throw std::invalid_argument("MarkovSpec: entropy_tolerance outside (0, 0.05]");
        }
    }
};

struct RegimeScript {
    struct Segment {
        MarkovSpec spec;
        std::size_t length = 0;
    };
    std::vector<Segment> segments;

    void validate() const {
        if (segments.empty()) throw std::invalid_argument("RegimeScript: no segments");
        for (const auto& s : segments) {
            s.spec.validate();
            if (s.length == 0) throw std::invalid_argument("RegimeScript: zero-length segment");
        }
    }

    // absolute token indices where a new segment begins (one per boundary)
    std::vector<std::size_t> change_points() const {
        std::vector<std::size_t> cps;
        std::size_t acc = 0;
        for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
            acc += segments[k].length;
            cps.push_back(acc);
        }
        return cps;
    }

    std::size_t total_length() const {
        std::size_t acc = 0;
        for (const auto& s : segments) acc += s.length;
        return acc;
    }
};

// ---- operations ------------------------------------------------------------

// Solve (pi P = pi, sum pi = 1) as a linear system with partial pivoting.
// Handles periodic chains; throws ReducibleChain when the system is rank
// deficient beyond the one expected degree of freedom.
inline StationaryDistribution stationary_distribution(const TransitionMatrix& P) {
    const int n = P.n_states();
    // A = P^T - I with the last row replaced by the normalization constraint
    std::vector<double> A(static_cast<std::size_t>(n) * n);
    std::vector<double> b(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            A[static_cast<std::size_t>(i) * n + j] = P.at(j, i) - (i == j ? 1.0 : 0.0);
        }
    }
    for (int j = 0; j < n; ++j) A[static_cast<std::size_t>(n - 1) * n + j] = 1.0;
    b[n - 1] = 1.0;

    // Gaussian elimination, partial pivoting
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(A[static_cast<std::size_t>(perm[col]) * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(A[static_cast<std::size_t>(perm[r]) * n + col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-10) {
            throw ReducibleChain("stationary distribution is not unique");
        }
        std::swap(perm[col], perm[piv]);
        const double* prow = &A[static_cast<std::size_t>(perm[col]) * n];
        for (int r = col + 1; r < n; ++r) {
            double* row = &A[static_cast<std::size_t>(perm[r]) * n];
            const double f = row[col] / prow[col];
            if (f == 0.0) continue;
            row[col] = 0.0;
            for (int j = col + 1; j < n; ++j) row[j] -= f * prow[j];
            b[perm[r]] -= f * b[perm[col]];
        }
    }
    std::vector<double> pi(n, 0.0);
    for (int col = n - 1; col >= 0; --col) {
        const double* row = &A[static_cast<std::size_t>(perm[col]) * n];
        double acc = b[perm[col]];
        for (int j = col + 1; j < n; ++j) acc -= row[j] * pi[j];
        pi[col] = acc / row[col];
    }
    // clamp solver roundoff and renormalize
    double sum = 0.0;
    for (double& v : pi) {
        if (v < 0.0 && v > -1e-9) v = 0.0;
        if (v < 0.0) throw ReducibleChain("stationary solve produced negative mass");
        sum += v;
    }
    for (double& v : pi) v /= sum;
    return StationaryDistribution(std::move(pi));
}

// H(dist) / ln(n), with 0 ln 0 := 0.
inline double normalized_entropy(const StationaryDistribution& dist) {
    const std::size_t n = dist.probs.size();
    double h = 0.0;
    for (double p : dist.probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(n));
}

// Entropy rate sum_i pi_i H(row i) in nats/token: the per-token
// cross-entropy lower bound of the chain.
inline double entropy_rate(const TransitionMatrix& P) {
    const auto pi = stationary_distribution(P);
    const int n = P.n_states();
    double rate = 0.0;
    for (int i = 0; i < n; ++i) {
        double h = 0.0;
        for (int j = 0; j < n; ++j) {
            const double p = P.at(i, j);
            if (p > 0.0) h -= p * std::log(p);
        }
        rate += pi.probs[i] * h;
    }
    return rate;
}

inline double normalized_entropy_rate(const TransitionMatrix& P) {
    return entropy_rate(P) / std::log(static_cast<double>(P.n_states()));
}

namespace detail {

// Dirichlet(alpha) rows by quantile transform of fixed per-row uniforms.
// Re-evaluating at a new alpha moves every entry continuously, so the
// entropy rate is a monotone function of alpha for the bisection below.
inline std::vector<double> entropy_rows_at(const std::vector<std::vector<double>>& row_quantiles,
                                           int n, double alpha) {
    std::vector<double> rows(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        double* row = &rows[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            row[j] = special::inv_gamma_p(row_quantiles[i][j], alpha);
            sum += row[j];
        }
        if (sum <= 0.0) {
            // every quantile underflowed; the row degenerates to its argmax
            const auto& q = row_quantiles[i];
            const int arg = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
            std::fill(row, row + n, 0.0);
            row[arg] = 1.0;
        } else {
            for (int j = 0; j < n; ++j) row[j] /= sum;
        }
        // irreducibility floor
        double fsum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] += 1e-6;
            fsum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= fsum;
    }
    return rows;
}

}  // namespace detail

// Construct an irreducible chain whose normalized entropy rate lands
// within tolerance of the target, by bisecting the symmetric-Dirichlet
// concentration. Targets below 0.01 are unreachable: the 1e-6 floor keeps
// every row strictly positive. A target of exactly 1 forces uniform rows.
inline TransitionMatrix sample_matrix_with_entropy(const MarkovSpec& spec,
                                                   std::uint64_t seed_override) {
    spec.validate();
    const int n = spec.n_states;
    const double lnn = std::log(static_cast<double>(n));

    if (spec.target_norm_entropy == 1.0) {
        return TransitionMatrix(n, std::vector<double>(static_cast<std::size_t>(n) * n, 1.0 / n));
    }
    if (spec.target_norm_entropy < 0.01) {
        throw EntropyUnreachable("normalized entropy targets below 0.01 are not attainable");
    }

    // fixed per-row sub-seeds; quantiles drawn once
    std::vector<std::vector<double>> quantiles(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        Rng row_rng(mix_seed(seed_override, static_cast<std::uint64_t>(i) + 1));
        for (int j = 0; j < n; ++j) {
            double u = row_rng.uniform();
            while (u <= 0.0 || u >= 1.0) u = row_rng.uniform();
            quantiles[i][j] = u;
        }
    }

    const auto norm_entropy_at = [&](double alpha) {
        auto rows = detail::entropy_rows_at(quantiles, n, alpha);
        TransitionMatrix P(n, std::move(rows));
        return entropy_rate(P) / lnn;
    };

    double lo = 1e-3, hi = 1e3;
    double h_lo = norm_entropy_at(lo);
    double h_hi = norm_entropy_at(hi);
    const double target = spec.target_norm_entropy;
    const double tol = spec.entropy_tolerance;

    auto finish = [&](double alpha) {
        auto rows = detail::entropy_rows_at(quantiles, n, alpha);
        return TransitionMatrix(n, std::move(rows));
    };
    if (std::abs(h_lo - target) <= tol) return finish(lo);
    if (std::abs(h_hi - target) <= tol) return finish(hi);
    if (target < h_lo || target > h_hi) {
        throw EntropyUnreachable("target entropy outside the reachable range");
    }
    for (int iter = 0; iter < 60; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double h = norm_entropy_at(mid);
        if (std::abs(h - target) <= tol) return finish(mid);
        if (h < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    throw EntropyUnreachable("entropy bisection did not converge within 60 iterations");
}

inline TransitionMatrix sample_matrix_with_entropy(const MarkovSpec& spec) {
    return sample_matrix_with_entropy(spec, spec.seed);
}

// Emit a token sequence from the chain. The first token comes from the
// stationary distribution unless an initial state is pinned.
inline TokenSequence generate_sequence(const TransitionMatrix& P, std::size_t length, Rng& rng,
                                       std::optional<int> init_state = std::nullopt) {
    if (length < 1) throw std::invalid_argument("generate_sequence: length must be >= 1");
    const int n = P.n_states();
    std::vector<std::int32_t> out;
    out.reserve(length);

    int state;
    if (init_state.has_value()) {
        if (*init_state < 0 || *init_state >= n) {
            throw std::invalid_argument("generate_sequence: init_state out of range");
        }
        state = *init_state;
    } else {
        const auto pi = stationary_distribution(P);
        state = rng.categorical(pi.probs);
    }
    out.push_back(state);
    for (std::size_t t = 1; t < length; ++t) {
        state = rng.categorical({P.row(state), static_cast<std::size_t>(n)});
        out.push_back(state);
    }
    return TokenSequence(std::move(out), n);
}

// A scripted non-stationary corpus: concatenated segments, each segment
// continuing from the last state of the previous one.
struct RegimeCorpus {
    TokenSequence seq;
    std::vector<std::size_t> change_points;
    std::vector<double> segment_entropy_rates;       // nats/token
    std::vector<double> segment_norm_entropy_rates;  // divided by ln(n)
    std::vector<double> segment_pi_entropies;        // normalized entropy of pi
    std::vector<TransitionMatrix> matrices;
};

// `run_seed` perturbs both the matrix construction and the token stream,
// so distinct experiment seeds see fresh chain realizations at the same
// entropy targets. run_seed = 0 reproduces the bare per-spec seeds.
inline RegimeCorpus build_regime_corpus(const RegimeScript& script, std::uint64_t run_seed = 0) {
    script.validate();
    const int n = script.segments.front().spec.n_states;
    for (const auto& seg : script.segments) {
        if (seg.spec.n_states != n) {
            throw VocabMismatch("regime segments must share one state count");
        }
    }

    RegimeCorpus out;
    std::vector<std::int32_t> tokens;
    tokens.reserve(script.total_length());
    std::optional<int> carry_state;

    for (std::size_t k = 0; k < script.segments.size(); ++k) {
        const auto& seg = script.segments[k];
        const std::uint64_t mat_seed =
            (run_seed == 0) ? seg.spec.seed : mix_seed(seg.spec.seed, run_seed);
        TransitionMatrix P = sample_matrix_with_entropy(seg.spec, mat_seed);

        Rng tok_rng(mix_seed(mix_seed(run_seed, 0x70CCu), k + 1));
        if (k == 0) {
            TokenSequence piece = generate_sequence(P, seg.length, tok_rng);
            carry_state = piece.tokens.back();
            tokens.insert(tokens.end(), piece.tokens.begin(), piece.tokens.end());
        } else {
            // continue the state variable under the new matrix: the carried
            // state seeds the chain but is not re-emitted
            TokenSequence piece = generate_sequence(P, seg.length + 1, tok_rng, carry_state);
            carry_state = piece.tokens.back();
            out.change_points.push_back(tokens.size());
            tokens.insert(tokens.end(), piece.tokens.begin() + 1, piece.tokens.end());
        }

        const double rate = entropy_rate(P);
        out.segment_entropy_rates.push_back(rate);
        out.segment_norm_entropy_rates.push_back(rate / std::log(static_cast<double>(n)));
        out.segment_pi_entropies.push_back(normalized_entropy(stationary_distribution(P)));
        out.matrices.push_back(std::move(P));
    }
    out.seq = TokenSequence(std::move(tokens), n);
    return out;
}

}  // namespace dreamlab
