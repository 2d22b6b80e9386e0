#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "dreamlab/markov.hpp"
#include "dreamlab/special.hpp"

using namespace dreamlab;

namespace {

TransitionMatrix two_state(double a, double b) {
    // rows (a, 1-a) and (b, 1-b)
    return TransitionMatrix(2, {a, 1.0 - a, b, 1.0 - b});
}

double l1_stationarity_gap(const TransitionMatrix& P, const StationaryDistribution& pi) {
    const int n = P.n_states();
    double gap = 0.0;
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += pi.probs[i] * P.at(i, j);
        gap += std::abs(acc - pi.probs[j]);
    }
    return gap;
}

// random irreducible row-stochastic matrix (uniform weights + floor)
TransitionMatrix random_chain(Rng& rng, int n) {
    std::vector<double> rows(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            double w = rng.uniform() + 1e-4;
            rows[static_cast<std::size_t>(i) * n + j] = w;
            sum += w;
        }
        for (int j = 0; j < n; ++j) rows[static_cast<std::size_t>(i) * n + j] /= sum;
    }
    return TransitionMatrix(n, std::move(rows));
}

}  // namespace

TEST_CASE("incomplete gamma self-consistency") {
    // closed forms: P(1,x) = 1 - e^-x, P(0.5,x) = erf(sqrt(x))
    REQUIRE(special::gamma_p(1.0, 2.0) == Catch::Approx(1.0 - std::exp(-2.0)).margin(1e-12));
    REQUIRE(special::gamma_p(0.5, 1.44) == Catch::Approx(std::erf(1.2)).margin(1e-12));

    for (double a : {0.01, 0.1, 0.5, 1.0, 3.0, 25.0, 400.0}) {
        for (double p : {0.03, 0.2, 0.5, 0.8, 0.97}) {
            const double x = special::inv_gamma_p(p, a);
            if (x > 0.0) {
                REQUIRE(special::gamma_p(a, x) == Catch::Approx(p).margin(1e-8));
            }
        }
    }
}

TEST_CASE("stationary distribution: frozen examples") {
    SECTION("symmetric rows") {
        auto pi = stationary_distribution(two_state(0.5, 0.5));
        REQUIRE(pi.probs[0] == Catch::Approx(0.5).margin(1e-12));
        REQUIRE(pi.probs[1] == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("asymmetric chain solved by hand: 0.1 pi0 = 0.5 pi1") {
        auto pi = stationary_distribution(two_state(0.9, 0.5));
        REQUIRE(pi.probs[0] == Catch::Approx(5.0 / 6.0).margin(1e-12));
        REQUIRE(pi.probs[1] == Catch::Approx(1.0 / 6.0).margin(1e-12));
    }
    SECTION("periodic chain handled by the linear solve") {
        auto pi = stationary_distribution(two_state(0.0, 1.0));
        REQUIRE(pi.probs[0] == Catch::Approx(0.5).margin(1e-12));
        REQUIRE(pi.probs[1] == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("reducible chain rejected") {
        REQUIRE_THROWS_AS(stationary_distribution(two_state(1.0, 0.0)), ReducibleChain);
        // two closed blocks on 4 states
        REQUIRE_THROWS_AS(stationary_distribution(TransitionMatrix(
                              4, {0.5, 0.5, 0, 0, 0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5})),
                          ReducibleChain);
    }
}

TEST_CASE("stationary distribution: 1000 random chains satisfy pi P = pi") {
    Rng rng(2024);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 2 + rng.uniform_int(15);  // [2, 16]
        auto P = random_chain(rng, n);
        auto pi = stationary_distribution(P);
        REQUIRE(l1_stationarity_gap(P, pi) < 1e-10);
    }
}

TEST_CASE("normalized entropy: frozen examples") {
    REQUIRE(normalized_entropy(StationaryDistribution({0.25, 0.25, 0.25, 0.25})) ==
            Catch::Approx(1.0).margin(1e-12));
    REQUIRE(normalized_entropy(StationaryDistribution({0.0, 1.0, 0.0})) ==
            Catch::Approx(0.0).margin(1e-12));
    // direct evaluation of -sum p ln p / ln 3
    REQUIRE(normalized_entropy(StationaryDistribution({0.5, 0.25, 0.25})) ==
            Catch::Approx(1.0397207708399179 / std::log(3.0)).margin(1e-10));
}

TEST_CASE("entropy rate: frozen examples") {
    SECTION("memoryless fair coin") {
        REQUIRE(entropy_rate(two_state(0.5, 0.5)) == Catch::Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("deterministic cycle has zero rate") {
        REQUIRE(entropy_rate(two_state(0.0, 1.0)) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("hand evaluation with known stationary distribution") {
        const double h1 = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
        const double expected = (5.0 / 6.0) * h1 + (1.0 / 6.0) * std::log(2.0);
        REQUIRE(entropy_rate(two_state(0.9, 0.5)) == Catch::Approx(expected).margin(1e-12));
        REQUIRE(expected == Catch::Approx(0.38642).margin(1e-5));
    }
    SECTION("bounds and the uniform maximizer") {
        Rng rng(5);
        for (int rep = 0; rep < 200; ++rep) {
            const int n = 2 + rng.uniform_int(9);
            auto P = random_chain(rng, n);
            const double r = entropy_rate(P);
            REQUIRE(r >= 0.0);
            REQUIRE(r <= std::log(double(n)) + 1e-12);
        }
        TransitionMatrix U(4, std::vector<double>(16, 0.25));
        REQUIRE(entropy_rate(U) == Catch::Approx(std::log(4.0)).margin(1e-12));
    }
}

TEST_CASE("sample_matrix_with_entropy: frozen examples") {
    SECTION("target 1.0 forces uniform rows") {
        MarkovSpec spec{.n_states = 8, .target_norm_entropy = 1.0, .entropy_tolerance = 1e-6,
                        .seed = 3};
        auto P = sample_matrix_with_entropy(spec);
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) REQUIRE(P.at(i, j) == Catch::Approx(0.125).margin(1e-15));
        }
    }
    SECTION("target 0.0 is unreachable") {
        MarkovSpec spec{.n_states = 8, .target_norm_entropy = 0.0, .entropy_tolerance = 0.01,
                        .seed = 3};
        REQUIRE_THROWS_AS(sample_matrix_with_entropy(spec), EntropyUnreachable);
    }
    SECTION("target 0.3 verified by the entropy-rate oracle") {
        MarkovSpec spec{.n_states = 10, .target_norm_entropy = 0.3, .entropy_tolerance = 0.01,
                        .seed = 7};
        auto P = sample_matrix_with_entropy(spec);
        const double h = normalized_entropy_rate(P);
        REQUIRE(h >= 0.29);
        REQUIRE(h <= 0.31);
    }
    SECTION("row stochasticity preserved across random specs") {
        Rng rng(42);
        for (int rep = 0; rep < 25; ++rep) {
            MarkovSpec spec{.n_states = 2 + rng.uniform_int(9),
                            .target_norm_entropy = rng.uniform(0.1, 0.9),
                            .entropy_tolerance = 0.01,
                            .seed = rng.next_u64()};
            auto P = sample_matrix_with_entropy(spec);
            for (int i = 0; i < spec.n_states; ++i) {
                double sum = 0.0;
                for (int j = 0; j < spec.n_states; ++j) {
                    REQUIRE(P.at(i, j) >= 0.0);
                    sum += P.at(i, j);
                }
                REQUIRE(std::abs(sum - 1.0) <= 1e-12);
            }
        }
    }
    SECTION("entropy grid hits tolerance across seeds") {
        for (double target : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
            for (std::uint64_t seed = 1; seed <= 10; ++seed) {
                MarkovSpec spec{.n_states = 10, .target_norm_entropy = target,
                                .entropy_tolerance = 0.01, .seed = seed};
                auto P = sample_matrix_with_entropy(spec);
                REQUIRE(std::abs(normalized_entropy_rate(P) - target) <= 0.01);
            }
        }
    }
}

TEST_CASE("generate_sequence: frozen examples") {
    SECTION("deterministic cycle") {
        Rng rng(1);
        auto seq = generate_sequence(two_state(0.0, 1.0), 5, rng, 0);
        REQUIRE(seq.tokens == std::vector<std::int32_t>{0, 1, 0, 1, 0});
    }
    SECTION("law of large numbers against the stationary distribution") {
        Rng rng(7);
        auto seq = generate_sequence(two_state(0.9, 0.5), 100000, rng);
        double freq0 = 0.0;
        for (auto t : seq.tokens) freq0 += (t == 0) ? 1.0 : 0.0;
        freq0 /= double(seq.tokens.size());
        REQUIRE(std::abs(freq0 - 5.0 / 6.0) < 0.01);
    }
    SECTION("length one with pinned state") {
        Rng rng(3);
        TransitionMatrix P(4, std::vector<double>(16, 0.25));
        auto seq = generate_sequence(P, 1, rng, 3);
        REQUIRE(seq.tokens == std::vector<std::int32_t>{3});
    }
    SECTION("bit-reproducible given the seed") {
        auto P = two_state(0.7, 0.2);
        Rng a(123), b(123);
        auto s1 = generate_sequence(P, 2000, a);
        auto s2 = generate_sequence(P, 2000, b);
        REQUIRE(s1.tokens == s2.tokens);
    }
}

TEST_CASE("build_regime_corpus") {
    SECTION("single segment has no change points") {
        RegimeScript script;
        script.segments.push_back({MarkovSpec{.n_states = 10, .target_norm_entropy = 0.5,
                                              .entropy_tolerance = 0.01, .seed = 1},
                                   500});
        auto corpus = build_regime_corpus(script);
        REQUIRE(corpus.seq.size() == 500);
        REQUIRE(corpus.change_points.empty());
        REQUIRE(corpus.segment_entropy_rates.size() == 1);
    }
    SECTION("three segments of length 5") {
        RegimeScript script;
        for (std::uint64_t k = 0; k < 3; ++k) {
            script.segments.push_back({MarkovSpec{.n_states = 4, .target_norm_entropy = 0.5,
                                                  .entropy_tolerance = 0.01, .seed = 10 + k},
                                       5});
        }
        auto corpus = build_regime_corpus(script);
        REQUIRE(corpus.seq.size() == 15);
        REQUIRE(corpus.change_points == std::vector<std::size_t>{5, 10});
    }
    SECTION("vocab mismatch rejected") {
        RegimeScript script;
        script.segments.push_back({MarkovSpec{.n_states = 4, .target_norm_entropy = 0.5,
                                              .entropy_tolerance = 0.01, .seed = 1},
                                   10});
        script.segments.push_back({MarkovSpec{.n_states = 6, .target_norm_entropy = 0.5,
                                              .entropy_tolerance = 0.01, .seed = 2},
                                   10});
        REQUIRE_THROWS_AS(build_regime_corpus(script), VocabMismatch);
    }
    SECTION("entropy shift is visible in windowed token statistics") {
        RegimeScript script;
        script.segments.push_back({MarkovSpec{.n_states = 10, .target_norm_entropy = 0.3,
                                              .entropy_tolerance = 0.01, .seed = 21},
                                   10000});
        script.segments.push_back({MarkovSpec{.n_states = 10, .target_norm_entropy = 0.6,
                                              .entropy_tolerance = 0.01, .seed = 22},
                                   10000});
        auto corpus = build_regime_corpus(script, 77);
        REQUIRE(corpus.change_points == std::vector<std::size_t>{10000});
        REQUIRE(corpus.segment_norm_entropy_rates[0] == Catch::Approx(0.3).margin(0.01));
        REQUIRE(corpus.segment_norm_entropy_rates[1] == Catch::Approx(0.6).margin(0.01));

        // empirical bigram conditional entropy over each half
        auto window_rate = [&](std::size_t lo, std::size_t hi) {
            std::map<int, std::map<int, double>> counts;
            std::map<int, double> totals;
            for (std::size_t i = lo; i + 1 < hi; ++i) {
                counts[corpus.seq.tokens[i]][corpus.seq.tokens[i + 1]] += 1.0;
                totals[corpus.seq.tokens[i]] += 1.0;
            }
            double h = 0.0, n = 0.0;
            for (auto& [s, row] : counts) {
                for (auto& [t, c] : row) {
                    h -= c * std::log(c / totals[s]);
                    n += c;
                }
            }
            return h / n;
        };
        const double before = window_rate(2000, 10000);
        const double after = window_rate(12000, 20000);
        REQUIRE(after > before + 0.1);
    }
    SECTION("deterministic for a fixed run seed") {
        RegimeScript script;
        script.segments.push_back({MarkovSpec{.n_states = 6, .target_norm_entropy = 0.4,
                                              .entropy_tolerance = 0.01, .seed = 5},
                                   300});
        script.segments.push_back({MarkovSpec{.n_states = 6, .target_norm_entropy = 0.7,
                                              .entropy_tolerance = 0.01, .seed = 6},
                                   300});
        auto c1 = build_regime_corpus(script, 9);
        auto c2 = build_regime_corpus(script, 9);
        REQUIRE(c1.seq.tokens == c2.seq.tokens);
    }
}
