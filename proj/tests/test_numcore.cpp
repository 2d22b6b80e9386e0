#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dreamlab/autograd.hpp"
#include "dreamlab/checkpoint.hpp"
#include "dreamlab/optim.hpp"
#include "dreamlab/softmax.hpp"
#include "dreamlab/tensor.hpp"

using namespace dreamlab;

TEST_CASE("tensor basics and checked mode") {
    Tensor t = Tensor::zeros({2, 3});
    REQUIRE(t.size() == 6);
    REQUIRE(t.rank() == 2);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Tensor::zeros({1, 1, 1, 1}), std::invalid_argument);

    CheckedModeGuard guard(true);
    REQUIRE_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("softmax temperature: frozen examples") {
    SECTION("symmetric logits give uniform output at any T") {
        for (double T : {0.1, 1.0, 7.3}) {
            auto q = softmax_with_temperature(std::vector<double>{0.0, 0.0, 0.0}, T);
            for (double v : q) REQUIRE(v == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
        }
    }
    SECTION("log-ratio logits, T = 1") {
        auto q = softmax_with_temperature(
            std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)}, 1.0);
        REQUIRE(q[0] == Catch::Approx(1.0 / 6.0).margin(1e-14));
        REQUIRE(q[1] == Catch::Approx(2.0 / 6.0).margin(1e-14));
        REQUIRE(q[2] == Catch::Approx(3.0 / 6.0).margin(1e-14));
    }
    SECTION("sharpening below T = 1") {
        auto q = softmax_with_temperature(std::vector<double>{2.0, 1.0}, 0.5);
        // exp(4), exp(2) renormalized
        REQUIRE(q[0] == Catch::Approx(0.88079707797788).margin(1e-11));
        REQUIRE(q[1] == Catch::Approx(0.11920292202212).margin(1e-11));
    }
    SECTION("large T flattens toward uniform") {
        auto q = softmax_with_temperature(std::vector<double>{5.0, 0.0, 0.0}, 1000.0);
        REQUIRE(std::abs(entropy_nats(q) - std::log(3.0)) < 1e-3);
    }
    SECTION("rejects non-positive temperature") {
        REQUIRE_THROWS_AS(softmax_with_temperature(std::vector<double>{1.0}, 0.0),
                          NonPositiveTemperature);
        REQUIRE_THROWS_AS(softmax_with_temperature(std::vector<double>{1.0}, -2.0),
                          NonPositiveTemperature);
    }
}

TEST_CASE("softmax properties") {
    Rng rng(11);
    SECTION("valid probability vector under extreme logits") {
        for (int rep = 0; rep < 200; ++rep) {
            std::vector<double> z(5);
            for (auto& v : z) v = rng.uniform(-1e4, 1e4);
            auto q = softmax_with_temperature(z, rng.uniform(0.25, 8.0));
            double sum = 0.0;
            for (double v : q) {
                REQUIRE(v >= 0.0);
                sum += v;
            }
            REQUIRE(std::abs(sum - 1.0) <= 1e-12);
        }
    }
    SECTION("entropy non-decreasing in T") {
        const std::vector<double> grid{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
        for (int rep = 0; rep < 300; ++rep) {
            std::vector<double> z(6);
            for (auto& v : z) v = rng.uniform(-4.0, 4.0);
            double prev = -1.0;
            for (double T : grid) {
                const double h = entropy_nats(softmax_with_temperature(z, T));
                REQUIRE(h >= prev - 1e-12);
                prev = h;
            }
        }
    }
    SECTION("T = 1 equals plain softmax exactly") {
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> z(8);
            for (auto& v : z) v = rng.uniform(-30.0, 30.0);
            auto a = softmax(z);
            auto b = softmax_with_temperature(z, 1.0);
            for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
        }
    }
}

TEST_CASE("cross entropy: frozen examples") {
    ad::Tape tape;
    SECTION("dominant target logit gives near-zero loss") {
        ad::NodeId z = tape.leaf(Tensor({3}, {40.0, 0.0, 0.0}));
        ad::NodeId l = tape.cross_entropy(z, 0);
        REQUIRE(tape.value(l)[0] < 1e-12);
    }
    SECTION("uniform logits over 4 classes") {
        ad::NodeId z = tape.leaf(Tensor({4}, {0.7, 0.7, 0.7, 0.7}));
        ad::NodeId l = tape.cross_entropy(z, 2);
        REQUIRE(tape.value(l)[0] == Catch::Approx(std::log(4.0)).margin(1e-12));
    }
    SECTION("quarter probability on the target") {
        ad::NodeId z = tape.leaf(Tensor({2}, {0.0, std::log(3.0)}));
        ad::NodeId l = tape.cross_entropy(z, 0);
        REQUIRE(tape.value(l)[0] == Catch::Approx(std::log(4.0)).margin(1e-12));
    }
    SECTION("target out of range") {
        ad::NodeId z = tape.leaf(Tensor({3}, {0.0, 0.0, 0.0}));
        REQUIRE_THROWS_AS(tape.cross_entropy(z, 3), ad::TargetOutOfRange);
        REQUIRE_THROWS_AS(tape.cross_entropy(z, -1), ad::TargetOutOfRange);
    }
    SECTION("gradient is softmax minus one-hot") {
        ParamStore store;
        auto& slot = store.add("z", Tensor({3}, {0.2, -1.0, 0.5}));
        ad::Tape t2;
        ad::NodeId z = t2.param(slot);
        ad::NodeId l = t2.cross_entropy(z, 1);
        t2.backward(l);
        const auto p = softmax(slot.value.span());
        REQUIRE(slot.grad[0] == Catch::Approx(p[0]).margin(1e-14));
        REQUIRE(slot.grad[1] == Catch::Approx(p[1] - 1.0).margin(1e-14));
        REQUIRE(slot.grad[2] == Catch::Approx(p[2]).margin(1e-14));
    }
}

TEST_CASE("backward: frozen examples") {
    SECTION("identity loss") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor::scalar(4.2));
        ad::Tape tape;
        ad::NodeId p = tape.param(theta);
        tape.backward(p);
        REQUIRE(theta.grad[0] == 1.0);
    }
    SECTION("sum of squares at (1,2,3)") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor({3}, {1.0, 2.0, 3.0}));
        ad::Tape tape;
        ad::NodeId p = tape.param(theta);
        ad::NodeId sq = tape.mul(p, p);
        std::vector<ad::NodeId> parts;
        for (std::size_t i = 0; i < 3; ++i) parts.push_back(tape.slice(sq, i, 1));
        ad::NodeId m = tape.mean(parts);
        REQUIRE(tape.value(m)[0] == Catch::Approx(14.0 / 3.0).margin(1e-14));
        tape.backward(m, 3.0);  // seed by count: gradient of the plain sum
        REQUIRE(theta.grad[0] == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(theta.grad[1] == Catch::Approx(4.0).margin(1e-12));
        REQUIRE(theta.grad[2] == Catch::Approx(6.0).margin(1e-12));
    }
    SECTION("empty tape rejected") {
        ad::Tape tape;
        REQUIRE_THROWS_AS(tape.backward(0), ad::EmptyTape);
    }
    SECTION("identical tape gives bit-identical gradients") {
        auto run = [] {
            ParamStore store;
            auto& theta = store.add("theta", Tensor({4}, {0.3, -0.7, 1.1, 0.05}));
            ad::Tape tape;
            ad::NodeId p = tape.param(theta);
            ad::NodeId s = tape.sigmoid(p);
            ad::NodeId t = tape.tanh(s);
            ad::NodeId l = tape.cross_entropy(t, 2);
            tape.backward(l);
            return store.flatten_grads();
        };
        const auto a = run();
        const auto b = run();
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
}

TEST_CASE("gradient_check") {
    SECTION("quadratic loss is exact to roundoff") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor({3}, {0.5, -1.5, 2.0}));
        auto fb = [&]() {
            ad::Tape tape;
            ad::NodeId p = tape.param(theta);
            ad::NodeId sq = tape.mul(p, p);
            std::vector<ad::NodeId> parts;
            for (std::size_t i = 0; i < 3; ++i) parts.push_back(tape.slice(sq, i, 1));
            ad::NodeId m = tape.mean(parts);
            tape.backward(m);
            return tape.value(m)[0];
        };
        REQUIRE(ad::gradient_check(fb, store, 1e-5) < 1e-7);
    }
    SECTION("zero-parameter closure returns the empty sentinel") {
        ParamStore store;
        REQUIRE(ad::gradient_check([] { return 1.0; }, store, 1e-5) == 0.0);
    }
}

TEST_CASE("adam: frozen examples") {
    SECTION("zero gradient leaves parameters unchanged") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor({2}, {1.0, -2.0}));
        adam_step(store, 0.1);
        REQUIRE(theta.value[0] == 1.0);
        REQUIRE(theta.value[1] == -2.0);
    }
    SECTION("first step on f = theta^2 moves by lr") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor::scalar(1.0));
        theta.grad[0] = 2.0;  // df/dtheta at 1
        adam_step(store, 0.1);
        REQUIRE(theta.value[0] == Catch::Approx(0.9).margin(1e-3));
    }
    SECTION("moment decay shrinks updates on zero gradients") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor::scalar(1.0));
        theta.grad[0] = 2.0;
        adam_step(store, 0.1);
        const double after_first = theta.value[0];
        adam_step(store, 0.1);
        const double d1 = std::abs(theta.value[0] - after_first);
        const double before_third = theta.value[0];
        adam_step(store, 0.1);
        const double d2 = std::abs(theta.value[0] - before_third);
        REQUIRE(d1 > 0.0);
        REQUIRE(d2 < d1);
    }
    SECTION("gradients zeroed after the update") {
        ParamStore store;
        auto& theta = store.add("theta", Tensor({2}, {1.0, 1.0}));
        theta.grad[0] = 3.0;
        adam_step(store, 0.1);
        REQUIRE(theta.grad[0] == 0.0);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    ParamStore store;
    Rng rng(99);
    Tensor a = Tensor::zeros({3, 4});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
    Tensor b = Tensor::zeros({7});
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-5, 5);
    store.add("w", a);
    store.add("bias", b);

    const std::string path = "ckpt_test.bin";
    save_checkpoint(store, path);
    ParamStore loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded.at(0).name == "w");
    REQUIRE(loaded.at(1).name == "bias");
    REQUIRE(loaded.at(0).value.shape() == std::vector<std::size_t>({3, 4}));
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(loaded.at(0).value[i] == a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(loaded.at(1).value[i] == b[i]);
    std::remove(path.c_str());

    REQUIRE_THROWS_AS(load_checkpoint("does_not_exist.bin"), CheckpointError);
}
