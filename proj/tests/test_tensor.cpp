#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avdepth/rng.hpp"
#include "avdepth/tensor.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace avdepth;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<int> shape, bool rg, double lo = -1.0, double hi = 1.0) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return Tensor::from(std::move(shape),
                        gradcheck::random_values(rng, static_cast<size_t>(n), lo, hi), rg);
}

} // namespace

TEST_CASE("conv2d: ones kernel sums a 2x2 window") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, w, b, {1, 1}, {0, 0});
    REQUIRE(y.shape() == std::vector<int>({1, 1, 2, 2}));
    for (double v : y.values()) CHECK(v == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor y = conv2d(x, w, Tensor(), {1, 1}, {0, 0});
    CHECK(y.values() == x.values());
}

TEST_CASE("conv2d matches the direct-loop oracle") {
    Rng rng(11);
    // the spec's pinned shape plus randomized ones up to 2x4x9x9
    {
        Tensor x = rand_tensor(rng, {2, 3, 8, 8}, false);
        Tensor w = rand_tensor(rng, {4, 3, 3, 3}, false);
        Tensor b = rand_tensor(rng, {4}, false);
        Tensor y = conv2d(x, w, b, {2, 2}, {1, 1});
        auto ref = oracle::conv2d_direct(x.values(), 2, 3, 8, 8, w.values(), 4, 3, 3, b.values(),
                                         2, 2, 1, 1);
        REQUIRE(ref.size() == y.values().size());
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.values()[i] - ref[i]) <= 1e-12);
    }
    for (int trial = 0; trial < 10; ++trial) {
        const int B = 1 + static_cast<int>(rng.below(2));
        const int Cin = 1 + static_cast<int>(rng.below(4));
        const int H = 3 + static_cast<int>(rng.below(7)); // up to 9
        const int W = 3 + static_cast<int>(rng.below(7));
        const int Cout = 1 + static_cast<int>(rng.below(4));
        const int k = 1 + static_cast<int>(rng.below(3));
        const int s = 1 + static_cast<int>(rng.below(2));
        const int p = static_cast<int>(rng.below(2));
        Tensor x = rand_tensor(rng, {B, Cin, H, W}, false);
        Tensor w = rand_tensor(rng, {Cout, Cin, k, k}, false);
        Tensor b = rand_tensor(rng, {Cout}, false);
        Tensor y = conv2d(x, w, b, {s, s}, {p, p});
        auto ref = oracle::conv2d_direct(x.values(), B, Cin, H, W, w.values(), Cout, k, k,
                                         b.values(), s, s, p, p);
        REQUIRE(ref.size() == y.values().size());
        double worst = 0.0;
        for (size_t i = 0; i < ref.size(); ++i)
            worst = std::max(worst, std::abs(y.values()[i] - ref[i]));
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("conv2d rejects mismatched channels with the offending axes") {
    Tensor x = Tensor::zeros({1, 3, 4, 4});
    Tensor w = Tensor::zeros({2, 4, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), {1, 1}, {1, 1}), DimensionError);
}

TEST_CASE("conv_transpose2d: single pixel broadcast through an all-ones kernel") {
    Tensor x = Tensor::from({1, 1, 1, 1}, {5.0});
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor y = conv_transpose2d(x, w, Tensor(), {2, 2}, {0, 0});
    REQUIRE(y.shape() == std::vector<int>({1, 1, 2, 2}));
    for (double v : y.values()) CHECK(v == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("conv_transpose2d: k=4 s=2 p=1 doubles the spatial size") {
    Rng rng(3);
    Tensor x = rand_tensor(rng, {1, 8, 4, 4}, false);
    Tensor w = rand_tensor(rng, {8, 6, 4, 4}, false);
    Tensor y = conv_transpose2d(x, w, Tensor(), {2, 2}, {1, 1});
    CHECK(y.shape() == std::vector<int>({1, 6, 8, 8}));
}

TEST_CASE("conv_transpose2d matches the direct scatter oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        const int B = 1 + static_cast<int>(rng.below(2));
        const int Cin = 1 + static_cast<int>(rng.below(3));
        const int Cout = 1 + static_cast<int>(rng.below(3));
        const int H = 2 + static_cast<int>(rng.below(4));
        const int k = 2 + static_cast<int>(rng.below(3));
        const int s = 1 + static_cast<int>(rng.below(2));
        const int p = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
        Tensor x = rand_tensor(rng, {B, Cin, H, H}, false);
        Tensor w = rand_tensor(rng, {Cin, Cout, k, k}, false);
        Tensor b = rand_tensor(rng, {Cout}, false);
        if ((H - 1) * s - 2 * p + k < 1) continue;
        Tensor y = conv_transpose2d(x, w, b, {s, s}, {p, p});
        auto ref = oracle::conv_transpose2d_direct(x.values(), B, Cin, H, H, w.values(), Cout, k,
                                                   k, b.values(), s, s, p, p);
        REQUIRE(ref.size() == y.values().size());
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.values()[i] - ref[i]) <= 1e-12);
    }
}

TEST_CASE("conv / conv_transpose adjointness identity") {
    // <conv2d(x,w), y> == <x, conv_transpose2d(y,w)> when the geometry is exact
    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        const int Cin = 1 + static_cast<int>(rng.below(3));
        const int Cout = 1 + static_cast<int>(rng.below(3));
        const int k = 2 + static_cast<int>(rng.below(3));
        const int s = 1 + static_cast<int>(rng.below(2));
        const int p = static_cast<int>(rng.below(static_cast<uint64_t>(k) / 2 + 1));
        const int OH = 2 + static_cast<int>(rng.below(3));
        const int H = (OH - 1) * s - 2 * p + k; // exact inverse geometry
        if (H < k - 2 * p || H < 1) continue;
        Tensor x = rand_tensor(rng, {1, Cin, H, H}, false);
        Tensor w = rand_tensor(rng, {Cout, Cin, k, k}, false);
        Tensor y = rand_tensor(rng, {1, Cout, OH, OH}, false);
        Tensor cx = conv2d(x, w, Tensor(), {s, s}, {p, p});
        REQUIRE(cx.shape() == std::vector<int>({1, Cout, OH, OH}));
        // the very same weight buffer drives the transpose direction
        Tensor ty = conv_transpose2d(y, w, Tensor(), {s, s}, {p, p});
        REQUIRE(ty.shape() == x.shape());
        double lhs = 0.0, rhs = 0.0;
        for (size_t i = 0; i < cx.values().size(); ++i) lhs += cx.values()[i] * y.values()[i];
        for (size_t i = 0; i < x.values().size(); ++i) rhs += x.values()[i] * ty.values()[i];
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("batch_norm: constant channel collapses to near zero") {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    Tensor x = Tensor::full({3, 2, 2, 2}, 4.2);
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor y = batch_norm(x, gamma, beta, rm, rv, true);
    for (double v : y.values()) CHECK(std::abs(v) <= 1e-6);
}

TEST_CASE("batch_norm: zero gamma pins output at beta") {
    std::vector<double> rm(1, 0.0), rv(1, 1.0);
    Rng rng(5);
    Tensor x = rand_tensor(rng, {2, 1, 3, 3}, false);
    Tensor gamma = Tensor::zeros({1});
    Tensor beta = Tensor::full({1}, 7.0);
    Tensor y = batch_norm(x, gamma, beta, rm, rv, true);
    for (double v : y.values()) CHECK(v == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("batch_norm: batch statistics of the output are (0, 1) in training") {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    Rng rng(6);
    Tensor x = rand_tensor(rng, {4, 2, 3, 3}, false, -2.0, 2.0);
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor y = batch_norm(x, gamma, beta, rm, rv, true, /*eps=*/1e-12);
    const int M = 4 * 3 * 3;
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 9; ++i) mean += y.values()[(b * 2 + c) * 9 + i];
        mean /= M;
        CHECK(std::abs(mean) <= 1e-12);
        double var = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 9; ++i) {
                const double d = y.values()[(b * 2 + c) * 9 + i] - mean;
                var += d * d;
            }
        var /= M;
        CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("batch_norm: eval mode uses running statistics") {
    std::vector<double> rm{1.0}, rv{4.0};
    Tensor x = Tensor::from({1, 1, 1, 2}, {3.0, 5.0});
    Tensor gamma = Tensor::full({1}, 1.0);
    Tensor beta = Tensor::zeros({1});
    Tensor y = batch_norm(x, gamma, beta, rm, rv, false, 0.0);
    CHECK(y.values()[0] == doctest::Approx(1.0));
    CHECK(y.values()[1] == doctest::Approx(2.0));
}

TEST_CASE("activations: pinned values") {
    Tensor x = Tensor::from({4}, {-1.0, 2.0, -10.0, 0.0});
    Tensor r = relu(x);
    CHECK(r.values()[0] == 0.0);
    CHECK(r.values()[1] == 2.0);
    Tensor l = leaky_relu(x, 0.2);
    CHECK(l.values()[2] == doctest::Approx(-2.0).epsilon(1e-15));
    Tensor s = sigmoid(x);
    CHECK(s.values()[3] == doctest::Approx(0.5).epsilon(1e-15));
    for (double v : s.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("matvec_bilinear: pinned cases") {
    SUBCASE("identity form reduces to a dot product") {
        Tensor fe = Tensor::from({3}, {1.0, 2.0, 3.0});
        Tensor v = Tensor::from({3}, {4.0, 5.0, 6.0});
        Tensor a = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        Tensor y = matvec_bilinear(fe, a, v);
        CHECK(y.values()[0] == doctest::Approx(32.0).epsilon(1e-15));
    }
    SUBCASE("hand-expanded 2x2 form") {
        Tensor fe = Tensor::from({2}, {1.0, 0.0});
        Tensor v = Tensor::from({2}, {0.0, 1.0});
        Tensor a = Tensor::from({2, 2}, {0, 3, 5, 0});
        Tensor y = matvec_bilinear(fe, a, v);
        CHECK(y.values()[0] == doctest::Approx(3.0).epsilon(1e-15));
    }
    SUBCASE("zero fe annihilates the form") {
        Rng rng(8);
        Tensor fe = Tensor::zeros({4});
        Tensor v = rand_tensor(rng, {4}, false);
        Tensor a = rand_tensor(rng, {4, 4}, false);
        CHECK(matvec_bilinear(fe, a, v).values()[0] == 0.0);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(
            matvec_bilinear(Tensor::zeros({3}), Tensor::zeros({2, 2}), Tensor::zeros({3})),
            DimensionError);
    }
}

TEST_CASE("backward: sum gives unit gradients") {
    Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
    backward(sum(x));
    REQUIRE(x.grad().size() == 3);
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: quadratic gradient") {
    Tensor x = Tensor::from({2}, {2.0, -3.0}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(x.grad()[1] == doctest::Approx(-6.0).epsilon(1e-15));
}

TEST_CASE("backward: non-scalar loss is a contract violation") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), NumericError);
}

TEST_CASE("backward: repeated sweeps accumulate until zero_grad") {
    Tensor x = Tensor::from({2}, {1.0, 1.0}, true);
    Tensor loss = sum(x);
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == 2.0);
    x.zero_grad();
    backward(loss);
    CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("tensors created outside the graph stay grad-free") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor c = Tensor::from({2}, {5.0, 5.0}); // constant
    backward(sum(mul(x, c)));
    CHECK(c.grad().empty());
    CHECK(x.grad()[0] == 5.0);
}

TEST_CASE("graph nodes come out in topological order") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y = mul(x, x);
    Tensor z = add(y, x);
    Tensor loss = sum(z);
    auto nodes = collect_graph(loss);
    REQUIRE(nodes.size() >= 4);
    // inputs of every node must already have appeared as outputs (or be leaves)
    std::vector<uint64_t> seen;
    for (const auto& n : nodes) {
        for (uint64_t in : n.inputs) {
            bool ok = false;
            for (uint64_t s : seen)
                if (s == in) ok = true;
            CHECK(ok);
        }
        seen.push_back(n.output);
    }
}

TEST_CASE("determinism: identical seeds give bitwise-identical op results") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x = rand_tensor(rng, {2, 3, 6, 6}, false);
        Tensor w = rand_tensor(rng, {4, 3, 3, 3}, false);
        Tensor y = conv2d(x, w, Tensor(), {1, 1}, {1, 1});
        return y.values();
    };
    CHECK(run(123) == run(123));
}

// ---- gradient checks (the full >= 20-trial sweep runs in the acceptance
// suite; these keep per-op coverage in the unit tests) ----

TEST_CASE("gradcheck: conv2d") {
    Rng rng(100);
    for (int t = 0; t < 5; ++t) {
        Tensor x = rand_tensor(rng, {2, 2, 5, 5}, true);
        Tensor w = rand_tensor(rng, {3, 2, 3, 3}, true);
        Tensor b = rand_tensor(rng, {3}, true);
        auto wsum = gradcheck::random_values(rng, 2 * 3 * 3 * 3);
        auto fwd = [&]() { return weighted_sum(conv2d(x, w, b, {2, 2}, {1, 1}), wsum); };
        CHECK(gradcheck::max_rel_err(fwd, {x, w, b}) <= 1e-4);
    }
}

TEST_CASE("gradcheck: conv_transpose2d") {
    Rng rng(101);
    for (int t = 0; t < 5; ++t) {
        Tensor x = rand_tensor(rng, {2, 3, 3, 3}, true);
        Tensor w = rand_tensor(rng, {3, 2, 4, 4}, true);
        Tensor b = rand_tensor(rng, {2}, true);
        auto wsum = gradcheck::random_values(rng, 2 * 2 * 6 * 6);
        auto fwd = [&]() { return weighted_sum(conv_transpose2d(x, w, b, {2, 2}, {1, 1}), wsum); };
        CHECK(gradcheck::max_rel_err(fwd, {x, w, b}) <= 1e-4);
    }
}

TEST_CASE("gradcheck: batch_norm training and eval") {
    Rng rng(102);
    for (int t = 0; t < 3; ++t) {
        Tensor x = rand_tensor(rng, {3, 2, 3, 3}, true, -2.0, 2.0);
        Tensor gamma = rand_tensor(rng, {2}, true, 0.5, 1.5);
        Tensor beta = rand_tensor(rng, {2}, true);
        auto wsum = gradcheck::random_values(rng, 3 * 2 * 3 * 3);
        std::vector<double> rm(2, 0.1), rv(2, 0.9);
        auto fwd_train = [&]() {
            std::vector<double> m = rm, v = rv; // keep stats fixed per call
            return weighted_sum(batch_norm(x, gamma, beta, m, v, true), wsum);
        };
        CHECK(gradcheck::max_rel_err(fwd_train, {x, gamma, beta}) <= 1e-4);
        auto fwd_eval = [&]() {
            std::vector<double> m = rm, v = rv;
            return weighted_sum(batch_norm(x, gamma, beta, m, v, false), wsum);
        };
        CHECK(gradcheck::max_rel_err(fwd_eval, {x, gamma, beta}) <= 1e-4);
    }
}

TEST_CASE("gradcheck: activations") {
    Rng rng(103);
    for (int t = 0; t < 3; ++t) {
        Tensor x = Tensor::from({24}, gradcheck::away_from_kinks(rng, 24, 0.05), true);
        auto wsum = gradcheck::random_values(rng, 24);
        CHECK(gradcheck::max_rel_err([&]() { return weighted_sum(relu(x), wsum); }, {x}) <= 1e-4);
        CHECK(gradcheck::max_rel_err([&]() { return weighted_sum(leaky_relu(x, 0.2), wsum); },
                                     {x}) <= 1e-4);
        CHECK(gradcheck::max_rel_err([&]() { return weighted_sum(sigmoid(x), wsum); }, {x}) <=
              1e-4);
    }
}

TEST_CASE("gradcheck: matvec_bilinear") {
    Rng rng(104);
    for (int t = 0; t < 5; ++t) {
        const int n = 2 + static_cast<int>(rng.below(4));
        Tensor fe = rand_tensor(rng, {n}, true);
        Tensor a = rand_tensor(rng, {n, n}, true);
        Tensor v = rand_tensor(rng, {n}, true);
        CHECK(gradcheck::max_rel_err([&]() { return matvec_bilinear(fe, a, v); }, {fe, a, v}) <=
              1e-4);
    }
}

TEST_CASE("gradcheck: pooling, broadcast, concat, reshape") {
    Rng rng(105);
    Tensor x = rand_tensor(rng, {2, 3, 4, 4}, true);
    {
        auto wsum = gradcheck::random_values(rng, 2 * 3);
        CHECK(gradcheck::max_rel_err([&]() { return weighted_sum(global_avg_pool(x), wsum); },
                                     {x}) <= 1e-4);
    }
    {
        auto wsum = gradcheck::random_values(rng, 2 * 3 * 3 * 3);
        CHECK(gradcheck::max_rel_err(
                  [&]() { return weighted_sum(adaptive_avg_pool(x, 3, 3), wsum); }, {x}) <= 1e-4);
    }
    {
        Tensor v = rand_tensor(rng, {2, 3}, true);
        auto wsum = gradcheck::random_values(rng, 2 * 3 * 2 * 2);
        CHECK(gradcheck::max_rel_err(
                  [&]() { return weighted_sum(broadcast_spatial(v, 2, 2), wsum); }, {v}) <= 1e-4);
    }
    {
        Tensor y = rand_tensor(rng, {2, 2, 4, 4}, true);
        auto wsum = gradcheck::random_values(rng, 2 * 5 * 4 * 4);
        CHECK(gradcheck::max_rel_err(
                  [&]() { return weighted_sum(concat_channels({x, y}), wsum); }, {x, y}) <= 1e-4);
    }
    {
        auto wsum = gradcheck::random_values(rng, 2 * 3 * 16);
        CHECK(gradcheck::max_rel_err(
                  [&]() { return weighted_sum(reshape(x, {2, 3, 16, 1}), wsum); }, {x}) <= 1e-4);
    }
}
