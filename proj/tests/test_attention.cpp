#include <catch_amalgamated.hpp>

#include <cmath>

#include "glsgn/attention.hpp"
#include "glsgn/gradcheck.hpp"
#include "glsgn/ops.hpp"
#include "test_util.hpp"

using namespace glsgn;
using glsgn::testing::max_abs_diff;
using glsgn::testing::random_tensor;

TEST_CASE("spatial_attention with a zero kernel is one half", "[pac_attention]") {
    auto f = random_tensor<float>({2, 5, 9, 7}, 1);
    auto a = spatial_attention(f, Tensor<float>({1, 2, 7, 7}), Tensor<float>({1}));
    REQUIRE(a.shape() == Shape{2, 1, 9, 7});
    for (float v : a.values()) REQUIRE(v == 0.5f);
    REQUIRE_THROWS_AS(spatial_attention(f, Tensor<float>({1, 2, 3, 3}), Tensor<float>({1})), Error);
}

TEST_CASE("spatial_attention lies strictly inside (0,1)", "[pac_attention][property]") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto f = random_tensor<double>({1, 4, 8, 8}, seed, -3, 3);
        auto w = random_tensor<double>({1, 2, 7, 7}, seed + 100, -0.5, 0.5);
        for (double v : spatial_attention(f, w, Tensor<double>({1}, 0.1)).values()) {
            REQUIRE(v > 0);
            REQUIRE(v < 1);
        }
    }
}

TEST_CASE("spatial_attention is translation equivariant away from borders", "[pac_attention]") {
    auto f = random_tensor<double>({1, 3, 24, 24}, 2);
    auto w = random_tensor<double>({1, 2, 7, 7}, 3);
    Tensor<double> shifted({1, 3, 24, 24});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) shifted.at(0, c, y, x) = f.at(0, c, (y + 2) % 24, (x + 1) % 24);
    auto a = spatial_attention(f, w, Tensor<double>({1}));
    auto b = spatial_attention(shifted, w, Tensor<double>({1}));
    for (int y = 3; y < 24 - 3 - 2; ++y)
        for (int x = 3; x < 24 - 3 - 1; ++x) REQUIRE(std::abs(b.at(0, 0, y, x) - a.at(0, 0, y + 2, x + 1)) <= 1e-12);
}

TEST_CASE("fuse_attention arithmetic", "[pac_attention]") {
    Tensor<double> own({1, 1, 4, 4}, 0.2), prev({1, 1, 4, 4}, 0.4), global({1, 1, 4, 4}, 0.6);
    SECTION("zero weights return the own map") {
        REQUIRE(fuse_attention(own, prev, global, {0.0, 0.0}).values() == own.values());
    }
    SECTION("unit weights average the three maps") {
        for (double v : fuse_attention(own, prev, global, {1.0, 1.0}).values()) REQUIRE(std::abs(v - 0.4) <= 1e-15);
    }
    SECTION("default weights") {
        // (0.2 + 0.2 + 0.3) / 2
        for (double v : fuse_attention(own, prev, global, {}).values()) REQUIRE(std::abs(v - 0.35) <= 1e-15);
    }
    SECTION("absent maps drop out of the denominator") {
        for (double v : fuse_attention(own, Tensor<double>(), global, {1.0, 1.0}).values())
            REQUIRE(std::abs(v - 0.4) <= 1e-15);
        REQUIRE(fuse_attention(own, Tensor<double>(), Tensor<double>(), {}).values() == own.values());
    }
    SECTION("invalid weights and shapes are rejected") {
        REQUIRE_THROWS_AS(fuse_attention(own, prev, global, {1.5, 0.5}), Error);
        REQUIRE_THROWS_AS(fuse_attention(own, Tensor<double>({1, 1, 2, 2}), global, {}), Error);
    }
}

TEST_CASE("fuse_attention is a convex combination", "[pac_attention][property]") {
    CounterRng rng(11);
    for (uint64_t trial = 0; trial < 100; ++trial) {
        auto a = random_tensor<double>({1, 1, 5, 5}, trial * 3, 0, 1);
        auto b = random_tensor<double>({1, 1, 5, 5}, trial * 3 + 1, 0, 1);
        auto c = random_tensor<double>({1, 1, 5, 5}, trial * 3 + 2, 0, 1);
        const PacWeights w{rng.uniform(0, 1), rng.uniform(0, 1)};
        auto out = fuse_attention(a, b, c, w);
        for (size_t i = 0; i < out.values().size(); ++i) {
            const double lo = std::min({a.values()[i], b.values()[i], c.values()[i]});
            const double hi = std::max({a.values()[i], b.values()[i], c.values()[i]});
            REQUIRE(out.values()[i] >= lo - 1e-12);
            REQUIRE(out.values()[i] <= hi + 1e-12);
        }
        // Swapping the two auxiliary maps together with their weights changes nothing.
        auto swapped = fuse_attention(a, c, b, PacWeights{w.sigma2, w.sigma1});
        REQUIRE(max_abs_diff(out, swapped) <= 1e-12);
    }
}

TEST_CASE("reweight", "[pac_attention]") {
    auto f = random_tensor<double>({2, 4, 6, 6}, 5);
    REQUIRE(reweight(f, Tensor<double>({2, 1, 6, 6}, 1.0)).values() == f.values());
    auto half = reweight(f, Tensor<double>({2, 1, 6, 6}, 0.5));
    for (size_t i = 0; i < f.values().size(); ++i) REQUIRE(half.values()[i] == f.values()[i] * 0.5);

    Tensor<double> zeros({2, 4, 6, 6});
    for (double v : reweight(zeros, random_tensor<double>({2, 1, 6, 6}, 6, 0, 1)).values()) REQUIRE(v == 0.0);
    REQUIRE_THROWS_AS(reweight(f, Tensor<double>({2, 2, 6, 6}, 1.0)), Error);
}

TEST_CASE("attention gradients", "[pac_attention][gradcheck]") {
    GradCheckCase sa;
    sa.op = "spatial_attention";
    sa.leaves = {random_tensor<double>({1, 3, 6, 6}, 1), random_tensor<double>({1, 2, 7, 7}, 2, -0.3, 0.3),
                 random_tensor<double>({1}, 3)};
    auto w1 = random_tensor<double>({1, 1, 6, 6}, 4);
    sa.build = [w1](const std::vector<Tensor<double>>& v) {
        return sum(mul(spatial_attention(v[0], v[1], v[2]), w1));
    };
    REQUIRE(check_gradient(sa).passed);

    GradCheckCase rw;
    rw.op = "reweight";
    rw.leaves = {random_tensor<double>({2, 3, 4, 4}, 5), random_tensor<double>({2, 1, 4, 4}, 6, 0, 1),
                 random_tensor<double>({2, 1, 4, 4}, 7, 0, 1)};
    auto w2 = random_tensor<double>({2, 3, 4, 4}, 8);
    rw.build = [w2](const std::vector<Tensor<double>>& v) {
        return sum(mul(reweight(v[0], fuse_attention(v[1], v[2], Tensor<double>(), {})), w2));
    };
    REQUIRE(check_gradient(rw).passed);
}

TEST_CASE("align_map", "[pac_attention]") {
    const MapGeometry fine{4, 4, 16, 16}, coarse{2, 2, 8, 8}, whole{1, 1, 8, 8};
    SECTION("identical geometry is the identity") {
        auto m = random_tensor<float>({16 * 2, 1, 4, 4}, 1);
        REQUIRE(align_map(m, 2, fine, fine).values() == m.values());
    }
    SECTION("constant maps stay constant") {
        for (float v : align_map(Tensor<float>({16, 1, 4, 4}, 0.3f), 1, fine, coarse).values())
            REQUIRE(v == Catch::Approx(0.3f));
        auto back = align_map(Tensor<float>({1, 1, 8, 8}, 0.7f), 1, whole, fine);
        REQUIRE(back.shape() == Shape{16, 1, 4, 4});
        for (float v : back.values()) REQUIRE(v == Catch::Approx(0.7f));
    }
    SECTION("down then up stays close for smooth maps") {
        Tensor<double> smooth({1, 1, 16, 16});
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) smooth.at(0, 0, y, x) = 0.5 + 0.3 * std::sin(0.3 * x) * std::cos(0.2 * y);
        auto m = partition(smooth, 4, 4).patches;
        auto round = align_map(align_map(m, 1, fine, coarse), 1, coarse, fine);
        REQUIRE(max_abs_diff(round, m) <= 0.05);
    }
    SECTION("mismatched geometry is rejected") {
        REQUIRE_THROWS_AS(align_map(Tensor<float>({4, 1, 4, 4}), 1, fine, coarse), Error);
    }
}
