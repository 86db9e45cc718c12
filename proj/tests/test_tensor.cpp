#include <catch_amalgamated.hpp>

#include <cmath>

#include "glsgn/gradcheck.hpp"
#include "glsgn/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace glsgn;
using glsgn::testing::max_abs_diff;
using glsgn::testing::random_tensor;
using glsgn::oracle::bilinear_ref;
using glsgn::oracle::naive_conv;

TEST_CASE("conv2d examples", "[tensor_engine]") {
    SECTION("1x1 identity kernel") {
        auto x = random_tensor<float>({1, 1, 5, 4}, 1);
        Tensor<float> w({1, 1, 1, 1}, 1.0f), b({1}, 0.0f);
        auto y = conv2d(x, w, b, 1, 0);
        REQUIRE(y.values() == x.values());
    }
    SECTION("3x3 average of a constant, interior") {
        Tensor<float> x({1, 1, 6, 6}, 0.7f), w({1, 1, 3, 3}, 1.0f / 9.0f), b({1}, 0.0f);
        auto y = conv2d(x, w, b, 1, 1);
        for (int i = 1; i < 5; ++i)
            for (int j = 1; j < 5; ++j) REQUIRE(y.at(0, 0, i, j) == Catch::Approx(0.7f).epsilon(1e-6));
    }
    SECTION("2x2 diagonal kernel") {
        Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4}), w({1, 1, 2, 2}, {1, 0, 0, 1});
        auto y = conv2d(x, w, Tensor<double>(), 1, 0);
        REQUIRE(y.shape() == Shape{1, 1, 1, 1});
        REQUIRE(y.item() == 5.0);
    }
    SECTION("channel mismatch names the dimension") {
        Tensor<float> x({1, 3, 4, 4}), w({2, 2, 3, 3});
        try {
            conv2d(x, w, Tensor<float>(), 1, 1);
            FAIL("expected an error");
        } catch (const Error& e) {
            REQUIRE(e.code() == ErrorCode::ShapeMismatch);
            REQUIRE(std::string(e.what()).find("channels") != std::string::npos);
        }
    }
}

TEST_CASE("conv2d agrees with the naive reference on random shapes", "[tensor_engine][property]") {
    CounterRng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const int B = 1 + int(rng.below(2)), C = 1 + int(rng.below(4)), O = 1 + int(rng.below(4));
        const int H = 3 + int(rng.below(7)), W = 3 + int(rng.below(7));
        const int k = (rng.below(2) ? 3 : 1), stride = 1 + int(rng.below(2)), pad = int(rng.below(2));
        auto x = random_tensor<float>({B, C, H, W}, 1000 + trial);
        auto w = random_tensor<float>({O, C, k, k}, 2000 + trial);
        auto b = random_tensor<float>({O}, 3000 + trial);
        auto fast = conv2d(x, w, b, stride, pad);
        auto ref = naive_conv(x, w, b, stride, pad);
        REQUIRE(fast.shape() == ref.shape());
        REQUIRE(max_abs_diff(fast, ref) <= 1e-5);
    }
}

TEST_CASE("resize_bilinear", "[tensor_engine]") {
    SECTION("constant preservation") {
        Tensor<float> x({1, 2, 3, 5}, 0.25f);
        auto y = resize_bilinear(x, 7, 2);
        for (float v : y.values()) REQUIRE(v == Catch::Approx(0.25f).margin(1e-7));
    }
    SECTION("same size is identity") {
        auto x = random_tensor<float>({1, 1, 2, 2}, 4);
        REQUIRE(resize_bilinear(x, 2, 2).values() == x.values());
    }
    SECTION("1x2 to 1x4") {
        Tensor<double> x({1, 1, 1, 2}, {0.0, 1.0});
        auto y = resize_bilinear(x, 1, 4);
        const std::vector<double> row{0.0, 1.0};
        const std::vector<double> expected{0.0, 0.25, 0.75, 1.0};
        for (int i = 0; i < 4; ++i) {
            REQUIRE(bilinear_ref(row, 4, i) == Catch::Approx(expected[size_t(i)]));
            REQUIRE(y.values()[size_t(i)] == Catch::Approx(expected[size_t(i)]));
        }
    }
    SECTION("down then up is exact on constants") {
        Tensor<float> x({1, 3, 8, 8}, 0.4f);
        auto y = resize_bilinear(downsample2x(x), 8, 8);
        for (float v : y.values()) REQUIRE(v == 0.4f);
    }
}

TEST_CASE("downsample2x", "[tensor_engine]") {
    Tensor<float> c({1, 1, 4, 4}, 3.0f);
    for (float v : downsample2x(c).values()) REQUIRE(v == 3.0f);
    Tensor<float> x({1, 1, 2, 2}, {0, 2, 4, 6});
    REQUIRE(downsample2x(x).item() == 3.0f);
    Tensor<float> board({1, 1, 4, 4});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) board.at(0, 0, i, j) = float((i + j) % 2);
    for (float v : downsample2x(board).values()) REQUIRE(v == 0.5f);
    Tensor<float> odd({1, 1, 3, 4});
    REQUIRE_THROWS_AS(downsample2x(odd), Error);
}

TEST_CASE("elementwise activations", "[tensor_engine]") {
    Tensor<double> x({3}, {-3.0, 0.0, 3.0});
    REQUIRE(sigmoid(x).values()[1] == 0.5);
    REQUIRE(relu(x).values() == std::vector<double>{0.0, 0.0, 3.0});
    Tensor<double> m({1}, {-1.0});
    REQUIRE(leaky_relu(m).item() == Catch::Approx(-0.2));
    REQUIRE(abs(x).values() == std::vector<double>{3.0, 0.0, 3.0});
}

TEST_CASE("concat_channels", "[tensor_engine]") {
    Tensor<float> a({1, 3, 4, 4}, 1.0f), b({1, 5, 4, 4}, 2.0f);
    REQUIRE(concat_channels(a, b).shape() == Shape{1, 8, 4, 4});
    Tensor<float> empty({1, 0, 4, 4});
    REQUIRE(concat_channels(a, empty).values() == a.values());
    Tensor<float> wrong({1, 1, 2, 4});
    REQUIRE_THROWS_AS(concat_channels(a, wrong), Error);

    auto x = random_tensor<double>({1, 2, 3, 3}, 5).set_requires_grad(true);
    auto y = random_tensor<double>({1, 1, 3, 3}, 6).set_requires_grad(true);
    backward(sum(concat_channels(x, y)));
    for (double g : x.grad()) REQUIRE(g == 1.0);
    for (double g : y.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("channel_stats", "[tensor_engine]") {
    auto one = random_tensor<float>({1, 1, 3, 3}, 7);
    auto s = channel_stats(one);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            REQUIRE(s.at(0, 0, i, j) == one.at(0, 0, i, j));
            REQUIRE(s.at(0, 1, i, j) == one.at(0, 0, i, j));
        }
    Tensor<float> two({1, 2, 1, 1}, {1.0f, 3.0f});
    auto t = channel_stats(two);
    REQUIRE(t.at(0, 0, 0, 0) == 2.0f);
    REQUIRE(t.at(0, 1, 0, 0) == 3.0f);
    Tensor<float> same({1, 4, 2, 2}, 0.3f);
    auto u = channel_stats(same);
    for (int i = 0; i < 2; ++i) REQUIRE(u.at(0, 0, i, i) == Catch::Approx(u.at(0, 1, i, i)));

    // Ties route the max gradient to the first channel.
    Tensor<double> tie({1, 3, 1, 1}, {0.5, 0.5, 0.1});
    tie.set_requires_grad(true);
    auto st = channel_stats(tie);
    backward(sum(mul(st, Tensor<double>({1, 2, 1, 1}, {0.0, 1.0}))));
    REQUIRE(tie.grad()[0] == 1.0);
    REQUIRE(tie.grad()[1] == 0.0);
}

TEST_CASE("backward basics", "[tensor_engine]") {
    auto x = random_tensor<double>({2, 3}, 8).set_requires_grad(true);
    backward(sum(x));
    for (double g : x.grad()) REQUIRE(g == 1.0);
    x.zero_grad();
    backward(sum(mul(x, x)));
    for (size_t i = 0; i < 6; ++i) REQUIRE(x.grad()[i] == Catch::Approx(2 * x.values()[i]));
    REQUIRE_THROWS_AS(backward(mul(x, x)), Error);
    REQUIRE(Graph<double>::active().size() == 0);
}

TEST_CASE("composite conv-relu-mean matches finite differences", "[tensor_engine]") {
    GradCheckCase c;
    c.op = "conv_relu_mean";
    c.leaves = {random_tensor<double>({2, 2, 5, 5}, 11), random_tensor<double>({3, 2, 3, 3}, 12),
                random_tensor<double>({3}, 13)};
    c.build = [](const auto& l) { return mean(relu(conv2d(l[0], l[1], l[2], 1, 1))); };
    auto r = check_gradient(c);
    INFO("max rel error " << r.max_rel_error);
    REQUIRE(r.passed);
}

TEST_CASE("check_gradients harness", "[tensor_engine]") {
    GradCheckCase id;
    id.op = "identity";
    id.leaves = {random_tensor<double>({4}, 21)};
    id.build = [](const auto& l) { return sum(l[0]); };
    auto r = check_gradient(id);
    REQUIRE(r.max_rel_error <= 1e-9);

    GradCheckCase sig;
    sig.op = "sigmoid_chain";
    sig.leaves = {random_tensor<double>({6}, 22)};
    sig.build = [](const auto& l) { return sum(sigmoid(sigmoid(l[0]))); };
    REQUIRE(check_gradient(sig).max_rel_error <= 1e-6);

    GradCheckCase bad;
    bad.op = "sabotaged_square";
    bad.leaves = {random_tensor<double>({3}, 23)};
    bad.build = [](const auto& l) {
        const auto& x = l[0];
        std::vector<double> out(x.values());
        for (auto& v : out) v *= v;
        auto sq = record_op<double>("sabotaged_square", x.shape(), out, {x}, [x](const TensorImpl<double>& o) {
            auto g = grad_slot(x);
            for (size_t i = 0; i < g.size(); ++i) g[i] += 3 * x.values()[i] * o.grad[i];
        });
        return sum(sq);
    };
    auto report = check_gradients({id, bad});
    REQUIRE_FALSE(report.all_passed());
    REQUIRE(report.entries[0].passed);
    REQUIRE_FALSE(report.entries[1].passed);
    REQUIRE(report.table().find("sabotaged_square") != std::string::npos);
}

TEST_CASE("replaying a graph is bit-identical", "[tensor_engine]") {
    auto run = [] {
        auto x = random_tensor<float>({2, 3, 8, 8}, 31).set_requires_grad(true);
        auto w = random_tensor<float>({4, 3, 3, 3}, 32).set_requires_grad(true);
        auto y = mean(sigmoid(conv2d(resize_bilinear(x, 12, 12), w, Tensor<float>(), 2, 1)));
        backward(y);
        return std::make_pair(y.item(), std::vector<float>(w.grad().begin(), w.grad().end()));
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.first == b.first);
    REQUIRE(a.second == b.second);
}

TEST_CASE("no-grad mode records nothing", "[tensor_engine]") {
    auto x = random_tensor<float>({4}, 41).set_requires_grad(true);
    {
        NoGradGuard guard;
        auto y = mul(x, x);
        REQUIRE_FALSE(y.requires_grad());
    }
    REQUIRE(Graph<float>::active().size() == 0);
}
