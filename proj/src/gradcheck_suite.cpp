#include "glsgn/gradcheck_suite.hpp"

#include <algorithm>
#include <memory>

#include "glsgn/attention.hpp"
#include "glsgn/losses.hpp"
#include "glsgn/model.hpp"
#include "glsgn/ops.hpp"
#include "glsgn/patch_grid.hpp"
#include "glsgn/pyramid.hpp"
#include "glsgn/rng.hpp"

namespace glsgn {

namespace {

using Leaves = std::vector<Tensor<double>>;
using T = Tensor<double>;

T uniform(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    CounterRng rng(seed);
    T t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Values at least `lo` away from zero, for ops with a kink there.
T away_from_zero(Shape shape, uint64_t seed, double lo = 0.1) {
    CounterRng rng(seed);
    T t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, 1.0) * (rng.bernoulli(0.5) ? 1 : -1);
    return t;
}

// Contracting with fixed random weights keeps every output coordinate's
// gradient distinct.
T project(const T& y, uint64_t seed) { return sum(mul(y, uniform(y.shape(), seed))); }

GradCheckCase make(std::string op, Leaves leaves, LossBuilder build) {
    GradCheckCase c;
    c.op = std::move(op);
    c.leaves = std::move(leaves);
    c.build = std::move(build);
    return c;
}

GlsgnConfig tiny_config() {
    GlsgnConfig c;
    c.input_h = c.input_w = 16;
    c.base_channels = 4;
    c.encoder_depth = 2;
    c.residual_blocks = 1;
    c.geometry = {{1, 2, 2}, {2, 2, 2}, {4, 1, 1}, {4, 1, 1}};
    c.seed = 3;
    return c;
}

std::vector<GradCheckCase> primitive_cases() {
    std::vector<GradCheckCase> cs;
    cs.push_back(make("conv2d", {uniform({2, 2, 5, 5}, 1), uniform({3, 2, 3, 3}, 2), uniform({3}, 3)},
                      [](const Leaves& l) { return project(conv2d(l[0], l[1], l[2], 2, 1), 4); }));
    cs.push_back(make("resize_bilinear", {uniform({1, 2, 4, 5}, 5)},
                      [](const Leaves& l) { return project(resize_bilinear(l[0], 7, 3), 6); }));
    cs.push_back(make("downsample2x", {uniform({1, 2, 6, 6}, 7)},
                      [](const Leaves& l) { return project(downsample2x(l[0]), 8); }));
    cs.push_back(make("relu", {away_from_zero({2, 8}, 9)}, [](const Leaves& l) { return project(relu(l[0]), 10); }));
    cs.push_back(make("leaky_relu", {away_from_zero({2, 8}, 11)},
                      [](const Leaves& l) { return project(leaky_relu(l[0]), 12); }));
    cs.push_back(
        make("sigmoid", {uniform({2, 8}, 13, -3, 3)}, [](const Leaves& l) { return project(sigmoid(l[0]), 14); }));
    cs.push_back(make("tanh", {uniform({2, 8}, 15, -2, 2)}, [](const Leaves& l) { return project(tanh(l[0]), 16); }));
    cs.push_back(make("abs", {away_from_zero({2, 8}, 17)}, [](const Leaves& l) { return project(abs(l[0]), 18); }));
    cs.push_back(make("clamp", {uniform({2, 8}, 19, -1.5, 1.5)}, [](const Leaves& l) {
        return project(clamp(l[0], -0.99, 0.99), 20);
    }));
    cs.push_back(make("concat_channels", {uniform({2, 1, 3, 3}, 21), uniform({2, 2, 3, 3}, 22)},
                      [](const Leaves& l) { return project(concat_channels(l[0], l[1]), 23); }));
    // Channels are separated so the max never ties.
    cs.push_back(make("channel_stats", {[] {
                          T t = uniform({2, 3, 3, 3}, 24, 0, 0.3);
                          auto& v = t.values();
                          for (size_t i = 0; i < v.size(); ++i) v[i] += double((i / 9) % 3);
                          return t;
                      }()},
                      [](const Leaves& l) { return project(channel_stats(l[0]), 25); }));
    cs.push_back(make("add", {uniform({2, 5}, 26), uniform({2, 5}, 27)},
                      [](const Leaves& l) { return project(add(l[0], l[1]), 28); }));
    cs.push_back(make("sub", {uniform({2, 5}, 29), uniform({2, 5}, 30)},
                      [](const Leaves& l) { return project(sub(l[0], l[1]), 31); }));
    cs.push_back(make("mul", {uniform({2, 5}, 32), uniform({2, 5}, 33)},
                      [](const Leaves& l) { return project(mul(l[0], l[1]), 34); }));
    cs.push_back(make("div", {uniform({2, 5}, 35), away_from_zero({2, 5}, 36, 0.5)},
                      [](const Leaves& l) { return project(div(l[0], l[1]), 37); }));
    cs.push_back(make("add_scalar", {uniform({2, 5}, 38)},
                      [](const Leaves& l) { return project(add_scalar(l[0], 0.7), 39); }));
    cs.push_back(make("mul_scalar", {uniform({2, 5}, 40)},
                      [](const Leaves& l) { return project(mul_scalar(l[0], -1.3), 41); }));
    cs.push_back(make("mul_channelwise", {uniform({2, 3, 3, 3}, 42), uniform({2, 3}, 43)},
                      [](const Leaves& l) { return project(mul_channelwise(l[0], l[1]), 44); }));
    cs.push_back(make("mul_spatial", {uniform({2, 3, 3, 3}, 45), uniform({2, 1, 3, 3}, 46)},
                      [](const Leaves& l) { return project(mul_spatial(l[0], l[1]), 47); }));
    cs.push_back(make("spatial_sum", {uniform({2, 3, 3, 4}, 48)},
                      [](const Leaves& l) { return project(spatial_sum(l[0]), 49); }));
    cs.push_back(make("sum", {uniform({3, 4}, 50)}, [](const Leaves& l) { return mul_scalar(sum(l[0]), 0.3); }));
    cs.push_back(make("mean", {uniform({3, 4}, 51)}, [](const Leaves& l) { return mul_scalar(mean(l[0]), 2.0); }));
    cs.push_back(make("reshape", {uniform({2, 6}, 52)},
                      [](const Leaves& l) { return project(reshape(l[0], {3, 4}), 53); }));
    cs.push_back(make("slice_batch", {uniform({4, 3}, 54)},
                      [](const Leaves& l) { return project(slice_batch(l[0], 1, 3), 55); }));
    cs.push_back(make("stack_batch", {uniform({1, 3}, 56), uniform({2, 3}, 57)},
                      [](const Leaves& l) { return project(stack_batch<double>({l[0], l[1]}), 58); }));
    cs.push_back(make("weighted_sum", {uniform({1}, 59), uniform({1}, 60)},
                      [](const Leaves& l) { return weighted_sum<double>({sum(l[0]), sum(l[1])}, {0.4, -1.7}); }));
    cs.push_back(make("partition", {uniform({2, 2, 6, 4}, 61)},
                      [](const Leaves& l) { return project(partition(l[0], 3, 2).patches, 62); }));
    cs.push_back(make("assemble", {uniform({12, 2, 2, 2}, 63)}, [](const Leaves& l) {
        PatchGrid<double> g;
        g.rows = 3;
        g.cols = 2;
        g.batch = 2;
        g.patches = l[0];
        return project(assemble(g), 64);
    }));
    cs.push_back(make("guarded_ratio", {uniform({2, 3, 4, 4}, 65), away_from_zero({2, 3, 4, 4}, 66, 0.2)},
                      [](const Leaves& l) { return project(guarded_ratio(l[0], l[1], 1e-6), 67); }));
    cs.push_back(make("grid_neighbor_mean", {uniform({9 * 2, 3}, 68)},
                      [](const Leaves& l) { return project(grid_neighbor_mean(l[0], 3, 3, 2), 69); }));
    // u and v are constants of the backward pass, so they are frozen here.
    auto sn_state = std::make_shared<SpectralState<double>>(init_spectral_state<double>({4, 2, 2, 2}, 71));
    spectral_normalize(uniform({4, 2, 2, 2}, 70), *sn_state, true);
    cs.push_back(make("spectral_normalize", {uniform({4, 2, 2, 2}, 70)}, [sn_state](const Leaves& l) {
        return project(spectral_normalize(l[0], *sn_state, false), 72);
    }));
    return cs;
}

std::vector<GradCheckCase> composite_cases() {
    std::vector<GradCheckCase> cs;
    cs.push_back(make("l1_loss", {away_from_zero({2, 6}, 80)}, [](const Leaves& l) {
        return l1_loss(l[0], T({2, 6}));
    }));
    cs.push_back(make("upsample2x", {uniform({1, 2, 3, 4}, 81)},
                      [](const Leaves& l) { return project(upsample2x(l[0]), 82); }));
    cs.push_back(make("extract_highfreq", {uniform({1, 2, 8, 8}, 83)},
                      [](const Leaves& l) { return project(extract_highfreq(l[0]), 84); }));
    cs.push_back(make("fuse_glsgn",
                      {uniform({1, 2, 8, 8}, 85), uniform({1, 2, 4, 4}, 86), uniform({1, 2, 2, 2}, 87),
                       uniform({1, 2, 2, 2}, 88), uniform({1, 1, 8, 8}, 89, 0, 1), uniform({1, 1, 4, 4}, 90, 0, 1),
                       uniform({1, 1, 2, 2}, 91, 0, 1)},
                      [](const Leaves& l) { return project(fuse_glsgn(l[0], l[1], l[2], l[3], {l[4], l[5], l[6]}), 92); }));
    cs.push_back(make("spatial_attention",
                      {uniform({1, 3, 6, 6}, 93), uniform({1, 2, 7, 7}, 94, -0.3, 0.3), uniform({1}, 95)},
                      [](const Leaves& l) { return project(spatial_attention(l[0], l[1], l[2]), 96); }));
    cs.push_back(make("fuse_attention_reweight",
                      {uniform({2, 3, 4, 4}, 97), uniform({2, 1, 4, 4}, 98, 0, 1), uniform({2, 1, 4, 4}, 99, 0, 1),
                       uniform({2, 1, 4, 4}, 100, 0, 1)},
                      [](const Leaves& l) {
                          return project(reweight(l[0], fuse_attention(l[1], l[2], l[3], PacWeights{})), 101);
                      }));
    cs.push_back(make("pn_apply",
                      {away_from_zero({1, 2, 6, 6}, 102, 0.2), uniform({1, 2, 6, 6}, 103),
                       uniform({2, 2, 3, 3}, 104, -0.3, 0.3)},
                      [](const Leaves& l) {
                          const auto gin = partition(l[0], 3, 3), gout = partition(l[1], 3, 3);
                          const auto f = pn_factors(gin, gout, 1e-6);
                          T bias({2});
                          auto out = pn_apply<double>(gout.patches, f.scale,
                                                      [&](const T& t) { return conv2d(t, l[2], bias, 1, 1); });
                          return project(assemble(with_patches(gout, out)), 105);
                      }));
    cs.push_back(make("discriminator_loss", {uniform({3, 1}, 106, -2, 2), uniform({3, 1}, 107, -2, 2)},
                      [](const Leaves& l) {
                          // Hinge kinks at +-1; the draws keep clear of them.
                          return discriminator_loss(l[0], l[1]);
                      }));
    return cs;
}

std::vector<GradCheckCase> end_to_end_cases() {
    auto model = std::make_shared<GlsgnModel<double>>(tiny_config());
    CounterRng rng(15);
    T x({1, 3, 16, 16});
    for (auto& v : x.values()) v = rng.uniform(0, 1);
    std::vector<GradCheckCase> cs;
    for (const char* name : {"s1.enc1.w", "s1.dec1.res0.conv2.w", "s2.att.w", "sg.head.w", "s1.mask.w"}) {
        GradCheckCase c;
        c.op = std::string("end_to_end:") + name;
        c.leaves = {model->params().get(name).clone()};
        c.tolerance = 1e-3;
        // PN ratios are sharply curved near small features; the five-point
        // stencil at a small step keeps truncation error below tolerance.
        c.epsilon = 1e-6;
        c.fourth_order = true;
        c.max_coords_per_leaf = 40;
        const std::string key = name;
        c.build = [model, x, key](const Leaves& l) {
            model->params().set(key, l[0]);
            return mean(model->forward(x).final);
        };
        cs.push_back(std::move(c));
    }
    return cs;
}

} // namespace

const std::vector<std::string>& registered_ops() {
    static const std::vector<std::string> ops = {
        "conv2d",      "resize_bilinear", "downsample2x",  "relu",          "leaky_relu",     "sigmoid",
        "tanh",        "abs",             "clamp",         "concat_channels", "channel_stats", "add",
        "sub",         "mul",             "div",           "add_scalar",    "mul_scalar",     "mul_channelwise",
        "mul_spatial", "spatial_sum",     "sum",           "mean",          "reshape",        "slice_batch",
        "stack_batch", "weighted_sum",    "partition",     "assemble",      "guarded_ratio",  "grid_neighbor_mean",
        "spectral_normalize"};
    return ops;
}

std::vector<std::string> recorded_op_names(const std::function<void()>& fn) {
    GraphScope<double> scope;
    fn();
    std::vector<std::string> names;
    for (const auto& node : Graph<double>::active().nodes())
        if (std::find(names.begin(), names.end(), node.op) == names.end())
            names.emplace_back(node.op);
    Graph<double>::active().clear();
    return names;
}

std::vector<GradCheckCase> gradcheck_suite(bool inject_fault) {
    std::vector<GradCheckCase> cs = primitive_cases();
    for (auto& c : composite_cases()) cs.push_back(std::move(c));
    for (auto& c : end_to_end_cases()) cs.push_back(std::move(c));
    if (inject_fault)
        cs.push_back(make(kSabotagedOp, {uniform({3}, 200)}, [](const Leaves& l) {
            const T& x = l[0];
            std::vector<double> out(x.values());
            for (auto& v : out) v *= v;
            // Backward uses 3x instead of 2x.
            return sum(record_op<double>(kSabotagedOp, x.shape(), out, {x}, [x](const TensorImpl<double>& o) {
                auto g = grad_slot(x);
                for (size_t i = 0; i < g.size(); ++i) g[i] += 3 * x.values()[i] * o.grad[i];
            }));
        }));
    return cs;
}

} // namespace glsgn
