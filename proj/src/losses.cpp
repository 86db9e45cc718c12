#include "glsgn/losses.hpp"

#include <cmath>

#include "glsgn/ops.hpp"
#include "glsgn/rng.hpp"

namespace glsgn {

namespace {

template <typename T>
Tensor<T> gt_at(const Tensor<T>& gt, const Tensor<T>& like) {
    require(like.rank() == 4 && like.dim(0) == gt.dim(0) && like.dim(1) == gt.dim(1), ErrorCode::ShapeMismatch,
            "loss: output " + shape_str(like.shape()) + " does not match ground truth " + shape_str(gt.shape()));
    if (like.dim(2) == gt.dim(2) && like.dim(3) == gt.dim(3))
        return gt;
    return resize_bilinear(gt, like.dim(2), like.dim(3));
}

template <typename T, typename Distance>
Tensor<T> pathway_objective(const Tensor<T>& gt, const std::vector<Tensor<T>>& outputs, const Tensor<T>& final,
                            double alpha, double beta, Distance dist) {
    require(final.shape() == gt.shape(), ErrorCode::ShapeMismatch,
            "loss: final output " + shape_str(final.shape()) + " vs ground truth " + shape_str(gt.shape()));
    std::vector<Tensor<T>> terms;
    std::vector<T> weights;
    for (const auto& out : outputs) {
        terms.push_back(dist(gt_at(gt, out), out));
        weights.push_back(T(alpha));
    }
    terms.push_back(dist(gt, final));
    weights.push_back(T(beta));
    return weighted_sum(terms, weights);
}

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, uint64_t seed, const std::string& name) {
    const int fan_in = shape[1] * shape[2] * shape[3];
    Tensor<T> t(std::move(shape));
    CounterRng rng = CounterRng::stream(seed, hash_name(name));
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : t.values()) v = T(rng.uniform(-bound, bound));
    return t;
}

} // namespace

template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& gt, const std::vector<Tensor<T>>& pathway_outputs, const Tensor<T>& final,
                     const LossWeights& w) {
    return pathway_objective(gt, pathway_outputs, final, w.alpha1, w.beta1,
                             [](const Tensor<T>& a, const Tensor<T>& b) { return l1_loss(a, b); });
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(uint64_t seed, int levels, int base_channels) : levels_(levels) {
    require(levels >= 1 && base_channels >= 1, ErrorCode::InvalidArgument, "perceptual extractor: bad size");
    int in = 3;
    for (int l = 0; l < levels; ++l) {
        const int out = base_channels << l;
        const std::string name = "p.conv" + std::to_string(l + 1);
        params_.add(name + ".w", kaiming_uniform<T>({out, in, 3, 3}, seed, name + ".w")).set_requires_grad(false);
        params_.add(name + ".b", Tensor<T>({out})).set_requires_grad(false);
        in = out;
    }
}

template <typename T>
std::vector<Tensor<T>> PerceptualExtractor<T>::features(const Tensor<T>& x) const {
    std::vector<Tensor<T>> taps;
    Tensor<T> h = x;
    for (int l = 0; l < levels_; ++l) {
        const std::string name = "p.conv" + std::to_string(l + 1);
        h = leaky_relu(conv2d(h, params_.get(name + ".w"), params_.get(name + ".b"), 2, 1));
        taps.push_back(h);
    }
    return taps;
}

template <typename T>
Tensor<T> PerceptualExtractor<T>::distance(const Tensor<T>& a, const Tensor<T>& b) const {
    require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
            "perceptual distance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto fa = features(a), fb = features(b);
    std::vector<Tensor<T>> terms;
    for (size_t k = 0; k < fa.size(); ++k) terms.push_back(l1_loss(fa[k], fb[k]));
    return weighted_sum(terms, std::vector<T>(terms.size(), T(1.0 / double(terms.size()))));
}

template <typename T>
void PerceptualExtractor<T>::load_weights(const ParameterSet<T>& weights) {
    require(weights.size() == params_.size(), ErrorCode::InvalidArgument,
            "perceptual extractor: expected " + std::to_string(params_.size()) + " tensors");
    for (const auto& [name, t] : weights.entries()) {
        Tensor<T> copy = t.clone();
        copy.set_requires_grad(false);
        params_.set(name, copy);
    }
}

template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& gt, const std::vector<Tensor<T>>& pathway_outputs, const Tensor<T>& final,
                          const PerceptualExtractor<T>& extractor, const LossWeights& w) {
    return pathway_objective(gt, pathway_outputs, final, w.alpha2, w.beta2,
                             [&](const Tensor<T>& a, const Tensor<T>& b) { return extractor.distance(a, b); });
}

template <typename T>
SpectralState<T> init_spectral_state(const Shape& weight_shape, uint64_t seed) {
    const int rows = weight_shape.at(0);
    const int cols = int(shape_numel(weight_shape) / rows);
    SpectralState<T> s;
    s.u = Tensor<T>({rows});
    s.v = Tensor<T>({cols});
    CounterRng rng(seed);
    double norm = 0;
    for (auto& x : s.u.values()) {
        x = T(rng.uniform(-1, 1));
        norm += double(x) * double(x);
    }
    norm = std::sqrt(norm);
    for (auto& x : s.u.values()) x = T(double(x) / norm);
    return s;
}

template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, SpectralState<T>& state, bool update) {
    const int rows = weight.dim(0);
    const int cols = int(weight.numel() / rows);
    require(state.u.defined() && state.u.numel() == rows && state.v.numel() == cols, ErrorCode::ShapeMismatch,
            "spectral_normalize: state does not match weight " + shape_str(weight.shape()));
    const auto& w = weight.values();
    std::vector<double> u(state.u.values().begin(), state.u.values().end());
    std::vector<double> v(state.v.values().begin(), state.v.values().end());
    auto normalize = [](std::vector<double>& x) {
        double n = 0;
        for (double e : x) n += e * e;
        n = std::sqrt(n);
        if (n > 0)
            for (double& e : x) e /= n;
    };
    if (update) {
        std::fill(v.begin(), v.end(), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) v[size_t(c)] += double(w[size_t(r) * cols + c]) * u[size_t(r)];
        normalize(v);
        for (int r = 0; r < rows; ++r) {
            double acc = 0;
            for (int c = 0; c < cols; ++c) acc += double(w[size_t(r) * cols + c]) * v[size_t(c)];
            u[size_t(r)] = acc;
        }
        normalize(u);
        for (int r = 0; r < rows; ++r) state.u.values()[size_t(r)] = T(u[size_t(r)]);
        for (int c = 0; c < cols; ++c) state.v.values()[size_t(c)] = T(v[size_t(c)]);
    }
    double sigma = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) sigma += u[size_t(r)] * double(w[size_t(r) * cols + c]) * v[size_t(c)];
    state.sigma = sigma;
    // A zero weight has no direction to normalise.
    const double s = std::abs(sigma) > 1e-12 ? sigma : 1.0;

    std::vector<T> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = T(double(w[i]) / s);
    return record_op<T>("spectral_normalize", weight.shape(), std::move(out), {weight},
                        [weight, u, v, s, rows, cols](const TensorImpl<T>& o) {
                            auto g = grad_slot(weight);
                            if (g.empty())
                                return;
                            const auto& wv = weight.values();
                            double gw = 0;
                            for (size_t i = 0; i < wv.size(); ++i) gw += double(o.grad[i]) * double(wv[i]);
                            const double k = gw / (s * s);
                            for (int r = 0; r < rows; ++r)
                                for (int c = 0; c < cols; ++c) {
                                    const size_t i = size_t(r) * cols + c;
                                    g[i] += T(double(o.grad[i]) / s - k * u[size_t(r)] * v[size_t(c)]);
                                }
                        });
}

template <typename T>
Discriminator<T>::Discriminator(uint64_t seed, int layers, int base_channels) : layers_(layers) {
    require(layers >= 1 && base_channels >= 1, ErrorCode::InvalidArgument, "discriminator: bad size");
    int in = 3;
    auto add_conv = [&](const std::string& name, int out, int k) {
        const Shape shape{out, in, k, k};
        params_.add(name + ".w", init_uniform<T>(shape, in * k * k, seed, name + ".w"));
        params_.add(name + ".b", Tensor<T>({out}));
        states_.push_back(init_spectral_state<T>(shape, CounterRng::stream(seed, hash_name(name + ".u")).key()));
    };
    for (int l = 0; l < layers; ++l) {
        const int out = base_channels << l;
        add_conv("d.conv" + std::to_string(l + 1), out, 4);
        in = out;
    }
    add_conv("d.out", 1, 1);
}

template <typename T>
Tensor<T> Discriminator<T>::score(const Tensor<T>& x, bool update_spectral) {
    Tensor<T> h = x;
    for (int l = 0; l <= layers_; ++l) {
        const bool last = l == layers_;
        const std::string name = last ? "d.out" : "d.conv" + std::to_string(l + 1);
        Tensor<T> w = spectral_normalize(params_.get(name + ".w"), states_[size_t(l)], update_spectral);
        h = conv2d(h, w, params_.get(name + ".b"), last ? 1 : 2, last ? 0 : 1);
        if (!last)
            h = leaky_relu(h);
    }
    return mul_scalar(spatial_sum(h), T(1.0 / double(h.dim(2) * h.dim(3))));
}

template <typename T>
Tensor<T> adversarial_g_loss(const Tensor<T>& fake_scores) {
    return mul_scalar(mean(fake_scores), T(-1));
}

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    Tensor<T> real_term = mean(relu(add_scalar(mul_scalar(real_scores, T(-1)), T(1))));
    Tensor<T> fake_term = mean(relu(add_scalar(fake_scores, T(1))));
    return add(real_term, fake_term);
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& pixel, const Tensor<T>& perceptual, const Tensor<T>& adversarial,
                     const LossWeights& w) {
    return weighted_sum<T>({pixel, perceptual, adversarial}, {T(w.lambda1), T(w.lambda2), T(w.lambda3)});
}

#define GLSGN_LOSSES(T)                                                                                          \
    template Tensor<T> pixel_loss(const Tensor<T>&, const std::vector<Tensor<T>>&, const Tensor<T>&,             \
                                  const LossWeights&);                                                           \
    template class PerceptualExtractor<T>;                                                                       \
    template Tensor<T> perceptual_loss(const Tensor<T>&, const std::vector<Tensor<T>>&, const Tensor<T>&,        \
                                       const PerceptualExtractor<T>&, const LossWeights&);                       \
    template SpectralState<T> init_spectral_state<T>(const Shape&, uint64_t);                                    \
    template Tensor<T> spectral_normalize(const Tensor<T>&, SpectralState<T>&, bool);                            \
    template class Discriminator<T>;                                                                             \
    template Tensor<T> adversarial_g_loss(const Tensor<T>&);                                                     \
    template Tensor<T> discriminator_loss(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&);

GLSGN_LOSSES(float)
GLSGN_LOSSES(double)

} // namespace glsgn
