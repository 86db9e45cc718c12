#pragma once

#include <cstdint>
#include <vector>

#include "glsgn/config.hpp"
#include "glsgn/model.hpp"
#include "glsgn/tensor.hpp"

namespace glsgn {

// alpha1 * sum_i L1(B_i, B_hat_i) + beta1 * L1(B, B_out). The ground truth is
// resized bilinearly to each pathway's resolution.
template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& gt, const std::vector<Tensor<T>>& pathway_outputs, const Tensor<T>& final,
                     const LossWeights& w);

// Frozen random conv pyramid standing in for a pretrained feature network:
// `levels` stride-2 3x3 convs with leaky ReLU, tapped after each level.
template <typename T>
class PerceptualExtractor {
public:
    explicit PerceptualExtractor(uint64_t seed, int levels = 4, int base_channels = 8);

    std::vector<Tensor<T>> features(const Tensor<T>& x) const;
    // Mean over taps of the mean absolute feature difference.
    Tensor<T> distance(const Tensor<T>& a, const Tensor<T>& b) const;

    const ParameterSet<T>& params() const { return params_; }
    // Replaces the weights, e.g. with externally trained ones. Names and
    // shapes must match.
    void load_weights(const ParameterSet<T>& weights);
    int levels() const { return levels_; }

private:
    int levels_;
    ParameterSet<T> params_;
};

template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& gt, const std::vector<Tensor<T>>& pathway_outputs, const Tensor<T>& final,
                          const PerceptualExtractor<T>& extractor, const LossWeights& w);

// Persistent power-iteration vectors for one weight, viewed as
// (out, in * kh * kw).
template <typename T>
struct SpectralState {
    Tensor<T> u; // (out)
    Tensor<T> v; // (in * kh * kw)
    double sigma = 0;
};

template <typename T>
SpectralState<T> init_spectral_state(const Shape& weight_shape, uint64_t seed);

// One power iteration (when update is set) followed by W / sigma with
// sigma = u^T W v. The gradient treats u and v as constants.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, SpectralState<T>& state, bool update = true);

// Spectrally normalised conv stack: `layers` 4x4 stride-2 convs from
// base_channels doubling, leaky ReLU, then a 1x1 conv to one channel averaged
// over space. Scores are (B,1).
template <typename T>
class Discriminator {
public:
    explicit Discriminator(uint64_t seed, int layers = 4, int base_channels = 16);

    Tensor<T> score(const Tensor<T>& x, bool update_spectral = true);

    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }
    std::vector<SpectralState<T>>& spectral_states() { return states_; }
    const std::vector<SpectralState<T>>& spectral_states() const { return states_; }

private:
    int layers_;
    ParameterSet<T> params_;
    std::vector<SpectralState<T>> states_; // one per conv, parameter order
};

// -mean over the batch of D(fake).
template <typename T>
Tensor<T> adversarial_g_loss(const Tensor<T>& fake_scores);

// Hinge: mean(relu(1 - D(real))) + mean(relu(1 + D(fake))).
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);

// lambda1 * pixel + lambda2 * perceptual + lambda3 * adversarial.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pixel, const Tensor<T>& perceptual, const Tensor<T>& adversarial,
                     const LossWeights& w);

} // namespace glsgn
