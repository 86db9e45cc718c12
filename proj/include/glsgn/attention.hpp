#pragma once

#include "glsgn/patch_grid.hpp"
#include "glsgn/tensor.hpp"

namespace glsgn {

struct PacWeights {
    double sigma1 = 0.5; // previous pathway
    double sigma2 = 0.5; // global pathway
};

// sigmoid(conv7x7(channel_stats(features))): weight (1,2,7,7), bias (1).
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const Tensor<T>& weight, const Tensor<T>& bias);

// (own + s1 * prev + s2 * global) / (1 + s1 + s2); an undefined prev or
// global drops its term and its weight from the denominator.
template <typename T>
Tensor<T> fuse_attention(const Tensor<T>& own, const Tensor<T>& prev, const Tensor<T>& global, const PacWeights& w);

// features * a, with a (N,1,H,W) broadcast over channels.
template <typename T>
Tensor<T> reweight(const Tensor<T>& features, const Tensor<T>& a);

// Where a stacked patch map lives: grid shape plus the intact size the grid
// tiles.
struct MapGeometry {
    int rows = 1;
    int cols = 1;
    int height = 1; // intact map height
    int width = 1;

    bool operator==(const MapGeometry&) const = default;
};

// Assembles the source patches into the intact map, resizes it bilinearly to
// the target intact size and re-partitions it on the target grid. Returns
// the stacked target patches.
template <typename T>
Tensor<T> align_map(const Tensor<T>& stacked, int batch, const MapGeometry& from, const MapGeometry& to);

} // namespace glsgn
