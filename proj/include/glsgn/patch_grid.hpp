#pragma once

#include <functional>
#include <vector>

#include "glsgn/tensor.hpp"

namespace glsgn {

// A rows x cols tiling of a (B,C,H,W) tensor. Patches are stacked along the
// leading dimension in patch-major order: patch k of batch item b sits at
// row k * batch + b, and patches are numbered row-major over the grid.
template <typename T>
struct PatchGrid {
    int rows = 1;
    int cols = 1;
    int batch = 1;
    Tensor<T> patches; // (rows * cols * batch, C, patchH, patchW)

    int count() const { return rows * cols; }
    int channels() const { return patches.dim(1); }
    int patch_h() const { return patches.dim(2); }
    int patch_w() const { return patches.dim(3); }
    // (batch, C, patchH, patchW) view of patch k; differentiable.
    Tensor<T> patch(int k) const;
};

template <typename T>
PatchGrid<T> partition(const Tensor<T>& x, int rows, int cols);

template <typename T>
Tensor<T> assemble(const PatchGrid<T>& grid);

// Rebuilds a grid from per-patch (batch, C, h, w) tensors in row-major order.
template <typename T>
PatchGrid<T> grid_from_patches(const std::vector<Tensor<T>>& patches, int rows, int cols);

// Same geometry, new contents (e.g. the output of a convolution applied to the
// stacked patches).
template <typename T>
PatchGrid<T> with_patches(const PatchGrid<T>& geometry, const Tensor<T>& patches);

// 4-connected neighbours of patch g on a rows x cols grid.
std::vector<int> grid_neighbors(int rows, int cols, int g);

// x_hat / (x + eps * sign(x)) elementwise with sign(0) = +1.
template <typename T>
Tensor<T> guarded_ratio(const Tensor<T>& x_hat, const Tensor<T>& x, T eps);

// s: (P * batch, C) per-patch statistics in patch-major order. Output row
// (g, b) is the mean of s over the grid neighbours of g for the same b.
template <typename T>
Tensor<T> grid_neighbor_mean(const Tensor<T>& s, int rows, int cols, int batch);

template <typename T>
struct PnFactor {
    Tensor<T> scale;            // (batch, C) for one patch, or (P * batch, C) for the grid
    std::vector<int> neighbors; // n per patch
};

// Restoring intensity per patch and channel: S = sum_ij |x_hat / x|.
template <typename T>
Tensor<T> restoring_intensity(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, T eps);

// Regularising factor for every patch at once:
// A_g = (mean_{r in N(g)} S_r + eps) / (S_g + eps).
template <typename T>
PnFactor<T> pn_factors(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, T eps);

// Factor for a single patch g.
template <typename T>
PnFactor<T> pn_factor(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, int g, T eps);

// A * x_hat + bias_branch(x_hat). x_hat is (N,C,h,w) and A is (N,C).
template <typename T>
Tensor<T> pn_apply(const Tensor<T>& x_hat, const Tensor<T>& scale,
                   const std::function<Tensor<T>(const Tensor<T>&)>& bias_branch);

} // namespace glsgn
