#pragma once

#include <array>
#include <vector>

#include "glsgn/tensor.hpp"

namespace glsgn {

template <typename T>
struct PyramidDecomposition {
    std::vector<Tensor<T>> levels; // h_0 .. h_{k-1}, finest first
    Tensor<T> low;
    std::vector<Tensor<T>> masks;  // empty, or one (B,1,h,w) map per level
};

// I_{j+1} = d(I_j), h_j = I_j - u(I_{j+1}), low = I_k.
template <typename T>
PyramidDecomposition<T> build_pyramid(const Tensor<T>& image, int num_levels);

// I_k = low, I_j = u(I_{j+1}) + h_j (masked when masks are present).
template <typename T>
Tensor<T> reconstruct(const PyramidDecomposition<T>& p);

// One-level residual x - u(d(x)).
template <typename T>
Tensor<T> extract_highfreq(const Tensor<T>& image);

// h1*M1 + Up(h2*M2 + Up(h3*M3 + l)). h3 and l share the coarsest size s, h2 is
// 2s and h1 is 4s; masks are single-channel and broadcast over colour.
template <typename T>
Tensor<T> fuse_glsgn(const Tensor<T>& h1, const Tensor<T>& h2, const Tensor<T>& h3, const Tensor<T>& l,
                     const std::array<Tensor<T>, 3>& masks);

} // namespace glsgn
