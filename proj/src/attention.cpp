#include "glsgn/attention.hpp"

#include "glsgn/ops.hpp"

namespace glsgn {

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(weight.shape() == Shape{1, 2, 7, 7}, ErrorCode::ShapeMismatch,
            "spatial_attention: weight must be (1,2,7,7), got " + shape_str(weight.shape()));
    return sigmoid(conv2d(channel_stats(features), weight, bias, 1, 3));
}

template <typename T>
Tensor<T> fuse_attention(const Tensor<T>& own, const Tensor<T>& prev, const Tensor<T>& global, const PacWeights& w) {
    require(w.sigma1 >= 0 && w.sigma1 <= 1 && w.sigma2 >= 0 && w.sigma2 <= 1, ErrorCode::InvalidArgument,
            "fuse_attention: weights must lie in [0,1]");
    for (const Tensor<T>* m : {&prev, &global})
        if (m->defined())
            require(m->shape() == own.shape(), ErrorCode::ShapeMismatch,
                    "fuse_attention: map " + shape_str(m->shape()) + " does not match " + shape_str(own.shape()));
    Tensor<T> acc = own;
    double denom = 1;
    if (prev.defined() && w.sigma1 > 0) {
        acc = add(acc, mul_scalar(prev, T(w.sigma1)));
        denom += w.sigma1;
    }
    if (global.defined() && w.sigma2 > 0) {
        acc = add(acc, mul_scalar(global, T(w.sigma2)));
        denom += w.sigma2;
    }
    return denom == 1 ? acc : mul_scalar(acc, T(1 / denom));
}

template <typename T>
Tensor<T> reweight(const Tensor<T>& features, const Tensor<T>& a) {
    return mul_spatial(features, a);
}

template <typename T>
Tensor<T> align_map(const Tensor<T>& stacked, int batch, const MapGeometry& from, const MapGeometry& to) {
    require(from.height % from.rows == 0 && from.width % from.cols == 0 && to.height % to.rows == 0 &&
                to.width % to.cols == 0,
            ErrorCode::ShapeMismatch, "align_map: grid does not tile the intact map");
    require(stacked.rank() == 4 && stacked.dim(0) == from.rows * from.cols * batch &&
                stacked.dim(2) * from.rows == from.height && stacked.dim(3) * from.cols == from.width,
            ErrorCode::ShapeMismatch, "align_map: map " + shape_str(stacked.shape()) + " does not match its geometry");
    if (from == to)
        return stacked;
    PatchGrid<T> grid;
    grid.rows = from.rows;
    grid.cols = from.cols;
    grid.batch = batch;
    grid.patches = stacked;
    Tensor<T> intact = assemble(grid);
    if (intact.dim(2) != to.height || intact.dim(3) != to.width)
        intact = resize_bilinear(intact, to.height, to.width);
    return partition(intact, to.rows, to.cols).patches;
}

#define GLSGN_ATTENTION(T)                                                                                   \
    template Tensor<T> spatial_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
    template Tensor<T> fuse_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const PacWeights&); \
    template Tensor<T> reweight(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> align_map(const Tensor<T>&, int, const MapGeometry&, const MapGeometry&);

GLSGN_ATTENTION(float)
GLSGN_ATTENTION(double)

} // namespace glsgn
