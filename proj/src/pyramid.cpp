#include "glsgn/pyramid.hpp"

#include "glsgn/ops.hpp"

namespace glsgn {

namespace {

template <typename T>
void require_spatial(const Tensor<T>& t, int h, int w, const char* what) {
    require(t.defined() && t.rank() == 4 && t.dim(2) == h && t.dim(3) == w, ErrorCode::ShapeMismatch,
            std::string(what) + ": expected spatial size " + std::to_string(h) + "x" + std::to_string(w) + ", got " +
                (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
}

template <typename T>
void require_mask(const Tensor<T>& mask, const Tensor<T>& level, const char* what) {
    require(mask.defined() && mask.rank() == 4 && mask.dim(0) == level.dim(0) && mask.dim(1) == 1 &&
                mask.dim(2) == level.dim(2) && mask.dim(3) == level.dim(3),
            ErrorCode::ShapeMismatch,
            std::string(what) + ": mask " + (mask.defined() ? shape_str(mask.shape()) : std::string("<undefined>")) +
                " does not fit level " + shape_str(level.shape()));
}

} // namespace

template <typename T>
PyramidDecomposition<T> build_pyramid(const Tensor<T>& image, int num_levels) {
    require(num_levels >= 0, ErrorCode::InvalidArgument, "build_pyramid: negative level count");
    require(image.rank() == 4, ErrorCode::ShapeMismatch, "build_pyramid: expected (B,C,H,W)");
    const int div = 1 << num_levels;
    require(image.dim(2) % div == 0 && image.dim(3) % div == 0, ErrorCode::ShapeMismatch,
            "build_pyramid: " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                " is not divisible by 2^" + std::to_string(num_levels));
    PyramidDecomposition<T> p;
    Tensor<T> current = image;
    for (int j = 0; j < num_levels; ++j) {
        Tensor<T> next = downsample2x(current);
        p.levels.push_back(sub(current, upsample2x(next)));
        current = next;
    }
    p.low = current;
    return p;
}

template <typename T>
Tensor<T> reconstruct(const PyramidDecomposition<T>& p) {
    require(p.low.defined() && p.low.rank() == 4, ErrorCode::ShapeMismatch, "reconstruct: missing low component");
    require(p.masks.empty() || p.masks.size() == p.levels.size(), ErrorCode::ShapeMismatch,
            "reconstruct: mask count does not match level count");
    Tensor<T> current = p.low;
    for (int j = int(p.levels.size()) - 1; j >= 0; --j) {
        const Tensor<T>& h = p.levels[size_t(j)];
        require_spatial(h, current.dim(2) * 2, current.dim(3) * 2, "reconstruct");
        Tensor<T> residual = h;
        if (!p.masks.empty()) {
            require_mask(p.masks[size_t(j)], h, "reconstruct");
            residual = mul_spatial(h, p.masks[size_t(j)]);
        }
        current = add(upsample2x(current), residual);
    }
    return current;
}

template <typename T>
Tensor<T> extract_highfreq(const Tensor<T>& image) {
    return sub(image, upsample2x(downsample2x(image)));
}

template <typename T>
Tensor<T> fuse_glsgn(const Tensor<T>& h1, const Tensor<T>& h2, const Tensor<T>& h3, const Tensor<T>& l,
                     const std::array<Tensor<T>, 3>& masks) {
    require(l.defined() && l.rank() == 4, ErrorCode::ShapeMismatch, "fuse_glsgn: low component must be (B,C,H,W)");
    const int sh = l.dim(2), sw = l.dim(3);
    require_spatial(h3, sh, sw, "fuse_glsgn h3");
    require_spatial(h2, 2 * sh, 2 * sw, "fuse_glsgn h2");
    require_spatial(h1, 4 * sh, 4 * sw, "fuse_glsgn h1");
    require(h1.dim(1) == l.dim(1) && h2.dim(1) == l.dim(1) && h3.dim(1) == l.dim(1) && h1.dim(0) == l.dim(0) &&
                h2.dim(0) == l.dim(0) && h3.dim(0) == l.dim(0),
            ErrorCode::ShapeMismatch, "fuse_glsgn: batch/channel counts differ between components");
    require_mask(masks[0], h1, "fuse_glsgn M1");
    require_mask(masks[1], h2, "fuse_glsgn M2");
    require_mask(masks[2], h3, "fuse_glsgn M3");
    Tensor<T> acc = add(mul_spatial(h3, masks[2]), l);
    acc = add(mul_spatial(h2, masks[1]), upsample2x(acc));
    return add(mul_spatial(h1, masks[0]), upsample2x(acc));
}

#define GLSGN_PYRAMID(T)                                                                                \
    template PyramidDecomposition<T> build_pyramid(const Tensor<T>&, int);                              \
    template Tensor<T> reconstruct(const PyramidDecomposition<T>&);                                     \
    template Tensor<T> extract_highfreq(const Tensor<T>&);                                              \
    template Tensor<T> fuse_glsgn(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                  const std::array<Tensor<T>, 3>&);

GLSGN_PYRAMID(float)
GLSGN_PYRAMID(double)

} // namespace glsgn
