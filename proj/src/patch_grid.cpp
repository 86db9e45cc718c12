#include "glsgn/patch_grid.hpp"

#include "glsgn/ops.hpp"

namespace glsgn {

template <typename T>
Tensor<T> PatchGrid<T>::patch(int k) const {
    require(k >= 0 && k < count(), ErrorCode::InvalidArgument,
            "patch index " + std::to_string(k) + " outside " + std::to_string(rows) + "x" + std::to_string(cols) +
                " grid");
    return slice_batch(patches, k * batch, (k + 1) * batch);
}

namespace {

struct TileLayout {
    int batch, channels, rows, cols, ph, pw;

    template <typename F>
    void for_each_row(F&& f) const {
        const int h = rows * ph, w = cols * pw;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const int k = r * cols + c;
                for (int b = 0; b < batch; ++b)
                    for (int ch = 0; ch < channels; ++ch)
                        for (int y = 0; y < ph; ++y)
                            f(((size_t(b) * channels + ch) * h + (r * ph + y)) * w + size_t(c) * pw,
                              ((size_t(k * batch + b) * channels + ch) * ph + y) * pw);
            }
    }
};

// Intact (B,C,H,W) to stacked patches, adding into `stacked`.
template <typename T>
void gather_tiles(const TileLayout& t, const T* intact, T* stacked) {
    t.for_each_row([&](size_t src, size_t dst) {
        for (int x = 0; x < t.pw; ++x) stacked[dst + x] += intact[src + x];
    });
}

// Stacked patches to intact, adding into `intact`.
template <typename T>
void scatter_tiles(const TileLayout& t, const T* stacked, T* intact) {
    t.for_each_row([&](size_t dst, size_t src) {
        for (int x = 0; x < t.pw; ++x) intact[dst + x] += stacked[src + x];
    });
}

} // namespace

template <typename T>
PatchGrid<T> partition(const Tensor<T>& x, int rows, int cols) {
    require(x.defined() && x.rank() == 4, ErrorCode::ShapeMismatch, "partition: expected (B,C,H,W)");
    require(rows >= 1 && cols >= 1, ErrorCode::InvalidArgument, "partition: grid must be at least 1x1");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h % rows == 0, ErrorCode::ShapeMismatch,
            "partition: height " + std::to_string(h) + " not divisible by " + std::to_string(rows) + " rows");
    require(w % cols == 0, ErrorCode::ShapeMismatch,
            "partition: width " + std::to_string(w) + " not divisible by " + std::to_string(cols) + " cols");
    const int ph = h / rows, pw = w / cols;
    const TileLayout layout{b, c, rows, cols, ph, pw};
    std::vector<T> out(x.values().size(), T(0));
    gather_tiles(layout, x.data().data(), out.data());
    PatchGrid<T> grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.batch = b;
    grid.patches = record_op<T>("partition", {rows * cols * b, c, ph, pw}, std::move(out), {x},
                                [x, layout](const TensorImpl<T>& o) {
                                    scatter_tiles(layout, o.grad.data(), grad_slot(x).data());
                                });
    return grid;
}

template <typename T>
Tensor<T> assemble(const PatchGrid<T>& grid) {
    const Tensor<T>& p = grid.patches;
    require(p.defined() && p.rank() == 4, ErrorCode::ShapeMismatch, "assemble: grid has no patch tensor");
    require(p.dim(0) == grid.rows * grid.cols * grid.batch, ErrorCode::ShapeMismatch,
            "assemble: " + std::to_string(p.dim(0)) + " stacked patches for a " + std::to_string(grid.rows) + "x" +
                std::to_string(grid.cols) + " grid of batch " + std::to_string(grid.batch));
    const int b = grid.batch, c = p.dim(1), ph = p.dim(2), pw = p.dim(3), rows = grid.rows, cols = grid.cols;
    const TileLayout layout{b, c, rows, cols, ph, pw};
    std::vector<T> out(p.values().size(), T(0));
    scatter_tiles(layout, p.data().data(), out.data());
    return record_op<T>("assemble", {b, c, rows * ph, cols * pw}, std::move(out), {p},
                        [p, layout](const TensorImpl<T>& o) {
                            gather_tiles(layout, o.grad.data(), grad_slot(p).data());
                        });
}

template <typename T>
PatchGrid<T> grid_from_patches(const std::vector<Tensor<T>>& patches, int rows, int cols) {
    require(int(patches.size()) == rows * cols && !patches.empty(), ErrorCode::ShapeMismatch,
            "grid_from_patches: expected " + std::to_string(rows * cols) + " patches, got " +
                std::to_string(patches.size()));
    PatchGrid<T> grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.batch = patches.front().dim(0);
    for (const auto& p : patches)
        require(p.shape() == patches.front().shape(), ErrorCode::ShapeMismatch,
                "grid_from_patches: patch " + shape_str(p.shape()) + " differs from " +
                    shape_str(patches.front().shape()));
    grid.patches = stack_batch(patches);
    return grid;
}

template <typename T>
PatchGrid<T> with_patches(const PatchGrid<T>& geometry, const Tensor<T>& patches) {
    require(patches.rank() == 4 && patches.dim(0) == geometry.patches.dim(0), ErrorCode::ShapeMismatch,
            "with_patches: stacked tensor " + shape_str(patches.shape()) + " does not match grid");
    PatchGrid<T> grid = geometry;
    grid.patches = patches;
    return grid;
}

std::vector<int> grid_neighbors(int rows, int cols, int g) {
    const int r = g / cols, c = g % cols;
    std::vector<int> out;
    if (r > 0) out.push_back(g - cols);
    if (c > 0) out.push_back(g - 1);
    if (c + 1 < cols) out.push_back(g + 1);
    if (r + 1 < rows) out.push_back(g + cols);
    return out;
}

template <typename T>
Tensor<T> guarded_ratio(const Tensor<T>& x_hat, const Tensor<T>& x, T eps) {
    require(x_hat.shape() == x.shape(), ErrorCode::ShapeMismatch,
            "guarded_ratio: " + shape_str(x_hat.shape()) + " vs " + shape_str(x.shape()));
    const size_t n = x.values().size();
    std::vector<T> out(n);
    for (size_t i = 0; i < n; ++i) {
        const T xi = x.data()[i];
        out[i] = x_hat.data()[i] / (xi + (xi >= T(0) ? eps : -eps));
    }
    return record_op<T>("guarded_ratio", x.shape(), std::move(out), {x_hat, x},
                        [x_hat, x, eps, n](const TensorImpl<T>& o) {
                            auto gn = grad_slot(x_hat);
                            auto gd = grad_slot(x);
                            for (size_t i = 0; i < n; ++i) {
                                const T xi = x.data()[i];
                                const T q = xi + (xi >= T(0) ? eps : -eps);
                                if (!gn.empty()) gn[i] += o.grad[i] / q;
                                if (!gd.empty()) gd[i] -= o.grad[i] * x_hat.data()[i] / (q * q);
                            }
                        });
}

template <typename T>
Tensor<T> grid_neighbor_mean(const Tensor<T>& s, int rows, int cols, int batch) {
    require(s.rank() == 2 && s.dim(0) == rows * cols * batch, ErrorCode::ShapeMismatch,
            "grid_neighbor_mean: statistics " + shape_str(s.shape()) + " do not match a " + std::to_string(rows) +
                "x" + std::to_string(cols) + " grid of batch " + std::to_string(batch));
    require(rows * cols >= 2, ErrorCode::InvalidArgument, "grid_neighbor_mean: a 1x1 grid has no neighbours");
    const int c = s.dim(1), p = rows * cols;
    std::vector<std::vector<int>> nbrs(static_cast<size_t>(p));
    for (int g = 0; g < p; ++g) nbrs[size_t(g)] = grid_neighbors(rows, cols, g);
    std::vector<T> out(s.values().size(), T(0));
    for (int g = 0; g < p; ++g) {
        const T inv = T(1) / T(nbrs[size_t(g)].size());
        for (int r : nbrs[size_t(g)])
            for (int b = 0; b < batch; ++b)
                for (int ch = 0; ch < c; ++ch)
                    out[size_t(g * batch + b) * c + ch] += s.data()[size_t(r * batch + b) * c + ch] * inv;
    }
    return record_op<T>("grid_neighbor_mean", s.shape(), std::move(out), {s},
                        [s, nbrs, batch, c, p](const TensorImpl<T>& o) {
                            auto gs = grad_slot(s);
                            for (int g = 0; g < p; ++g) {
                                const T inv = T(1) / T(nbrs[size_t(g)].size());
                                for (int r : nbrs[size_t(g)])
                                    for (int b = 0; b < batch; ++b)
                                        for (int ch = 0; ch < c; ++ch)
                                            gs[size_t(r * batch + b) * c + ch] +=
                                                o.grad[size_t(g * batch + b) * c + ch] * inv;
                            }
                        });
}

namespace {

template <typename T>
void require_same_geometry(const PatchGrid<T>& a, const PatchGrid<T>& b) {
    require(a.rows == b.rows && a.cols == b.cols && a.batch == b.batch && a.patches.shape() == b.patches.shape(),
            ErrorCode::ShapeMismatch,
            "patch normalisation: block input " + shape_str(a.patches.shape()) + " and output " +
                shape_str(b.patches.shape()) + " have different geometry");
}

} // namespace

template <typename T>
Tensor<T> restoring_intensity(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, T eps) {
    require_same_geometry(grid_in, grid_out);
    return spatial_sum(abs(guarded_ratio(grid_out.patches, grid_in.patches, eps)));
}

template <typename T>
PnFactor<T> pn_factors(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, T eps) {
    require(grid_in.count() >= 2, ErrorCode::InvalidArgument,
            "patch normalisation is inapplicable to a single-patch grid");
    const Tensor<T> s = restoring_intensity(grid_in, grid_out, eps);
    const Tensor<T> neighbors = grid_neighbor_mean(s, grid_in.rows, grid_in.cols, grid_in.batch);
    PnFactor<T> f;
    f.scale = div(add_scalar(neighbors, eps), add_scalar(s, eps));
    for (int g = 0; g < grid_in.count(); ++g)
        f.neighbors.push_back(int(grid_neighbors(grid_in.rows, grid_in.cols, g).size()));
    return f;
}

template <typename T>
PnFactor<T> pn_factor(const PatchGrid<T>& grid_in, const PatchGrid<T>& grid_out, int g, T eps) {
    require(g >= 0 && g < grid_in.count(), ErrorCode::InvalidArgument, "pn_factor: patch index out of range");
    PnFactor<T> all = pn_factors(grid_in, grid_out, eps);
    PnFactor<T> f;
    f.scale = slice_batch(all.scale, g * grid_in.batch, (g + 1) * grid_in.batch);
    f.neighbors = {all.neighbors[size_t(g)]};
    return f;
}

template <typename T>
Tensor<T> pn_apply(const Tensor<T>& x_hat, const Tensor<T>& scale,
                   const std::function<Tensor<T>(const Tensor<T>&)>& bias_branch) {
    require(x_hat.rank() == 4 && scale.rank() == 2 && scale.dim(0) == x_hat.dim(0) && scale.dim(1) == x_hat.dim(1),
            ErrorCode::ShapeMismatch,
            "pn_apply: factor " + shape_str(scale.shape()) + " does not match features " + shape_str(x_hat.shape()));
    Tensor<T> out = mul_channelwise(x_hat, scale);
    if (bias_branch)
        out = add(out, bias_branch(x_hat));
    return out;
}

#define GLSGN_PATCH(T)                                                                                   \
    template struct PatchGrid<T>;                                                                        \
    template PatchGrid<T> partition(const Tensor<T>&, int, int);                                         \
    template Tensor<T> assemble(const PatchGrid<T>&);                                                    \
    template PatchGrid<T> grid_from_patches(const std::vector<Tensor<T>>&, int, int);                    \
    template PatchGrid<T> with_patches(const PatchGrid<T>&, const Tensor<T>&);                           \
    template Tensor<T> guarded_ratio(const Tensor<T>&, const Tensor<T>&, T);                             \
    template Tensor<T> grid_neighbor_mean(const Tensor<T>&, int, int, int);                              \
    template Tensor<T> restoring_intensity(const PatchGrid<T>&, const PatchGrid<T>&, T);                 \
    template PnFactor<T> pn_factors(const PatchGrid<T>&, const PatchGrid<T>&, T);                        \
    template PnFactor<T> pn_factor(const PatchGrid<T>&, const PatchGrid<T>&, int, T);                    \
    template Tensor<T> pn_apply(const Tensor<T>&, const Tensor<T>&,                                      \
                                const std::function<Tensor<T>(const Tensor<T>&)>&);

GLSGN_PATCH(float)
GLSGN_PATCH(double)

} // namespace glsgn
