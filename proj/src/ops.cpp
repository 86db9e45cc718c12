#include "glsgn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace glsgn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_rank(const Shape& s, size_t rank, const char* op, const char* arg) {
    require(s.size() == rank, ErrorCode::ShapeMismatch,
            std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    require(a == b, ErrorCode::ShapeMismatch,
            std::string(op) + ": shapes differ " + shape_str(a) + " vs " + shape_str(b));
}

struct ConvGeometry {
    int batch, channels, height, width;
    int out_channels, kh, kw, stride, padding;
    int out_h, out_w;
    int64_t k() const { return int64_t(channels) * kh * kw; }
    int64_t cols() const { return int64_t(batch) * out_h * out_w; }
};

// Column matrix (C*kh*kw) x (B*outH*outW), row-major.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
    const int64_t plane = int64_t(g.out_h) * g.out_w;
    const int64_t ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = col + ((int64_t(c) * g.kh + ki) * g.kw + kj) * ncols;
                for (int b = 0; b < g.batch; ++b) {
                    const T* src = in + (int64_t(b) * g.channels + c) * g.height * g.width;
                    T* dst = row + b * plane;
                    for (int oh = 0; oh < g.out_h; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki;
                        T* drow = dst + int64_t(oh) * g.out_w;
                        if (ih < 0 || ih >= g.height) {
                            std::fill(drow, drow + g.out_w, T(0));
                            continue;
                        }
                        const T* srow = src + int64_t(ih) * g.width;
                        for (int ow = 0; ow < g.out_w; ++ow) {
                            const int iw = ow * g.stride - g.padding + kj;
                            drow[ow] = (iw >= 0 && iw < g.width) ? srow[iw] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* in_grad) {
    const int64_t plane = int64_t(g.out_h) * g.out_w;
    const int64_t ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = col + ((int64_t(c) * g.kh + ki) * g.kw + kj) * ncols;
                for (int b = 0; b < g.batch; ++b) {
                    T* dst = in_grad + (int64_t(b) * g.channels + c) * g.height * g.width;
                    const T* src = row + b * plane;
                    for (int oh = 0; oh < g.out_h; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki;
                        if (ih < 0 || ih >= g.height)
                            continue;
                        const T* srow = src + int64_t(oh) * g.out_w;
                        T* drow = dst + int64_t(ih) * g.width;
                        for (int ow = 0; ow < g.out_w; ++ow) {
                            const int iw = ow * g.stride - g.padding + kj;
                            if (iw >= 0 && iw < g.width)
                                drow[iw] += srow[ow];
                        }
                    }
                }
            }
        }
    }
}

struct AxisWeights {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

AxisWeights bilinear_axis(int in, int out) {
    AxisWeights a;
    a.lo.resize(static_cast<size_t>(out));
    a.hi.resize(static_cast<size_t>(out));
    a.frac.resize(static_cast<size_t>(out));
    const double scale = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0)
            src = 0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1)
            lo = in - 1;
        const int hi = std::min(lo + 1, in - 1);
        a.lo[size_t(o)] = lo;
        a.hi[size_t(o)] = hi;
        a.frac[size_t(o)] = src - lo;
    }
    return a;
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
    require_rank(input.shape(), 4, "conv2d", "input");
    require_rank(weight.shape(), 4, "conv2d", "weight");
    require(stride >= 1 && padding >= 0, ErrorCode::InvalidArgument,
            "conv2d: stride must be >= 1 and padding >= 0");
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                   weight.dim(0), weight.dim(2), weight.dim(3), stride, padding, 0, 0};
    require(weight.dim(1) == g.channels, ErrorCode::ShapeMismatch,
            "conv2d: input channels " + std::to_string(g.channels) + " != weight channels " +
                std::to_string(weight.dim(1)));
    require(g.height + 2 * padding >= g.kh, ErrorCode::ShapeMismatch,
            "conv2d: height " + std::to_string(g.height) + " + 2*padding smaller than kernel height " +
                std::to_string(g.kh));
    require(g.width + 2 * padding >= g.kw, ErrorCode::ShapeMismatch,
            "conv2d: width " + std::to_string(g.width) + " + 2*padding smaller than kernel width " +
                std::to_string(g.kw));
    if (bias.defined())
        require(bias.numel() == g.out_channels, ErrorCode::ShapeMismatch,
                "conv2d: bias length " + std::to_string(bias.numel()) + " != output channels " +
                    std::to_string(g.out_channels));
    g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

    const int64_t plane = int64_t(g.out_h) * g.out_w;
    std::vector<T> col(static_cast<size_t>(g.k() * g.cols()));
    im2col(input.data().data(), g, col.data());

    Eigen::Map<const RowMat<T>> w(weight.data().data(), g.out_channels, g.k());
    Eigen::Map<const RowMat<T>> colm(col.data(), g.k(), g.cols());
    RowMat<T> prod(g.out_channels, g.cols());
    prod.noalias() = w * colm;

    std::vector<T> out(static_cast<size_t>(int64_t(g.batch) * g.out_channels * plane));
    for (int b = 0; b < g.batch; ++b)
        for (int o = 0; o < g.out_channels; ++o) {
            const T bo = bias.defined() ? bias.data()[size_t(o)] : T(0);
            const T* src = prod.data() + int64_t(o) * g.cols() + b * plane;
            T* dst = out.data() + (int64_t(b) * g.out_channels + o) * plane;
            for (int64_t p = 0; p < plane; ++p)
                dst[p] = src[p] + bo;
        }

    return record_op<T>(
        "conv2d", {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), {input, weight, bias},
        [input, weight, bias, g, plane](const TensorImpl<T>& o) {
            RowMat<T> gout(g.out_channels, g.cols());
            for (int b = 0; b < g.batch; ++b)
                for (int oc = 0; oc < g.out_channels; ++oc) {
                    const T* src = o.grad.data() + (int64_t(b) * g.out_channels + oc) * plane;
                    std::copy(src, src + plane, gout.data() + int64_t(oc) * g.cols() + b * plane);
                }
            if (auto gb = grad_slot(bias); !gb.empty())
                for (int oc = 0; oc < g.out_channels; ++oc)
                    gb[size_t(oc)] += gout.row(oc).sum();
            auto gw = grad_slot(weight);
            auto gi = grad_slot(input);
            if (gw.empty() && gi.empty())
                return;
            std::vector<T> col(static_cast<size_t>(g.k() * g.cols()));
            if (!gw.empty()) {
                im2col(input.data().data(), g, col.data());
                Eigen::Map<const RowMat<T>> colm(col.data(), g.k(), g.cols());
                Eigen::Map<RowMat<T>> gwm(gw.data(), g.out_channels, g.k());
                gwm.noalias() += gout * colm.transpose();
            }
            if (!gi.empty()) {
                Eigen::Map<const RowMat<T>> w(weight.data().data(), g.out_channels, g.k());
                Eigen::Map<RowMat<T>> gcol(col.data(), g.k(), g.cols());
                gcol.noalias() = w.transpose() * gout;
                col2im(col.data(), g, gi.data());
            }
        });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, int out_h, int out_w) {
    require_rank(input.shape(), 4, "resize_bilinear", "input");
    require(out_h >= 1 && out_w >= 1, ErrorCode::InvalidArgument,
            "resize_bilinear: target size must be at least 1x1");
    const int n = input.dim(0) * input.dim(1), ih = input.dim(2), iw = input.dim(3);
    const AxisWeights ay = bilinear_axis(ih, out_h);
    const AxisWeights ax = bilinear_axis(iw, out_w);
    std::vector<T> out(static_cast<size_t>(int64_t(n) * out_h * out_w));
    const T* src = input.data().data();
    for (int p = 0; p < n; ++p) {
        const T* s = src + int64_t(p) * ih * iw;
        T* d = out.data() + int64_t(p) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const T fy = T(ay.frac[size_t(y)]);
            const T* r0 = s + int64_t(ay.lo[size_t(y)]) * iw;
            const T* r1 = s + int64_t(ay.hi[size_t(y)]) * iw;
            for (int x = 0; x < out_w; ++x) {
                const T fx = T(ax.frac[size_t(x)]);
                const int x0 = ax.lo[size_t(x)], x1 = ax.hi[size_t(x)];
                const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                d[int64_t(y) * out_w + x] = top + (bot - top) * fy;
            }
        }
    }
    Shape shape{input.dim(0), input.dim(1), out_h, out_w};
    return record_op<T>("resize_bilinear", shape, std::move(out), {input},
                        [input, ay, ax, n, ih, iw, out_h, out_w](const TensorImpl<T>& o) {
                            auto gi = grad_slot(input);
                            for (int p = 0; p < n; ++p) {
                                T* s = gi.data() + int64_t(p) * ih * iw;
                                const T* d = o.grad.data() + int64_t(p) * out_h * out_w;
                                for (int y = 0; y < out_h; ++y) {
                                    const T fy = T(ay.frac[size_t(y)]);
                                    T* r0 = s + int64_t(ay.lo[size_t(y)]) * iw;
                                    T* r1 = s + int64_t(ay.hi[size_t(y)]) * iw;
                                    for (int x = 0; x < out_w; ++x) {
                                        const T fx = T(ax.frac[size_t(x)]);
                                        const int x0 = ax.lo[size_t(x)], x1 = ax.hi[size_t(x)];
                                        const T gv = d[int64_t(y) * out_w + x];
                                        const T gtop = gv * (T(1) - fy), gbot = gv * fy;
                                        r0[x0] += gtop * (T(1) - fx);
                                        r0[x1] += gtop * fx;
                                        r1[x0] += gbot * (T(1) - fx);
                                        r1[x1] += gbot * fx;
                                    }
                                }
                            }
                        });
}

template <typename T>
Tensor<T> downsample2x(const Tensor<T>& input) {
    require_rank(input.shape(), 4, "downsample2x", "input");
    const int h = input.dim(2), w = input.dim(3);
    require(h % 2 == 0, ErrorCode::ShapeMismatch, "downsample2x: odd height " + std::to_string(h));
    require(w % 2 == 0, ErrorCode::ShapeMismatch, "downsample2x: odd width " + std::to_string(w));
    const int n = input.dim(0) * input.dim(1), oh = h / 2, ow = w / 2;
    std::vector<T> out(static_cast<size_t>(int64_t(n) * oh * ow));
    const T* src = input.data().data();
    for (int p = 0; p < n; ++p) {
        const T* s = src + int64_t(p) * h * w;
        T* d = out.data() + int64_t(p) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const T* a = s + int64_t(2 * y) * w + 2 * x;
                d[int64_t(y) * ow + x] = (a[0] + a[1] + a[w] + a[w + 1]) * T(0.25);
            }
    }
    return record_op<T>("downsample2x", {input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                        [input, n, h, w, oh, ow](const TensorImpl<T>& o) {
                            auto gi = grad_slot(input);
                            for (int p = 0; p < n; ++p) {
                                T* s = gi.data() + int64_t(p) * h * w;
                                const T* d = o.grad.data() + int64_t(p) * oh * ow;
                                for (int y = 0; y < oh; ++y)
                                    for (int x = 0; x < ow; ++x) {
                                        const T gv = d[int64_t(y) * ow + x] * T(0.25);
                                        T* a = s + int64_t(2 * y) * w + 2 * x;
                                        a[0] += gv;
                                        a[1] += gv;
                                        a[w] += gv;
                                        a[w + 1] += gv;
                                    }
                            }
                        });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input) {
    require_rank(input.shape(), 4, "upsample2x", "input");
    return resize_bilinear(input, input.dim(2) * 2, input.dim(3) * 2);
}

template <typename T>
Tensor<T> apply_elementwise(const Tensor<T>& input, Activation fn) {
    const auto& x = input.values();
    std::vector<T> out(x.size());
    const T slope = T(kLeakySlope);
    switch (fn) {
    case Activation::Relu:
        for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
        break;
    case Activation::LeakyRelu:
        for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
        break;
    case Activation::Sigmoid:
        for (size_t i = 0; i < x.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
        break;
    case Activation::Tanh:
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
        break;
    case Activation::Abs:
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
        break;
    }
    static constexpr const char* names[] = {"relu", "leaky_relu", "sigmoid", "tanh", "abs"};
    return record_op<T>(names[static_cast<int>(fn)], input.shape(), std::move(out), {input},
                        [input, fn, slope](const TensorImpl<T>& o) {
                            auto gi = grad_slot(input);
                            const auto& x = input.values();
                            const auto& y = o.data;
                            const auto& g = o.grad;
                            switch (fn) {
                            case Activation::Relu:
                                for (size_t i = 0; i < x.size(); ++i) if (x[i] > T(0)) gi[i] += g[i];
                                break;
                            case Activation::LeakyRelu:
                                for (size_t i = 0; i < x.size(); ++i) gi[i] += x[i] > T(0) ? g[i] : slope * g[i];
                                break;
                            case Activation::Sigmoid:
                                for (size_t i = 0; i < x.size(); ++i) gi[i] += g[i] * y[i] * (T(1) - y[i]);
                                break;
                            case Activation::Tanh:
                                for (size_t i = 0; i < x.size(); ++i) gi[i] += g[i] * (T(1) - y[i] * y[i]);
                                break;
                            case Activation::Abs:
                                for (size_t i = 0; i < x.size(); ++i)
                                    gi[i] += x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
                                break;
                            }
                        });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    const auto& v = x.values();
    std::vector<T> out(v.size());
    for (size_t i = 0; i < v.size(); ++i)
        out[i] = std::min(hi, std::max(lo, v[i]));
    return record_op<T>("clamp", x.shape(), std::move(out), {x}, [x, lo, hi](const TensorImpl<T>& o) {
        auto gi = grad_slot(x);
        const auto& v = x.values();
        for (size_t i = 0; i < v.size(); ++i)
            if (v[i] > lo && v[i] < hi)
                gi[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), ErrorCode::InvalidArgument, "concat_channels: no inputs");
    const Shape& first = parts.front().shape();
    require_rank(first, 4, "concat_channels", "input");
    int channels = 0;
    for (const auto& p : parts) {
        require_rank(p.shape(), 4, "concat_channels", "input");
        require(p.dim(0) == first[0], ErrorCode::ShapeMismatch,
                "concat_channels: batch mismatch " + shape_str(p.shape()) + " vs " + shape_str(first));
        require(p.dim(2) == first[2] && p.dim(3) == first[3], ErrorCode::ShapeMismatch,
                "concat_channels: spatial mismatch " + shape_str(p.shape()) + " vs " + shape_str(first) +
                    " (resize first)");
        channels += p.dim(1);
    }
    const int batch = first[0];
    const int64_t plane = int64_t(first[2]) * first[3];
    std::vector<T> out(static_cast<size_t>(int64_t(batch) * channels * plane));
    for (int b = 0; b < batch; ++b) {
        T* dst = out.data() + int64_t(b) * channels * plane;
        for (const auto& p : parts) {
            const int64_t len = int64_t(p.dim(1)) * plane;
            const T* src = p.data().data() + b * len;
            std::copy(src, src + len, dst);
            dst += len;
        }
    }
    return record_op<T>("concat_channels", {batch, channels, first[2], first[3]}, std::move(out), parts,
                        [parts, batch, channels, plane](const TensorImpl<T>& o) {
                            int64_t offset = 0;
                            for (const auto& p : parts) {
                                const int64_t len = int64_t(p.dim(1)) * plane;
                                auto gi = grad_slot(p);
                                if (!gi.empty())
                                    for (int b = 0; b < batch; ++b) {
                                        const T* src = o.grad.data() + int64_t(b) * channels * plane + offset;
                                        T* dst = gi.data() + b * len;
                                        for (int64_t i = 0; i < len; ++i)
                                            dst[i] += src[i];
                                    }
                                offset += len;
                            }
                        });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_channels(std::vector<Tensor<T>>{a, b});
}

template <typename T>
Tensor<T> channel_stats(const Tensor<T>& input) {
    require_rank(input.shape(), 4, "channel_stats", "input");
    const int batch = input.dim(0), c = input.dim(1);
    require(c >= 1, ErrorCode::ShapeMismatch, "channel_stats: need at least one channel");
    const int64_t plane = int64_t(input.dim(2)) * input.dim(3);
    std::vector<T> out(static_cast<size_t>(int64_t(batch) * 2 * plane));
    std::vector<int> argmax(static_cast<size_t>(int64_t(batch) * plane));
    const T* x = input.data().data();
    for (int b = 0; b < batch; ++b)
        for (int64_t p = 0; p < plane; ++p) {
            T s = 0, m = x[int64_t(b) * c * plane + p];
            int arg = 0;
            for (int ch = 0; ch < c; ++ch) {
                const T v = x[(int64_t(b) * c + ch) * plane + p];
                s += v;
                if (v > m) {
                    m = v;
                    arg = ch;
                }
            }
            out[size_t(int64_t(b) * 2 * plane + p)] = s / T(c);
            out[size_t((int64_t(b) * 2 + 1) * plane + p)] = m;
            argmax[size_t(int64_t(b) * plane + p)] = arg;
        }
    return record_op<T>("channel_stats", {batch, 2, input.dim(2), input.dim(3)}, std::move(out), {input},
                        [input, argmax, batch, c, plane](const TensorImpl<T>& o) {
                            auto gi = grad_slot(input);
                            for (int b = 0; b < batch; ++b)
                                for (int64_t p = 0; p < plane; ++p) {
                                    const T gmean = o.grad[size_t(int64_t(b) * 2 * plane + p)] / T(c);
                                    const T gmax = o.grad[size_t((int64_t(b) * 2 + 1) * plane + p)];
                                    for (int ch = 0; ch < c; ++ch)
                                        gi[size_t((int64_t(b) * c + ch) * plane + p)] += gmean;
                                    const int arg = argmax[size_t(int64_t(b) * plane + p)];
                                    gi[size_t((int64_t(b) * c + arg) * plane + p)] += gmax;
                                }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return record_op<T>("add", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl<T>& o) {
        if (auto ga = grad_slot(a); !ga.empty())
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        if (auto gb = grad_slot(b); !gb.empty())
            for (size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return record_op<T>("sub", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl<T>& o) {
        if (auto ga = grad_slot(a); !ga.empty())
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
        if (auto gb = grad_slot(b); !gb.empty())
            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return record_op<T>("mul", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl<T>& o) {
        if (auto ga = grad_slot(a); !ga.empty())
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * b.values()[i];
        if (auto gb = grad_slot(b); !gb.empty())
            for (size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * a.values()[i];
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "div");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    return record_op<T>("div", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl<T>& o) {
        const auto& av = a.values();
        const auto& bv = b.values();
        if (auto ga = grad_slot(a); !ga.empty())
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] / bv[i];
        if (auto gb = grad_slot(b); !gb.empty())
            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i] * av[i] / (bv[i] * bv[i]);
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    std::vector<T> out(a.values());
    for (auto& v : out) v += value;
    return record_op<T>("add_scalar", a.shape(), std::move(out), {a}, [a](const TensorImpl<T>& o) {
        auto ga = grad_slot(a);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T value) {
    std::vector<T> out(a.values());
    for (auto& v : out) v *= value;
    return record_op<T>("mul_scalar", a.shape(), std::move(out), {a}, [a, value](const TensorImpl<T>& o) {
        auto ga = grad_slot(a);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * value;
    });
}

template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& scale) {
    require_rank(x.shape(), 4, "mul_channelwise", "x");
    const int n = x.dim(0), c = x.dim(1);
    require(scale.numel() == int64_t(n) * c, ErrorCode::ShapeMismatch,
            "mul_channelwise: scale " + shape_str(scale.shape()) + " does not match (N,C) of " +
                shape_str(x.shape()));
    const int64_t plane = int64_t(x.dim(2)) * x.dim(3);
    std::vector<T> out(x.values());
    for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
        const T s = scale.data()[size_t(nc)];
        for (int64_t p = 0; p < plane; ++p) out[size_t(nc * plane + p)] *= s;
    }
    return record_op<T>("mul_channelwise", x.shape(), std::move(out), {x, scale},
                        [x, scale, n, c, plane](const TensorImpl<T>& o) {
                            auto gx = grad_slot(x);
                            auto gs = grad_slot(scale);
                            for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
                                const T s = scale.data()[size_t(nc)];
                                T acc = 0;
                                for (int64_t p = 0; p < plane; ++p) {
                                    const size_t i = size_t(nc * plane + p);
                                    if (!gx.empty()) gx[i] += o.grad[i] * s;
                                    acc += o.grad[i] * x.data()[i];
                                }
                                if (!gs.empty()) gs[size_t(nc)] += acc;
                            }
                        });
}

template <typename T>
Tensor<T> mul_spatial(const Tensor<T>& x, const Tensor<T>& a) {
    require_rank(x.shape(), 4, "mul_spatial", "x");
    require_rank(a.shape(), 4, "mul_spatial", "a");
    require(a.dim(0) == x.dim(0) && a.dim(1) == 1 && a.dim(2) == x.dim(2) && a.dim(3) == x.dim(3),
            ErrorCode::ShapeMismatch,
            "mul_spatial: map " + shape_str(a.shape()) + " does not match features " + shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1);
    const int64_t plane = int64_t(x.dim(2)) * x.dim(3);
    std::vector<T> out(x.values());
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < plane; ++p)
                out[size_t((int64_t(b) * c + ch) * plane + p)] *= a.data()[size_t(b * plane + p)];
    return record_op<T>("mul_spatial", x.shape(), std::move(out), {x, a},
                        [x, a, n, c, plane](const TensorImpl<T>& o) {
                            auto gx = grad_slot(x);
                            auto ga = grad_slot(a);
                            for (int b = 0; b < n; ++b)
                                for (int ch = 0; ch < c; ++ch)
                                    for (int64_t p = 0; p < plane; ++p) {
                                        const size_t i = size_t((int64_t(b) * c + ch) * plane + p);
                                        const size_t j = size_t(b * plane + p);
                                        if (!gx.empty()) gx[i] += o.grad[i] * a.data()[j];
                                        if (!ga.empty()) ga[j] += o.grad[i] * x.data()[i];
                                    }
                        });
}

template <typename T>
Tensor<T> spatial_sum(const Tensor<T>& x) {
    require_rank(x.shape(), 4, "spatial_sum", "x");
    const int64_t nc = int64_t(x.dim(0)) * x.dim(1);
    const int64_t plane = int64_t(x.dim(2)) * x.dim(3);
    std::vector<T> out(static_cast<size_t>(nc));
    for (int64_t i = 0; i < nc; ++i) {
        T s = 0;
        for (int64_t p = 0; p < plane; ++p) s += x.data()[size_t(i * plane + p)];
        out[size_t(i)] = s;
    }
    return record_op<T>("spatial_sum", {x.dim(0), x.dim(1)}, std::move(out), {x},
                        [x, nc, plane](const TensorImpl<T>& o) {
                            auto gx = grad_slot(x);
                            for (int64_t i = 0; i < nc; ++i)
                                for (int64_t p = 0; p < plane; ++p) gx[size_t(i * plane + p)] += o.grad[size_t(i)];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    return record_op<T>("sum", {1}, {s}, {x}, [x](const TensorImpl<T>& o) {
        auto gx = grad_slot(x);
        for (auto& g : gx) g += o.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    const T inv = T(1) / T(x.numel());
    return record_op<T>("mean", {1}, {s * inv}, {x}, [x, inv](const TensorImpl<T>& o) {
        auto gx = grad_slot(x);
        for (auto& g : gx) g += o.grad[0] * inv;
    });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "l1_loss");
    return mean(abs(sub(a, b)));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(shape_numel(shape) == x.numel(), ErrorCode::ShapeMismatch,
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    return record_op<T>("reshape", std::move(shape), x.values(), {x}, [x](const TensorImpl<T>& o) {
        auto gx = grad_slot(x);
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, int begin, int end) {
    require(x.rank() >= 1 && 0 <= begin && begin < end && end <= x.dim(0), ErrorCode::InvalidArgument,
            "slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                shape_str(x.shape()));
    const int64_t row = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    std::vector<T> out(x.values().begin() + begin * row, x.values().begin() + end * row);
    return record_op<T>("slice_batch", shape, std::move(out), {x}, [x, begin, row](const TensorImpl<T>& o) {
        auto gx = grad_slot(x);
        for (size_t i = 0; i < o.grad.size(); ++i) gx[size_t(begin * row) + i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), ErrorCode::InvalidArgument, "stack_batch: no inputs");
    Shape trailing(parts.front().shape().begin() + 1, parts.front().shape().end());
    int total = 0;
    std::vector<T> out;
    for (const auto& p : parts) {
        Shape t(p.shape().begin() + 1, p.shape().end());
        require(t == trailing, ErrorCode::ShapeMismatch,
                "stack_batch: part " + shape_str(p.shape()) + " does not match " + shape_str(parts.front().shape()));
        total += p.dim(0);
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    Shape shape = parts.front().shape();
    shape[0] = total;
    return record_op<T>("stack_batch", shape, std::move(out), parts, [parts](const TensorImpl<T>& o) {
        size_t offset = 0;
        for (const auto& p : parts) {
            auto gp = grad_slot(p);
            if (!gp.empty())
                for (size_t i = 0; i < gp.size(); ++i) gp[i] += o.grad[offset + i];
            offset += static_cast<size_t>(p.numel());
        }
    });
}

template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& scalars, const std::vector<T>& weights) {
    require(scalars.size() == weights.size() && !scalars.empty(), ErrorCode::InvalidArgument,
            "weighted_sum: need one weight per term");
    T s = 0;
    for (size_t i = 0; i < scalars.size(); ++i) s += weights[i] * scalars[i].item();
    return record_op<T>("weighted_sum", {1}, {s}, scalars, [scalars, weights](const TensorImpl<T>& o) {
        for (size_t i = 0; i < scalars.size(); ++i)
            if (auto g = grad_slot(scalars[i]); !g.empty()) g[0] += o.grad[0] * weights[i];
    });
}

#define GLSGN_OPS(T)                                                                          \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                            \
    template Tensor<T> downsample2x(const Tensor<T>&);                                         \
    template Tensor<T> upsample2x(const Tensor<T>&);                                           \
    template Tensor<T> apply_elementwise(const Tensor<T>&, Activation);                        \
    template Tensor<T> clamp(const Tensor<T>&, T, T);                                          \
    template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                         \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> channel_stats(const Tensor<T>&);                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                        \
    template Tensor<T> mul_channelwise(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> mul_spatial(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> spatial_sum(const Tensor<T>&);                                          \
    template Tensor<T> sum(const Tensor<T>&);                                                  \
    template Tensor<T> mean(const Tensor<T>&);                                                 \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
    template Tensor<T> slice_batch(const Tensor<T>&, int, int);                                \
    template Tensor<T> stack_batch(const std::vector<Tensor<T>>&);                             \
    template Tensor<T> weighted_sum(const std::vector<Tensor<T>>&, const std::vector<T>&);

GLSGN_OPS(float)
GLSGN_OPS(double)

} // namespace glsgn
