#include "glsgn/model.hpp"

#include <cmath>

#include "glsgn/ops.hpp"
#include "glsgn/patch_grid.hpp"
#include "glsgn/pyramid.hpp"
#include "glsgn/rng.hpp"

namespace glsgn {

uint64_t hash_name(const std::string& name) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
Tensor<T> init_uniform(Shape shape, int fan_in, uint64_t seed, const std::string& name) {
    Tensor<T> t(std::move(shape));
    CounterRng rng = CounterRng::stream(seed, hash_name(name));
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (auto& v : t.values()) v = T(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
    require(!contains(name), ErrorCode::InvalidArgument, "duplicate parameter " + name);
    value.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorCode::InvalidArgument, "no parameter named " + name);
    return entries_[it->second].second;
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
    return const_cast<Tensor<T>&>(static_cast<const ParameterSet&>(*this).get(name));
}

template <typename T>
void ParameterSet<T>::set(const std::string& name, Tensor<T> value) {
    Tensor<T>& slot = get(name);
    require(slot.shape() == value.shape(), ErrorCode::ShapeMismatch,
            "parameter " + name + ": expected " + shape_str(slot.shape()) + ", got " + shape_str(value.shape()));
    slot = std::move(value);
}

template <typename T>
std::vector<std::string> ParameterSet<T>::names(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [n, _] : entries_)
        if (n.compare(0, prefix.size(), prefix) == 0)
            out.push_back(n);
    return out;
}

template <typename T>
int64_t ParameterSet<T>::scalar_count() const {
    int64_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
}

template <typename T>
const PathwayOutput<T>& GlsgnOutput<T>::pathway(const std::string& name) const {
    for (const auto& p : per_pathway)
        if (p.name == name)
            return p;
    fail(ErrorCode::InvalidArgument, "no pathway named " + name);
}

namespace {

template <typename T>
Tensor<T> resize_to(const Tensor<T>& x, int h, int w) {
    return x.dim(2) == h && x.dim(3) == w ? x : resize_bilinear(x, h, w);
}

} // namespace

template <typename T>
GlsgnModel<T>::GlsgnModel(GlsgnConfig config) : config_(std::move(config)) {
    validate(config_);
    add_pathway_params(0);
    if (config_.uses_local())
        for (int i = 1; i <= config_.local_pathways; ++i) add_pathway_params(i);
}

template <typename T>
std::vector<std::string> GlsgnModel<T>::pathway_names() const {
    std::vector<std::string> names{"sg"};
    if (config_.uses_local())
        for (int i = 1; i <= config_.local_pathways; ++i) names.push_back(pathway_name(i));
    return names;
}

template <typename T>
const PathwayGeometry& GlsgnModel<T>::geometry_of(int i) const {
    require(i >= 0 && i <= config_.local_pathways, ErrorCode::InvalidArgument, "pathway index out of range");
    return i == 0 ? config_.global_geometry() : config_.geometry[size_t(i - 1)];
}

template <typename T>
bool GlsgnModel<T>::pathway_has_mask(int i) const {
    return config_.uses_lp() && i <= 2;
}

template <typename T>
bool GlsgnModel<T>::pathway_uses_pn(int i) const {
    const auto& g = geometry_of(i);
    return config_.uses_pn() && i > 0 && g.rows * g.cols > 1;
}

template <typename T>
void GlsgnModel<T>::add_pathway_params(int i) {
    const std::string p = pathway_name(i) + ".";
    const int c = config_.base_channels;
    const uint64_t seed = config_.seed;
    auto conv = [&](const std::string& name, int out, int in, int k) {
        params_.add(p + name + ".w", init_uniform<T>({out, in, k, k}, in * k * k, seed, p + name + ".w"));
        params_.add(p + name + ".b", Tensor<T>({out}));
    };
    auto zero_conv = [&](const std::string& name, int out, int in, int k) {
        params_.add(p + name + ".w", Tensor<T>({out, in, k, k}));
        params_.add(p + name + ".b", Tensor<T>({out}));
    };

    conv("stem", c, 3, 3);
    conv("merge", c, 3 * c, 3);
    for (int l = 1; l <= config_.encoder_depth; ++l)
        conv("enc" + std::to_string(l), c << l, c << (l - 1), 3);
    if (config_.uses_pac())
        conv("att", 1, 2, 7);
    for (int l = config_.encoder_depth; l >= 1; --l) {
        const std::string d = "dec" + std::to_string(l);
        const int out = c << (l - 1);
        conv(d, out, (c << l) + out, 3);
        for (int r = 0; r < config_.residual_blocks; ++r) {
            const std::string rb = d + ".res" + std::to_string(r);
            conv(rb + ".conv1", out, out, 3);
            conv(rb + ".conv2", out, out, 3);
            if (pathway_uses_pn(i))
                zero_conv(rb + ".pn", out, out, 3);
        }
    }
    conv("head", 3, c, 3);
    if (pathway_has_mask(i))
        conv("mask", 1, c, 1);
}

template <typename T>
Encoded<T> GlsgnModel<T>::encode(const Tensor<T>& patches, const Tensor<T>& handoff,
                                 const std::string& prefix) const {
    const int unit = 1 << config_.encoder_depth;
    require(patches.rank() == 4 && patches.dim(1) == 3 && patches.dim(2) % unit == 0 && patches.dim(3) % unit == 0,
            ErrorCode::ShapeMismatch,
            "encode: patch " + shape_str(patches.shape()) + " is not divisible by 2^" +
                std::to_string(config_.encoder_depth));
    const int c = config_.base_channels;
    auto conv = [&](const Tensor<T>& x, const std::string& name, int stride) {
        return conv2d(x, params_.get(prefix + name + ".w"), params_.get(prefix + name + ".b"), stride, 1);
    };
    Tensor<T> stem = leaky_relu(conv(patches, "stem", 1));
    Tensor<T> extra = handoff.defined() ? handoff : Tensor<T>({patches.dim(0), 2 * c, patches.dim(2), patches.dim(3)});
    require(extra.shape() == Shape{patches.dim(0), 2 * c, patches.dim(2), patches.dim(3)}, ErrorCode::ShapeMismatch,
            "encode: handoff " + shape_str(extra.shape()) + " does not match the patches");
    Encoded<T> out;
    Tensor<T> x = leaky_relu(conv(concat_channels(stem, extra), "merge", 1));
    for (int l = 1; l <= config_.encoder_depth; ++l) {
        out.skips.push_back(x);
        x = leaky_relu(conv(x, "enc" + std::to_string(l), 2));
    }
    out.bottleneck = x;
    return out;
}

template <typename T>
Tensor<T> GlsgnModel<T>::residual_block(const Tensor<T>& x, const std::string& prefix, const PnGrid* pn) const {
    auto conv = [&](const Tensor<T>& in, const std::string& name) {
        return conv2d(in, params_.get(prefix + name + ".w"), params_.get(prefix + name + ".b"), 1, 1);
    };
    Tensor<T> x_hat = add(x, conv(leaky_relu(conv(x, "conv1")), "conv2"));
    if (!pn)
        return x_hat;
    PatchGrid<T> in{pn->rows, pn->cols, pn->batch, x};
    PatchGrid<T> out{pn->rows, pn->cols, pn->batch, x_hat};
    const auto factor = pn_factors(in, out, T(config_.pn_epsilon));
    return pn_apply<T>(x_hat, factor.scale, [&](const Tensor<T>& t) { return conv(t, "pn"); });
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> GlsgnModel<T>::decode(const Encoded<T>& enc, const std::string& prefix,
                                                      const PnGrid* pn) const {
    require(int(enc.skips.size()) == config_.encoder_depth, ErrorCode::ShapeMismatch,
            "decode: expected " + std::to_string(config_.encoder_depth) + " skip tensors");
    Tensor<T> x = enc.bottleneck;
    for (int l = config_.encoder_depth; l >= 1; --l) {
        const std::string d = prefix + "dec" + std::to_string(l);
        const Tensor<T>& skip = enc.skips[size_t(l - 1)];
        x = upsample2x(x);
        require(x.dim(0) == skip.dim(0) && x.dim(2) == skip.dim(2) && x.dim(3) == skip.dim(3),
                ErrorCode::ShapeMismatch,
                "decode: level " + std::to_string(l) + " skip " + shape_str(skip.shape()) + " vs " +
                    shape_str(x.shape()));
        x = leaky_relu(conv2d(concat_channels(x, skip), params_.get(d + ".w"), params_.get(d + ".b"), 1, 1));
        for (int r = 0; r < config_.residual_blocks; ++r)
            x = residual_block(x, d + ".res" + std::to_string(r) + ".", pn);
    }
    Tensor<T> restored = sigmoid(conv2d(x, params_.get(prefix + "head.w"), params_.get(prefix + "head.b"), 1, 1));
    return {x, restored};
}

template <typename T>
PathwayOutput<T> GlsgnModel<T>::pathway_forward(int i, const Tensor<T>& input, const PathwayOutput<T>* prev,
                                                const PathwayOutput<T>* global) const {
    const auto& g = geometry_of(i);
    const std::string name = pathway_name(i);
    require(input.rank() == 4 && input.dim(1) == 3 && input.dim(2) == config_.input_h / g.divisor &&
                input.dim(3) == config_.input_w / g.divisor,
            ErrorCode::ShapeMismatch, name + ": input " + shape_str(input.shape()) + " does not match its scale");
    require(i == 0 || global, ErrorCode::InvalidArgument, name + ": local pathways need the global output");
    require(i <= 1 || prev, ErrorCode::InvalidArgument, name + ": missing previous pathway output");
    require(i != 1 || !prev, ErrorCode::InvalidArgument, "s1 receives no previous pathway output");

    const int batch = input.dim(0), h = input.dim(2), w = input.dim(3), c = config_.base_channels;
    const auto grid = partition(input, g.rows, g.cols);

    Tensor<T> handoff;
    if (i > 0) {
        Tensor<T> prev_f = prev ? resize_to(prev->decoded, h, w) : Tensor<T>({batch, c, h, w});
        Tensor<T> glob_f = resize_to(global->decoded, h, w);
        handoff = partition(concat_channels(prev_f, glob_f), g.rows, g.cols).patches;
    }

    Encoded<T> enc = encode(grid.patches, handoff, name + ".");
    PathwayOutput<T> out;
    out.name = name;
    out.geometry = g;
    if (config_.uses_pac()) {
        const int depth = config_.encoder_depth;
        auto map_geometry = [depth](const PathwayGeometry& pg, const Tensor<T>& decoded) {
            return MapGeometry{pg.rows, pg.cols, decoded.dim(2) >> depth, decoded.dim(3) >> depth};
        };
        const MapGeometry here{g.rows, g.cols, h >> depth, w >> depth};
        out.attention =
            spatial_attention(enc.bottleneck, params_.get(name + ".att.w"), params_.get(name + ".att.b"));
        Tensor<T> prev_map, glob_map;
        if (prev && prev->attention.defined())
            prev_map = align_map(prev->attention, batch, map_geometry(prev->geometry, prev->decoded), here);
        if (global && global->attention.defined())
            glob_map = align_map(global->attention, batch, map_geometry(global->geometry, global->decoded), here);
        enc.bottleneck = reweight(enc.bottleneck, fuse_attention(out.attention, prev_map, glob_map, config_.pac));
    }

    const PnGrid pn{g.rows, g.cols, batch};
    auto [decoded, restored] = decode(enc, name + ".", pathway_uses_pn(i) ? &pn : nullptr);
    out.decoded = assemble(with_patches(grid, decoded));
    out.restored = assemble(with_patches(grid, restored));
    if (pathway_has_mask(i))
        out.mask = sigmoid(conv2d(out.decoded, params_.get(name + ".mask.w"), params_.get(name + ".mask.b"), 1, 0));
    return out;
}

template <typename T>
GlsgnOutput<T> GlsgnModel<T>::forward(const Tensor<T>& image) const {
    require(image.rank() == 4 && image.dim(1) == 3 && image.dim(2) == config_.input_h &&
                image.dim(3) == config_.input_w,
            ErrorCode::ShapeMismatch,
            "forward: image " + shape_str(image.shape()) + " does not match the configured " +
                std::to_string(config_.input_h) + "x" + std::to_string(config_.input_w));
    auto at_scale = [&](int i) {
        const int d = geometry_of(i).divisor;
        return resize_to(image, config_.input_h / d, config_.input_w / d);
    };
    GlsgnOutput<T> out;
    out.per_pathway.reserve(size_t(config_.local_pathways) + 1);
    out.per_pathway.push_back(pathway_forward(0, at_scale(0), nullptr, nullptr));
    if (config_.uses_local())
        for (int i = 1; i <= config_.local_pathways; ++i) {
            const PathwayOutput<T>* prev = i > 1 ? &out.per_pathway.back() : nullptr;
            auto p = pathway_forward(i, at_scale(i), prev, &out.per_pathway.front());
            out.per_pathway.push_back(std::move(p));
        }
    out.final = synthesize(out.per_pathway);
    return out;
}

template <typename T>
Tensor<T> GlsgnModel<T>::synthesize(const std::vector<PathwayOutput<T>>& outputs) const {
    const int h = config_.input_h, w = config_.input_w;
    auto find = [&](const std::string& name) -> const PathwayOutput<T>& {
        for (const auto& p : outputs)
            if (p.name == name)
                return p;
        fail(ErrorCode::InvalidArgument, "synthesize: missing pathway " + name);
    };
    if (!config_.uses_local())
        return resize_to(find("sg").restored, h, w);
    if (!config_.uses_lp()) {
        std::vector<Tensor<T>> parts;
        for (const auto& name : pathway_names()) parts.push_back(resize_to(find(name).restored, h, w));
        Tensor<T> acc = parts[0];
        for (size_t k = 1; k < parts.size(); ++k) acc = add(acc, parts[k]);
        return mul_scalar(acc, T(1.0 / double(parts.size())));
    }
    const auto& s1 = find("s1");
    const auto& s2 = find("s2");
    const auto& sg = find("sg");
    Tensor<T> fused = fuse_glsgn(extract_highfreq(s1.restored), extract_highfreq(s2.restored),
                                 extract_highfreq(sg.restored), find("s3").restored, {s1.mask, s2.mask, sg.mask});
    return clamp(fused, T(0), T(1));
}

#define GLSGN_MODEL(T)                                                                           \
    template class ParameterSet<T>;                                                              \
    template struct GlsgnOutput<T>;                                                              \
    template class GlsgnModel<T>;                                                                \
    template Tensor<T> init_uniform<T>(Shape, int, uint64_t, const std::string&);

GLSGN_MODEL(float)
GLSGN_MODEL(double)

} // namespace glsgn
