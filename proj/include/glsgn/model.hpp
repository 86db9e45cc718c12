#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glsgn/config.hpp"
#include "glsgn/tensor.hpp"

namespace glsgn {

// Named tensors in insertion order. Insertion order is the checkpoint order.
template <typename T>
class ParameterSet {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> value);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor<T>& get(const std::string& name) const;
    Tensor<T>& get(const std::string& name);
    // Replaces the handle (shape must match), e.g. to substitute a leaf.
    void set(const std::string& name, Tensor<T> value);

    size_t size() const { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
    std::vector<std::string> names(const std::string& prefix = {}) const;
    int64_t scalar_count() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Uniform in +-1/sqrt(fan_in), drawn from a stream keyed by the parameter
// name so that adding a parameter never reshuffles the others.
template <typename T>
Tensor<T> init_uniform(Shape shape, int fan_in, uint64_t seed, const std::string& name);

uint64_t hash_name(const std::string& name);

template <typename T>
struct PathwayOutput {
    std::string name; // "s1".."sN" or "sg"
    PathwayGeometry geometry;
    Tensor<T> restored;  // (B,3,h,w) at pathway resolution
    Tensor<T> decoded;   // (B,C,h,w)
    Tensor<T> attention; // own bottleneck map, stacked patches; undefined without PAC
    Tensor<T> mask;      // (B,1,h,w) on LP pathways
};

template <typename T>
struct GlsgnOutput {
    std::vector<PathwayOutput<T>> per_pathway; // computation order: sg, s1, ..., sN
    Tensor<T> final;                           // (B,3,H,W)

    const PathwayOutput<T>& pathway(const std::string& name) const;
};

// Decoder level features of one encode call, finest first, plus the
// bottleneck.
template <typename T>
struct Encoded {
    std::vector<Tensor<T>> skips;
    Tensor<T> bottleneck;
};

// Grid context for patch normalisation inside the decoder.
struct PnGrid {
    int rows = 1;
    int cols = 1;
    int batch = 1;
};

template <typename T>
class GlsgnModel {
public:
    explicit GlsgnModel(GlsgnConfig config);

    const GlsgnConfig& config() const { return config_; }
    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }

    // Pathway names in computation order.
    std::vector<std::string> pathway_names() const;
    // Local pathways are 1-based; 0 is the global pathway.
    static std::string pathway_name(int i) { return i == 0 ? "sg" : "s" + std::to_string(i); }
    const PathwayGeometry& geometry_of(int i) const;

    GlsgnOutput<T> forward(const Tensor<T>& image) const;

    // Restores pathway i from the image resized to its scale. prev and global
    // are required exactly when the architecture consumes them.
    PathwayOutput<T> pathway_forward(int i, const Tensor<T>& input_at_scale, const PathwayOutput<T>* prev,
                                     const PathwayOutput<T>* global) const;

    // Stem, handoff merge and strided blocks on stacked patches. handoff has
    // 2C channels or is undefined (treated as zeros).
    Encoded<T> encode(const Tensor<T>& patches, const Tensor<T>& handoff, const std::string& prefix) const;
    // Returns (decoded features, restored patches).
    std::pair<Tensor<T>, Tensor<T>> decode(const Encoded<T>& enc, const std::string& prefix,
                                           const PnGrid* pn) const;

    // B_out from pathway outputs in computation order.
    Tensor<T> synthesize(const std::vector<PathwayOutput<T>>& outputs) const;

private:
    void add_pathway_params(int i);
    bool pathway_has_mask(int i) const;
    bool pathway_uses_pn(int i) const;
    Tensor<T> residual_block(const Tensor<T>& x, const std::string& prefix, const PnGrid* pn) const;

    GlsgnConfig config_;
    ParameterSet<T> params_;
};

} // namespace glsgn
