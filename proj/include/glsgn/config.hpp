#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glsgn/attention.hpp"
#include "glsgn/synth.hpp"

namespace glsgn {

// Ablation ladder; each variant adds one mechanism to the previous one.
enum class Variant { GlobalOnly, GlobalLocal, PlusPn, PlusPac, Full };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();

struct PathwayGeometry {
    int divisor = 1; // per-side scale divisor of the pathway input
    int rows = 1;
    int cols = 1;

    bool operator==(const PathwayGeometry&) const = default;
};

struct LossWeights {
    double alpha1 = 0.1; // pixel, per pathway
    double beta1 = 0.5;  // pixel, final output
    double alpha2 = 0.1; // perceptual, per pathway
    double beta2 = 0.5;  // perceptual, final output
    double lambda1 = 1.0;
    double lambda2 = 0.01;
    double lambda3 = 0.01;

    bool operator==(const LossWeights&) const = default;
};

struct GlsgnConfig {
    int input_h = 64;
    int input_w = 64;
    int local_pathways = 3;
    // local_pathways local entries followed by the global pathway.
    std::vector<PathwayGeometry> geometry{{1, 4, 4}, {2, 2, 2}, {4, 1, 1}, {4, 1, 1}};
    int base_channels = 16;
    int encoder_depth = 3;
    int residual_blocks = 2;
    PacWeights pac;
    double pn_epsilon = 1e-6;
    LossWeights loss;
    uint64_t seed = 0;
    Variant variant = Variant::Full;

    bool uses_local() const { return variant != Variant::GlobalOnly; }
    bool uses_pn() const { return variant >= Variant::PlusPn; }
    bool uses_pac() const { return variant >= Variant::PlusPac; }
    bool uses_lp() const { return variant == Variant::Full; }

    const PathwayGeometry& global_geometry() const { return geometry.back(); }
};

bool operator==(const GlsgnConfig& a, const GlsgnConfig& b);

// Throws Error(Config) naming the offending field.
void validate(const GlsgnConfig& config);

// Same config with the variant replaced; validated.
GlsgnConfig ablation_variant(GlsgnConfig config, Variant variant);

struct TrainRun {
    int steps = 500;
    int batch_size = 2;
    int crop_h = 64;
    int crop_w = 64;
    int log_every = 10;
    uint64_t seed = 0;

    bool operator==(const TrainRun&) const = default;
};

void validate(const TrainRun& run, const GlsgnConfig& model);

// Everything a config file can set. Every field is optional.
struct CliConfig {
    GlsgnConfig model;
    TrainRun train;
    SynthRanges synth;
};

bool operator==(const CliConfig& a, const CliConfig& b);

// Strict parsing: unknown keys and ill-typed values raise Error(Config) with
// the dotted key path in the message.
CliConfig parse_config(const std::string& json_text);
std::string serialize_config(const CliConfig& config);
CliConfig load_config(const std::string& path);

std::string serialize_model_config(const GlsgnConfig& config);
GlsgnConfig parse_model_config(const std::string& json_text);

} // namespace glsgn
