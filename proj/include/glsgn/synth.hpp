#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glsgn/image.hpp"
#include "glsgn/rng.hpp"

namespace glsgn {

enum class DegradationKind { Reflection, Rain, Haze };

const char* to_string(DegradationKind kind);
DegradationKind parse_degradation_kind(const std::string& name);

struct Range {
    double lo;
    double hi;
    double sample(CounterRng& rng) const { return rng.uniform(lo, hi); }
};

// Parameter ranges for the three generators. Every range is overridable from
// the CLI config.
struct SynthRanges {
    Range reflection_sigma{2.0, 5.0};
    Range reflection_beta{0.4, 0.8};
    Range rain_density{0.01, 0.10};
    Range rain_length{8.0, 24.0};
    Range rain_angle{60.0, 120.0};
    Range rain_sigma{0.5, 1.5};
    Range rain_contrast{0.5, 1.0};
    Range haze_airlight{0.7, 1.0};
    Range haze_beta{0.6, 1.6};
};

// Forces individual parameters instead of sampling them. Draws are still
// consumed in the same order, so forcing one value leaves the others intact.
struct SynthOverrides {
    std::optional<double> sigma, beta;                         // reflection
    std::optional<double> density, length, angle, contrast;    // rain (sigma shared)
    std::optional<double> airlight, haze_beta, transmission;   // haze
    // Rain noise field replacement, one value per pixel (row-major).
    std::optional<std::vector<float>> noise;
};

struct DegradedSample {
    Image degraded;
    Image background;
    DegradationKind kind = DegradationKind::Rain;
    uint64_t seed = 0;
    std::map<std::string, double> params;
};

struct StreakKernel {
    int radius = 0;              // kernel is (2r+1) x (2r+1)
    std::vector<double> weights; // row-major, sums to 1
    double length = 1;
    double angle = 90;
    double sigma = 1;

    int size() const { return 2 * radius + 1; }
    double at(int dy, int dx) const { return weights[size_t(dy + radius) * size() + (dx + radius)]; }
};

// Gaussian profile around a segment of length L-1 through the origin, angle
// measured counterclockwise from the +x axis with y pointing down, truncated
// where the distance to the segment exceeds 3 sigma.
StreakKernel make_streak_kernel(double length, double angle_deg, double sigma);

// Separable Gaussian blur with radius ceil(3 sigma) and mirrored borders.
Image gaussian_blur(const Image& img, double sigma);

DegradedSample synth_reflection(const Image& background, const Image& reflection_source, uint64_t seed,
                                const SynthRanges& ranges = {}, const SynthOverrides& force = {});
DegradedSample synth_rain(const Image& background, uint64_t seed, const SynthRanges& ranges = {},
                          const SynthOverrides& force = {});
DegradedSample synth_haze(const Image& background, uint64_t seed, const SynthRanges& ranges = {},
                          const SynthOverrides& force = {});

// Smooth random scene (gradients, soft shapes, low-amplitude texture), used
// when no photographs are available.
Image procedural_background(int height, int width, uint64_t seed);

struct ManifestEntry {
    std::string input; // relative to the dataset root
    std::string target;
    DegradationKind kind = DegradationKind::Rain;
};

struct Split {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;
};

// Seeded shuffle into round(fraction * n) training entries, clamped so both
// sides are nonempty. Each side keeps the input order.
Split build_split(const std::vector<ManifestEntry>& samples, double train_fraction, uint64_t seed);

std::string format_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct DatasetRequest {
    DegradationKind kind = DegradationKind::Rain;
    std::vector<Image> backgrounds;
    int count = 0;
    int height = 64;
    int width = 64;
    uint64_t seed = 0;
    double train_fraction = 0.8;
    int threads = 0; // 0 or 1: single-threaded
    SynthRanges ranges;
};

struct DatasetSummary {
    std::vector<ManifestEntry> all;
    Split split;
};

// Writes <out>/<kind>/<index>_in.ppm and _gt.ppm, manifest_train.txt,
// manifest_test.txt and params.jsonl. Sample i draws from stream (seed, i).
DatasetSummary write_dataset(const DatasetRequest& request, const std::filesystem::path& out_dir);

} // namespace glsgn
