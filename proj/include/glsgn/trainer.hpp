#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "glsgn/checkpoint.hpp"
#include "glsgn/config.hpp"
#include "glsgn/losses.hpp"
#include "glsgn/model.hpp"
#include "glsgn/synth.hpp"

namespace glsgn {

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    int64_t step = 0;
    std::vector<Tensor<T>> m; // parameter order
    std::vector<Tensor<T>> v;
};

template <typename T>
AdamState<T> make_adam(const ParameterSet<T>& params, AdamHyper hyper = {});

// Bias-corrected Adam on every parameter; raises naming the first parameter
// without a gradient. Gradients are left in place.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state);

struct AugmentDraw {
    bool hflip = false;
    bool vflip = false;
    int quarter_turns = 0; // counter-clockwise
};

AugmentDraw draw_augment(CounterRng& rng);
Image apply_augment(const Image& img, const AugmentDraw& d);
DegradedSample augment(const DegradedSample& sample, CounterRng& rng);
DegradedSample crop_pair(const DegradedSample& sample, int crop_h, int crop_w, CounterRng& rng);

// Loads every manifest entry relative to the manifest's directory.
std::vector<DegradedSample> load_samples(const std::filesystem::path& manifest);

struct StepMetrics {
    int64_t step = 0;
    double l_pixel = 0;
    double l_perc = 0;
    double l_adv_g = 0;
    double l_d = 0;
    double total = 0;
};

std::string metrics_header();
std::string format_metrics(const StepMetrics& m);

// Generator, discriminator, frozen extractor and both optimisers. Training
// runs in single precision.
class Trainer {
public:
    explicit Trainer(const GlsgnConfig& config, uint64_t run_seed = 0);

    const GlsgnConfig& config() const { return model_.config(); }
    GlsgnModel<float>& model() { return model_; }
    const GlsgnModel<float>& model() const { return model_; }
    Discriminator<float>& discriminator() { return disc_; }
    const PerceptualExtractor<float>& extractor() const { return extractor_; }
    const AdamState<float>& adam_g() const { return adam_g_; }
    const AdamState<float>& adam_d() const { return adam_d_; }
    int64_t step() const { return step_; }
    uint64_t run_seed() const { return run_seed_; }

    // One discriminator update on the detached output, then one generator
    // update. Returns the losses of this step (step numbers start at 1).
    StepMetrics train_step(const Tensor<float>& degraded, const Tensor<float>& background);

    CheckpointFile to_checkpoint() const;
    // Validates config, names and shapes against a fresh model.
    static Trainer from_checkpoint(const CheckpointFile& ckpt);

private:
    GlsgnModel<float> model_;
    Discriminator<float> disc_;
    PerceptualExtractor<float> extractor_;
    AdamState<float> adam_g_;
    AdamState<float> adam_d_;
    int64_t step_ = 0;
    uint64_t run_seed_ = 0;
};

struct TrainOptions {
    TrainRun run;
    std::ostream* metrics = nullptr;  // CSV records, one per step
    std::ostream* progress = nullptr; // human-readable, every run.log_every steps
};

// Runs run.steps further steps. Batches are drawn from a per-step stream of
// run.seed, so resuming from a checkpoint continues the same sequence.
std::vector<StepMetrics> train(Trainer& trainer, const std::vector<DegradedSample>& data, const TrainOptions& opts);

void save_checkpoint(const Trainer& trainer, const std::filesystem::path& path);
Trainer load_checkpoint(const std::filesystem::path& path);

// Restores one image of exactly the model input size.
Image restore_exact(const GlsgnModel<float>& model, const Image& img);
// Larger inputs are centre-cropped to a multiple of the model size and
// restored tile by tile (non-overlapping); smaller inputs are rejected.
Image restore_image(const GlsgnModel<float>& model, const Image& img);

struct EvalRow {
    std::string name;
    double psnr = 0;
    double ssim = 0;
    double baseline_psnr = 0;
    double baseline_ssim = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0;
    double mean_ssim = 0;
    double mean_baseline_psnr = 0;
    double mean_baseline_ssim = 0;
};

using RestoreFn = std::function<Image(const Image&)>;

// Centre-crops each pair to height x width, restores the degraded image and
// scores it against the background, next to the degraded-input baseline.
EvalReport evaluate(const std::vector<DegradedSample>& samples, const RestoreFn& restore, int height, int width);

// Line-delimited JSON: one record per sample, then a summary record.
std::string format_report(const EvalReport& report, const std::string& tag);

} // namespace glsgn
