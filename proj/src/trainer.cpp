#include "glsgn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"

#include "glsgn/image.hpp"
#include "glsgn/ops.hpp"
#include "glsgn/rng.hpp"

namespace glsgn {

template <typename T>
AdamState<T> make_adam(const ParameterSet<T>& params, AdamHyper hyper) {
    AdamState<T> s;
    s.hyper = hyper;
    for (const auto& [name, p] : params.entries()) {
        s.m.emplace_back(p.shape());
        s.v.emplace_back(p.shape());
    }
    return s;
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
    require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorCode::InvalidArgument,
            "adam: optimiser state does not match the parameter set");
    for (const auto& [name, p] : params.entries())
        require(p.has_grad(), ErrorCode::InvalidArgument, "adam: parameter " + name + " has no gradient");
    state.step += 1;
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, double(state.step));
    size_t k = 0;
    for (auto& [name, p] : params.entries()) {
        auto& w = p.values();
        const auto g = p.grad();
        auto& m = state.m[k].values();
        auto& v = state.v[k].values();
        for (size_t i = 0; i < w.size(); ++i) {
            const double gi = double(g[i]);
            const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * gi * gi;
            m[i] = T(mi);
            v[i] = T(vi);
            w[i] = T(double(w[i]) - h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps));
        }
        ++k;
    }
}

AugmentDraw draw_augment(CounterRng& rng) {
    AugmentDraw d;
    d.hflip = rng.bernoulli(0.5);
    d.vflip = rng.bernoulli(0.5);
    d.quarter_turns = int(rng.below(4));
    return d;
}

Image apply_augment(const Image& img, const AugmentDraw& d) {
    Image cur = img;
    if (d.hflip || d.vflip) {
        Image out(cur.height, cur.width);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < cur.height; ++y)
                for (int x = 0; x < cur.width; ++x)
                    out.at(c, y, x) = cur.at(c, d.vflip ? cur.height - 1 - y : y, d.hflip ? cur.width - 1 - x : x);
        cur = std::move(out);
    }
    for (int t = 0; t < (d.quarter_turns % 4 + 4) % 4; ++t) {
        Image out(cur.width, cur.height);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x) out.at(c, y, x) = cur.at(c, x, cur.width - 1 - y);
        cur = std::move(out);
    }
    cur.source = img.source;
    return cur;
}

DegradedSample augment(const DegradedSample& sample, CounterRng& rng) {
    AugmentDraw d = draw_augment(rng);
    if (sample.degraded.height != sample.degraded.width)
        d.quarter_turns &= 2; // only half turns keep a non-square shape
    DegradedSample out = sample;
    out.degraded = apply_augment(sample.degraded, d);
    out.background = apply_augment(sample.background, d);
    return out;
}

DegradedSample crop_pair(const DegradedSample& sample, int crop_h, int crop_w, CounterRng& rng) {
    const Image& a = sample.degraded;
    require(a.height == sample.background.height && a.width == sample.background.width, ErrorCode::ShapeMismatch,
            "crop_pair: degraded and background sizes differ");
    require(crop_h >= 1 && crop_w >= 1 && a.height >= crop_h && a.width >= crop_w, ErrorCode::InvalidArgument,
            "crop_pair: image " + std::to_string(a.height) + "x" + std::to_string(a.width) + " is smaller than crop " +
                std::to_string(crop_h) + "x" + std::to_string(crop_w));
    const int top = int(rng.below(uint64_t(a.height - crop_h + 1)));
    const int left = int(rng.below(uint64_t(a.width - crop_w + 1)));
    DegradedSample out = sample;
    out.degraded = crop_image(a, top, left, crop_h, crop_w);
    out.background = crop_image(sample.background, top, left, crop_h, crop_w);
    out.degraded.source = sample.degraded.source;
    out.background.source = sample.background.source;
    return out;
}

std::vector<DegradedSample> load_samples(const std::filesystem::path& manifest) {
    const auto entries = read_manifest(manifest);
    const auto root = manifest.parent_path();
    std::vector<DegradedSample> out;
    for (const auto& e : entries) {
        DegradedSample s;
        s.degraded = load_image(root / e.input);
        s.background = load_image(root / e.target);
        s.kind = e.kind;
        require(s.degraded.height == s.background.height && s.degraded.width == s.background.width,
                ErrorCode::ShapeMismatch, "manifest pair " + e.input + " / " + e.target + " differs in size");
        out.push_back(std::move(s));
    }
    return out;
}

std::string metrics_header() { return "step,l_pixel,l_perc,l_adv_g,l_d,total"; }

std::string format_metrics(const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(m.step), m.l_pixel,
                  m.l_perc, m.l_adv_g, m.l_d, m.total);
    return buf;
}

namespace {

uint64_t sub_seed(uint64_t seed, const char* what) { return CounterRng::stream(seed, hash_name(what)).key(); }

void append_params(CheckpointFile& c, const std::string& prefix, const ParameterSet<float>& p) {
    for (const auto& [name, t] : p.entries()) c.tensors.push_back(NamedTensor::from(prefix + name, t));
}

void append_adam(CheckpointFile& c, const std::string& prefix, const ParameterSet<float>& p,
                 const AdamState<float>& s) {
    c.tensors.push_back(NamedTensor::from(prefix + "step", Tensor<double>({1}, {double(s.step)})));
    for (size_t k = 0; k < p.size(); ++k) {
        c.tensors.push_back(NamedTensor::from(prefix + "m/" + p.entries()[k].first, s.m[k]));
        c.tensors.push_back(NamedTensor::from(prefix + "v/" + p.entries()[k].first, s.v[k]));
    }
}

const NamedTensor& expect(const CheckpointFile& c, const std::string& name, const Shape& shape) {
    const NamedTensor* t = c.find(name);
    require(t != nullptr, ErrorCode::CorruptCheckpoint, "checkpoint is missing tensor " + name);
    require(t->shape == shape, ErrorCode::CorruptCheckpoint,
            "checkpoint tensor " + name + " has shape " + shape_str(t->shape) + ", expected " + shape_str(shape));
    return *t;
}

void copy_into(const CheckpointFile& c, const std::string& name, Tensor<float>& dst) {
    const Tensor<float> src = expect(c, name, dst.shape()).to<float>();
    dst.values() = src.values();
}

void restore_params(const CheckpointFile& c, const std::string& prefix, ParameterSet<float>& p) {
    for (auto& [name, t] : p.entries()) copy_into(c, prefix + name, t);
}

void restore_adam(const CheckpointFile& c, const std::string& prefix, const ParameterSet<float>& p,
                  AdamState<float>& s) {
    s.step = int64_t(expect(c, prefix + "step", {1}).to<double>().values()[0]);
    for (size_t k = 0; k < p.size(); ++k) {
        copy_into(c, prefix + "m/" + p.entries()[k].first, s.m[k]);
        copy_into(c, prefix + "v/" + p.entries()[k].first, s.v[k]);
    }
}

} // namespace

Trainer::Trainer(const GlsgnConfig& config, uint64_t run_seed)
    : model_(config), disc_(sub_seed(config.seed, "discriminator")),
      extractor_(sub_seed(config.seed, "perceptual")), adam_g_(make_adam(model_.params())),
      adam_d_(make_adam(disc_.params())), run_seed_(run_seed) {}

StepMetrics Trainer::train_step(const Tensor<float>& degraded, const Tensor<float>& background) {
    const LossWeights& w = config().loss;
    GlsgnOutput<float> out = model_.forward(degraded);
    const Tensor<float> fake = out.final.detach();

    StepMetrics m;
    {
        GraphScope<float> scope;
        Tensor<float> real_scores = disc_.score(background, true);
        Tensor<float> fake_scores = disc_.score(fake, false);
        Tensor<float> loss_d = discriminator_loss(real_scores, fake_scores);
        m.l_d = double(loss_d.item());
        backward(loss_d);
        adam_step(disc_.params(), adam_d_);
        disc_.params().zero_grad();
    }

    std::vector<Tensor<float>> paths;
    for (const auto& p : out.per_pathway) paths.push_back(p.restored);
    Tensor<float> lp = pixel_loss(background, paths, out.final, w);
    Tensor<float> lq = perceptual_loss(background, paths, out.final, extractor_, w);
    Tensor<float> la = adversarial_g_loss(disc_.score(out.final, false));
    Tensor<float> total = total_loss(lp, lq, la, w);
    m.l_pixel = double(lp.item());
    m.l_perc = double(lq.item());
    m.l_adv_g = double(la.item());
    m.total = double(total.item());
    backward(total);
    adam_step(model_.params(), adam_g_);
    model_.params().zero_grad();
    disc_.params().zero_grad();
    m.step = ++step_;
    return m;
}

CheckpointFile Trainer::to_checkpoint() const {
    CheckpointFile c;
    c.config_json = serialize_model_config(config());
    c.seed = run_seed_;
    c.step = step_;
    append_params(c, "g/", model_.params());
    append_params(c, "d/", disc_.params());
    const auto& states = disc_.spectral_states();
    for (size_t k = 0; k < states.size(); ++k) {
        c.tensors.push_back(NamedTensor::from("d/sn/" + std::to_string(k) + "/u", states[k].u));
        c.tensors.push_back(NamedTensor::from("d/sn/" + std::to_string(k) + "/v", states[k].v));
    }
    append_adam(c, "adam/g/", model_.params(), adam_g_);
    append_adam(c, "adam/d/", disc_.params(), adam_d_);
    return c;
}

Trainer Trainer::from_checkpoint(const CheckpointFile& ckpt) {
    Trainer t(parse_model_config(ckpt.config_json), ckpt.seed);
    const CheckpointFile expected = t.to_checkpoint();
    require(ckpt.tensors.size() == expected.tensors.size(), ErrorCode::CorruptCheckpoint,
            "checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, expected " +
                std::to_string(expected.tensors.size()));
    require(ckpt.step >= 0, ErrorCode::CorruptCheckpoint, "checkpoint step is negative");
    t.step_ = ckpt.step;
    restore_params(ckpt, "g/", t.model_.params());
    restore_params(ckpt, "d/", t.disc_.params());
    auto& states = t.disc_.spectral_states();
    for (size_t k = 0; k < states.size(); ++k) {
        copy_into(ckpt, "d/sn/" + std::to_string(k) + "/u", states[k].u);
        copy_into(ckpt, "d/sn/" + std::to_string(k) + "/v", states[k].v);
    }
    restore_adam(ckpt, "adam/g/", t.model_.params(), t.adam_g_);
    restore_adam(ckpt, "adam/d/", t.disc_.params(), t.adam_d_);
    return t;
}

std::vector<StepMetrics> train(Trainer& trainer, const std::vector<DegradedSample>& data, const TrainOptions& opts) {
    const TrainRun& run = opts.run;
    validate(run, trainer.config());
    require(!data.empty(), ErrorCode::InvalidArgument, "train: no training samples");
    if (opts.metrics && trainer.step() == 0)
        *opts.metrics << metrics_header() << '\n';
    std::vector<StepMetrics> history;
    for (int s = 0; s < run.steps; ++s) {
        CounterRng rng = CounterRng::stream(run.seed, uint64_t(trainer.step() + 1));
        std::vector<Image> xs, ys;
        for (int b = 0; b < run.batch_size; ++b) {
            const auto& sample = data[size_t(rng.below(uint64_t(data.size())))];
            DegradedSample d = augment(crop_pair(sample, run.crop_h, run.crop_w, rng), rng);
            xs.push_back(std::move(d.degraded));
            ys.push_back(std::move(d.background));
        }
        const StepMetrics m = trainer.train_step(images_to_batch<float>(xs), images_to_batch<float>(ys));
        history.push_back(m);
        if (opts.metrics)
            *opts.metrics << format_metrics(m) << '\n';
        if (opts.progress && run.log_every > 0 && (m.step % run.log_every == 0 || s + 1 == run.steps)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "step %lld  total %.5f  pixel %.5f  perc %.5f  adv %.4f  d %.4f",
                          static_cast<long long>(m.step), m.total, m.l_pixel, m.l_perc, m.l_adv_g, m.l_d);
            *opts.progress << buf << std::endl;
        }
    }
    return history;
}

void save_checkpoint(const Trainer& trainer, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(trainer.to_checkpoint()));
}

Trainer load_checkpoint(const std::filesystem::path& path) {
    return Trainer::from_checkpoint(decode_checkpoint(read_file(path)));
}

Image restore_exact(const GlsgnModel<float>& model, const Image& img) {
    const auto& cfg = model.config();
    require(img.height == cfg.input_h && img.width == cfg.input_w, ErrorCode::ShapeMismatch,
            "restore: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) + ", model expects " +
                std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
    NoGradGuard guard;
    const auto out = model.forward(image_to_tensor<float>(img));
    Image result = image_from_tensor(out.final);
    result.source = img.source;
    return result;
}

Image restore_image(const GlsgnModel<float>& model, const Image& img) {
    const int h = model.config().input_h, w = model.config().input_w;
    require(img.height >= h && img.width >= w, ErrorCode::ShapeMismatch,
            "restore: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                " is smaller than the model input " + std::to_string(h) + "x" + std::to_string(w));
    const Image src = center_crop(img, img.height / h * h, img.width / w * w);
    Image out(src.height, src.width);
    for (int ty = 0; ty < src.height; ty += h)
        for (int tx = 0; tx < src.width; tx += w) {
            const Image tile = restore_exact(model, crop_image(src, ty, tx, h, w));
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) out.at(c, ty + y, tx + x) = tile.at(c, y, x);
        }
    out.source = img.source;
    return out;
}

EvalReport evaluate(const std::vector<DegradedSample>& samples, const RestoreFn& restore, int height, int width) {
    require(!samples.empty(), ErrorCode::InvalidArgument, "evaluate: no samples");
    EvalReport r;
    for (const auto& s : samples) {
        require(s.degraded.height >= height && s.degraded.width >= width, ErrorCode::ShapeMismatch,
                "evaluate: " + s.degraded.source + " is smaller than " + std::to_string(height) + "x" +
                    std::to_string(width));
        const Image deg = center_crop(s.degraded, height, width);
        const Image gt = center_crop(s.background, height, width);
        const Image out = restore(deg);
        EvalRow row;
        row.name = s.degraded.source;
        row.psnr = psnr(out, gt);
        row.ssim = ssim(out, gt);
        row.baseline_psnr = psnr(deg, gt);
        row.baseline_ssim = ssim(deg, gt);
        r.mean_psnr += row.psnr;
        r.mean_ssim += row.ssim;
        r.mean_baseline_psnr += row.baseline_psnr;
        r.mean_baseline_ssim += row.baseline_ssim;
        r.rows.push_back(std::move(row));
    }
    const double n = double(r.rows.size());
    r.mean_psnr /= n;
    r.mean_ssim /= n;
    r.mean_baseline_psnr /= n;
    r.mean_baseline_ssim /= n;
    return r;
}

namespace {

// JSON has no infinity; identical images report "inf".
nlohmann::json number(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return v;
}

} // namespace

std::string format_report(const EvalReport& report, const std::string& tag) {
    std::string out;
    for (const auto& row : report.rows) {
        nlohmann::ordered_json j;
        j["tag"] = tag;
        j["name"] = row.name;
        j["psnr"] = number(row.psnr);
        j["ssim"] = number(row.ssim);
        j["baseline_psnr"] = number(row.baseline_psnr);
        j["baseline_ssim"] = number(row.baseline_ssim);
        out += j.dump() + "\n";
    }
    nlohmann::ordered_json s;
    s["tag"] = tag;
    s["summary"] = true;
    s["count"] = report.rows.size();
    s["mean_psnr"] = number(report.mean_psnr);
    s["mean_ssim"] = number(report.mean_ssim);
    s["mean_baseline_psnr"] = number(report.mean_baseline_psnr);
    s["mean_baseline_ssim"] = number(report.mean_baseline_ssim);
    out += s.dump() + "\n";
    return out;
}

template AdamState<float> make_adam(const ParameterSet<float>&, AdamHyper);
template AdamState<double> make_adam(const ParameterSet<double>&, AdamHyper);
template void adam_step(ParameterSet<float>&, AdamState<float>&);
template void adam_step(ParameterSet<double>&, AdamState<double>&);

} // namespace glsgn
