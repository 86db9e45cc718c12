#include "glsgn/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace glsgn {

const char* to_string(DegradationKind kind) {
    switch (kind) {
    case DegradationKind::Reflection: return "reflection";
    case DegradationKind::Rain: return "rain";
    case DegradationKind::Haze: return "haze";
    }
    return "unknown";
}

DegradationKind parse_degradation_kind(const std::string& name) {
    if (name == "reflection")
        return DegradationKind::Reflection;
    if (name == "rain")
        return DegradationKind::Rain;
    if (name == "haze")
        return DegradationKind::Haze;
    fail(ErrorCode::InvalidArgument, "unknown degradation kind '" + name + "' (expected rain, reflection or haze)");
}

StreakKernel make_streak_kernel(double length, double angle_deg, double sigma) {
    require(length >= 1, ErrorCode::InvalidArgument, "streak length must be >= 1");
    require(sigma > 0, ErrorCode::InvalidArgument, "streak sigma must be positive");
    StreakKernel k;
    k.length = length;
    k.angle = angle_deg;
    k.sigma = sigma;
    const double half = (length - 1) / 2;
    const double cutoff = 3 * sigma;
    k.radius = int(std::ceil(half + cutoff));
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double ux = std::cos(theta), uy = -std::sin(theta);
    const int n = k.size();
    k.weights.assign(size_t(n) * n, 0.0);
    double total = 0;
    for (int dy = -k.radius; dy <= k.radius; ++dy)
        for (int dx = -k.radius; dx <= k.radius; ++dx) {
            const double along = std::clamp(dx * ux + dy * uy, -half, half);
            const double ex = dx - along * ux, ey = dy - along * uy;
            const double d2 = ex * ex + ey * ey;
            if (d2 > cutoff * cutoff)
                continue;
            const double w = std::exp(-d2 / (2 * sigma * sigma));
            k.weights[size_t(dy + k.radius) * n + (dx + k.radius)] = w;
            total += w;
        }
    for (auto& w : k.weights) w /= total;
    return k;
}

namespace {

int mirror(int i, int n) {
    if (n == 1)
        return 0;
    while (i < 0 || i >= n) {
        if (i < 0)
            i = -i;
        if (i >= n)
            i = 2 * (n - 1) - i;
    }
    return i;
}

void require_same_size(const Image& a, const Image& b, const char* what) {
    require(a.height == b.height && a.width == b.width, ErrorCode::ShapeMismatch,
            std::string(what) + ": image sizes differ (" + std::to_string(a.height) + "x" + std::to_string(a.width) +
                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

double pick(const std::optional<double>& forced, const Range& range, CounterRng& rng) {
    const double drawn = range.sample(rng);
    return forced ? *forced : drawn;
}

} // namespace

Image gaussian_blur(const Image& img, double sigma) {
    require(sigma > 0, ErrorCode::InvalidArgument, "blur sigma must be positive");
    const int r = int(std::ceil(3 * sigma));
    std::vector<double> g(size_t(2 * r + 1));
    double total = 0;
    for (int i = -r; i <= r; ++i) total += g[size_t(i + r)] = std::exp(-double(i) * i / (2 * sigma * sigma));
    for (auto& v : g) v /= total;

    const int h = img.height, w = img.width;
    Image out(h, w);
    out.source = img.source;
    std::vector<double> rows(size_t(h) * w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += g[size_t(i + r)] * img.at(c, y, mirror(x + i, w));
                rows[size_t(y) * w + x] = s;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += g[size_t(i + r)] * rows[size_t(mirror(y + i, h)) * w + x];
                out.at(c, y, x) = float(s);
            }
    }
    return out;
}

DegradedSample synth_reflection(const Image& background, const Image& reflection_source, uint64_t seed,
                                const SynthRanges& ranges, const SynthOverrides& force) {
    require_same_size(background, reflection_source, "synth_reflection");
    CounterRng rng(seed);
    const double sigma = pick(force.sigma, ranges.reflection_sigma, rng);
    const double beta = pick(force.beta, ranges.reflection_beta, rng);

    DegradedSample s;
    s.kind = DegradationKind::Reflection;
    s.seed = seed;
    s.background = background;
    s.params = {{"sigma", sigma}, {"beta", beta}};
    const Image blurred = gaussian_blur(reflection_source, sigma);
    s.degraded = background;
    for (size_t i = 0; i < s.degraded.pixels.size(); ++i)
        s.degraded.pixels[i] = std::clamp(float(double(background.pixels[i]) + beta * blurred.pixels[i]), 0.0f, 1.0f);
    return s;
}

DegradedSample synth_rain(const Image& background, uint64_t seed, const SynthRanges& ranges,
                          const SynthOverrides& force) {
    const int h = background.height, w = background.width;
    require(std::min(h, w) >= 16, ErrorCode::InvalidArgument, "synth_rain: images must be at least 16x16");
    CounterRng rng(seed);
    const double density = pick(force.density, ranges.rain_density, rng);
    const double length = pick(force.length, ranges.rain_length, rng);
    const double angle = pick(force.angle, ranges.rain_angle, rng);
    const double sigma = pick(force.sigma, ranges.rain_sigma, rng);
    const double contrast = pick(force.contrast, ranges.rain_contrast, rng);

    std::vector<float> noise(size_t(h) * w, 0.0f);
    for (auto& v : noise) v = rng.bernoulli(density) ? 1.0f : 0.0f;
    if (force.noise) {
        require(force.noise->size() == noise.size(), ErrorCode::ShapeMismatch, "synth_rain: noise field size");
        noise = *force.noise;
    }

    // Splatting the kernel at every noise point equals convolving the noise
    // field with it; the kernel is symmetric under a half turn.
    const StreakKernel k = make_streak_kernel(length, angle, sigma);
    std::vector<double> streaks(size_t(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float n = noise[size_t(y) * w + x];
            if (n == 0.0f)
                continue;
            for (int dy = -k.radius; dy <= k.radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h)
                    continue;
                for (int dx = -k.radius; dx <= k.radius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w)
                        continue;
                    streaks[size_t(yy) * w + xx] += n * k.at(dy, dx);
                }
            }
        }

    // Levels stretch: the brightest point of the layer gets intensity c.
    const double top = *std::max_element(streaks.begin(), streaks.end());
    if (top > 0)
        for (auto& v : streaks) v /= top;

    DegradedSample s;
    s.kind = DegradationKind::Rain;
    s.seed = seed;
    s.background = background;
    s.params = {{"density", density}, {"length", length}, {"angle", angle}, {"sigma", sigma}, {"contrast", contrast}};
    s.degraded = background;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double layer = contrast * streaks[size_t(y) * w + x];
                s.degraded.at(c, y, x) = std::clamp(float(background.at(c, y, x) + layer), 0.0f, 1.0f);
            }
    return s;
}

DegradedSample synth_haze(const Image& background, uint64_t seed, const SynthRanges& ranges,
                          const SynthOverrides& force) {
    CounterRng rng(seed);
    const double airlight = pick(force.airlight, ranges.haze_airlight, rng);
    const double beta = pick(force.haze_beta, ranges.haze_beta, rng);

    DegradedSample s;
    s.kind = DegradationKind::Haze;
    s.seed = seed;
    s.background = background;
    s.params = {{"airlight", airlight}, {"beta", beta}};
    s.degraded = background;
    const int h = background.height;
    for (int y = 0; y < h; ++y) {
        // Depth proxy: 1 at the top row (far), 0 at the bottom row (near).
        const double depth = h > 1 ? 1.0 - double(y) / (h - 1) : 0.0;
        const double t = force.transmission ? *force.transmission : std::exp(-beta * depth);
        for (int c = 0; c < 3; ++c)
            for (int x = 0; x < background.width; ++x) {
                const double v = background.at(c, y, x) * t + airlight * (1 - t);
                s.degraded.at(c, y, x) = std::clamp(float(v), 0.0f, 1.0f);
            }
    }
    return s;
}

Image procedural_background(int height, int width, uint64_t seed) {
    CounterRng rng(seed);
    Image img(height, width);
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rng.uniform(0.15, 0.6);
        gx[c] = rng.uniform(-0.25, 0.25);
        gy[c] = rng.uniform(-0.25, 0.25);
    }
    struct Blob {
        double cy, cx, ry, rx, color[3];
    };
    std::vector<Blob> blobs(size_t(3 + rng.below(4)));
    for (auto& b : blobs) {
        b.cy = rng.uniform(0, height);
        b.cx = rng.uniform(0, width);
        b.ry = rng.uniform(0.08, 0.35) * height;
        b.rx = rng.uniform(0.08, 0.35) * width;
        for (double& v : b.color) v = rng.uniform(0.05, 0.75);
    }
    const double fy = rng.uniform(1, 4) * 2 * std::numbers::pi / height;
    const double fx = rng.uniform(1, 4) * 2 * std::numbers::pi / width;
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double u = double(x) / width - 0.5, v = double(y) / height - 0.5;
            double px[3];
            for (int c = 0; c < 3; ++c) px[c] = base[c] + gx[c] * u + gy[c] * v;
            for (const auto& b : blobs) {
                const double d = std::hypot((y - b.cy) / b.ry, (x - b.cx) / b.rx);
                const double alpha = 1.0 / (1.0 + std::exp((d - 1.0) * 8.0));
                for (int c = 0; c < 3; ++c) px[c] = (1 - alpha) * px[c] + alpha * b.color[c];
            }
            const double texture = 0.04 * std::sin(fy * y + phase) * std::sin(fx * x);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = float(std::clamp(px[c] + texture, 0.0, 1.0));
        }
    img.source = "procedural:" + std::to_string(seed);
    return img;
}

Split build_split(const std::vector<ManifestEntry>& samples, double train_fraction, uint64_t seed) {
    require(samples.size() >= 2, ErrorCode::InvalidArgument, "build_split needs at least 2 samples");
    require(train_fraction > 0 && train_fraction < 1, ErrorCode::InvalidArgument,
            "train fraction must lie strictly between 0 and 1");
    const size_t n = samples.size();
    size_t n_train = size_t(std::llround(train_fraction * double(n)));
    n_train = std::clamp<size_t>(n_train, 1, n - 1);

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng rng(seed);
    for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::vector<bool> in_train(n, false);
    for (size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

    Split split;
    for (size_t i = 0; i < n; ++i) (in_train[i] ? split.train : split.test).push_back(samples[i]);
    return split;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const auto& e : entries) out += e.input + " " + e.target + " " + to_string(e.kind) + "\n";
    return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream fields(line);
        ManifestEntry e;
        std::string kind;
        if (!(fields >> e.input >> e.target >> kind))
            fail(ErrorCode::InvalidArgument, "manifest line " + std::to_string(line_no) + ": expected 3 fields");
        e.kind = parse_degradation_kind(kind);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::Io, "cannot open manifest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

namespace {

Image flip_horizontal(const Image& img) {
    Image out = img;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::Io, "cannot write " + path.string());
    out << text;
}

} // namespace

DatasetSummary write_dataset(const DatasetRequest& req, const std::filesystem::path& out_dir) {
    require(req.count >= 0, ErrorCode::InvalidArgument, "sample count must be nonnegative");
    require(req.count == 0 || !req.backgrounds.empty(), ErrorCode::InvalidArgument, "no background images supplied");
    const std::string kind = to_string(req.kind);
    std::filesystem::create_directories(out_dir / kind);

    const size_t nb = req.backgrounds.size();
    std::vector<DegradedSample> samples(size_t(req.count));
    auto make_sample = [&](int i) {
        const uint64_t sample_seed = CounterRng::stream(req.seed, uint64_t(i)).key();
        const Image bg = resize_image(req.backgrounds[size_t(i) % nb], req.height, req.width);
        DegradedSample& s = samples[size_t(i)];
        switch (req.kind) {
        case DegradationKind::Reflection: {
            const Image src = flip_horizontal(resize_image(req.backgrounds[size_t(i + 1) % nb], req.height, req.width));
            s = synth_reflection(bg, src, sample_seed, req.ranges);
            break;
        }
        case DegradationKind::Rain: s = synth_rain(bg, sample_seed, req.ranges); break;
        case DegradationKind::Haze: s = synth_haze(bg, sample_seed, req.ranges); break;
        }
    };
    // Samples are independent streams, so the output does not depend on the
    // worker count.
    const int workers = std::min(std::max(req.threads, 1), std::max(req.count, 1));
    if (workers <= 1) {
        for (int i = 0; i < req.count; ++i) make_sample(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next++; i < req.count; i = next++) {
                    try {
                        make_sample(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!error)
                            error = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (error)
            std::rethrow_exception(error);
    }

    DatasetSummary summary;
    std::string params;
    for (int i = 0; i < req.count; ++i) {
        const DegradedSample& s = samples[size_t(i)];
        char stem[32];
        std::snprintf(stem, sizeof stem, "%04d", i);
        ManifestEntry e{kind + "/" + stem + "_in.ppm", kind + "/" + stem + "_gt.ppm", req.kind};
        save_image(s.degraded, out_dir / e.input);
        save_image(s.background, out_dir / e.target);

        nlohmann::json rec;
        rec["index"] = i;
        rec["kind"] = kind;
        rec["seed"] = s.seed;
        rec["background"] = req.backgrounds[size_t(i) % nb].source;
        rec["params"] = s.params;
        params += rec.dump() + "\n";
        summary.all.push_back(std::move(e));
    }
    if (summary.all.size() >= 2)
        summary.split = build_split(summary.all, req.train_fraction, req.seed);
    else
        summary.split.train = summary.all;
    write_text(out_dir / "manifest_train.txt", format_manifest(summary.split.train));
    write_text(out_dir / "manifest_test.txt", format_manifest(summary.split.test));
    write_text(out_dir / "params.jsonl", params);
    return summary;
}

} // namespace glsgn
