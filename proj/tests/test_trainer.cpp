#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "glsgn/image.hpp"
#include "glsgn/trainer.hpp"
#include "test_util.hpp"

using namespace glsgn;
using glsgn::testing::random_tensor;

namespace {

GlsgnConfig tiny_config() {
    GlsgnConfig c;
    c.input_h = c.input_w = 16;
    c.base_channels = 4;
    c.encoder_depth = 2;
    c.residual_blocks = 1;
    c.geometry = {{1, 2, 2}, {2, 2, 2}, {4, 1, 1}, {4, 1, 1}};
    c.seed = 5;
    return c;
}

TrainRun tiny_run(int steps) {
    TrainRun r;
    r.steps = steps;
    r.batch_size = 2;
    r.crop_h = r.crop_w = 16;
    r.seed = 9;
    return r;
}

std::vector<DegradedSample> rain_samples(int n, int size = 24) {
    std::vector<DegradedSample> out;
    for (int i = 0; i < n; ++i) {
        DegradedSample s = synth_rain(procedural_background(size, size, 100 + uint64_t(i)), 200 + uint64_t(i));
        s.degraded.source = "sample" + std::to_string(i);
        out.push_back(std::move(s));
    }
    return out;
}

Image random_image(int h, int w, uint64_t seed) {
    Image img(h, w);
    CounterRng rng(seed);
    for (auto& p : img.pixels) p = float(rng.uniform(0, 1));
    return img;
}

double mean_l1(const GlsgnModel<float>& model, const std::vector<DegradedSample>& data) {
    double total = 0;
    for (const auto& s : data) {
        const Image deg = center_crop(s.degraded, 16, 16), gt = center_crop(s.background, 16, 16);
        const Image out = restore_exact(model, deg);
        double acc = 0;
        for (size_t i = 0; i < out.pixels.size(); ++i) acc += std::abs(double(out.pixels[i]) - double(gt.pixels[i]));
        total += acc / double(out.pixels.size());
    }
    return total / double(data.size());
}

bool same_images(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
}

} // namespace

TEST_CASE("adam zero gradient leaves parameters", "[trainer]") {
    ParameterSet<double> p;
    p.add("w", random_tensor<double>({3, 4}, 1));
    const auto before = p.get("w").values();
    auto state = make_adam(p);
    p.get("w").grad();
    for (int i = 0; i < 5; ++i) adam_step(p, state);
    CHECK(p.get("w").values() == before);
    CHECK(state.step == 5);
}

TEST_CASE("adam first step closed form", "[trainer]") {
    ParameterSet<double> p;
    p.add("w", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    auto state = make_adam(p, {0.01, 0.9, 0.999, 1e-8});
    auto g = p.get("w").grad();
    g[0] = 0.3;
    g[1] = -4.0;
    g[2] = 1e-3;
    adam_step(p, state);
    // First bias-corrected step: m_hat = g, v_hat = g^2.
    const std::vector<double> grads{0.3, -4.0, 1e-3}, init{1.0, -2.0, 0.5};
    for (size_t i = 0; i < 3; ++i)
        CHECK(std::abs(p.get("w").values()[i] - (init[i] - 0.01 * grads[i] / (std::abs(grads[i]) + 1e-8))) < 1e-8);
    CHECK(std::abs(state.m[0].values()[1] - 0.1 * -4.0) < 1e-12);
    CHECK(std::abs(state.v[0].values()[1] - 0.001 * 16.0) < 1e-12);
}

TEST_CASE("adam sign symmetry", "[trainer]") {
    ParameterSet<double> a, b;
    a.add("w", Tensor<double>({2}, {0.0, 0.0}));
    b.add("w", Tensor<double>({2}, {0.0, 0.0}));
    auto sa = make_adam(a), sb = make_adam(b);
    for (int i = 0; i < 4; ++i) {
        a.get("w").zero_grad();
        b.get("w").zero_grad();
        auto ga = a.get("w").grad(), gb = b.get("w").grad();
        ga[0] = 0.1 * (i + 1);
        ga[1] = -0.7;
        gb[0] = -ga[0];
        gb[1] = -ga[1];
        adam_step(a, sa);
        adam_step(b, sb);
    }
    for (size_t i = 0; i < 2; ++i) CHECK(a.get("w").values()[i] == -b.get("w").values()[i]);
}

TEST_CASE("adam names a parameter without gradient", "[trainer]") {
    ParameterSet<float> p;
    p.add("first", Tensor<float>({2}));
    p.add("second", Tensor<float>({2}));
    p.get("first").grad();
    auto s = make_adam(p);
    try {
        adam_step(p, s);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("second") != std::string::npos);
    }
}

TEST_CASE("augmentation", "[trainer]") {
    const Image img = random_image(6, 9, 3);
    CHECK(same_images(apply_augment(img, {}), img));
    const Image h = apply_augment(img, {true, false, 0});
    CHECK(h.at(1, 2, 0) == img.at(1, 2, 8));
    CHECK(same_images(apply_augment(h, {true, false, 0}), img));
    const Image r = apply_augment(img, {false, false, 1});
    CHECK(r.height == 9);
    CHECK(r.width == 6);
    CHECK(r.at(0, 0, 0) == img.at(0, 0, 8));
    CHECK(same_images(apply_augment(img, {false, false, 4}), img));
    CHECK(same_images(apply_augment(img, {true, true, 0}), apply_augment(img, {false, false, 2})));

    // The pair is transformed together, so scores are unchanged.
    const auto samples = rain_samples(3, 16);
    for (uint64_t seed = 0; seed < 12; ++seed) {
        const auto& s = samples[seed % 3];
        CounterRng rng(seed);
        const DegradedSample a = augment(s, rng);
        CHECK(std::abs(psnr(a.degraded, a.background) - psnr(s.degraded, s.background)) < 1e-9);
    }

    // Non-square inputs keep their shape.
    DegradedSample rect{random_image(6, 9, 4), random_image(6, 9, 5)};
    for (uint64_t seed = 0; seed < 20; ++seed) {
        CounterRng rng(seed);
        const DegradedSample a = augment(rect, rng);
        CHECK(a.degraded.height == 6);
        CHECK(a.background.width == 9);
    }
}

TEST_CASE("crop pairs", "[trainer]") {
    DegradedSample s{random_image(20, 30, 1), random_image(20, 30, 2)};
    CounterRng rng(4);
    const DegradedSample whole = crop_pair(s, 20, 30, rng);
    CHECK(same_images(whole.degraded, s.degraded));

    CounterRng a(7), b(7);
    CHECK(same_images(crop_pair(s, 8, 8, a).degraded, crop_pair(s, 8, 8, b).degraded));

    // The crop is located by matching it back into the source.
    CounterRng rng2(11);
    for (int i = 0; i < 1000; ++i) {
        const DegradedSample c = crop_pair(s, 7, 13, rng2);
        REQUIRE(c.degraded.height == 7);
        REQUIRE(c.degraded.width == 13);
        bool found = false;
        for (int top = 0; top + 7 <= 20 && !found; ++top)
            for (int left = 0; left + 13 <= 30 && !found; ++left)
                found = c.degraded.at(0, 0, 0) == s.degraded.at(0, top, left) &&
                        same_images(c.degraded, crop_image(s.degraded, top, left, 7, 13)) &&
                        same_images(c.background, crop_image(s.background, top, left, 7, 13));
        REQUIRE(found);
    }
    CHECK_THROWS_AS(crop_pair(s, 21, 8, rng), Error);
}

TEST_CASE("zero-step checkpoint matches initialisation", "[trainer]") {
    Trainer t(tiny_config(), 9);
    GlsgnModel<float> fresh(tiny_config());
    const Trainer back = Trainer::from_checkpoint(t.to_checkpoint());
    CHECK(back.step() == 0);
    for (const auto& [name, p] : fresh.params().entries())
        CHECK(back.model().params().get(name).values() == p.values());
}

TEST_CASE("training lowers the loss and is reproducible", "[trainer]") {
    const auto data = rain_samples(4);
    TrainOptions opts;
    opts.run = tiny_run(50);
    std::ostringstream csv;
    opts.metrics = &csv;

    Trainer a(tiny_config(), opts.run.seed);
    const std::string extractor_before = encode_checkpoint([&] {
        CheckpointFile c;
        for (const auto& [n, t] : a.extractor().params().entries()) c.tensors.push_back(NamedTensor::from(n, t));
        return c;
    }());
    const double before = mean_l1(a.model(), data);
    const auto history = train(a, data, opts);
    const double after = mean_l1(a.model(), data);
    INFO("mean L1 before " << before << " after " << after);
    CHECK(after < before);
    CHECK(history.size() == 50);
    CHECK(history.back().step == 50);
    CHECK(a.adam_g().step == 50);
    for (const auto& m : history) CHECK(std::isfinite(m.total));

    std::istringstream lines(csv.str());
    std::string line;
    int count = 0;
    std::getline(lines, line);
    CHECK(line == metrics_header());
    while (std::getline(lines, line)) ++count;
    CHECK(count == 50);

    CheckpointFile ext;
    for (const auto& [n, t] : a.extractor().params().entries()) ext.tensors.push_back(NamedTensor::from(n, t));
    CHECK(encode_checkpoint(ext) == extractor_before);

    TrainOptions quiet = opts;
    quiet.metrics = nullptr;
    Trainer b(tiny_config(), opts.run.seed);
    train(b, data, quiet);
    CHECK(encode_checkpoint(a.to_checkpoint()) == encode_checkpoint(b.to_checkpoint()));
}

TEST_CASE("resume continues the same run", "[trainer]") {
    const auto data = rain_samples(3);
    TrainOptions opts;
    opts.run = tiny_run(6);
    Trainer full(tiny_config(), opts.run.seed);
    train(full, data, opts);

    opts.run.steps = 3;
    Trainer first(tiny_config(), opts.run.seed);
    train(first, data, opts);
    const auto path = std::filesystem::temp_directory_path() / "glsgn_test_resume.ckpt";
    save_checkpoint(first, path);
    Trainer resumed = load_checkpoint(path);
    CHECK(resumed.step() == 3);
    train(resumed, data, opts);
    CHECK(encode_checkpoint(resumed.to_checkpoint()) == encode_checkpoint(full.to_checkpoint()));

    save_checkpoint(resumed, path);
    const std::string bytes = read_file(path);
    save_checkpoint(load_checkpoint(path), path);
    CHECK(read_file(path) == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("generator and discriminator parameters are disjoint", "[trainer]") {
    Trainer t(tiny_config());
    std::set<const void*> g;
    for (const auto& [n, p] : t.model().params().entries()) g.insert(p.values().data());
    for (const auto& [n, p] : t.discriminator().params().entries()) CHECK(g.count(p.values().data()) == 0);
    for (const auto& [n, p] : t.extractor().params().entries()) {
        CHECK(g.count(p.values().data()) == 0);
        CHECK_FALSE(p.requires_grad());
    }
}

TEST_CASE("corrupt checkpoints are rejected", "[trainer]") {
    Trainer t(tiny_config());
    const std::string good = encode_checkpoint(t.to_checkpoint());
    CHECK_NOTHROW(Trainer::from_checkpoint(decode_checkpoint(good)));

    auto code_of = [](const std::string& bytes) {
        try {
            Trainer::from_checkpoint(decode_checkpoint(bytes));
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(code_of(bad_magic) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of(good.substr(0, good.size() / 2)) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of(good.substr(0, 2)) == ErrorCode::CorruptCheckpoint);
    CHECK(code_of(good + "x") == ErrorCode::CorruptCheckpoint);
    std::string bad_version = good;
    bad_version[4] = 7;
    CHECK(code_of(bad_version) == ErrorCode::CorruptCheckpoint);

    CheckpointFile missing = t.to_checkpoint();
    missing.tensors.pop_back();
    CHECK_THROWS_AS(Trainer::from_checkpoint(missing), Error);
    CheckpointFile renamed = t.to_checkpoint();
    renamed.tensors[0].name = "g/nothing";
    CHECK_THROWS_AS(Trainer::from_checkpoint(renamed), Error);
}

TEST_CASE("evaluation report", "[trainer]") {
    const auto data = rain_samples(3, 20);
    auto by_name = [&](const Image& deg) {
        for (const auto& s : data)
            if (same_images(center_crop(s.degraded, 16, 16), deg))
                return center_crop(s.background, 16, 16);
        FAIL("unknown input");
        return deg;
    };
    const EvalReport r = evaluate(data, by_name, 16, 16);
    REQUIRE(r.rows.size() == 3);
    for (const auto& row : r.rows) {
        CHECK(std::isinf(row.psnr));
        CHECK(row.ssim == Catch::Approx(1.0).margin(1e-12));
        CHECK(std::isfinite(row.baseline_psnr));
        CHECK(row.baseline_ssim < 1.0);
    }
    const std::string text = format_report(r, "oracle");
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(text.find("\"psnr\":\"inf\"") != std::string::npos);
    CHECK(text.find("\"summary\":true") != std::string::npos);

    const EvalReport id = evaluate(data, [](const Image& x) { return x; }, 16, 16);
    for (const auto& row : id.rows) CHECK(row.psnr == row.baseline_psnr);
    CHECK_THROWS_AS(evaluate({}, by_name, 16, 16), Error);
    CHECK_THROWS_AS(evaluate(data, by_name, 32, 32), Error);
}

TEST_CASE("tiled restoration", "[trainer]") {
    GlsgnModel<float> model(tiny_config());
    const Image img = random_image(35, 50, 8);
    const Image out = restore_image(model, img);
    CHECK(out.height == 32);
    CHECK(out.width == 48);
    const Image src = center_crop(img, 32, 48);
    CHECK(same_images(crop_image(out, 16, 32, 16, 16), restore_exact(model, crop_image(src, 16, 32, 16, 16))));
    CHECK_THROWS_AS(restore_image(model, random_image(15, 40, 1)), Error);
}
