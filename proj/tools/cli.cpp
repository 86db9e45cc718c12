#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "glsgn/config.hpp"
#include "glsgn/gradcheck_suite.hpp"
#include "glsgn/image.hpp"
#include "glsgn/synth.hpp"
#include "glsgn/trainer.hpp"

namespace glsgn::cli {

namespace fs = std::filesystem;

int thread_budget() {
    const char* env = std::getenv("GLSGN_THREADS");
    if (env == nullptr || *env == '\0')
        return 0;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    require(*end == '\0' && n >= 0 && n <= 1024, ErrorCode::Config,
            std::string("GLSGN_THREADS: expected a nonnegative integer, got '") + env + "'");
    return int(n);
}

namespace {

struct Size {
    int height = 64;
    int width = 64;
};

Size parse_size(const std::string& text) {
    int h = 0, w = 0;
    char x = 0, extra = 0;
    if (std::sscanf(text.c_str(), "%d%c%d%c", &h, &x, &w, &extra) != 3 || (x != 'x' && x != 'X') || h < 1 || w < 1)
        fail(ErrorCode::Config, "--size: expected HxW, got '" + text + "'");
    return {h, w};
}

CliConfig config_from(const std::string& path) { return path.empty() ? CliConfig{} : load_config(path); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    require(bool(f), ErrorCode::Io, "cannot write " + path.string());
}

bool is_image(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

std::vector<Image> load_backgrounds(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorCode::Io, "background directory " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image(e.path()))
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Image> out;
    for (const auto& f : files) out.push_back(load_image(f));
    return out;
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

void print_summary(std::ostream& out, const EvalReport& r, const std::string& tag) {
    out << tag << ": " << r.rows.size() << " samples  PSNR " << format_db(r.mean_psnr) << " dB  SSIM "
        << fmt("%.4f", r.mean_ssim) << "  (degraded input: " << format_db(r.mean_baseline_psnr) << " dB, "
        << fmt("%.4f", r.mean_baseline_ssim) << ")\n";
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string metrics;
    std::string resume;
    std::optional<int> steps;
    std::optional<uint64_t> seed;
};

// Shared by train and ablate.
Trainer run_training(const TrainArgs& a, std::optional<Variant> variant, std::ostream& out) {
    CliConfig cfg = config_from(a.config);
    if (variant)
        cfg.model = ablation_variant(cfg.model, *variant);
    if (a.steps)
        cfg.train.steps = *a.steps;
    if (a.seed) {
        cfg.train.seed = *a.seed;
        cfg.model.seed = *a.seed;
    }
    require(cfg.train.steps >= 0, ErrorCode::Config, "config: train.steps: must be nonnegative");

    std::optional<Trainer> trainer;
    if (!a.resume.empty()) {
        trainer.emplace(load_checkpoint(a.resume));
        if (a.config.empty()) {
            cfg.train.crop_h = trainer->config().input_h;
            cfg.train.crop_w = trainer->config().input_w;
        } else {
            require(trainer->config() == cfg.model, ErrorCode::Config,
                    "config: model: differs from the checkpoint being resumed");
        }
        cfg.model = trainer->config();
        cfg.train.seed = trainer->run_seed();
    }
    validate(cfg.model);
    validate(cfg.train, cfg.model);
    if (!trainer)
        trainer.emplace(cfg.model, cfg.train.seed);
    const auto data = cfg.train.steps > 0 ? load_samples(a.data) : std::vector<DegradedSample>{};
    if (cfg.train.steps > 0)
        require(!data.empty(), ErrorCode::InvalidArgument, "manifest " + a.data + " lists no samples");

    const fs::path metrics_path = a.metrics.empty() ? fs::path(a.out + ".metrics.csv") : fs::path(a.metrics);
    std::ofstream metrics(metrics_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
    require(bool(metrics), ErrorCode::Io, "cannot write " + metrics_path.string());
    if (cfg.train.steps == 0 && trainer->step() == 0)
        metrics << metrics_header() << '\n';

    TrainOptions opts;
    opts.run = cfg.train;
    opts.metrics = &metrics;
    opts.progress = &out;
    if (cfg.train.steps > 0)
        train(*trainer, data, opts);
    save_checkpoint(*trainer, a.out);
    out << "checkpoint " << a.out << " at step " << trainer->step() << "\n";
    return std::move(*trainer);
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--config", a.config, "JSON configuration file (defaults when omitted)")->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "training manifest")->required();
    cmd->add_option("--out", a.out, "checkpoint to write")->required();
    cmd->add_option("--metrics", a.metrics, "per-step CSV log (default: <out>.metrics.csv)");
    cmd->add_option("--steps", a.steps, "override train.steps");
    cmd->add_option("--seed", a.seed, "override model and run seeds");
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Global-local stepwise restoration network: data synthesis, training, evaluation"};
    app.name(args.empty() ? "glsgn" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);
    app.footer("Exit status: 0 success, 1 failure, 2 usage error.\n"
               "GLSGN_THREADS caps synthesis worker threads (0, the default, is single-threaded).");

    // synth
    std::string task = "rain", bg_dir, out_dir, size_text = "64x64", synth_config;
    int count = 0;
    uint64_t synth_seed = 0;
    double train_fraction = 0.8;
    auto* synth = app.add_subcommand("synth", "synthesize degraded/background pairs and manifests");
    synth->add_option("--task", task, "degradation kind")->check(CLI::IsMember({"rain", "reflection", "haze"}));
    synth->add_option("--bg-dir", bg_dir, "directory of background images (.ppm, .png)")->required();
    synth->add_option("--out-dir", out_dir, "output directory")->required();
    synth->add_option("--count", count, "number of pairs")->required()->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("--size", size_text, "output size HxW");
    synth->add_option("--train-fraction", train_fraction, "share of pairs in manifest_train.txt")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--config", synth_config, "JSON configuration (synth ranges are used)")
        ->check(CLI::ExistingFile);

    // make-backgrounds
    std::string bg_out, bg_size = "96x96";
    int bg_count = 16;
    uint64_t bg_seed = 0;
    auto* backgrounds = app.add_subcommand("make-backgrounds", "write procedural background images");
    backgrounds->add_option("--out-dir", bg_out, "output directory")->required();
    backgrounds->add_option("--count", bg_count, "number of images")->check(CLI::NonNegativeNumber);
    backgrounds->add_option("--size", bg_size, "image size HxW");
    backgrounds->add_option("--seed", bg_seed, "master seed");

    // train
    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the model and write a checkpoint");
    add_train_flags(train_cmd, train_args);
    train_cmd->add_option("--resume", train_args.resume, "continue from this checkpoint")->check(CLI::ExistingFile);

    // eval
    std::string eval_ckpt, eval_data, eval_report, eval_tag = "eval";
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a test manifest");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "test manifest")->required();
    eval->add_option("--report", eval_report, "JSONL report (default: <checkpoint>.eval.jsonl)");
    eval->add_option("--tag", eval_tag, "tag stored in every report record");

    // restore
    std::string restore_ckpt, restore_in, restore_out;
    auto* restore = app.add_subcommand("restore", "restore one image (larger inputs are tiled)");
    restore->add_option("--checkpoint", restore_ckpt, "checkpoint file")->required();
    restore->add_option("--input", restore_in, "degraded image")->required();
    restore->add_option("--output", restore_out, "restored image")->required();

    // ablate
    TrainArgs ablate_args;
    std::string variant_name, ablate_eval, ablate_report;
    auto* ablate = app.add_subcommand("ablate", "train one ablation variant and report its scores");
    ablate->add_option("--variant", variant_name, "global-only, global-local, +pn, +pac or full")
        ->required()
        ->check(CLI::IsMember({"global-only", "global-local", "+pn", "+pac", "full"}));
    add_train_flags(ablate, ablate_args);
    ablate->add_option("--eval", ablate_eval, "manifest to score (default: --data)");
    ablate->add_option("--report", ablate_report, "JSONL report (default: <out>.eval.jsonl)");

    // gradcheck
    bool inject_fault = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    gradcheck->add_flag("--inject-fault", inject_fault, "append an op with a deliberately wrong gradient");

    try {
        // CLI11 consumes a reversed argument vector.
        std::vector<std::string> rest;
        if (args.size() > 1)
            rest.assign(args.rbegin(), args.rend() - 1);
        app.parse(rest);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const int threads = thread_budget();
        if (synth->parsed()) {
            const Size size = parse_size(size_text);
            DatasetRequest req;
            req.kind = parse_degradation_kind(task);
            req.backgrounds = load_backgrounds(bg_dir);
            require(count == 0 || !req.backgrounds.empty(), ErrorCode::Io,
                    "no background images (.ppm, .png) in " + bg_dir);
            req.count = count;
            req.height = size.height;
            req.width = size.width;
            req.seed = synth_seed;
            req.train_fraction = train_fraction;
            req.ranges = config_from(synth_config).synth;
            req.threads = threads;
            const auto summary = write_dataset(req, out_dir);
            out << "wrote " << summary.all.size() << " pairs (" << summary.split.train.size() << " train, "
                << summary.split.test.size() << " test) to " << out_dir << "\n";
        } else if (backgrounds->parsed()) {
            const Size size = parse_size(bg_size);
            fs::create_directories(bg_out);
            for (int i = 0; i < bg_count; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "bg_%04d.ppm", i);
                save_image(procedural_background(size.height, size.width, CounterRng::stream(bg_seed, uint64_t(i)).key()),
                           fs::path(bg_out) / name);
            }
            out << "wrote " << bg_count << " backgrounds to " << bg_out << "\n";
        } else if (train_cmd->parsed()) {
            run_training(train_args, std::nullopt, out);
        } else if (eval->parsed()) {
            const Trainer t = load_checkpoint(eval_ckpt);
            const auto samples = load_samples(eval_data);
            const auto& cfg = t.config();
            const auto report = evaluate(
                samples, [&](const Image& img) { return restore_exact(t.model(), img); }, cfg.input_h, cfg.input_w);
            const std::string path = eval_report.empty() ? eval_ckpt + ".eval.jsonl" : eval_report;
            write_text(path, format_report(report, eval_tag));
            print_summary(out, report, eval_tag);
            out << "report " << path << "\n";
        } else if (restore->parsed()) {
            const Trainer t = load_checkpoint(restore_ckpt);
            const Image img = load_image(restore_in);
            save_image(restore_image(t.model(), img), restore_out);
            out << "wrote " << restore_out << "\n";
        } else if (ablate->parsed()) {
            const Variant v = parse_variant(variant_name);
            const Trainer t = run_training(ablate_args, v, out);
            const auto samples = load_samples(ablate_eval.empty() ? ablate_args.data : ablate_eval);
            const auto& cfg = t.config();
            const auto report = evaluate(
                samples, [&](const Image& img) { return restore_exact(t.model(), img); }, cfg.input_h, cfg.input_w);
            const std::string path = ablate_report.empty() ? ablate_args.out + ".eval.jsonl" : ablate_report;
            write_text(path, format_report(report, variant_name));
            print_summary(out, report, variant_name);
            out << "report " << path << "\n";
        } else if (gradcheck->parsed()) {
            const auto report = check_gradients(gradcheck_suite(inject_fault));
            out << report.table();
            if (!report.all_passed()) {
                for (const auto& e : report.entries)
                    if (!e.passed)
                        err << "gradient check failed: " << e.op << "\n";
                return kFailure;
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::Config ? kUsage : kFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}

} // namespace glsgn::cli
