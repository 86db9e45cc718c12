#include "glsgn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace glsgn {

using nlohmann::json;

namespace {

struct VariantName {
    Variant variant;
    const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::GlobalOnly, "global-only"}, {Variant::GlobalLocal, "global-local"}, {Variant::PlusPn, "+pn"},
    {Variant::PlusPac, "+pac"},           {Variant::Full, "full"},
};

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
    fail(ErrorCode::Config, "config: " + key + ": " + what);
}

// Reads the fields of one JSON object and rejects anything left over.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            config_error(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

    const json* find(const std::string& name) {
        seen_.insert(name);
        auto it = j_.find(name);
        return it == j_.end() ? nullptr : &*it;
    }

    void integer(const std::string& name, int& out, int lo) {
        if (const json* v = find(name)) {
            if (!v->is_number_integer())
                config_error(key(name), "expected an integer");
            const auto x = v->get<int64_t>();
            if (x < lo || x > 1'000'000'000)
                config_error(key(name), "out of range");
            out = int(x);
        }
    }

    void seed(const std::string& name, uint64_t& out) {
        if (const json* v = find(name)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<int64_t>() >= 0))
                config_error(key(name), "expected a nonnegative integer");
            out = v->get<uint64_t>();
        }
    }

    void number(const std::string& name, double& out, double lo, double hi) {
        if (const json* v = find(name)) {
            if (!v->is_number())
                config_error(key(name), "expected a number");
            const double x = v->get<double>();
            if (!(x >= lo && x <= hi))
                config_error(key(name), "out of range");
            out = x;
        }
    }

    void range(const std::string& name, Range& out) {
        if (const json* v = find(name)) {
            if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
                config_error(key(name), "expected [lo, hi]");
            Range r{(*v)[0].get<double>(), (*v)[1].get<double>()};
            if (!(r.lo <= r.hi))
                config_error(key(name), "lo exceeds hi");
            out = r;
        }
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k))
                config_error(key(k), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json model_to_json(const GlsgnConfig& c) {
    json geometry = json::array();
    for (const auto& g : c.geometry)
        geometry.push_back({{"divisor", g.divisor}, {"rows", g.rows}, {"cols", g.cols}});
    return {
        {"inputH", c.input_h},
        {"inputW", c.input_w},
        {"localPathways", c.local_pathways},
        {"pathwayGeometry", geometry},
        {"baseChannels", c.base_channels},
        {"encoderDepth", c.encoder_depth},
        {"residualBlocksPerDecoder", c.residual_blocks},
        {"pacWeights", {{"sigma1", c.pac.sigma1}, {"sigma2", c.pac.sigma2}}},
        {"pnEpsilon", c.pn_epsilon},
        {"lossWeights",
         {{"alpha1", c.loss.alpha1},
          {"beta1", c.loss.beta1},
          {"alpha2", c.loss.alpha2},
          {"beta2", c.loss.beta2},
          {"lambda1", c.loss.lambda1},
          {"lambda2", c.loss.lambda2},
          {"lambda3", c.loss.lambda3}}},
        {"seed", c.seed},
        {"variant", to_string(c.variant)},
    };
}

GlsgnConfig model_from_json(const json& j, const std::string& path) {
    GlsgnConfig c;
    ObjectReader r(j, path);
    r.integer("inputH", c.input_h, 1);
    r.integer("inputW", c.input_w, 1);
    r.integer("localPathways", c.local_pathways, 1);
    if (const json* g = r.find("pathwayGeometry")) {
        if (!g->is_array())
            config_error(r.key("pathwayGeometry"), "expected an array");
        c.geometry.clear();
        for (size_t i = 0; i < g->size(); ++i) {
            PathwayGeometry pg;
            ObjectReader gr((*g)[i], r.key("pathwayGeometry") + "[" + std::to_string(i) + "]");
            gr.integer("divisor", pg.divisor, 1);
            gr.integer("rows", pg.rows, 1);
            gr.integer("cols", pg.cols, 1);
            gr.finish();
            c.geometry.push_back(pg);
        }
    }
    r.integer("baseChannels", c.base_channels, 1);
    r.integer("encoderDepth", c.encoder_depth, 0);
    r.integer("residualBlocksPerDecoder", c.residual_blocks, 0);
    if (const json* p = r.find("pacWeights")) {
        ObjectReader pr(*p, r.key("pacWeights"));
        pr.number("sigma1", c.pac.sigma1, 0, 1);
        pr.number("sigma2", c.pac.sigma2, 0, 1);
        pr.finish();
    }
    r.number("pnEpsilon", c.pn_epsilon, 0, 1);
    if (const json* l = r.find("lossWeights")) {
        ObjectReader lr(*l, r.key("lossWeights"));
        lr.number("alpha1", c.loss.alpha1, 0, 1e6);
        lr.number("beta1", c.loss.beta1, 0, 1e6);
        lr.number("alpha2", c.loss.alpha2, 0, 1e6);
        lr.number("beta2", c.loss.beta2, 0, 1e6);
        lr.number("lambda1", c.loss.lambda1, 0, 1e6);
        lr.number("lambda2", c.loss.lambda2, 0, 1e6);
        lr.number("lambda3", c.loss.lambda3, 0, 1e6);
        lr.finish();
    }
    r.seed("seed", c.seed);
    if (const json* v = r.find("variant")) {
        if (!v->is_string())
            config_error(r.key("variant"), "expected a string");
        try {
            c.variant = parse_variant(v->get<std::string>());
        } catch (const Error& e) {
            config_error(r.key("variant"), e.what());
        }
    }
    r.finish();
    return c;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

json synth_to_json(const SynthRanges& s) {
    return {
        {"reflectionSigma", range_json(s.reflection_sigma)}, {"reflectionBeta", range_json(s.reflection_beta)},
        {"rainDensity", range_json(s.rain_density)},         {"rainLength", range_json(s.rain_length)},
        {"rainAngle", range_json(s.rain_angle)},             {"rainSigma", range_json(s.rain_sigma)},
        {"rainContrast", range_json(s.rain_contrast)},       {"hazeAirlight", range_json(s.haze_airlight)},
        {"hazeBeta", range_json(s.haze_beta)},
    };
}

SynthRanges synth_from_json(const json& j, const std::string& path) {
    SynthRanges s;
    ObjectReader r(j, path);
    r.range("reflectionSigma", s.reflection_sigma);
    r.range("reflectionBeta", s.reflection_beta);
    r.range("rainDensity", s.rain_density);
    r.range("rainLength", s.rain_length);
    r.range("rainAngle", s.rain_angle);
    r.range("rainSigma", s.rain_sigma);
    r.range("rainContrast", s.rain_contrast);
    r.range("hazeAirlight", s.haze_airlight);
    r.range("hazeBeta", s.haze_beta);
    r.finish();
    return s;
}

bool same_range(const Range& a, const Range& b) { return a.lo == b.lo && a.hi == b.hi; }

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Config, std::string("config: malformed JSON: ") + e.what());
    }
}

} // namespace

const char* to_string(Variant v) {
    for (const auto& n : kVariantNames)
        if (n.variant == v)
            return n.name;
    return "?";
}

Variant parse_variant(const std::string& name) {
    for (const auto& n : kVariantNames)
        if (name == n.name)
            return n.variant;
    fail(ErrorCode::InvalidArgument,
         "unknown variant '" + name + "' (expected global-only, global-local, +pn, +pac or full)");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::GlobalOnly, Variant::GlobalLocal, Variant::PlusPn,
                                        Variant::PlusPac, Variant::Full};
    return v;
}

bool operator==(const GlsgnConfig& a, const GlsgnConfig& b) {
    return a.input_h == b.input_h && a.input_w == b.input_w && a.local_pathways == b.local_pathways &&
           a.geometry == b.geometry && a.base_channels == b.base_channels && a.encoder_depth == b.encoder_depth &&
           a.residual_blocks == b.residual_blocks && a.pac.sigma1 == b.pac.sigma1 && a.pac.sigma2 == b.pac.sigma2 &&
           a.pn_epsilon == b.pn_epsilon && a.loss == b.loss && a.seed == b.seed && a.variant == b.variant;
}

bool operator==(const CliConfig& a, const CliConfig& b) {
    const auto& x = a.synth;
    const auto& y = b.synth;
    return a.model == b.model && a.train == b.train && same_range(x.reflection_sigma, y.reflection_sigma) &&
           same_range(x.reflection_beta, y.reflection_beta) && same_range(x.rain_density, y.rain_density) &&
           same_range(x.rain_length, y.rain_length) && same_range(x.rain_angle, y.rain_angle) &&
           same_range(x.rain_sigma, y.rain_sigma) && same_range(x.rain_contrast, y.rain_contrast) &&
           same_range(x.haze_airlight, y.haze_airlight) && same_range(x.haze_beta, y.haze_beta);
}

void validate(const GlsgnConfig& c) {
    auto check = [](bool ok, const std::string& key, const std::string& what) {
        if (!ok)
            config_error(key, what);
    };
    check(c.input_h % 16 == 0 && c.input_h > 0, "inputH", "must be a positive multiple of 16");
    check(c.input_w % 16 == 0 && c.input_w > 0, "inputW", "must be a positive multiple of 16");
    check(c.local_pathways >= 1, "localPathways", "must be at least 1");
    check(int(c.geometry.size()) == c.local_pathways + 1, "pathwayGeometry",
          "needs localPathways local entries plus one global entry");
    check(c.base_channels >= 1, "baseChannels", "must be positive");
    check(c.encoder_depth >= 1, "encoderDepth", "must be positive");
    check(c.residual_blocks >= 0, "residualBlocksPerDecoder", "must be nonnegative");
    check(c.pn_epsilon >= 0, "pnEpsilon", "must be nonnegative");
    check(c.pac.sigma1 >= 0 && c.pac.sigma1 <= 1, "pacWeights.sigma1", "must lie in [0,1]");
    check(c.pac.sigma2 >= 0 && c.pac.sigma2 <= 1, "pacWeights.sigma2", "must lie in [0,1]");
    const auto& w = c.loss;
    for (double v : {w.alpha1, w.beta1, w.alpha2, w.beta2, w.lambda1, w.lambda2, w.lambda3})
        check(v >= 0, "lossWeights", "weights must be nonnegative");
    check(c.geometry[0].divisor == 1, "pathwayGeometry[0].divisor", "the first local pathway runs at full size");

    const int unit = 1 << c.encoder_depth;
    for (size_t i = 0; i < c.geometry.size(); ++i) {
        const auto& g = c.geometry[i];
        const std::string key = "pathwayGeometry[" + std::to_string(i) + "]";
        if (i > 0 && i < size_t(c.local_pathways))
            check(g.divisor >= c.geometry[i - 1].divisor, key + ".divisor",
                  "divisors must be nondecreasing across local pathways");
        check(c.input_h % g.divisor == 0 && c.input_w % g.divisor == 0, key + ".divisor",
              "must divide the input size");
        const int h = c.input_h / g.divisor, wd = c.input_w / g.divisor;
        check(h % g.rows == 0 && wd % g.cols == 0, key, "grid must tile the pathway input");
        const int ph = h / g.rows, pw = wd / g.cols;
        check(ph % unit == 0 && pw % unit == 0 && ph >= 2 && pw >= 2, key,
              "patch size " + std::to_string(ph) + "x" + std::to_string(pw) + " is not divisible by 2^encoderDepth");
    }
    if (c.uses_lp()) {
        check(c.local_pathways == 3, "localPathways", "LP fusion needs exactly 3 local pathways");
        check(c.geometry[1].divisor == 2 && c.geometry[2].divisor == 4, "pathwayGeometry",
              "LP fusion needs local divisors 1, 2, 4");
        check(c.geometry[3].divisor == 4, "pathwayGeometry[3].divisor", "LP fusion needs the global pathway at 1/4");
    }
}

GlsgnConfig ablation_variant(GlsgnConfig config, Variant variant) {
    config.variant = variant;
    validate(config);
    return config;
}

void validate(const TrainRun& run, const GlsgnConfig& model) {
    if (run.steps < 0)
        config_error("train.steps", "must be nonnegative");
    if (run.batch_size < 1)
        config_error("train.batchSize", "must be positive");
    if (run.log_every < 1)
        config_error("train.logEvery", "must be positive");
    if (run.crop_h != model.input_h || run.crop_w != model.input_w)
        config_error("train.cropH", "crop must equal the model input size");
    if (run.crop_h % 16 != 0 || run.crop_w % 16 != 0)
        config_error("train.cropH", "crop must be divisible by 16");
}

CliConfig parse_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    CliConfig c;
    ObjectReader r(j, "");
    if (const json* m = r.find("model"))
        c.model = model_from_json(*m, "model");
    if (const json* t = r.find("train")) {
        ObjectReader tr(*t, "train");
        tr.integer("steps", c.train.steps, 0);
        tr.integer("batchSize", c.train.batch_size, 1);
        tr.integer("cropH", c.train.crop_h, 1);
        tr.integer("cropW", c.train.crop_w, 1);
        tr.integer("logEvery", c.train.log_every, 1);
        tr.seed("seed", c.train.seed);
        tr.finish();
    }
    if (const json* s = r.find("synth"))
        c.synth = synth_from_json(*s, "synth");
    r.finish();
    return c;
}

std::string serialize_config(const CliConfig& c) {
    json j{
        {"model", model_to_json(c.model)},
        {"train",
         {{"steps", c.train.steps},
          {"batchSize", c.train.batch_size},
          {"cropH", c.train.crop_h},
          {"cropW", c.train.crop_w},
          {"logEvery", c.train.log_every},
          {"seed", c.train.seed}}},
        {"synth", synth_to_json(c.synth)},
    };
    return j.dump(2) + "\n";
}

CliConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_model_config(const GlsgnConfig& config) { return model_to_json(config).dump(); }

GlsgnConfig parse_model_config(const std::string& json_text) { return model_from_json(parse_json(json_text), "model"); }

} // namespace glsgn
