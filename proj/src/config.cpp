#include "tractgrid/config.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"

namespace tractgrid {

namespace {

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
        throw ParseError("config key " + key + ": '" + v + "' is not a finite number");
    return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        throw ParseError("config key " + key + ": '" + v + "' is not a non-negative integer");
    return x;
}

void check(bool ok, const std::string& key, const std::string& range) {
    if (!ok) throw ParseError("config key " + key + ": value outside " + range);
}

ConfigKey real_key(std::string name, std::string help, double lo, double hi, bool lo_open, bool hi_open,
                   double* (*field)(RunConfig&), double (*read)(const RunConfig&)) {
    auto bound = [](double x) { return std::isinf(x) ? std::string(x > 0 ? "inf" : "-inf") : format_double(x); };
    std::string range = std::string(lo_open ? "(" : "[") + bound(lo) + ", " + bound(hi) + (hi_open ? ")" : "]");
    ConfigKey k;
    k.name = name;
    k.range = range;
    k.help = std::move(help);
    k.set = [=](RunConfig& c, const std::string& v) {
        const double x = to_double(name, v);
        check((lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi), name, range);
        *field(c) = x;
    };
    k.get = [=](const RunConfig& c) { return format_double(read(c)); };
    return k;
}

ConfigKey count_key(std::string name, std::string help, std::uint64_t lo, std::uint64_t hi,
                    std::size_t* (*field)(RunConfig&)) {
    std::string range = "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    ConfigKey k;
    k.name = name;
    k.range = range;
    k.help = std::move(help);
    k.set = [=](RunConfig& c, const std::string& v) {
        const auto x = to_uint(name, v);
        check(x >= lo && x <= hi, name, range);
        *field(c) = static_cast<std::size_t>(x);
    };
    k.get = [=](const RunConfig& c) {
        RunConfig copy = c;
        return std::to_string(*field(copy));
    };
    return k;
}

std::vector<ConfigKey> build_keys() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<ConfigKey> keys;

    ConfigKey variant;
    variant.name = "variant";
    variant.range = "aux | triplet | simclr | none";
    variant.help = "latent-shaping objective";
    variant.set = [](RunConfig& c, const std::string& v) {
        try {
            c.objective.variant = parse_variant(v);
        } catch (const InvalidInput&) {
            throw ParseError("config key variant: '" + v + "' is not one of aux, triplet, simclr, none");
        }
    };
    variant.get = [](const RunConfig& c) { return to_string(c.objective.variant); };
    keys.push_back(std::move(variant));

    keys.push_back(real_key("beta", "total-correlation weight", 0.0, inf, false, true,
                            [](RunConfig& c) { return &c.objective.beta; },
                            [](const RunConfig& c) { return c.objective.beta; }));
    keys.push_back(real_key("lambda_vae", "weight of the beta-TCVAE loss", 0.0, inf, false, true,
                            [](RunConfig& c) { return &c.objective.weights.vae; },
                            [](const RunConfig& c) { return c.objective.weights.vae; }));
    keys.push_back(real_key("lambda_cls", "weight of the auxiliary BCE (aux)", 0.0, inf, false, true,
                            [](RunConfig& c) { return &c.objective.weights.cls; },
                            [](const RunConfig& c) { return c.objective.weights.cls; }));
    keys.push_back(real_key("lambda_triplet", "weight of the triplet loss (triplet)", 0.0, inf, false, true,
                            [](RunConfig& c) { return &c.objective.weights.triplet; },
                            [](const RunConfig& c) { return c.objective.weights.triplet; }));
    keys.push_back(real_key("lambda_simclr", "weight of NT-Xent (simclr)", 0.0, inf, false, true,
                            [](RunConfig& c) { return &c.objective.weights.simclr; },
                            [](const RunConfig& c) { return c.objective.weights.simclr; }));
    keys.push_back(real_key("margin", "triplet margin alpha", 0.0, inf, true, true,
                            [](RunConfig& c) { return &c.objective.triplet_margin; },
                            [](const RunConfig& c) { return c.objective.triplet_margin; }));
    keys.push_back(real_key("tau", "NT-Xent temperature", 0.0, 10.0, true, false,
                            [](RunConfig& c) { return &c.objective.temperature; },
                            [](const RunConfig& c) { return c.objective.temperature; }));
    keys.push_back(real_key("aug_sigma", "augmentation noise sigma", 0.0, 1.0, false, false,
                            [](RunConfig& c) { return &c.objective.augment.noise_sigma; },
                            [](const RunConfig& c) { return c.objective.augment.noise_sigma; }));
    keys.push_back(real_key("aug_mask_p", "augmentation pixel-mask probability", 0.0, 1.0, false, true,
                            [](RunConfig& c) { return &c.objective.augment.mask_probability; },
                            [](const RunConfig& c) { return c.objective.augment.mask_probability; }));
    keys.push_back(real_key("lr", "Adam learning rate", 0.0, 1.0, true, false,
                            [](RunConfig& c) { return &c.adam.learning_rate; },
                            [](const RunConfig& c) { return c.adam.learning_rate; }));
    keys.push_back(count_key("batch_size", "mini-batch size", 1, 4096, [](RunConfig& c) { return &c.batch_size; }));
    keys.push_back(count_key("epochs", "training epochs", 0, 100000, [](RunConfig& c) { return &c.epochs; }));

    ConfigKey seed;
    seed.name = "seed";
    seed.range = "[0, 2^64)";
    seed.help = "master seed (init, batching, noise, splits)";
    seed.set = [](RunConfig& c, const std::string& v) { c.seed = to_uint("seed", v); };
    seed.get = [](const RunConfig& c) { return std::to_string(c.seed); };
    keys.push_back(std::move(seed));

    keys.push_back(count_key("n_splits", "number of stratified train/test splits", 1, 100,
                             [](RunConfig& c) { return &c.split.n_splits; }));
    keys.push_back(real_key("test_fraction", "held-out fraction per class", 0.0, 1.0, true, true,
                            [](RunConfig& c) { return &c.split.test_fraction; },
                            [](const RunConfig& c) { return c.split.test_fraction; }));
    keys.push_back(count_key("split_index", "split used by train and eval", 0, 99,
                             [](RunConfig& c) { return &c.split_index; }));
    keys.push_back(count_key("mig_bins", "equal-frequency bins for MIG", 2, 1000,
                             [](RunConfig& c) { return &c.mig_bins; }));
    keys.push_back(count_key("knn_k", "neighbours for KNN separability", 1, 99, [](RunConfig& c) { return &c.knn_k; }));
    return keys;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

} // namespace

TrainOptions RunConfig::train_options() const {
    TrainOptions t;
    t.objective = objective;
    t.adam = adam;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.seed = seed;
    return t;
}

EvalOptions RunConfig::eval_options() const {
    EvalOptions e;
    e.variant = objective.variant;
    e.k = knn_k;
    e.mig_bins = mig_bins;
    return e;
}

void RunConfig::validate() const {
    objective.validate();
    split.validate();
    if (split_index >= split.n_splits) throw ParseError("config: split_index must be < n_splits");
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& k : config_keys())
        if (k.name == key) {
            k.set(config, value);
            return;
        }
    throw ParseError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const ParseError& e) {
            throw ParseError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

std::string config_to_text(const RunConfig& config) {
    std::string s;
    for (const auto& k : config_keys()) s += k.name + " = " + k.get(config) + "\n";
    return s;
}

} // namespace tractgrid
