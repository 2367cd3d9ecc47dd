#include "tractgrid/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "tractgrid/config.hpp"
#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"
#include "tractgrid/evaluation.hpp"
#include "tractgrid/grid_embed.hpp"
#include "tractgrid/random.hpp"
#include "tractgrid/training.hpp"

namespace tractgrid {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string git_blob_sha1(const std::string& bytes) {
    const std::string payload = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        throw Error("SHA-1 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return hex.str();
}

namespace {

// Records inputs and outputs of one command and writes the manifest last.
class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void input(const fs::path& path) {
        inputs_.push_back({{"path", path.string()}, {"git_blob_sha1", git_blob_sha1(read_file(path))}});
    }
    void output(const fs::path& path) { outputs_.push_back(path.string()); }
    void config(const RunConfig& c) {
        ordered_json j = ordered_json::object();
        for (const auto& k : config_keys()) j[k.name] = k.get(c);
        config_ = std::move(j);
        seed_ = c.seed;
    }
    void seed(std::uint64_t s) { seed_ = s; }
    void status(std::string s) { status_ = std::move(s); }
    void extra(const std::string& key, ordered_json value) { extra_[key] = std::move(value); }

    void write(const fs::path& path) {
        ordered_json j;
        j["command"] = command_;
        j["status"] = status_;
        if (!config_.is_null()) j["config"] = config_;
        j["inputs"] = inputs_;
        if (seed_) j["seed"] = *seed_;
        j["outputs"] = outputs_;
        for (auto& [k, v] : extra_.items()) j[k] = v;
        j["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_file_atomic(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    ordered_json inputs_ = ordered_json::array();
    std::vector<std::string> outputs_;
    ordered_json config_;
    ordered_json extra_ = ordered_json::object();
    std::optional<std::uint64_t> seed_;
    std::string status_ = "ok";
};

fs::path sibling_manifest(const fs::path& out) {
    auto p = out;
    p += ".manifest.json";
    return p;
}

// Config file first, then explicit --<key> flags on top.
struct ConfigOptions {
    std::string file;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "flat key = value config file");
        const RunConfig defaults;
        for (const auto& k : config_keys())
            app->add_option("--" + k.name, overrides[k.name],
                            k.help + " (default " + k.get(defaults) + ", range " + k.range + ")");
    }

    RunConfig resolve(const CLI::App* app) const {
        RunConfig c;
        if (!file.empty()) c = parse_config_text(read_file(file));
        for (const auto& k : config_keys())
            if (app->count("--" + k.name) > 0) k.set(c, overrides.at(k.name));
        c.validate();
        return c;
    }
};

std::string key_table() {
    const RunConfig defaults;
    std::ostringstream s;
    s << "Config keys (config file `key = value`, or --<key> on train/eval/experiment/gradcheck):\n";
    for (const auto& k : config_keys())
        s << "  " << std::left << std::setw(15) << k.name << " default " << std::setw(8) << k.get(defaults)
          << " range " << k.range << "  " << k.help << "\n";
    s << "Exit codes: 0 ok, 1 other failure, 2 parse/format, 3 capacity, 4 numeric, 5 shape.";
    return s.str();
}

SplitSpec split_spec(const RunConfig& c) {
    SplitSpec s = c.split;
    s.seed = c.seed;
    return s;
}

Dataset load_dataset(const std::string& subjects, const std::string& layout, const std::string& factors,
                     Manifest& manifest) {
    Dataset d;
    d.layout = load_layout(layout);
    manifest.input(layout);
    d.records = load_subjects_csv(subjects);
    manifest.input(subjects);
    if (!factors.empty()) {
        d.factors = load_factors_csv(factors);
        manifest.input(factors);
    }
    d.validate();
    return d;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || !std::isfinite(v))
            throw ParseError("'" + item + "' is not a finite number");
        out.push_back(v);
    }
    if (out.empty()) throw ParseError("empty value list");
    return out;
}

// --- commands ---------------------------------------------------------------------

int cmd_embed_grid(const std::string& centroids_path, const std::string& out_path, std::ostream& out) {
    Manifest manifest("embed-grid");
    const CentroidSet centroids = load_centroids_csv(centroids_path);
    manifest.input(centroids_path);
    const EmbedResult r = embed_grid_detailed(centroids);
    save_layout(out_path, r.layout);
    manifest.output(out_path);
    manifest.extra("tracts", r.layout.occupied_count());
    manifest.extra("collisions_resolved", r.collisions);
    manifest.extra("total_squared_displacement", r.total_squared_displacement);
    manifest.write(sibling_manifest(out_path));
    out << "tracts " << r.layout.occupied_count() << "\n"
        << "collisions resolved " << r.collisions << "\n"
        << "total squared displacement " << format_double(r.total_squared_displacement) << "\n";
    return kExitOk;
}

int cmd_rasterize(const std::string& subjects, const std::string& layout, const std::string& out_path,
                  const std::string& export_dir, std::ostream& out) {
    Manifest manifest("rasterize");
    const Dataset d = load_dataset(subjects, layout, "", manifest);
    const auto images = rasterize_all(d);
    std::string csv = "subject_id,label";
    for (std::size_t p = 1; p <= kImagePixels; ++p) csv += ",px_" + std::to_string(p);
    csv += '\n';
    for (std::size_t i = 0; i < images.size(); ++i) {
        csv += d.records[i].subject_id + ',' + std::to_string(d.records[i].label);
        for (double v : images[i].pixels) csv += ',' + format_double(v);
        csv += '\n';
    }
    write_file_atomic(out_path, csv);
    manifest.output(out_path);
    if (!export_dir.empty()) {
        for (std::size_t i = 0; i < images.size(); ++i) {
            const fs::path stem = fs::path(export_dir) / d.records[i].subject_id;
            export_image(stem, images[i]);
            manifest.output(stem.string() + ".csv");
            manifest.output(stem.string() + ".pgm");
        }
    }
    manifest.write(sibling_manifest(out_path));
    out << "rasterized " << images.size() << " subjects\n";
    return kExitOk;
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
    Manifest manifest("synth");
    manifest.seed(seed);
    SyntheticSpec spec = default_synthetic_spec();
    if (!spec_path.empty()) {
        spec = parse_synthetic_spec(read_file(spec_path));
        manifest.input(spec_path);
    }
    const SyntheticCohort cohort = generate_synthetic(spec, seed);
    const fs::path dir(out_dir);
    save_centroids_csv(dir / "centroids.csv", cohort.centroids);
    save_layout(dir / "layout.json", cohort.dataset.layout);
    save_subjects_csv(dir / "subjects.csv", cohort.dataset.records);
    save_factors_csv(dir / "factors.csv", *cohort.dataset.factors);
    for (const char* f : {"centroids.csv", "layout.json", "subjects.csv", "factors.csv"}) manifest.output(dir / f);
    manifest.write(dir / "manifest.json");
    out << "generated " << cohort.dataset.records.size() << " subjects over " << spec.n_tracts << " tracts\n";
    return kExitOk;
}

struct DataPaths {
    std::string subjects, layout, factors;
};

int cmd_train(const RunConfig& config, const DataPaths& paths, const std::string& out_dir, std::ostream& out,
              std::ostream& err) {
    Manifest manifest("train");
    manifest.config(config);
    const Dataset d = load_dataset(paths.subjects, paths.layout, paths.factors, manifest);
    const auto images = rasterize_all(d);
    const auto labels = d.labels();
    const Split split = split_for(labels, split_spec(config), config.split_index);
    std::vector<FaImage> train_images;
    std::vector<int> train_labels;
    for (auto i : split.train) {
        train_images.push_back(images[i]);
        train_labels.push_back(labels[i]);
    }

    VaeModel model(model_seed(config.seed));
    const TrainResult result =
        train_model(model, train_images, train_labels, occupancy(d.layout), config.train_options());

    const fs::path dir(out_dir);
    save_checkpoint(dir / "checkpoint.bin", model.parameters());
    write_file_atomic(dir / "loss_curve.csv", curve_to_csv(result.curve));
    manifest.output(dir / "checkpoint.bin");
    manifest.output(dir / "loss_curve.csv");
    manifest.extra("steps", result.steps);
    manifest.extra("train_subjects", split.train.size());
    if (result.numeric_failure) {
        manifest.status("numeric_failure: " + result.failure_message);
        manifest.write(dir / "manifest.json");
        err << "error: " << result.failure_message << " (last good checkpoint kept)\n";
        return kExitNumeric;
    }
    manifest.write(dir / "manifest.json");
    out << "trained " << result.steps << " steps on " << split.train.size() << " subjects\n";
    if (!result.curve.empty()) out << "final total loss " << format_double(result.curve.back().total) << "\n";
    return kExitOk;
}

int cmd_eval(const RunConfig& config, const DataPaths& paths, const std::string& checkpoint, const std::string& out_path,
             bool all_splits, bool want_mig, std::ostream& out) {
    Manifest manifest("eval");
    manifest.config(config);
    const Dataset d = load_dataset(paths.subjects, paths.layout, paths.factors, manifest);
    VaeModel model;
    load_checkpoint(checkpoint, model.parameters());
    manifest.input(checkpoint);
    EvalOptions options = config.eval_options();
    options.compute_mig = want_mig;
    const MetricsReport report = evaluate_model(model, d, split_spec(config), options,
                                                all_splits ? std::nullopt : std::optional(config.split_index));
    write_file_atomic(out_path, to_json(report));
    manifest.output(out_path);
    manifest.write(sibling_manifest(out_path));
    out << "accuracy " << format_double(report.accuracy.mean) << " f1 " << format_double(report.f1.mean)
        << " separability " << format_double(report.separability.mean) << " recon_mse "
        << format_double(report.recon_mse.mean);
    if (report.mig) out << " mig " << format_double(report.mig->mean) << (report.label_as_factor ? " (label-as-factor)" : "");
    out << "\n";
    return kExitOk;
}

int cmd_experiment(const RunConfig& config, const DataPaths& paths, const std::string& out_dir, std::ostream& out) {
    Manifest manifest("experiment");
    manifest.config(config);
    const Dataset d = load_dataset(paths.subjects, paths.layout, paths.factors, manifest);
    const MetricsReport report = run_experiment(d, config.train_options(), split_spec(config), config.eval_options());
    const fs::path dir(out_dir);
    write_file_atomic(dir / "metrics.json", to_json(report));
    manifest.output(dir / "metrics.json");
    manifest.write(dir / "manifest.json");
    out << "accuracy " << format_double(report.accuracy.mean) << " +- " << format_double(report.accuracy.std)
        << " f1 " << format_double(report.f1.mean) << " separability " << format_double(report.separability.mean)
        << "\n";
    return kExitOk;
}

struct GradcheckArgs {
    std::size_t entries = 16;
    std::uint64_t steps = 0;
    std::size_t batch = 4;
    std::string out;
};

int cmd_gradcheck(const RunConfig& config, const DataPaths& paths, const GradcheckArgs& args, std::ostream& out) {
    Manifest manifest("gradcheck");
    manifest.config(config);
    Dataset d;
    if (!paths.subjects.empty()) {
        d = load_dataset(paths.subjects, paths.layout, paths.factors, manifest);
    } else {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_subjects = 32;
        d = generate_synthetic(spec, config.seed).dataset;
    }
    const auto images = rasterize_all(d);
    const auto labels = d.labels();
    if (args.batch < 2 || args.batch > images.size()) throw InvalidInput("gradcheck: batch must lie in [2, subjects]");

    // Alternate classes so the triplet term has positives and negatives.
    std::vector<std::size_t> rows;
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (std::size_t j = 0; rows.size() < args.batch; ++j) {
        for (int c : {0, 1})
            if (j < by_class[c].size() && rows.size() < args.batch) rows.push_back(by_class[c][j]);
        if (j > labels.size()) break;
    }

    ordered_json report = ordered_json::array();
    bool all_pass = true;
    for (Variant v : {Variant::aux, Variant::triplet, Variant::simclr}) {
        RunConfig vc = config;
        vc.objective.variant = v;
        VaeModel model(model_seed(config.seed));
        if (args.steps > 0) {
            TrainOptions t = vc.train_options();
            t.max_steps = args.steps;
            t.epochs = std::numeric_limits<std::size_t>::max();
            const auto r = train_model(model, images, labels, occupancy(d.layout), t);
            if (r.numeric_failure) throw NumericError(r.failure_message);
        }
        const TrainBatch batch = make_batch(images, labels, occupancy(d.layout), rows, derive_seed(config.seed, 30),
                                            images.size());
        GradCheckOptions opt;
        opt.max_entries_per_param = args.entries;
        opt.seed = derive_seed(config.seed, 31);
        const GradCheckReport r = check_gradients(model, batch, vc.objective, opt);
        all_pass = all_pass && r.pass;
        out << to_string(v) << ": max relative error " << format_double(r.max_relative_error) << ", "
            << r.entries_held << " kink-straddling entries checked on the base piece "
            << (r.pass ? "PASS" : "FAIL") << "\n";
        ordered_json jv;
        jv["variant"] = to_string(v);
        jv["pass"] = r.pass;
        jv["max_relative_error"] = r.max_relative_error;
        jv["entries_held"] = r.entries_held;
        ordered_json params = ordered_json::array();
        for (const auto& p : r.params)
            params.push_back({{"name", p.name},
                              {"entries_checked", p.entries_checked},
                              {"entries_held", p.entries_held},
                              {"max_relative_error", p.max_relative_error},
                              {"worst_index", p.worst_index},
                              {"worst_analytic", p.worst_analytic},
                              {"worst_numeric", p.worst_numeric}});
        jv["params"] = std::move(params);
        report.push_back(std::move(jv));
    }
    if (!args.out.empty()) {
        ordered_json j;
        j["steps_before_check"] = args.steps;
        j["entries_per_tensor"] = args.entries;
        j["pass"] = all_pass;
        j["variants"] = std::move(report);
        write_file_atomic(args.out, j.dump(2) + "\n");
        manifest.output(args.out);
        manifest.status(all_pass ? "ok" : "gradient check failed");
        manifest.write(sibling_manifest(args.out));
    }
    return all_pass ? kExitOk : kExitFailure;
}

struct TraverseArgs {
    std::string checkpoint, subject, values, range, out_dir;
    std::size_t dim = 0;
};

int cmd_traverse(const DataPaths& paths, const TraverseArgs& args, std::ostream& out) {
    Manifest manifest("traverse");
    const Dataset d = load_dataset(paths.subjects, paths.layout, "", manifest);
    if (d.records.empty()) throw InvalidInput("traverse: no subjects");
    VaeModel model;
    load_checkpoint(args.checkpoint, model.parameters());
    manifest.input(args.checkpoint);
    if (args.dim >= kLatentDim) throw InvalidInput("traverse: dim must lie in [0, 32)");

    std::size_t row = 0;
    if (!args.subject.empty()) {
        auto it = std::find_if(d.records.begin(), d.records.end(),
                               [&](const SubjectRecord& r) { return r.subject_id == args.subject; });
        if (it == d.records.end()) throw InvalidInput("traverse: unknown subject '" + args.subject + "'");
        row = static_cast<std::size_t>(it - d.records.begin());
    }
    const FaImage base_image = rasterize(d.records[row], d.layout);
    const auto [mu, logvar] = encode(model, base_image);

    std::vector<double> values;
    if (!args.values.empty()) {
        values = parse_values(args.values);
    } else {
        const auto r = parse_values(args.range.empty() ? "-3,3,7" : args.range);
        if (r.size() != 3 || r[2] < 1 || r[2] != std::floor(r[2])) throw ParseError("--range expects lo,hi,steps");
        const auto steps = static_cast<std::size_t>(r[2]);
        for (std::size_t i = 0; i < steps; ++i)
            values.push_back(steps == 1 ? r[0] : r[0] + (r[1] - r[0]) * static_cast<double>(i) / static_cast<double>(steps - 1));
    }

    const Traversal t = latent_traversal(model, mu, args.dim, values);
    const fs::path dir(args.out_dir);
    const FaImage base = spatial_broadcast_decode(model, mu);
    export_image(dir / "base", base);
    manifest.output(dir / "base.csv");
    manifest.output(dir / "base.pgm");
    for (std::size_t i = 0; i < t.images.size(); ++i) {
        std::ostringstream name;
        name << "traverse_" << std::setw(3) << std::setfill('0') << i;
        export_image(dir / name.str(), t.images[i]);
        manifest.output(dir / (name.str() + ".csv"));
        manifest.output(dir / (name.str() + ".pgm"));
    }
    FaImage variance;
    variance.pixels = t.variance;
    write_file_atomic(dir / "variance.csv", image_to_csv(variance));
    double vmax = 0.0;
    for (double v : variance.pixels) vmax = std::max(vmax, v);
    FaImage scaled = variance;
    if (vmax > 0.0)
        for (double& v : scaled.pixels) v /= vmax;
    write_file_atomic(dir / "variance.pgm", image_to_pgm(scaled));
    manifest.output(dir / "variance.csv");
    manifest.output(dir / "variance.pgm");
    manifest.extra("subject", d.records[row].subject_id);
    manifest.extra("dim", args.dim);
    manifest.extra("values", values);
    manifest.write(dir / "manifest.json");
    out << "traversed dim " << args.dim << " over " << values.size() << " values for subject "
        << d.records[row].subject_id << "\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"tractgrid: DTI tract FA images, beta-TCVAE training and evaluation", "tractgrid"};
    app.require_subcommand(1);
    app.footer(key_table());

    std::string centroids, layout_out;
    auto* embed = app.add_subcommand("embed-grid", "embed 3D tract centroids into the 9x9 grid");
    embed->add_option("--centroids", centroids, "centroids CSV (tract_id,x,y,z)")->required();
    embed->add_option("--out", layout_out, "layout JSON to write")->required();

    DataPaths paths;
    std::string raster_out, export_dir;
    auto* raster = app.add_subcommand("rasterize", "turn subject FA vectors into 9x9 images");
    raster->add_option("--subjects", paths.subjects, "subjects CSV")->required();
    raster->add_option("--layout", paths.layout, "layout JSON")->required();
    raster->add_option("--out", raster_out, "images CSV to write")->required();
    raster->add_option("--export-dir", export_dir, "also write <subject>.csv/.pgm here");

    std::string spec_path, synth_out;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort with known factors");
    synth->add_option("--spec", spec_path, "key = value overrides of the default synthetic spec");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out-dir", synth_out, "output directory")->required();

    auto add_data = [&](CLI::App* sub, bool factors) {
        sub->add_option("--subjects", paths.subjects, "subjects CSV")->required();
        sub->add_option("--layout", paths.layout, "layout JSON")->required();
        if (factors) sub->add_option("--factors", paths.factors, "factor table CSV");
    };

    ConfigOptions train_cfg, eval_cfg, exp_cfg, grad_cfg;
    std::string train_out;
    auto* train = app.add_subcommand("train", "train one model on the training part of split_index");
    add_data(train, true);
    train->add_option("--out-dir", train_out, "writes checkpoint.bin, loss_curve.csv, manifest.json")->required();
    train_cfg.attach(train);

    std::string checkpoint, eval_out;
    bool all_splits = false, want_mig = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_data(eval, true);
    eval->add_option("--checkpoint", checkpoint, "checkpoint from train")->required();
    eval->add_option("--out", eval_out, "metrics JSON to write")->required();
    eval->add_flag("--all-splits", all_splits, "evaluate on every split instead of split_index");
    eval->add_flag("--mig", want_mig, "compute MIG (against the label when no factor table is given)");
    eval_cfg.attach(eval);

    std::string exp_out;
    auto* experiment = app.add_subcommand("experiment", "train and evaluate a fresh model per split");
    add_data(experiment, true);
    experiment->add_option("--out-dir", exp_out, "writes metrics.json, manifest.json")->required();
    exp_cfg.attach(experiment);

    GradcheckArgs grad_args;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of all three training objectives");
    grad->add_option("--subjects", paths.subjects, "subjects CSV (default: a small synthetic cohort)");
    grad->add_option("--layout", paths.layout, "layout JSON (with --subjects)");
    grad->add_option("--entries", grad_args.entries, "coordinates checked per parameter tensor (0 = all)");
    grad->add_option("--steps", grad_args.steps, "training steps before checking");
    grad->add_option("--batch", grad_args.batch, "batch size of the checked loss");
    grad->add_option("--out", grad_args.out, "report JSON to write");
    grad_cfg.attach(grad);

    TraverseArgs trav;
    auto* traverse = app.add_subcommand("traverse", "decode a subject's mu while sweeping one latent dim");
    add_data(traverse, false);
    traverse->add_option("--checkpoint", trav.checkpoint, "checkpoint from train")->required();
    traverse->add_option("--dim", trav.dim, "latent dimension in [0, 32)")->required();
    traverse->add_option("--subject", trav.subject, "subject id (default: first row)");
    traverse->add_option("--values", trav.values, "comma-separated values for the dimension");
    traverse->add_option("--range", trav.range, "lo,hi,steps (default -3,3,7)");
    traverse->add_option("--out-dir", trav.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitParse;
    }

    try {
        if (*embed) return cmd_embed_grid(centroids, layout_out, out);
        if (*raster) return cmd_rasterize(paths.subjects, paths.layout, raster_out, export_dir, out);
        if (*synth) return cmd_synth(spec_path, synth_seed, synth_out, out);
        if (*train) return cmd_train(train_cfg.resolve(train), paths, train_out, out, err);
        if (*eval) return cmd_eval(eval_cfg.resolve(eval), paths, checkpoint, eval_out, all_splits, want_mig, out);
        if (*experiment) return cmd_experiment(exp_cfg.resolve(experiment), paths, exp_out, out);
        if (*grad) return cmd_gradcheck(grad_cfg.resolve(grad), paths, grad_args, out);
        if (*traverse) return cmd_traverse(paths, trav, out);
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return kExitParse;
    } catch (const CapacityError& e) {
        err << "capacity error: " << e.what() << "\n";
        return kExitCapacity;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << "\n";
        return kExitShape;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace tractgrid
