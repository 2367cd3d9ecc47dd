#include <fstream>

#include "doctest.h"
#include "cli_runner.hpp"
#include "oracles.hpp"
#include "tractgrid/cli.hpp"
#include "tractgrid/config.hpp"
#include "tractgrid/dataio.hpp"
#include "tractgrid/training.hpp"

using namespace tractgrid;
namespace fs = std::filesystem;

using oracle::snapshot_dir;

namespace {

oracle::CliRun run(std::vector<std::string> args) { return oracle::run_cli(std::move(args)); }

} // namespace

TEST_CASE("help lists every config key with default and range") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    const RunConfig defaults;
    for (const auto& k : config_keys()) {
        CAPTURE(k.name);
        CHECK(r.out.find(k.name) != std::string::npos);
        CHECK(r.out.find(k.range) != std::string::npos);
    }
    const auto t = run({"train", "--help"});
    CHECK(t.code == 0);
    CHECK(t.out.find("--lambda_cls") != std::string::npos);
}

TEST_CASE("exit codes") {
    const auto dir = oracle::scratch_dir("cli_codes");
    CHECK(run({}).code == kExitParse);
    CHECK(run({"embed-grid", "--bogus"}).code == kExitParse);

    std::string csv = "tract_id,x,y,z\n";
    for (int i = 0; i < 82; ++i) csv += "T" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(i * i % 17) + ",0\n";
    std::ofstream(dir / "c82.csv") << csv;
    const auto cap = run({"embed-grid", "--centroids", (dir / "c82.csv").string(), "--out", (dir / "l.json").string()});
    CHECK(cap.code == kExitCapacity);
    CHECK(cap.err.find("capacity") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "l.json"));

    std::ofstream(dir / "bad.csv") << "tract_id,x,y,z\nA,1,2\n";
    CHECK(run({"embed-grid", "--centroids", (dir / "bad.csv").string(), "--out", (dir / "l.json").string()}).code ==
          kExitParse);
    CHECK(run({"embed-grid", "--centroids", (dir / "missing.csv").string(), "--out", (dir / "l.json").string()}).code ==
          kExitParse);
}

TEST_CASE("commands are byte-identical across reruns") {
    const auto dir = oracle::scratch_dir("cli_repro");
    std::ofstream(dir / "spec.txt") << "n_subjects = 30\n";
    const std::string data = (dir / "data").string();
    REQUIRE(run({"synth", "--spec", (dir / "spec.txt").string(), "--seed", "3", "--out-dir", data}).code == 0);
    const auto synth_first = snapshot_dir(data);
    REQUIRE(run({"synth", "--spec", (dir / "spec.txt").string(), "--seed", "3", "--out-dir", data}).code == 0);
    CHECK(snapshot_dir(data) == synth_first);
    CHECK(synth_first.size() == 5);

    const std::string subjects = data + "/subjects.csv", layout = data + "/layout.json", factors = data + "/factors.csv";

    // Embedding the generator's centroids reproduces its layout.
    const auto l1 = (dir / "embed" / "layout.json").string();
    REQUIRE(run({"embed-grid", "--centroids", data + "/centroids.csv", "--out", l1}).code == 0);
    CHECK(read_file(l1) == read_file(layout));
    const auto embed_first = snapshot_dir(dir / "embed");
    REQUIRE(run({"embed-grid", "--centroids", data + "/centroids.csv", "--out", l1}).code == 0);
    CHECK(snapshot_dir(dir / "embed") == embed_first);

    const auto raster = (dir / "raster" / "images.csv").string();
    REQUIRE(run({"rasterize", "--subjects", subjects, "--layout", layout, "--out", raster, "--export-dir",
                 (dir / "raster" / "img").string()}).code == 0);
    const auto raster_first = snapshot_dir(dir / "raster");
    REQUIRE(run({"rasterize", "--subjects", subjects, "--layout", layout, "--out", raster, "--export-dir",
                 (dir / "raster" / "img").string()}).code == 0);
    CHECK(snapshot_dir(dir / "raster") == raster_first);

    const std::vector<std::string> train{"train", "--subjects", subjects, "--layout", layout, "--factors", factors,
                                         "--out-dir", (dir / "train").string(), "--epochs", "2", "--seed", "4"};
    REQUIRE(run(train).code == 0);
    const auto train_first = snapshot_dir(dir / "train");
    REQUIRE(run(train).code == 0);
    CHECK(snapshot_dir(dir / "train") == train_first);
    const std::string ckpt = (dir / "train" / "checkpoint.bin").string();

    const std::vector<std::string> eval{"eval", "--subjects", subjects, "--layout", layout, "--factors", factors,
                                        "--checkpoint", ckpt, "--out", (dir / "eval" / "metrics.json").string(),
                                        "--all-splits", "--mig", "--seed", "4"};
    REQUIRE(run(eval).code == 0);
    const auto eval_first = snapshot_dir(dir / "eval");
    REQUIRE(run(eval).code == 0);
    CHECK(snapshot_dir(dir / "eval") == eval_first);

    const std::vector<std::string> exp{"experiment", "--subjects", subjects, "--layout", layout, "--factors", factors,
                                       "--out-dir", (dir / "exp").string(), "--epochs", "1", "--n_splits", "2"};
    REQUIRE(run(exp).code == 0);
    const auto exp_first = snapshot_dir(dir / "exp");
    REQUIRE(run(exp).code == 0);
    CHECK(snapshot_dir(dir / "exp") == exp_first);

    const std::vector<std::string> grad{"gradcheck", "--entries", "2", "--out", (dir / "grad" / "report.json").string()};
    const auto g = run(grad);
    CHECK(g.code == 0);
    CHECK(g.out.find("PASS") != std::string::npos);
    const auto grad_first = snapshot_dir(dir / "grad");
    REQUIRE(run(grad).code == 0);
    CHECK(snapshot_dir(dir / "grad") == grad_first);

    const std::vector<std::string> trav{"traverse", "--subjects", subjects, "--layout", layout, "--checkpoint", ckpt,
                                        "--dim", "3", "--range", "-2,2,5", "--out-dir", (dir / "trav").string()};
    REQUIRE(run(trav).code == 0);
    const auto trav_first = snapshot_dir(dir / "trav");
    CHECK(trav_first.count("traverse_004.pgm") == 1);
    REQUIRE(run(trav).code == 0);
    CHECK(snapshot_dir(dir / "trav") == trav_first);

    // Inputs are untouched by every command.
    CHECK(snapshot_dir(data) == synth_first);
}

TEST_CASE("train with zero epochs, traverse at the base value, eval fallbacks") {
    const auto dir = oracle::scratch_dir("cli_misc");
    const std::string data = (dir / "data").string();
    std::ofstream(dir / "spec.txt") << "n_subjects = 20\n";
    REQUIRE(run({"synth", "--spec", (dir / "spec.txt").string(), "--out-dir", data}).code == 0);
    const std::string subjects = data + "/subjects.csv", layout = data + "/layout.json";

    REQUIRE(run({"train", "--subjects", subjects, "--layout", layout, "--out-dir", (dir / "t").string(), "--epochs",
                 "0", "--seed", "2"}).code == 0);
    VaeModel init(model_seed(2)), loaded(99);
    load_checkpoint(dir / "t" / "checkpoint.bin", loaded.parameters());
    auto a = init.parameters(), b = loaded.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
    CHECK(read_file(dir / "t" / "loss_curve.csv").find('\n') == read_file(dir / "t" / "loss_curve.csv").size() - 1);

    // A single traversal value equal to the subject's own coordinate gives the base image.
    const Dataset d{load_subjects_csv(subjects), load_layout(layout), std::nullopt};
    const auto [mu, logvar] = encode(loaded, rasterize(d.records[0], d.layout));
    REQUIRE(run({"traverse", "--subjects", subjects, "--layout", layout, "--checkpoint",
                 (dir / "t" / "checkpoint.bin").string(), "--dim", "5", "--values", format_double(mu[5]), "--out-dir",
                 (dir / "trav").string()}).code == 0);
    CHECK(read_file(dir / "trav" / "traverse_000.csv") == read_file(dir / "trav" / "base.csv"));
    CHECK(run({"traverse", "--subjects", subjects, "--layout", layout, "--checkpoint",
               (dir / "t" / "checkpoint.bin").string(), "--dim", "32", "--out-dir", (dir / "trav2").string()}).code ==
          kExitFailure);

    // No factor table: MIG against the label, flagged.
    const auto e = run({"eval", "--subjects", subjects, "--layout", layout, "--checkpoint",
                        (dir / "t" / "checkpoint.bin").string(), "--out", (dir / "m.json").string(), "--mig"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("label-as-factor") != std::string::npos);
    CHECK(read_file(dir / "m.json").find("\"label_as_factor\": true") != std::string::npos);

    // A checkpoint whose shapes do not match the model.
    VaeModel odd(1);
    odd.aux_head.weight.value = Tensor({kLatentDim, 2});
    save_checkpoint(dir / "odd.bin", odd.parameters());
    const auto s = run({"eval", "--subjects", subjects, "--layout", layout, "--checkpoint", (dir / "odd.bin").string(),
                        "--out", (dir / "o.json").string()});
    CHECK(s.code == kExitShape);

    // Subjects whose FA count disagrees with the layout.
    std::ofstream(dir / "short.csv") << "subject_id,label,fa_1\nA,0,0.5\nB,1,0.4\n";
    CHECK(run({"eval", "--subjects", (dir / "short.csv").string(), "--layout", layout, "--checkpoint",
               (dir / "t" / "checkpoint.bin").string(), "--out", (dir / "o.json").string()}).code == kExitShape);

    CHECK(run({"train", "--subjects", subjects, "--layout", layout, "--out-dir", (dir / "x").string(), "--beta",
               "-1"}).code == kExitParse);
}

TEST_CASE("git blob hash") {
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
