#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"

using namespace tractgrid;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

std::string error_of(const std::filesystem::path& p) {
    try {
        load_subjects_csv(p);
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

GridLayout small_layout() {
    return GridLayout({"a", "b", "c"}, {GridCell{1, 1}, GridCell{5, 5}, GridCell{9, 2}});
}

} // namespace

TEST_CASE("subjects CSV loading") {
    const auto dir = oracle::scratch_dir("subjects");
    const auto ok = dir / "ok.csv";
    write_text(ok, "subject_id,label,fa_1,fa_2\nA,1,0.5,0.25\nB,0,0,1\nC,1,0.125,0.75\n");
    const auto r = load_subjects_csv(ok);
    REQUIRE(r.size() == 3);
    CHECK(r[0] == SubjectRecord{"A", 1, {0.5, 0.25}});
    CHECK(r[2].subject_id == "C");

    const auto bad = dir / "bad.csv";
    write_text(bad, "subject_id,label,fa_1,fa_2\nA,1,0.5,0.25\nB,0,1.2,0.3\n");
    const std::string msg = error_of(bad);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("fa_1") != std::string::npos);

    const auto empty = dir / "empty.csv";
    write_text(empty, "subject_id,label,fa_1\n");
    CHECK(load_subjects_csv(empty).empty());

    write_text(bad, "subject_id,label,fa_1\nA,1,0.5\nA,0,0.3\n");
    CHECK(error_of(bad).find("duplicate") != std::string::npos);
    write_text(bad, "subject_id,label,fa_1\nA,2,0.5\n");
    CHECK_FALSE(error_of(bad).empty());
    write_text(bad, "subject_id,label,fa_1,fa_2\nA,1,0.5\n");
    CHECK(error_of(bad).find("row 1") != std::string::npos);
    write_text(bad, "subject_id,fa_1\nA,0.5\n");
    CHECK_FALSE(error_of(bad).empty());
    write_text(bad, "subject_id,label,fa_1\nA,1,nan\n");
    CHECK_FALSE(error_of(bad).empty());
    CHECK_THROWS_AS(load_subjects_csv(dir / "missing.csv"), ParseError);
}

TEST_CASE("CSV round trips") {
    const auto dir = oracle::scratch_dir("roundtrip");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SubjectRecord> recs;
    for (int i = 0; i < 5; ++i) {
        SubjectRecord r{"S" + std::to_string(i), i % 2, {}};
        for (int k = 0; k < 7; ++k) r.fa.push_back(u(rng));
        recs.push_back(r);
    }
    save_subjects_csv(dir / "s.csv", recs);
    CHECK(load_subjects_csv(dir / "s.csv") == recs);

    const auto c = synthetic_centroids(10, 4);
    save_centroids_csv(dir / "c.csv", c);
    const auto back = load_centroids_csv(dir / "c.csv");
    REQUIRE(back.entries.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(back.entries[i].tract_id == c.entries[i].tract_id);
        CHECK(back.entries[i].position == c.entries[i].position);
    }

    FactorTable f{{"class", "nuisance"}, {"A", "B"}, {{0, 1}, {1, 0}}};
    save_factors_csv(dir / "f.csv", f);
    CHECK(load_factors_csv(dir / "f.csv") == f);
}

TEST_CASE("rasterize") {
    const auto layout = small_layout();
    CHECK(rasterize(SubjectRecord{"z", 0, {0, 0, 0}}, layout) == FaImage{});

    const auto one = rasterize(SubjectRecord{"o", 0, {0, 1, 0}}, layout);
    for (std::size_t i = 0; i < kImagePixels; ++i) CHECK(one.pixels[i] == (i == cell_index({5, 5}) ? 1.0 : 0.0));

    CHECK_THROWS_AS(rasterize(SubjectRecord{"s", 0, {0.1, 0.2}}, layout), InvalidInput);

    // Pixel multiset is the FA multiset plus one zero per empty cell.
    const auto cohort = generate_synthetic(default_synthetic_spec(), 3);
    for (const auto& rec : cohort.dataset.records) {
        const auto img = rasterize(rec, cohort.dataset.layout);
        std::vector<double> pixels(img.pixels.begin(), img.pixels.end());
        std::vector<double> expected = rec.fa;
        expected.resize(kImagePixels, 0.0);
        std::sort(pixels.begin(), pixels.end());
        std::sort(expected.begin(), expected.end());
        REQUIRE(pixels == expected);
    }

    // Linear in the FA vector.
    const SubjectRecord r1{"1", 0, {0.2, 0.4, 0.1}}, r2{"2", 0, {0.3, 0.1, 0.5}};
    SubjectRecord mix{"m", 0, {}};
    for (int k = 0; k < 3; ++k) mix.fa.push_back(0.5 * r1.fa[k] + 1.5 * r2.fa[k]);
    const auto a = rasterize(r1, layout), b = rasterize(r2, layout), m = rasterize(mix, layout);
    for (std::size_t i = 0; i < kImagePixels; ++i) CHECK(m.pixels[i] == doctest::Approx(0.5 * a.pixels[i] + 1.5 * b.pixels[i]));
}

TEST_CASE("layout and checkpoint round trips") {
    const auto dir = oracle::scratch_dir("formats");
    const auto layout = generate_synthetic(default_synthetic_spec(), 1).dataset.layout;
    save_layout(dir / "layout.json", layout);
    CHECK(load_layout(dir / "layout.json") == layout);
    CHECK_THROWS_AS(layout_from_json("{\"grid_size\": 8, \"assignment\": {}}"), ParseError);
    CHECK_THROWS_AS(layout_from_json("not json"), ParseError);

    VaeModel a(3), b(4);
    save_checkpoint(dir / "a.ckpt", a.parameters());
    load_checkpoint(dir / "a.ckpt", b.parameters());
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor x({2, 1, 9, 9});
    for (auto& v : x.values()) v = u(rng);
    const auto ea = a.encode(x), eb = b.encode(x);
    CHECK(ea.mu == eb.mu);
    CHECK(ea.logvar == eb.logvar);
    CHECK(a.decode(ea.mu) == b.decode(eb.mu));

    // A bad magic leaves the target untouched.
    std::string bytes = read_file(dir / "a.ckpt");
    bytes[0] = 'X';
    write_text(dir / "bad.ckpt", bytes);
    VaeModel c(5);
    const Tensor before = c.enc_fc.weight.value;
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt", c.parameters()), FormatError);
    CHECK(c.enc_fc.weight.value == before);

    // So does a truncated file.
    bytes[0] = 'T';
    write_text(dir / "short.ckpt", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt", c.parameters()), FormatError);
    CHECK(c.enc_fc.weight.value == before);

    // Version mismatch.
    bytes[4] = 7;
    write_text(dir / "v.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt", c.parameters()), FormatError);
}

TEST_CASE("image export") {
    const auto dir = oracle::scratch_dir("export");
    FaImage img;
    img.at(0, 0) = 1.0;
    img.at(8, 8) = 0.5;
    export_image(dir / "img", img);
    const auto csv = read_file(dir / "img.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK(csv.substr(0, 2) == "1,");
    const auto pgm = read_file(dir / "img.pgm");
    CHECK(pgm.substr(0, 12) == "P2\n9 9\n255\n2");
    CHECK(pgm.find(" 128\n") != std::string::npos);
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("synthetic generator") {
    auto spec = default_synthetic_spec();
    const auto a = generate_synthetic(spec, 8);
    const auto b = generate_synthetic(spec, 8);
    CHECK(a.dataset.records == b.dataset.records);
    CHECK(a.dataset.layout == b.dataset.layout);
    CHECK(a.dataset.factors == b.dataset.factors);
    CHECK(a.dataset.records.size() == 105);
    CHECK_NOTHROW(a.dataset.validate());
    CHECK(a.dataset.records != generate_synthetic(spec, 9).dataset.records);

    SUBCASE("class effect recovered at n = 500") {
        spec.n_subjects = 500;
        const auto d = generate_synthetic(spec, 5).dataset;
        for (std::size_t t : spec.factors[0].tracts) {
            double s[2] = {0, 0};
            int n[2] = {0, 0};
            for (const auto& r : d.records) {
                s[r.label] += r.fa[t];
                ++n[r.label];
            }
            CHECK(s[1] / n[1] - s[0] / n[0] == doctest::Approx(0.15).epsilon(0.01 / 0.15));
        }
    }
    SUBCASE("per-tract means stay within 3 standard errors") {
        spec.n_subjects = 2000;
        spec.factors.resize(1);
        spec.factors[0].level_effects = {0.0, 0.0};
        const auto d = generate_synthetic(spec, 6).dataset;
        const double se = std::sqrt(0.05 * 0.05 + 0.02 * 0.02) / std::sqrt(2000.0);
        for (std::size_t t = 0; t < 74; ++t) {
            double m = 0.0;
            for (const auto& r : d.records) m += r.fa[t];
            REQUIRE(std::abs(m / 2000.0 - 0.45) <= 3.5 * se);
        }
    }
    SUBCASE("no effects and no noise share the baseline") {
        spec.baseline_sd = {0.0};
        spec.noise_sigma = 0.0;
        for (auto& f : spec.factors) std::fill(f.level_effects.begin(), f.level_effects.end(), 0.0);
        const auto d = generate_synthetic(spec, 2).dataset;
        for (const auto& r : d.records) REQUIRE(r.fa == d.records.front().fa);
        CHECK(d.records.front().fa[0] == 0.45);
    }
    SUBCASE("spec validation and parsing") {
        spec.factors[0].tracts.push_back(74);
        CHECK_THROWS_AS(generate_synthetic(spec, 0), InvalidInput);
        const auto p = parse_synthetic_spec("n_subjects=50\nnoise_sigma = 0.1\n# comment\n");
        CHECK(p.n_subjects == 50);
        CHECK(p.noise_sigma == 0.1);
        CHECK_THROWS_AS(parse_synthetic_spec("bogus=1"), ParseError);
    }
}
