#include <set>

#include "doctest.h"
#include "tractgrid/config.hpp"
#include "tractgrid/errors.hpp"

using namespace tractgrid;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("config text round trip") {
    RunConfig c;
    c.objective.variant = Variant::simclr;
    c.objective.beta = 0.1 + 0.2;
    c.objective.temperature = 1.0 / 3.0;
    c.adam.learning_rate = 3e-4;
    c.epochs = 0;
    c.seed = 18446744073709551615ull;
    c.split.n_splits = 3;
    c.split_index = 2;
    const std::string text = config_to_text(c);
    const RunConfig back = parse_config_text(text);
    CHECK(config_to_text(back) == text);
    CHECK(back.objective.beta == c.objective.beta);
    CHECK(back.objective.temperature == c.objective.temperature);
    CHECK(back.seed == c.seed);
    CHECK(back.objective.variant == Variant::simclr);
    CHECK_NOTHROW(back.validate());
}

TEST_CASE("config parsing rules") {
    const auto c = parse_config_text("# comment\n\n  beta = 2  \r\nvariant=triplet\n");
    CHECK(c.objective.beta == 2.0);
    CHECK(c.objective.variant == Variant::triplet);
    CHECK(c.epochs == RunConfig{}.epochs);

    // Later lines and the base config compose.
    RunConfig base;
    base.epochs = 7;
    CHECK(parse_config_text("beta = 1\nbeta = 3\n", base).objective.beta == 3.0);
    CHECK(parse_config_text("", base).epochs == 7);

    CHECK(error_of("beta = 1\nnot a pair\n").find("line 2") != std::string::npos);
    CHECK(error_of("bogus = 1").find("unknown") != std::string::npos);
    CHECK_FALSE(error_of("beta = -1").empty());
    CHECK_FALSE(error_of("tau = 0").empty());
    CHECK_FALSE(error_of("lr = abc").empty());
    CHECK_FALSE(error_of("variant = vae").empty());
    CHECK_FALSE(error_of("batch_size = 0").empty());
    CHECK_FALSE(error_of("epochs = -3").empty());
    CHECK_FALSE(error_of("margin = nan").empty());

    RunConfig bad;
    bad.split_index = 5;
    CHECK_THROWS_AS(bad.validate(), ParseError);
}

TEST_CASE("every key is listed once and reads back its default") {
    const RunConfig defaults;
    std::set<std::string> names;
    for (const auto& k : config_keys()) {
        CHECK(names.insert(k.name).second);
        CHECK_FALSE(k.range.empty());
        CHECK_FALSE(k.help.empty());
        RunConfig c;
        k.set(c, k.get(defaults));
        CHECK(config_to_text(c) == config_to_text(defaults));
    }
    CHECK(names.count("variant"));
    CHECK(names.count("beta"));
    CHECK(names.count("seed"));
}

TEST_CASE("derived options") {
    RunConfig c;
    c.objective.variant = Variant::none;
    c.knn_k = 5;
    c.mig_bins = 10;
    c.batch_size = 8;
    const auto t = c.train_options();
    CHECK(t.batch_size == 8);
    CHECK(t.objective.variant == Variant::none);
    const auto e = c.eval_options();
    CHECK(e.k == 5);
    CHECK(e.mig_bins == 10);
    CHECK(e.variant == Variant::none);
}
