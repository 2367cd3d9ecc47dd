#include <cmath>
#include <random>

#include "doctest.h"
#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"
#include "tractgrid/objectives.hpp"
#include "tractgrid/training.hpp"

using namespace tractgrid;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : t.values()) v = n(rng);
    return t;
}

// Central differences of f over every entry of x compared with g.
template <typename F>
double worst_fd_error(Tensor& x, const Tensor& g, F f, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double o = x[i];
        x[i] = o + h;
        const double up = f();
        x[i] = o - h;
        const double down = f();
        x[i] = o;
        worst = std::max(worst, relative_error(g[i], (up - down) / (2 * h)));
    }
    return worst;
}

TrainBatch small_batch(std::uint64_t seed) {
    auto spec = default_synthetic_spec();
    spec.n_subjects = 24;
    const auto d = generate_synthetic(spec, seed).dataset;
    const auto images = rasterize_all(d);
    const auto labels = d.labels();
    std::vector<std::size_t> rows;
    for (int c : {0, 1})
        for (std::size_t i = 0; i < labels.size() && rows.size() < (c == 0 ? 2u : 4u); ++i)
            if (labels[i] == c) rows.push_back(i);
    return make_batch(images, labels, occupancy(d.layout), rows, seed + 100, images.size());
}

} // namespace

TEST_CASE("aux_bce closed forms") {
    CHECK(std::abs(aux_bce(0.0, 0) - std::log(2.0)) <= 1e-9);
    CHECK(std::abs(aux_bce(0.0, 1) - std::log(2.0)) <= 1e-9);
    CHECK(aux_bce(1.0, 1) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));
    CHECK(aux_bce(800.0, 1) == 0.0);
    CHECK(std::isfinite(aux_bce(-800.0, 1)));
    CHECK(aux_bce(-800.0, 1) == doctest::Approx(800.0));
    const std::vector<double> logits{0.0, 1.0};
    const std::vector<int> labels{0, 1};
    CHECK(aux_bce(logits, labels) == doctest::Approx(0.5 * (std::log(2.0) + std::log1p(std::exp(-1.0)))));
}

TEST_CASE("batch-hard triplet hand arithmetic") {
    const std::vector<int> two_class{0, 1, 0, 1};
    SUBCASE("identical embeddings") {
        const Tensor mu({4, 3}, std::vector<double>(12, 0.4));
        const auto r = batch_hard_triplet(mu, two_class, 0.2);
        CHECK(r.loss == 0.2);
        CHECK(r.valid_anchors == 4);
    }
    SUBCASE("coincident positive, negative at squared distance 1") {
        const Tensor mu({3, 2}, {0, 0, 0, 0, 1, 0});
        const auto r = batch_hard_triplet(mu, std::vector<int>{0, 0, 1}, 0.2);
        CHECK(r.loss == 0.0);
        CHECK(r.valid_anchors == 2);  // the lone negative has no positive
    }
    SUBCASE("d_pos 0.5, d_neg 0.1") {
        // a = (0,0), p = (0.5,0.5), n = (x,0) with x^2 = 0.1.
        const double x = std::sqrt(0.1);
        const Tensor mu({3, 2}, {0, 0, 0.5, 0.5, x, 0});
        const auto r = batch_hard_triplet(mu, std::vector<int>{0, 0, 1}, 0.2);
        const double d_an = x * x;
        const double d_pn = (0.5 - x) * (0.5 - x) + 0.25;
        const double anchor_a = std::max(0.0, 0.5 - d_an + 0.2);
        const double anchor_p = std::max(0.0, 0.5 - d_pn + 0.2);
        CHECK(anchor_a == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(r.loss == (anchor_a + anchor_p) / 2.0);
    }
    SUBCASE("single class is degenerate") {
        const Tensor mu({2, 2}, {0, 0, 1, 1});
        const auto r = batch_hard_triplet(mu, std::vector<int>{1, 1}, 0.2);
        CHECK(r.degenerate());
        CHECK(r.loss == 0.0);
    }
}

TEST_CASE("batch-hard triplet backward matches central differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor mu = random_tensor({6, 4}, rng);
        const std::vector<int> labels{0, 1, 0, 1, 1, 0};
        const Tensor g = batch_hard_triplet_backward(mu, labels, 2.0);
        CHECK(worst_fd_error(mu, g, [&] { return batch_hard_triplet(mu, labels, 2.0).loss; }) <= 1e-6);
    }
}

TEST_CASE("NT-Xent fixture and symmetries") {
    const Tensor a({2, 2}, {1, 0, 0, 1});
    const Tensor b({2, 2}, {1, 0, 0, 1});
    CHECK(std::abs(simclr_ntxent(a, b, 1.0) - (std::log(std::exp(1.0) + 2.0) - 1.0)) <= 1e-6);
    CHECK(simclr_ntxent(a, b, 1.0) == doctest::Approx(0.551445).epsilon(1e-6));

    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({5, 3}, rng);
    const Tensor y = random_tensor({5, 3}, rng);
    CHECK(simclr_ntxent(x, y, 0.5) == doctest::Approx(simclr_ntxent(y, x, 0.5)).epsilon(1e-14));

    // Well separated orthogonal pairs with a tiny temperature saturate.
    const Tensor e({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(simclr_ntxent(e, e, 0.01) < 1e-10);

    CHECK_THROWS_AS(simclr_ntxent(Tensor({1, 3}), Tensor({1, 3}), 1.0), InvalidInput);
    CHECK_THROWS_AS(simclr_ntxent(x, Tensor({5, 2}), 1.0), ShapeError);
}

TEST_CASE("NT-Xent backward matches central differences") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor({4, 5}, rng);
        Tensor y = random_tensor({4, 5}, rng);
        const auto [gx, gy] = simclr_ntxent_backward(x, y, 0.5);
        auto f = [&] { return simclr_ntxent(x, y, 0.5); };
        CHECK(worst_fd_error(x, gx, f) <= 1e-6);
        CHECK(worst_fd_error(y, gy, f) <= 1e-6);
    }
}

TEST_CASE("augmentation") {
    OccupancyMask occ{};
    for (std::size_t i = 0; i < 74; ++i) occ[i] = true;
    FaImage img;
    for (std::size_t i = 0; i < 74; ++i) img.pixels[i] = 0.5;

    AugmentConfig none;
    none.noise_sigma = 0.0;
    none.mask_probability = 0.0;
    CHECK(augment(img, 1, none, occ) == img);

    AugmentConfig noisy;
    noisy.noise_sigma = 0.05;
    noisy.mask_probability = 0.0;
    CHECK(augment(img, 9, noisy, occ) == augment(img, 9, noisy, occ));
    CHECK(augment(img, 9, noisy, occ) != augment(img, 10, noisy, occ));
    const auto out = augment(img, 9, noisy, occ);
    for (std::size_t i = 74; i < kImagePixels; ++i) CHECK(out.pixels[i] == 0.0);

    AugmentConfig mask;
    mask.noise_sigma = 0.0;
    mask.mask_probability = 0.1;
    std::size_t zeroed = 0;
    const std::size_t draws = 10000;
    for (std::size_t s = 0; s < draws; ++s) {
        const auto a = augment(img, s, mask, occ);
        for (std::size_t i = 0; i < 74; ++i) zeroed += a.pixels[i] == 0.0;
    }
    const double rate = static_cast<double>(zeroed) / static_cast<double>(draws * 74);
    CHECK(rate == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("combined loss reduces to its parts") {
    const auto batch = small_batch(2);
    VaeModel model(4);
    SUBCASE("zero variant weight equals the TCVAE loss") {
        for (Variant v : {Variant::aux, Variant::triplet}) {
            ObjectiveConfig cfg;
            cfg.variant = v;
            cfg.weights.cls = 0.0;
            cfg.weights.triplet = 0.0;
            const auto c = combined_loss(model, batch, cfg);
            const auto t = tcvae_loss(model, batch.images, cfg.beta, batch.eps, batch.dataset_size);
            CHECK(c.total == t.total);
        }
        ObjectiveConfig cfg;
        cfg.variant = Variant::simclr;
        cfg.weights.simclr = 0.0;
        const auto c = combined_loss(model, batch, cfg);
        const auto t = tcvae_loss(model, batch.images, cfg.beta, batch.eps, batch.dataset_size);
        CHECK(c.total == doctest::Approx(t.total).epsilon(1e-12));
    }
    SUBCASE("zero VAE weight with aux equals the BCE alone") {
        ObjectiveConfig cfg;
        cfg.variant = Variant::aux;
        cfg.weights.vae = 0.0;
        cfg.weights.cls = 1.0;
        const auto c = combined_loss(model, batch, cfg);
        const auto logits = model.aux_logits(model.encode(batch.images).mu);
        CHECK(c.total == aux_bce(logits.values(), batch.labels));
    }
}

TEST_CASE("combined loss gradients for every variant") {
    const auto batch = small_batch(3);
    for (Variant v : {Variant::aux, Variant::triplet, Variant::simclr, Variant::none}) {
        CAPTURE(to_string(v));
        VaeModel model(11);
        ObjectiveConfig cfg;
        cfg.variant = v;
        GradCheckOptions opt;
        opt.max_entries_per_param = 6;
        opt.seed = 5;
        const auto r = check_gradients(model, batch, cfg, opt);
        CHECK(r.pass);
        CHECK(r.max_relative_error <= 1e-4);
    }
}

TEST_CASE("corrupted backward fails the full-model check") {
    const auto batch = small_batch(4);
    VaeModel model(12);
    ObjectiveConfig cfg;
    cfg.variant = Variant::aux;
    const LossFunction flipped = [&](bool with_grad) {
        if (with_grad) model.zero_grad();
        const double l = combined_loss(model, batch, cfg, with_grad).total;
        if (with_grad)
            for (auto& g : model.dec_conv1.weight.grad.values()) g = -g;
        return l;
    };
    GradCheckOptions opt;
    opt.max_entries_per_param = 4;
    const auto r = grad_check(flipped, model.parameters(), opt);
    CHECK_FALSE(r.pass);
}

TEST_CASE("objective config validation") {
    ObjectiveConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.triplet_margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = {};
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    CHECK_THROWS_AS(parse_variant("vae"), InvalidInput);
    CHECK(parse_variant("simclr") == Variant::simclr);
}
