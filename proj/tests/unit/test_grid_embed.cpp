#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"
#include "tractgrid/grid_embed.hpp"

using namespace tractgrid;

TEST_CASE("classical_mds preserves distances of flat configurations") {
    SUBCASE("collinear") {
        const auto c = oracle::make_centroids({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
        CHECK(oracle::max_distance_distortion(c, classical_mds(c)) <= 1e-9);
    }
    SUBCASE("two points") {
        const auto c = oracle::make_centroids({{1, 2, 3}, {4, -2, 15}});
        const auto p = classical_mds(c);
        CHECK(oracle::distance2(p.points[0], p.points[1]) == doctest::Approx(13.0).epsilon(1e-12));
        CHECK(oracle::max_distance_distortion(c, p) <= 1e-9);
    }
    SUBCASE("unit square") {
        const auto c = oracle::make_centroids({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}});
        CHECK(oracle::max_distance_distortion(c, classical_mds(c)) <= 1e-9);
    }
    SUBCASE("random tilted planes") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n(0.0, 30.0);
        for (int trial = 0; trial < 50; ++trial) {
            // Orthonormal pair spanning a random plane through a random offset.
            std::array<double, 3> u{n(rng), n(rng), n(rng)}, v{n(rng), n(rng), n(rng)}, o{n(rng), n(rng), n(rng)};
            auto dot = [](const auto& a, const auto& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; };
            const double nu = std::sqrt(dot(u, u));
            for (auto& x : u) x /= nu;
            const double uv = dot(u, v);
            for (int i = 0; i < 3; ++i) v[i] -= uv * u[i];
            const double nv = std::sqrt(dot(v, v));
            for (auto& x : v) x /= nv;
            std::vector<std::array<double, 3>> pts;
            const int count = 3 + trial % 40;
            for (int i = 0; i < count; ++i) {
                const double a = n(rng), b = n(rng);
                pts.push_back({o[0] + a * u[0] + b * v[0], o[1] + a * u[1] + b * v[1], o[2] + a * u[2] + b * v[2]});
            }
            const auto c = oracle::make_centroids(pts);
            CHECK(oracle::max_distance_distortion(c, classical_mds(c)) <= 1e-9);
        }
    }
}

TEST_CASE("classical_mds sign convention and errors") {
    const auto c = oracle::make_centroids({{0, 0, 0}, {5, 1, 0}, {-2, 7, 1}, {3, -4, 2}, {9, 9, -3}});
    const auto p = classical_mds(c);
    for (int axis = 0; axis < 2; ++axis) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < p.points.size(); ++i)
            if (std::abs(p.points[i][axis]) > std::abs(p.points[best][axis])) best = i;
        CHECK(p.points[best][axis] > 0.0);
    }
    CHECK_THROWS_AS(classical_mds(oracle::make_centroids({{1, 1, 1}})), InvalidInput);
    CHECK_THROWS_AS(classical_mds(oracle::make_centroids({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}})), DegenerateGeometry);
}

TEST_CASE("normalize_to_grid maps extremes and midpoint") {
    PlanarCoords p;
    p.points = {{-3.0, 10.0}, {5.0, 30.0}, {1.0, 20.0}};
    const auto g = normalize_to_grid(p);
    CHECK(g.cells[0] == GridCell{1, 1});
    CHECK(g.cells[1] == GridCell{9, 9});
    CHECK(g.cells[2] == GridCell{5, 5});
    CHECK_FALSE(g.degenerate());

    PlanarCoords flat;
    flat.points = {{0.0, 2.0}, {4.0, 2.0}};
    const auto f = normalize_to_grid(flat);
    CHECK(f.degenerate_axis[1]);
    CHECK(f.cells[0].col == 5);
    CHECK(f.cells[1].col == 5);
}

TEST_CASE("build_cost_matrix entries") {
    ProvisionalGrid g;
    g.cells = {{1, 1}};
    const auto c = build_cost_matrix(g);
    REQUIRE(c.size() == kGridCells);
    CHECK(c(0, cell_index({1, 1})) == 0.0);
    CHECK(c(0, cell_index({3, 4})) == 13.0);
    for (std::size_t row = 1; row < kGridCells; ++row)
        for (std::size_t col = 0; col < kGridCells; ++col) REQUIRE(c(row, col) == 0.0);
}

TEST_CASE("hungarian small cases") {
    const auto a = hungarian(CostMatrix(2, {0, 1, 1, 0}));
    CHECK(a.cost == 0.0);
    CHECK(a.column_of_row == std::vector<std::size_t>{0, 1});

    const auto b = hungarian(CostMatrix(3, {4, 1, 3, 2, 0, 5, 3, 2, 2}));
    CHECK(b.cost == 5.0);

    // All-equal costs: the lexicographically smallest matching is the identity.
    const auto z = hungarian(CostMatrix::zeros(5));
    CHECK(z.column_of_row == std::vector<std::size_t>{0, 1, 2, 3, 4});

    CHECK_THROWS_AS(CostMatrix(3, {1, 2, 3}), InvalidInput);
}

TEST_CASE("hungarian matches brute force on random integer matrices") {
    std::mt19937_64 rng(5);
    for (std::size_t n = 2; n <= 7; ++n)
        for (int trial = 0; trial < 200; ++trial) {
            const auto c = oracle::random_integer_matrix(n, 100, rng);
            const auto a = hungarian(c);
            double recomputed = 0.0;
            std::set<std::size_t> cols;
            for (std::size_t i = 0; i < n; ++i) {
                recomputed += c(i, a.column_of_row[i]);
                cols.insert(a.column_of_row[i]);
            }
            REQUIRE(cols.size() == n);
            REQUIRE(recomputed == a.cost);
            REQUIRE(a.cost == oracle::brute_force_assignment(c));
        }
}

TEST_CASE("embed_grid on the synthetic 74-tract atlas") {
    const auto c = synthetic_centroids(74, 3);
    const auto r = embed_grid_detailed(c);
    std::set<GridCell> cells(r.layout.cells().begin(), r.layout.cells().end());
    CHECK(cells.size() == 74);
    CHECK(kGridCells - cells.size() == 7);
    CHECK(r.layout.occupied_count() == 74);
    CHECK(r.layout.tract_ids().front() == c.entries.front().tract_id);
}

TEST_CASE("embed_grid keeps collision-free provisional cells") {
    // A 3x3 lattice normalizes onto rows/cols {1,5,9} without collisions.
    std::vector<std::array<double, 3>> pts;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) pts.push_back({10.0 * i, 7.0 * j, 0.0});
    const auto r = embed_grid_detailed(oracle::make_centroids(pts));
    CHECK(r.collisions == 0);
    CHECK(r.total_squared_displacement == 0);
    CHECK(r.layout.cells() == r.provisional.cells);
}

TEST_CASE("collision resolution equals the exhaustive minimum") {
    auto nearest25 = [](GridCell src) {
        std::vector<GridCell> all;
        for (std::size_t i = 0; i < kGridCells; ++i) all.push_back(cell_at(i));
        std::stable_sort(all.begin(), all.end(), [&](GridCell a, GridCell b) {
            return squared_distance(a, src) < squared_distance(b, src);
        });
        all.resize(25);
        return all;
    };
    for (GridCell src : {GridCell{5, 5}, GridCell{1, 1}, GridCell{2, 8}, GridCell{9, 4}}) {
        ProvisionalGrid g;
        g.cells.assign(10, src);
        std::vector<std::string> ids;
        for (int i = 0; i < 10; ++i) ids.push_back("T" + std::to_string(i));
        const auto layout = assign_cells(g, ids);
        long total = 0;
        for (auto c : layout.cells()) total += squared_distance(src, c);
        CHECK(total == oracle::exhaustive_collision_cost(src, nearest25(src), 10));
    }

    // End to end: ten near-coincident centroids inside a symmetric frame all
    // land on the centre cell.
    std::vector<std::array<double, 3>> pts{{-100, 0, 0}, {100, 0, 0}, {0, -60, 0}, {0, 60, 0}};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> jitter(-0.01, 0.01);
    for (int i = 0; i < 10; ++i) pts.push_back({jitter(rng), jitter(rng), jitter(rng)});
    const auto r = embed_grid_detailed(oracle::make_centroids(pts));
    for (std::size_t i = 4; i < pts.size(); ++i) REQUIRE(r.provisional.cells[i] == GridCell{5, 5});
    CHECK(r.collisions == 9);
    CHECK(r.total_squared_displacement == oracle::exhaustive_collision_cost({5, 5}, nearest25({5, 5}), 10));
}

TEST_CASE("embed_grid is injective for random centroid counts") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 40.0);
    for (std::size_t count = 1; count <= kGridCells; count += 4) {
        std::vector<std::array<double, 3>> pts;
        for (std::size_t i = 0; i < count; ++i) pts.push_back({n(rng), n(rng), n(rng)});
        const auto layout = embed_grid(oracle::make_centroids(pts));
        std::set<GridCell> cells(layout.cells().begin(), layout.cells().end());
        REQUIRE(cells.size() == count);
    }
}

TEST_CASE("embed_grid input validation") {
    std::vector<std::array<double, 3>> pts(82, {0, 0, 0});
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i][0] = static_cast<double>(i);
    CHECK_THROWS_AS(embed_grid(oracle::make_centroids(pts)), CapacityError);
    CHECK_THROWS_AS(embed_grid(CentroidSet{}), InvalidInput);

    auto dup = oracle::make_centroids({{0, 0, 0}, {1, 1, 1}});
    dup.entries[1].tract_id = dup.entries[0].tract_id;
    CHECK_THROWS_AS(embed_grid(dup), InvalidInput);

    auto nan = oracle::make_centroids({{0, 0, 0}, {1, 1, std::nan("")}});
    CHECK_THROWS_AS(embed_grid(nan), InvalidInput);

    // A single tract goes to the centre cell.
    const auto one = embed_grid(oracle::make_centroids({{3, 4, 5}}));
    CHECK(one.cells().front() == GridCell{5, 5});
}
