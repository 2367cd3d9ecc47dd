#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tractgrid/grid_embed.hpp"

namespace oracle {

// Minimum over all n! permutations of sum cost[i][perm[i]].
inline double brute_force_assignment(const tractgrid::CostMatrix& cost) {
    const std::size_t n = cost.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline tractgrid::CostMatrix random_integer_matrix(std::size_t n, int max_value, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, max_value);
    std::vector<double> v(n * n);
    for (auto& x : v) x = u(rng);
    return tractgrid::CostMatrix(n, std::move(v));
}

// Exhaustive minimum of sum_i |cells[i] - source|^2 over injective choices of
// n cells from `candidates` (all tracts share one source cell). Depth-first
// search over combinations; each combination's cost is order free.
inline long exhaustive_collision_cost(tractgrid::GridCell source, const std::vector<tractgrid::GridCell>& candidates,
                                      std::size_t n) {
    std::vector<int> d;
    for (auto c : candidates) d.push_back(tractgrid::squared_distance(source, c));
    long best = std::numeric_limits<long>::max();
    std::vector<std::size_t> pick;
    auto rec = [&](auto&& self, std::size_t start, long acc) -> void {
        if (pick.size() == n) {
            best = std::min(best, acc);
            return;
        }
        for (std::size_t i = start; i + (n - pick.size()) <= d.size(); ++i) {
            pick.push_back(i);
            self(self, i + 1, acc + d[i]);
            pick.pop_back();
        }
    };
    rec(rec, 0, 0);
    return best;
}

inline double distance3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

inline double distance2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// Largest |d3(i,j) - d2(i,j)| over all pairs.
inline double max_distance_distortion(const tractgrid::CentroidSet& c, const tractgrid::PlanarCoords& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j)
            worst = std::max(worst, std::abs(distance3(c.entries[i].position, c.entries[j].position) -
                                             distance2(p.points[i], p.points[j])));
    return worst;
}

inline tractgrid::CentroidSet make_centroids(const std::vector<std::array<double, 3>>& points) {
    tractgrid::CentroidSet c;
    for (std::size_t i = 0; i < points.size(); ++i) c.entries.push_back({"T" + std::to_string(i), points[i]});
    return c;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("tractgrid_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
