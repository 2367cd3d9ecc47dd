#include "tractgrid/grid_embed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <unordered_set>

#include "tractgrid/errors.hpp"

namespace tractgrid {

namespace {

constexpr double kJacobiTolerance = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

struct SymmetricEigen {
    std::vector<double> values;   // unsorted
    std::vector<double> vectors;  // column k is the eigenvector of values[k], row-major n x n
};

// Cyclic Jacobi rotations on a dense symmetric matrix (row-major, n x n).
SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double frob = 0.0;
    for (double x : a) frob += x * x;
    frob = std::sqrt(frob);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q)
                if (p != q) s += a[p * n + q] * a[p * n + q];
        return std::sqrt(s);
    };

    bool converged = frob == 0.0 || off_norm() <= kJacobiTolerance * frob;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm() <= kJacobiTolerance * frob;
    }
    if (!converged) throw NumericError("classical_mds: Jacobi eigensolver did not converge in 100 sweeps");

    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a[i * n + i];
    out.vectors = std::move(v);
    return out;
}

} // namespace

void validate(const CentroidSet& centroids) {
    if (centroids.entries.empty()) throw InvalidInput("centroid set is empty");
    if (centroids.entries.size() > kGridCells)
        throw CapacityError("centroid set has " + std::to_string(centroids.entries.size()) +
                            " tracts; the grid holds at most " + std::to_string(kGridCells));
    std::unordered_set<std::string> seen;
    for (const auto& c : centroids.entries) {
        if (!seen.insert(c.tract_id).second) throw InvalidInput("duplicate tract id '" + c.tract_id + "'");
        for (double x : c.position)
            if (!std::isfinite(x)) throw InvalidInput("non-finite coordinate for tract '" + c.tract_id + "'");
    }
}

CostMatrix::CostMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
    if (values_.size() != n_ * n_)
        throw InvalidInput("cost matrix is not square: " + std::to_string(values_.size()) + " entries for n = " +
                           std::to_string(n_));
}

std::vector<std::pair<std::size_t, std::size_t>> Assignment::pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(column_of_row.size());
    for (std::size_t r = 0; r < column_of_row.size(); ++r) out.emplace_back(r, column_of_row[r]);
    return out;
}

GridLayout::GridLayout(std::vector<std::string> tract_ids, std::vector<GridCell> cells)
    : ids_(std::move(tract_ids)), cells_(std::move(cells)) {
    if (ids_.size() != cells_.size()) throw InvalidInput("layout: id/cell count mismatch");
    if (ids_.size() > kGridCells) throw CapacityError("layout: more tracts than grid cells");
    std::set<GridCell> used;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const auto c = cells_[i];
        if (c.row < 1 || c.row > kGridSize || c.col < 1 || c.col > kGridSize)
            throw InvalidInput("layout: cell for '" + ids_[i] + "' outside the grid");
        if (!used.insert(c).second) throw InvalidInput("layout: two tracts share a cell");
        if (!seen.insert(ids_[i]).second) throw InvalidInput("layout: duplicate tract id '" + ids_[i] + "'");
    }
}

std::optional<GridCell> GridLayout::find(const std::string& tract_id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (ids_[i] == tract_id) return cells_[i];
    return std::nullopt;
}

PlanarCoords classical_mds(const CentroidSet& centroids) {
    const std::size_t n = centroids.entries.size();
    if (n < 2) throw InvalidInput("classical_mds needs at least 2 points");
    for (const auto& c : centroids.entries)
        for (double x : c.position)
            if (!std::isfinite(x)) throw InvalidInput("classical_mds: non-finite coordinate");

    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double diff = centroids.entries[i].position[k] - centroids.entries[j].position[k];
                s += diff * diff;
            }
            d2[i * n + j] = d2[j * n + i] = s;
        }
    }

    // B = -1/2 J D2 J
    std::vector<double> row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row_mean[i] += d2[i * n + j];
        grand += row_mean[i];
        row_mean[i] /= static_cast<double>(n);
    }
    grand /= static_cast<double>(n * n);
    std::vector<double> b(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            b[i * n + j] = -0.5 * (d2[i * n + j] - row_mean[i] - row_mean[j] + grand);

    const auto eig = jacobi_eigen(std::move(b), n);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return eig.values[x] > eig.values[y]; });

    const double top = eig.values[order[0]];
    if (top <= 0.0) throw DegenerateGeometry("classical_mds: all centroids coincide");

    PlanarCoords out;
    out.points.assign(n, {0.0, 0.0});
    for (int axis = 0; axis < 2; ++axis) {
        const std::size_t k = order[static_cast<std::size_t>(axis)];
        const double lambda = eig.values[k];
        // Eigenvalues at round-off level relative to the leading one carry no
        // geometry; leave that axis exactly zero.
        if (lambda <= top * 1e-12) continue;
        std::size_t pivot = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(eig.vectors[i * n + k]) > std::abs(eig.vectors[pivot * n + k])) pivot = i;
        const double sign = eig.vectors[pivot * n + k] < 0.0 ? -1.0 : 1.0;
        const double scale = sign * std::sqrt(lambda);
        for (std::size_t i = 0; i < n; ++i) out.points[i][static_cast<std::size_t>(axis)] = scale * eig.vectors[i * n + k];
    }
    return out;
}

ProvisionalGrid normalize_to_grid(const PlanarCoords& planar) {
    if (planar.points.empty()) throw InvalidInput("normalize_to_grid: no points");
    ProvisionalGrid grid;
    grid.cells.assign(planar.points.size(), GridCell{});
    for (std::size_t axis = 0; axis < 2; ++axis) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& p : planar.points) {
            if (!std::isfinite(p[axis])) throw InvalidInput("normalize_to_grid: non-finite coordinate");
            lo = std::min(lo, p[axis]);
            hi = std::max(hi, p[axis]);
        }
        const bool flat = hi == lo;
        grid.degenerate_axis[axis] = flat;
        for (std::size_t i = 0; i < planar.points.size(); ++i) {
            int g = (kGridSize + 1) / 2;
            if (!flat) {
                // std::round rounds halves away from zero.
                const double t = (planar.points[i][axis] - lo) / (hi - lo) * static_cast<double>(kGridSize - 1);
                g = static_cast<int>(std::round(t)) + 1;
            }
            (axis == 0 ? grid.cells[i].row : grid.cells[i].col) = g;
        }
    }
    return grid;
}

CostMatrix build_cost_matrix(const ProvisionalGrid& grid) {
    const std::size_t n = grid.cells.size();
    if (n == 0) throw InvalidInput("build_cost_matrix: empty grid");
    if (n > kGridCells)
        throw CapacityError("build_cost_matrix: " + std::to_string(n) + " tracts exceed " +
                            std::to_string(kGridCells) + " cells");
    auto cost = CostMatrix::zeros(kGridCells);
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = grid.cells[i];
        if (src.row < 1 || src.row > kGridSize || src.col < 1 || src.col > kGridSize)
            throw InvalidInput("build_cost_matrix: provisional cell outside the grid");
        for (std::size_t j = 0; j < kGridCells; ++j) cost(i, j) = squared_distance(src, cell_at(j));
    }
    return cost;
}

Assignment hungarian(const CostMatrix& cost) {
    const std::size_t n = cost.size();
    Assignment result;
    if (n == 0) return result;

    double scale = 1.0;
    for (double x : cost.values()) {
        if (!std::isfinite(x)) throw InvalidInput("hungarian: non-finite cost entry");
        scale = std::max(scale, std::abs(x));
    }
    const double tol = 1e-12 * scale;

    std::vector<double> c = cost.values();
    auto at = [&](std::size_t r, std::size_t k) -> double& { return c[r * n + k]; };
    auto is_zero = [&](std::size_t r, std::size_t k) { return std::abs(c[r * n + k]) <= tol; };

    // Row then column reduction.
    for (std::size_t r = 0; r < n; ++r) {
        double m = at(r, 0);
        for (std::size_t k = 1; k < n; ++k) m = std::min(m, at(r, k));
        for (std::size_t k = 0; k < n; ++k) at(r, k) -= m;
    }
    for (std::size_t k = 0; k < n; ++k) {
        double m = at(0, k);
        for (std::size_t r = 1; r < n; ++r) m = std::min(m, at(r, k));
        for (std::size_t r = 0; r < n; ++r) at(r, k) -= m;
    }

    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> star_in_row(n, none), star_in_col(n, none), prime_in_row(n, none);
    std::vector<char> row_cover(n, 0), col_cover(n, 0);

    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n; ++k)
            if (is_zero(r, k) && star_in_row[r] == none && star_in_col[k] == none) {
                star_in_row[r] = k;
                star_in_col[k] = r;
            }

    for (;;) {
        std::size_t covered = 0;
        for (std::size_t k = 0; k < n; ++k) {
            col_cover[k] = star_in_col[k] != none;
            covered += col_cover[k];
        }
        if (covered == n) break;

        for (;;) {
            std::size_t zr = none, zc = none;
            for (std::size_t r = 0; r < n && zr == none; ++r) {
                if (row_cover[r]) continue;
                for (std::size_t k = 0; k < n; ++k)
                    if (!col_cover[k] && is_zero(r, k)) {
                        zr = r;
                        zc = k;
                        break;
                    }
            }

            if (zr == none) {
                // No uncovered zero: shift by the smallest uncovered value.
                double k_min = std::numeric_limits<double>::infinity();
                for (std::size_t r = 0; r < n; ++r)
                    if (!row_cover[r])
                        for (std::size_t k = 0; k < n; ++k)
                            if (!col_cover[k]) k_min = std::min(k_min, at(r, k));
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t k = 0; k < n; ++k) {
                        if (!row_cover[r] && !col_cover[k]) at(r, k) -= k_min;
                        else if (row_cover[r] && col_cover[k]) at(r, k) += k_min;
                    }
                continue;
            }

            prime_in_row[zr] = zc;
            if (star_in_row[zr] != none) {
                row_cover[zr] = 1;
                col_cover[star_in_row[zr]] = 0;
                continue;
            }

            // Augment along the alternating primed/starred path.
            std::size_t r = zr, k = zc;
            for (;;) {
                const std::size_t star_row = star_in_col[k];
                star_in_row[r] = k;
                star_in_col[k] = r;
                if (star_row == none) break;
                r = star_row;
                k = prime_in_row[r];
                star_in_row[r] = none;
            }
            std::fill(prime_in_row.begin(), prime_in_row.end(), none);
            std::fill(row_cover.begin(), row_cover.end(), 0);
            break;
        }
    }

    // The reduced matrix is a nonnegative optimal dual slack: every optimal
    // matching lives on its zeros. Walk rows in order and move each to the
    // smallest zero column that still admits a perfect matching.
    std::vector<std::size_t> col_of = star_in_row;
    std::vector<std::size_t> row_of(n);
    for (std::size_t r = 0; r < n; ++r) row_of[col_of[r]] = r;
    std::vector<char> fixed(n, 0);
    std::vector<std::size_t> reached_from(n);
    std::vector<char> seen(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t target = col_of[i];
        for (std::size_t j = 0; j < target; ++j) {
            if (!is_zero(i, j)) continue;
            const std::size_t owner = row_of[j];
            if (fixed[owner]) continue;

            std::fill(seen.begin(), seen.end(), 0);
            seen[j] = 1;
            std::queue<std::size_t> rows;
            rows.push(owner);
            bool found = false;
            while (!rows.empty() && !found) {
                const std::size_t r = rows.front();
                rows.pop();
                for (std::size_t k = 0; k < n; ++k) {
                    if (seen[k] || !is_zero(r, k)) continue;
                    if (k != target && (fixed[row_of[k]] || row_of[k] == i)) continue;
                    seen[k] = 1;
                    reached_from[k] = r;
                    if (k == target) {
                        found = true;
                        break;
                    }
                    rows.push(row_of[k]);
                }
            }
            if (!found) continue;

            std::size_t k = target;
            for (;;) {
                const std::size_t r = reached_from[k];
                const std::size_t previous = col_of[r];
                col_of[r] = k;
                row_of[k] = r;
                if (previous == j) break;
                k = previous;
            }
            col_of[i] = j;
            row_of[j] = i;
            break;
        }
        fixed[i] = 1;
    }

    result.column_of_row = std::move(col_of);
    for (std::size_t r = 0; r < n; ++r) result.cost += cost(r, result.column_of_row[r]);
    return result;
}

GridLayout assign_cells(const ProvisionalGrid& grid, const std::vector<std::string>& tract_ids) {
    if (tract_ids.size() != grid.cells.size()) throw InvalidInput("assign_cells: id/cell count mismatch");
    const auto cost = build_cost_matrix(grid);
    const auto assignment = hungarian(cost);
    std::vector<GridCell> cells;
    cells.reserve(grid.cells.size());
    for (std::size_t i = 0; i < grid.cells.size(); ++i) cells.push_back(cell_at(assignment.column_of_row[i]));
    return GridLayout(tract_ids, std::move(cells));
}

EmbedResult embed_grid_detailed(const CentroidSet& centroids) {
    validate(centroids);
    EmbedResult out;
    if (centroids.size() == 1) {
        out.planar.points = {{0.0, 0.0}};
    } else {
        out.planar = classical_mds(centroids);
    }
    out.provisional = normalize_to_grid(out.planar);

    std::vector<std::string> ids;
    ids.reserve(centroids.size());
    for (const auto& c : centroids.entries) ids.push_back(c.tract_id);
    out.layout = assign_cells(out.provisional, ids);

    std::set<GridCell> distinct(out.provisional.cells.begin(), out.provisional.cells.end());
    out.collisions = out.provisional.cells.size() - distinct.size();
    for (std::size_t i = 0; i < ids.size(); ++i)
        out.total_squared_displacement += squared_distance(out.provisional.cells[i], out.layout.cells()[i]);
    return out;
}

} // namespace tractgrid
