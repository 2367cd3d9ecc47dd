#pragma once

// Placement of tracts on a fixed 9x9 image grid.
//
// The pipeline is: classical MDS of the 3D tract centroids down to the
// plane, per-axis normalization into integer grid cells (collisions allowed),
// then an exact linear assignment that moves every tract to a distinct cell
// while minimizing total squared displacement.

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tractgrid {

inline constexpr int kGridSize = 9;
inline constexpr std::size_t kGridCells = kGridSize * kGridSize;

struct Centroid {
    std::string tract_id;
    std::array<double, 3> position{};  // millimeters
};

struct CentroidSet {
    std::vector<Centroid> entries;

    std::size_t size() const { return entries.size(); }
};

/// Throws InvalidInput unless ids are unique, 1 <= count <= 81 and all
/// coordinates are finite.
void validate(const CentroidSet& centroids);

struct PlanarCoords {
    std::vector<std::array<double, 2>> points;
};

/// 1-based grid cell.
struct GridCell {
    int row = 0;
    int col = 0;

    auto operator<=>(const GridCell&) const = default;
};

/// Row-major index in [0, 81) of a 1-based cell.
inline std::size_t cell_index(GridCell c) {
    return static_cast<std::size_t>((c.row - 1) * kGridSize + (c.col - 1));
}

inline GridCell cell_at(std::size_t index) {
    return {static_cast<int>(index / kGridSize) + 1, static_cast<int>(index % kGridSize) + 1};
}

inline int squared_distance(GridCell a, GridCell b) {
    const int dr = a.row - b.row;
    const int dc = a.col - b.col;
    return dr * dr + dc * dc;
}

struct ProvisionalGrid {
    std::vector<GridCell> cells;
    // Set when every planar coordinate on that axis was equal; the axis was
    // then pinned to the center cell.
    std::array<bool, 2> degenerate_axis{false, false};

    bool degenerate() const { return degenerate_axis[0] || degenerate_axis[1]; }
};

class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t n, std::vector<double> values);
    static CostMatrix zeros(std::size_t n) { return CostMatrix(n, std::vector<double>(n * n, 0.0)); }

    std::size_t size() const { return n_; }
    double operator()(std::size_t row, std::size_t col) const { return values_[row * n_ + col]; }
    double& operator()(std::size_t row, std::size_t col) { return values_[row * n_ + col]; }
    const std::vector<double>& values() const { return values_; }

private:
    std::size_t n_ = 0;
    std::vector<double> values_;
};

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;

    std::vector<std::pair<std::size_t, std::size_t>> pairs() const;
};

/// Bijective map from tract id to grid cell. Entries keep the centroid order,
/// which is also the order of FA columns in subject tables.
class GridLayout {
public:
    GridLayout() = default;
    GridLayout(std::vector<std::string> tract_ids, std::vector<GridCell> cells);

    std::size_t occupied_count() const { return ids_.size(); }
    const std::vector<std::string>& tract_ids() const { return ids_; }
    const std::vector<GridCell>& cells() const { return cells_; }
    std::optional<GridCell> find(const std::string& tract_id) const;

    bool operator==(const GridLayout&) const = default;

private:
    std::vector<std::string> ids_;
    std::vector<GridCell> cells_;
};

/// Torgerson MDS to two dimensions. Eigenvectors come from cyclic Jacobi
/// rotations; each is sign-normalized so its largest-magnitude component is
/// positive (lowest index wins ties).
PlanarCoords classical_mds(const CentroidSet& centroids);

/// Maps each axis linearly onto [1, 9] with round-half-away-from-zero.
/// A constant axis is pinned to 5 and flagged in degenerate_axis.
ProvisionalGrid normalize_to_grid(const PlanarCoords& planar);

/// 81x81 squared-distance costs from provisional cells (rows) to grid cells
/// in row-major order (columns); rows past the tract count are zero-cost
/// padding.
CostMatrix build_cost_matrix(const ProvisionalGrid& grid);

/// Exact minimum-cost perfect matching via the reduce / cover / adjust
/// Hungarian procedure. Among optimal matchings the lexicographically
/// smallest column_of_row is returned.
Assignment hungarian(const CostMatrix& cost);

struct EmbedResult {
    GridLayout layout;
    ProvisionalGrid provisional;
    PlanarCoords planar;
    long total_squared_displacement = 0;
    std::size_t collisions = 0;  // tracts beyond the first in a shared provisional cell
};

/// Resolves collisions in a provisional grid: assigns each tract to a distinct
/// cell with minimal total squared displacement.
GridLayout assign_cells(const ProvisionalGrid& grid, const std::vector<std::string>& tract_ids);

EmbedResult embed_grid_detailed(const CentroidSet& centroids);

inline GridLayout embed_grid(const CentroidSet& centroids) { return embed_grid_detailed(centroids).layout; }

} // namespace tractgrid
