#pragma once

// File formats, rasterization and the synthetic cohort generator.
//
// Subjects CSV:  subject_id,label,fa_1,...,fa_K   (fa_k belongs to the k-th
//                tract of the layout's assignment order)
// Centroids CSV: tract_id,x,y,z
// Factors CSV:   subject_id,<factor>,...
// Layout JSON:   {"grid_size": 9, "assignment": {"<tract_id>": [row, col], ...}}
// Checkpoint:    "TGRD", u32 version, then per parameter: u32 name length,
//                name bytes, u32 rank, u64 dims[rank], f64 payload; all
//                little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tractgrid/grid_embed.hpp"
#include "tractgrid/tensor.hpp"
#include "tractgrid/vae.hpp"

namespace tractgrid {

struct SubjectRecord {
    std::string subject_id;
    int label = 0;
    std::vector<double> fa;

    bool operator==(const SubjectRecord&) const = default;
};

/// Discrete ground-truth generative factors, one row per subject.
struct FactorTable {
    std::vector<std::string> names;
    std::vector<std::string> subject_ids;
    std::vector<std::vector<int>> values;  // [subject][factor]

    bool operator==(const FactorTable&) const = default;
};

struct Dataset {
    std::vector<SubjectRecord> records;
    GridLayout layout;
    std::optional<FactorTable> factors;

    std::vector<int> labels() const;
    /// Throws InvalidInput on id duplicates, tract-count mismatch or a
    /// factor table that does not line up with the records.
    void validate() const;
};

// --- CSV / JSON / binary formats ---------------------------------------------

/// Strict loader: rejects missing columns, FA outside [0,1], labels outside
/// {0,1} and duplicate ids with a ParseError naming the row.
std::vector<SubjectRecord> load_subjects_csv(const std::filesystem::path& path);
void save_subjects_csv(const std::filesystem::path& path, const std::vector<SubjectRecord>& records);

CentroidSet load_centroids_csv(const std::filesystem::path& path);
void save_centroids_csv(const std::filesystem::path& path, const CentroidSet& centroids);

FactorTable load_factors_csv(const std::filesystem::path& path);
void save_factors_csv(const std::filesystem::path& path, const FactorTable& factors);

std::string layout_to_json(const GridLayout& layout);
GridLayout layout_from_json(const std::string& text);
void save_layout(const std::filesystem::path& path, const GridLayout& layout);
GridLayout load_layout(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params);
/// All-or-nothing: parameters are only overwritten once the whole file has
/// been read and every name and shape matched. FormatError on a bad
/// magic/version/truncation, ShapeError on a name or shape mismatch.
void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params);

/// Nine comma-separated rows of shortest round-trip decimals.
std::string image_to_csv(const FaImage& image);
/// Plain PGM (P2), pixel = round(255 * value).
std::string image_to_pgm(const FaImage& image);
void export_image(const std::filesystem::path& stem, const FaImage& image);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

// --- rasterization -------------------------------------------------------------

FaImage rasterize(const SubjectRecord& record, const GridLayout& layout);
std::vector<FaImage> rasterize_all(const Dataset& dataset);

// --- synthetic cohort ------------------------------------------------------------

struct FactorSpec {
    std::string name;
    std::vector<std::size_t> tracts;   // affected tract indices
    std::vector<double> level_effects; // additive FA effect per level
    // Level draw probabilities; empty means uniform.
    std::vector<double> level_probabilities;
};

struct SyntheticSpec {
    std::size_t n_subjects = 105;
    std::size_t n_tracts = 74;
    // Per-tract subject-level baseline N(mean_i, sd_i); a single entry is
    // broadcast to every tract.
    std::vector<double> baseline_mean{0.45};
    std::vector<double> baseline_sd{0.05};
    double noise_sigma = 0.02;
    double class_balance = 0.5;  // P(label = 1)
    // factors[0] is the binary class factor (label = its level); it must have
    // exactly two levels and its probabilities come from class_balance.
    std::vector<FactorSpec> factors;

    void validate() const;
};

/// 74 tracts, binary class factor raising 3 tracts by 0.15, binary nuisance
/// factor shifting 5 tracts by -0.1 / +0.1, baseline N(0.45, 0.05).
SyntheticSpec default_synthetic_spec();

/// Flat key=value overrides on top of the default spec (n_subjects,
/// n_tracts, baseline_mean, baseline_sd, noise_sigma, class_balance,
/// class_effect, class_tracts, nuisance_effect, nuisance_tracts).
SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Synthetic 3D centroids scattered in a brain-sized ellipsoid.
CentroidSet synthetic_centroids(std::size_t n_tracts, std::uint64_t seed);

struct SyntheticCohort {
    CentroidSet centroids;
    Dataset dataset;  // layout embedded from the centroids, factors filled
};

SyntheticCohort generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

} // namespace tractgrid
