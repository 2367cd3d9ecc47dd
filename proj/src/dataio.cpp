#include "tractgrid/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "tractgrid/errors.hpp"
#include "tractgrid/random.hpp"

namespace tractgrid {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

// Lines with any trailing '\r' stripped; trailing blank lines dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string where(const std::filesystem::path& path, std::size_t row) {
    return path.filename().string() + " row " + std::to_string(row);
}

double parse_double(const std::string& field, const std::string& context) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw ParseError(context + ": '" + field + "' is not a finite number");
    return v;
}

int parse_int(const std::string& field, const std::string& context) {
    int v = 0;
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), last, v);
    if (field.empty() || ec != std::errc() || ptr != last) throw ParseError(context + ": '" + field + "' is not an integer");
    return v;
}

std::vector<double> broadcast(const std::vector<double>& values, std::size_t n, const char* what) {
    if (values.size() == 1) return std::vector<double>(n, values[0]);
    if (values.size() != n) throw InvalidInput(std::string("synthetic spec: ") + what + " must have 1 or n_tracts entries");
    return values;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint64_t uint(int width) {
        if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw FormatError("checkpoint: truncated file");
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::string bytes(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw FormatError("checkpoint: truncated file");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

// --- subjects -----------------------------------------------------------------

std::vector<SubjectRecord> load_subjects_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError(path.filename().string() + ": missing header");
    const auto header = split_fields(lines[0]);
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "label")
        throw ParseError(path.filename().string() + ": header must start with subject_id,label,fa_1");
    for (std::size_t k = 2; k < header.size(); ++k)
        if (header[k] != "fa_" + std::to_string(k - 1))
            throw ParseError(path.filename().string() + ": column " + std::to_string(k + 1) + " should be fa_" +
                             std::to_string(k - 1) + ", found '" + header[k] + "'");

    std::vector<SubjectRecord> out;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        const std::string ctx = where(path, r);
        if (fields.size() != header.size())
            throw ParseError(ctx + ": expected " + std::to_string(header.size()) + " columns, found " +
                             std::to_string(fields.size()));
        SubjectRecord rec;
        rec.subject_id = fields[0];
        if (rec.subject_id.empty()) throw ParseError(ctx + ": empty subject_id");
        if (!seen.insert(rec.subject_id).second) throw ParseError(ctx + ": duplicate subject_id '" + rec.subject_id + "'");
        rec.label = parse_int(fields[1], ctx + " column label");
        if (rec.label != 0 && rec.label != 1) throw ParseError(ctx + " column label: must be 0 or 1");
        rec.fa.reserve(header.size() - 2);
        for (std::size_t k = 2; k < fields.size(); ++k) {
            const std::string col_ctx = ctx + " column " + header[k];
            const double v = parse_double(fields[k], col_ctx);
            if (v < 0.0 || v > 1.0) throw ParseError(col_ctx + ": FA " + fields[k] + " outside [0,1]");
            rec.fa.push_back(v);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void save_subjects_csv(const std::filesystem::path& path, const std::vector<SubjectRecord>& records) {
    const std::size_t k = records.empty() ? 0 : records.front().fa.size();
    std::string s = "subject_id,label";
    for (std::size_t i = 1; i <= k; ++i) s += ",fa_" + std::to_string(i);
    s += '\n';
    for (const auto& r : records) {
        if (r.fa.size() != k) throw InvalidInput("save_subjects_csv: ragged FA vectors");
        s += r.subject_id + ',' + std::to_string(r.label);
        for (double v : r.fa) s += ',' + format_double(v);
        s += '\n';
    }
    write_file_atomic(path, s);
}

// --- centroids ------------------------------------------------------------------

CentroidSet load_centroids_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "tract_id,x,y,z")
        throw ParseError(path.filename().string() + ": header must be tract_id,x,y,z");
    CentroidSet set;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        const std::string ctx = where(path, r);
        if (fields.size() != 4) throw ParseError(ctx + ": expected 4 columns");
        if (fields[0].empty()) throw ParseError(ctx + ": empty tract_id");
        if (!seen.insert(fields[0]).second) throw ParseError(ctx + ": duplicate tract_id '" + fields[0] + "'");
        Centroid c;
        c.tract_id = fields[0];
        for (int k = 0; k < 3; ++k)
            c.position[static_cast<std::size_t>(k)] = parse_double(fields[static_cast<std::size_t>(k) + 1], ctx);
        set.entries.push_back(std::move(c));
    }
    return set;
}

void save_centroids_csv(const std::filesystem::path& path, const CentroidSet& centroids) {
    std::string s = "tract_id,x,y,z\n";
    for (const auto& c : centroids.entries)
        s += c.tract_id + ',' + format_double(c.position[0]) + ',' + format_double(c.position[1]) + ',' +
             format_double(c.position[2]) + '\n';
    write_file_atomic(path, s);
}

// --- factors --------------------------------------------------------------------

FactorTable load_factors_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError(path.filename().string() + ": missing header");
    const auto header = split_fields(lines[0]);
    if (header.size() < 2 || header[0] != "subject_id")
        throw ParseError(path.filename().string() + ": header must be subject_id,<factor>...");
    FactorTable t;
    t.names.assign(header.begin() + 1, header.end());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        const std::string ctx = where(path, r);
        if (fields.size() != header.size()) throw ParseError(ctx + ": wrong column count");
        if (!seen.insert(fields[0]).second) throw ParseError(ctx + ": duplicate subject_id '" + fields[0] + "'");
        t.subject_ids.push_back(fields[0]);
        std::vector<int> row;
        for (std::size_t k = 1; k < fields.size(); ++k) row.push_back(parse_int(fields[k], ctx + " column " + header[k]));
        t.values.push_back(std::move(row));
    }
    return t;
}

void save_factors_csv(const std::filesystem::path& path, const FactorTable& factors) {
    std::string s = "subject_id";
    for (const auto& n : factors.names) s += ',' + n;
    s += '\n';
    for (std::size_t i = 0; i < factors.subject_ids.size(); ++i) {
        s += factors.subject_ids[i];
        for (int v : factors.values[i]) s += ',' + std::to_string(v);
        s += '\n';
    }
    write_file_atomic(path, s);
}

// --- layout ----------------------------------------------------------------------

std::string layout_to_json(const GridLayout& layout) {
    nlohmann::ordered_json j;
    j["grid_size"] = kGridSize;
    nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < layout.occupied_count(); ++i)
        assignment[layout.tract_ids()[i]] = {layout.cells()[i].row, layout.cells()[i].col};
    j["assignment"] = std::move(assignment);
    return j.dump(2) + "\n";
}

GridLayout layout_from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("layout JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("grid_size") || !j.contains("assignment"))
        throw ParseError("layout JSON: expected keys grid_size and assignment");
    if (!j["grid_size"].is_number_integer() || j["grid_size"].get<int>() != kGridSize)
        throw ParseError("layout JSON: grid_size must be " + std::to_string(kGridSize));
    const auto& a = j["assignment"];
    if (!a.is_object()) throw ParseError("layout JSON: assignment must be an object");
    std::vector<std::string> ids;
    std::vector<GridCell> cells;
    for (const auto& [id, cell] : a.items()) {
        if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() || !cell[1].is_number_integer())
            throw ParseError("layout JSON: cell for '" + id + "' must be [row, col]");
        ids.push_back(id);
        cells.push_back({cell[0].get<int>(), cell[1].get<int>()});
    }
    try {
        return GridLayout(std::move(ids), std::move(cells));
    } catch (const InvalidInput& e) {
        throw ParseError(std::string("layout JSON: ") + e.what());
    }
}

void save_layout(const std::filesystem::path& path, const GridLayout& layout) {
    write_file_atomic(path, layout_to_json(layout));
}

GridLayout load_layout(const std::filesystem::path& path) { return layout_from_json(read_file(path)); }

// --- checkpoint ------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    std::string out = "TGRD";
    put_u32(out, kCheckpointVersion);
    for (const auto* p : params) {
        put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out += p->name;
        put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
        for (auto d : p->value.shape()) put_u64(out, d);
        for (double v : p->value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    write_file_atomic(path, out);
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    const std::string bytes = read_file(path);
    Reader in(bytes);
    if (bytes.size() < 4 || bytes.compare(0, 4, "TGRD") != 0) throw FormatError("checkpoint: bad magic");
    in.bytes(4);
    const auto version = in.uint(4);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version));

    std::map<std::string, Tensor> loaded;
    while (!in.done()) {
        const auto name_len = in.uint(4);
        std::string name = in.bytes(name_len);
        const auto rank = in.uint(4);
        if (rank > 8) throw FormatError("checkpoint: implausible rank for '" + name + "'");
        Shape shape;
        for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(in.uint(8));
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) v = std::bit_cast<double>(in.uint(8));
        if (!loaded.emplace(name, Tensor(std::move(shape), std::move(data))).second)
            throw FormatError("checkpoint: duplicate parameter '" + name + "'");
    }

    for (const auto* p : params) {
        auto it = loaded.find(p->name);
        if (it == loaded.end()) throw ShapeError("checkpoint: missing parameter '" + p->name + "'");
        if (it->second.shape() != p->value.shape())
            throw ShapeError("checkpoint: shape mismatch for '" + p->name + "': file " +
                             shape_string(it->second.shape()) + ", model " + shape_string(p->value.shape()));
    }
    if (loaded.size() != params.size()) throw ShapeError("checkpoint: parameter count differs from the model");
    for (auto* p : params) p->value = loaded.at(p->name);
}

// --- images ----------------------------------------------------------------------

std::string image_to_csv(const FaImage& image) {
    std::string s;
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = 0; c < kImageSide; ++c) {
            if (c) s += ',';
            s += format_double(image.at(r, c));
        }
        s += '\n';
    }
    return s;
}

std::string image_to_pgm(const FaImage& image) {
    std::string s = "P2\n" + std::to_string(kImageSide) + " " + std::to_string(kImageSide) + "\n255\n";
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = 0; c < kImageSide; ++c) {
            if (c) s += ' ';
            const double v = std::clamp(image.at(r, c), 0.0, 1.0);
            s += std::to_string(static_cast<int>(std::round(255.0 * v)));
        }
        s += '\n';
    }
    return s;
}

void export_image(const std::filesystem::path& stem, const FaImage& image) {
    auto csv = stem;
    csv += ".csv";
    auto pgm = stem;
    pgm += ".pgm";
    write_file_atomic(csv, image_to_csv(image));
    write_file_atomic(pgm, image_to_pgm(image));
}

// --- rasterization ----------------------------------------------------------------

FaImage rasterize(const SubjectRecord& record, const GridLayout& layout) {
    if (record.fa.size() != layout.occupied_count())
        throw InvalidInput("rasterize: subject '" + record.subject_id + "' has " + std::to_string(record.fa.size()) +
                           " FA values but the layout places " + std::to_string(layout.occupied_count()) + " tracts");
    FaImage img;
    for (std::size_t i = 0; i < record.fa.size(); ++i) {
        const double v = record.fa[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw InvalidInput("rasterize: FA value outside [0,1] for subject '" + record.subject_id + "'");
        img.pixels[cell_index(layout.cells()[i])] = v;
    }
    return img;
}

std::vector<FaImage> rasterize_all(const Dataset& dataset) {
    std::vector<FaImage> out;
    out.reserve(dataset.records.size());
    for (const auto& r : dataset.records) out.push_back(rasterize(r, dataset.layout));
    return out;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

void Dataset::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.subject_id).second) throw InvalidInput("dataset: duplicate subject '" + r.subject_id + "'");
        if (r.fa.size() != layout.occupied_count())
            throw ShapeError("dataset: subject '" + r.subject_id + "' has " + std::to_string(r.fa.size()) +
                             " FA values, layout has " + std::to_string(layout.occupied_count()) + " tracts");
    }
    if (factors) {
        if (factors->subject_ids.size() != records.size())
            throw InvalidInput("dataset: factor table has a different number of rows");
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (factors->subject_ids[i] != records[i].subject_id)
                throw InvalidInput("dataset: factor row " + std::to_string(i + 1) + " is for '" +
                                   factors->subject_ids[i] + "', expected '" + records[i].subject_id + "'");
            if (factors->values[i].size() != factors->names.size())
                throw InvalidInput("dataset: ragged factor row " + std::to_string(i + 1));
        }
    }
}

// --- synthetic ----------------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (n_subjects == 0) throw InvalidInput("synthetic spec: n_subjects must be positive");
    if (n_tracts == 0 || n_tracts > kGridCells) throw InvalidInput("synthetic spec: n_tracts must lie in [1, 81]");
    broadcast(baseline_mean, n_tracts, "baseline_mean");
    for (double s : broadcast(baseline_sd, n_tracts, "baseline_sd"))
        if (!(s >= 0.0)) throw InvalidInput("synthetic spec: baseline_sd must be >= 0");
    if (!(noise_sigma >= 0.0)) throw InvalidInput("synthetic spec: noise_sigma must be >= 0");
    if (!(class_balance > 0.0 && class_balance < 1.0)) throw InvalidInput("synthetic spec: class_balance must lie in (0,1)");
    if (factors.empty()) throw InvalidInput("synthetic spec: the class factor is required");
    if (factors[0].level_effects.size() != 2) throw InvalidInput("synthetic spec: class factor must have two levels");
    for (const auto& f : factors) {
        if (f.level_effects.size() < 2) throw InvalidInput("synthetic spec: factor '" + f.name + "' needs >= 2 levels");
        if (!f.level_probabilities.empty() && f.level_probabilities.size() != f.level_effects.size())
            throw InvalidInput("synthetic spec: factor '" + f.name + "' probability count mismatch");
        for (auto t : f.tracts)
            if (t >= n_tracts) throw InvalidInput("synthetic spec: factor '" + f.name + "' tract index out of range");
    }
}

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec s;
    s.factors.push_back({"class", {4, 27, 51}, {0.0, 0.15}, {}});
    s.factors.push_back({"nuisance", {9, 18, 36, 45, 63}, {-0.1, 0.1}, {}});
    return s;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
    SyntheticSpec s = default_synthetic_spec();
    auto parse_list_d = [](const std::string& v, const std::string& ctx) {
        std::vector<double> out;
        for (const auto& f : split_fields(v)) out.push_back(parse_double(f, ctx));
        return out;
    };
    auto parse_list_i = [](const std::string& v, const std::string& ctx) {
        std::vector<std::size_t> out;
        for (const auto& f : split_fields(v)) {
            const int x = parse_int(f, ctx);
            if (x < 0) throw ParseError(ctx + ": negative tract index");
            out.push_back(static_cast<std::size_t>(x));
        }
        return out;
    };

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("synthetic spec line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string x) {
            const auto b = x.find_first_not_of(" \t");
            const auto e = x.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string ctx = "synthetic spec key " + key;
        if (key == "n_subjects") s.n_subjects = static_cast<std::size_t>(std::max(0, parse_int(value, ctx)));
        else if (key == "n_tracts") s.n_tracts = static_cast<std::size_t>(std::max(0, parse_int(value, ctx)));
        else if (key == "baseline_mean") s.baseline_mean = parse_list_d(value, ctx);
        else if (key == "baseline_sd") s.baseline_sd = parse_list_d(value, ctx);
        else if (key == "noise_sigma") s.noise_sigma = parse_double(value, ctx);
        else if (key == "class_balance") s.class_balance = parse_double(value, ctx);
        else if (key == "class_effect") s.factors[0].level_effects = {0.0, parse_double(value, ctx)};
        else if (key == "class_tracts") s.factors[0].tracts = parse_list_i(value, ctx);
        else if (key == "nuisance_effect") {
            const double e = parse_double(value, ctx);
            s.factors[1].level_effects = {-e, e};
        } else if (key == "nuisance_tracts") s.factors[1].tracts = parse_list_i(value, ctx);
        else throw ParseError("synthetic spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    s.validate();
    return s;
}

CentroidSet synthetic_centroids(std::size_t n_tracts, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    constexpr std::array<double, 3> semi_axes{70.0, 85.0, 60.0};
    CentroidSet set;
    const int width = n_tracts >= 100 ? 3 : 2;
    for (std::size_t i = 0; i < n_tracts; ++i) {
        std::array<double, 3> p{};
        for (;;) {
            double r2 = 0.0;
            for (auto& x : p) {
                x = unit(rng);
                r2 += x * x;
            }
            if (r2 <= 1.0) break;
        }
        for (std::size_t k = 0; k < 3; ++k) p[k] *= semi_axes[k];
        std::string id = std::to_string(i + 1);
        id = "T" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
        set.entries.push_back({std::move(id), p});
    }
    return set;
}

SyntheticCohort generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticCohort out;
    out.centroids = synthetic_centroids(spec.n_tracts, derive_seed(seed, 1));
    out.dataset.layout = embed_grid(out.centroids);

    const auto means = broadcast(spec.baseline_mean, spec.n_tracts, "baseline_mean");
    const auto sds = broadcast(spec.baseline_sd, spec.n_tracts, "baseline_sd");

    FactorTable factors;
    for (const auto& f : spec.factors) factors.names.push_back(f.name);

    std::mt19937_64 rng(derive_seed(seed, 2));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int width = std::max<int>(3, static_cast<int>(std::to_string(spec.n_subjects).size()));

    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
        std::vector<int> levels;
        std::vector<double> effect(spec.n_tracts, 0.0);
        for (std::size_t f = 0; f < spec.factors.size(); ++f) {
            const auto& fs = spec.factors[f];
            std::vector<double> probs = fs.level_probabilities;
            if (f == 0) probs = {1.0 - spec.class_balance, spec.class_balance};
            if (probs.empty()) probs.assign(fs.level_effects.size(), 1.0 / static_cast<double>(fs.level_effects.size()));
            const double u = unit(rng);
            std::size_t level = 0;
            double acc = probs[0];
            while (level + 1 < probs.size() && u >= acc) acc += probs[++level];
            levels.push_back(static_cast<int>(level));
            for (auto t : fs.tracts) effect[t] += fs.level_effects[level];
        }

        SubjectRecord rec;
        std::string id = std::to_string(s + 1);
        rec.subject_id = "S" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
        rec.label = levels[0];
        rec.fa.resize(spec.n_tracts);
        for (std::size_t t = 0; t < spec.n_tracts; ++t) {
            const double baseline = means[t] + sds[t] * normal(rng);
            const double noise = spec.noise_sigma * normal(rng);
            rec.fa[t] = std::clamp(baseline + effect[t] + noise, 0.0, 1.0);
        }
        factors.subject_ids.push_back(rec.subject_id);
        factors.values.push_back(std::move(levels));
        out.dataset.records.push_back(std::move(rec));
    }
    out.dataset.factors = std::move(factors);
    return out;
}

} // namespace tractgrid
