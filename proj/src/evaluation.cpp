#include "tractgrid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "json.hpp"

#include "tractgrid/errors.hpp"
#include "tractgrid/random.hpp"

namespace tractgrid {

void SplitSpec::validate() const {
    if (n_splits == 0) throw InvalidInput("n_splits must be positive");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidInput("test_fraction must lie in (0,1)");
}

Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidInput("test_fraction must lie in (0,1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::mt19937_64 rng(seed);
    Split s;
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        if (idx.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        else n_test = 0;
        s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Split split_for(std::span<const int> labels, const SplitSpec& spec, std::size_t index) {
    spec.validate();
    if (index >= spec.n_splits) throw InvalidInput("split index out of range");
    return stratified_split(labels, spec.test_fraction, derive_seed(spec.seed, 100 + index));
}

Tensor encode_mu(VaeModel& model, std::span<const FaImage> images) {
    Tensor out({images.size(), kLatentDim});
    for (std::size_t start = 0; start < images.size(); start += kEncodeChunk) {
        const std::size_t n = std::min(kEncodeChunk, images.size() - start);
        const auto enc = model.encode(stack_images(images.subspan(start, n)));
        std::copy(enc.mu.data(), enc.mu.data() + n * kLatentDim, out.data() + start * kLatentDim);
    }
    return out;
}

double reconstruction_mse(VaeModel& model, std::span<const FaImage> images) {
    if (images.empty()) throw InvalidInput("reconstruction_mse: no images");
    double sum = 0.0;
    for (std::size_t start = 0; start < images.size(); start += kEncodeChunk) {
        const std::size_t n = std::min(kEncodeChunk, images.size() - start);
        const Tensor x = stack_images(images.subspan(start, n));
        const auto enc = model.encode(x);
        const Tensor xhat = model.decode(enc.mu);
        sum += recon_loss(x, xhat) * static_cast<double>(n);
    }
    return sum / static_cast<double>(images.size());
}

Tensor pixel_matrix(std::span<const FaImage> images) {
    Tensor out({images.size(), kImagePixels});
    for (std::size_t i = 0; i < images.size(); ++i)
        std::copy(images[i].pixels.begin(), images[i].pixels.end(), out.data() + i * kImagePixels);
    return out;
}

EmbeddingTable embedding_table(const Dataset& dataset, Tensor mu) {
    EmbeddingTable t;
    for (const auto& r : dataset.records) t.subject_ids.push_back(r.subject_id);
    t.labels = dataset.labels();
    t.mu = std::move(mu);
    return t;
}

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
    const std::size_t d = m.dim(1);
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(m.data() + rows[i] * d, m.data() + (rows[i] + 1) * d, out.data() + i * d);
    return out;
}

template <class T>
std::vector<T> gather(std::span<const T> v, const std::vector<std::size_t>& rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(v[r]);
    return out;
}

MetricSummary summary_of(const std::vector<double>& xs) {
    MetricSummary s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

} // namespace

FoldMetrics evaluate_fold(VaeModel& model, const Dataset& dataset, std::span<const FaImage> images, const Split& split,
                          const EvalOptions& options) {
    if (images.size() != dataset.records.size()) throw InvalidInput("evaluate: image count differs from records");
    if (split.train.empty() || split.test.empty()) throw InvalidInput("evaluate: empty train or test split");
    const auto labels = dataset.labels();
    const std::span<const int> label_span(labels);

    FoldMetrics m;
    const Tensor mu = encode_mu(model, images);
    const Tensor mu_train = gather_rows(mu, split.train);
    const Tensor mu_test = gather_rows(mu, split.test);
    const auto y_train = gather(label_span, split.train);
    const auto y_test = gather(label_span, split.test);

    const auto knn = accuracy_f1(knn_predict(mu_train, y_train, mu_test, options.k), y_test);
    m.knn_accuracy = knn.accuracy;
    m.knn_f1 = knn.f1;
    if (options.variant == Variant::aux) {
        const Tensor logits = model.aux_logits(mu_test);
        std::vector<int> pred;
        for (double l : logits.values()) pred.push_back(l > 0.0 ? 1 : 0);
        const auto af = accuracy_f1(pred, y_test);
        m.classifier = "aux_head";
        m.accuracy = af.accuracy;
        m.f1 = af.f1;
    } else {
        m.classifier = "knn";
        m.accuracy = knn.accuracy;
        m.f1 = knn.f1;
    }

    // Separability is measured on held-out subjects only: the aux and triplet
    // objectives see the training labels.
    const auto test_images = gather(images, split.test);
    EmbeddingTable test_table;
    for (auto i : split.test) test_table.subject_ids.push_back(dataset.records[i].subject_id);
    test_table.labels = y_test;
    test_table.mu = mu_test;
    m.separability = knn_separability(test_table, options.k);
    test_table.mu = pixel_matrix(test_images);
    m.raw_separability = knn_separability(test_table, options.k);

    const EmbeddingTable table = embedding_table(dataset, mu);
    m.recon_mse = reconstruction_mse(model, test_images);

    if (options.compute_mig) {
        FactorTable factors;
        if (dataset.factors) {
            factors = *dataset.factors;
        } else {
            m.label_as_factor = true;
            factors.names = {"label"};
            factors.subject_ids = table.subject_ids;
            for (int y : labels) factors.values.push_back({y});
        }
        const auto r = mig(table, factors, options.mig_bins);
        m.mig = r.mig;
        m.warnings = r.warnings;
    }
    return m;
}

MetricsReport summarize(std::vector<FoldMetrics> folds) {
    MetricsReport r;
    auto collect = [&](auto field) {
        std::vector<double> xs;
        for (const auto& f : folds) xs.push_back(f.*field);
        return summary_of(xs);
    };
    r.accuracy = collect(&FoldMetrics::accuracy);
    r.f1 = collect(&FoldMetrics::f1);
    r.knn_accuracy = collect(&FoldMetrics::knn_accuracy);
    r.knn_f1 = collect(&FoldMetrics::knn_f1);
    r.separability = collect(&FoldMetrics::separability);
    r.raw_separability = collect(&FoldMetrics::raw_separability);
    r.recon_mse = collect(&FoldMetrics::recon_mse);
    std::vector<double> migs;
    for (const auto& f : folds) {
        if (f.mig) migs.push_back(*f.mig);
        r.label_as_factor = r.label_as_factor || f.label_as_factor;
    }
    if (!migs.empty()) r.mig = summary_of(migs);
    r.folds = std::move(folds);
    return r;
}

MetricsReport evaluate_model(VaeModel& model, const Dataset& dataset, const SplitSpec& splits,
                             const EvalOptions& options, std::optional<std::size_t> only_split) {
    dataset.validate();
    const auto images = rasterize_all(dataset);
    const auto labels = dataset.labels();
    std::vector<FoldMetrics> folds;
    for (std::size_t s = 0; s < splits.n_splits; ++s) {
        if (only_split && *only_split != s) continue;
        auto f = evaluate_fold(model, dataset, images, split_for(labels, splits, s), options);
        f.fold = s;
        folds.push_back(std::move(f));
    }
    if (folds.empty()) throw InvalidInput("evaluate: split index out of range");
    return summarize(std::move(folds));
}

std::string to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, const MetricSummary& s) {
        j[key] = s.mean;
        j[std::string(key) + "_std"] = s.std;
    };
    put("accuracy", report.accuracy);
    put("f1", report.f1);
    put("separability", report.separability);
    put("recon_mse", report.recon_mse);
    if (report.mig) put("mig", *report.mig);
    else j["mig"] = nullptr;
    put("knn_accuracy", report.knn_accuracy);
    put("knn_f1", report.knn_f1);
    put("raw_separability", report.raw_separability);
    j["label_as_factor"] = report.label_as_factor;
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const auto& f : report.folds) {
        nlohmann::ordered_json jf;
        jf["fold"] = f.fold;
        jf["classifier"] = f.classifier;
        jf["accuracy"] = f.accuracy;
        jf["f1"] = f.f1;
        jf["separability"] = f.separability;
        jf["recon_mse"] = f.recon_mse;
        if (f.mig) jf["mig"] = *f.mig;
        else jf["mig"] = nullptr;
        jf["knn_accuracy"] = f.knn_accuracy;
        jf["knn_f1"] = f.knn_f1;
        jf["raw_separability"] = f.raw_separability;
        jf["label_as_factor"] = f.label_as_factor;
        jf["warnings"] = f.warnings;
        folds.push_back(std::move(jf));
    }
    j["folds"] = std::move(folds);
    return j.dump(2) + "\n";
}

} // namespace tractgrid
