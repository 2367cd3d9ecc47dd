#include "tractgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include "tractgrid/errors.hpp"

namespace tractgrid {

namespace {

double squared_distance_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    const std::size_t d = a.dim(1);
    const double* pa = a.data() + i * d;
    const double* pb = b.data() + j * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double t = pa[k] - pb[k];
        s += t * t;
    }
    return s;
}

// `neighbours` is sorted nearest first.
int vote(const std::vector<std::pair<double, std::size_t>>& neighbours, std::span<const int> labels) {
    std::map<int, std::size_t> counts;
    for (const auto& [dist, idx] : neighbours) ++counts[labels[idx]];
    std::size_t best = 0;
    for (const auto& [label, c] : counts) best = std::max(best, c);
    for (const auto& [dist, idx] : neighbours)
        if (counts[labels[idx]] == best) return labels[idx];
    return labels[neighbours.front().second];
}

std::vector<std::pair<double, std::size_t>> nearest(const Tensor& reference, const Tensor& queries, std::size_t q,
                                                    std::size_t k, std::size_t exclude) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(reference.dim(0));
    for (std::size_t j = 0; j < reference.dim(0); ++j)
        if (j != exclude) d.emplace_back(squared_distance_rows(queries, q, reference, j), j);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    d.resize(k);
    return d;
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw InvalidInput(std::string(what) + " must be a [n, dim] matrix");
}

} // namespace

void EmbeddingTable::validate() const {
    require_matrix(mu, "embedding mu");
    if (mu.dim(0) != subject_ids.size() || labels.size() != subject_ids.size())
        throw InvalidInput("embedding table: ids, mu rows and labels are not aligned");
    std::unordered_set<std::string> seen;
    for (const auto& id : subject_ids)
        if (!seen.insert(id).second) throw InvalidInput("embedding table: duplicate subject '" + id + "'");
    if (!mu.all_finite()) throw InvalidInput("embedding table: non-finite mu");
}

double knn_separability(const EmbeddingTable& table, std::size_t k) {
    table.validate();
    const std::size_t n = table.size();
    if (k == 0) throw InvalidInput("knn_separability: k must be positive");
    if (n < k + 1) throw InvalidInput("knn_separability: need at least k+1 rows");
    if (std::adjacent_find(table.labels.begin(), table.labels.end(), std::not_equal_to<>()) == table.labels.end())
        throw InvalidInput("knn_separability: both classes must be present");

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto nb = nearest(table.mu, table.mu, i, k, i);
        if (vote(nb, table.labels) == table.labels[i]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<int> knn_predict(const Tensor& reference, std::span<const int> reference_labels, const Tensor& queries,
                             std::size_t k) {
    require_matrix(reference, "knn reference");
    require_matrix(queries, "knn queries");
    if (reference.dim(1) != queries.dim(1)) throw InvalidInput("knn_predict: dimension mismatch");
    if (reference_labels.size() != reference.dim(0)) throw InvalidInput("knn_predict: label count mismatch");
    if (k == 0 || reference.dim(0) < k) throw InvalidInput("knn_predict: need at least k reference rows");
    std::vector<int> out;
    out.reserve(queries.dim(0));
    for (std::size_t q = 0; q < queries.dim(0); ++q)
        out.push_back(vote(nearest(reference, queries, q, k, reference.dim(0)), reference_labels));
    return out;
}

std::vector<int> equal_frequency_bins(std::span<const double> values, std::size_t n_bins) {
    if (n_bins == 0) throw InvalidInput("equal_frequency_bins: n_bins must be positive");
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<int> bins(n);
    int current = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r == 0 || values[order[r]] != values[order[r - 1]])
            current = static_cast<int>(r * n_bins / n);
        bins[order[r]] = current;
    }
    return bins;
}

namespace {

// Summing in value order makes the result independent of how bins are labelled.
double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

} // namespace

double mutual_information(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw InvalidInput("mutual_information: length mismatch");
    if (a.empty()) return 0.0;
    std::map<std::pair<int, int>, std::size_t> joint;
    std::map<int, std::size_t> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (const auto& [key, c] : joint) {
        const double cab = static_cast<double>(c);
        terms.push_back(cab / n * std::log(cab * n / (static_cast<double>(ca[key.first]) * static_cast<double>(cb[key.second]))));
    }
    return std::max(0.0, sorted_sum(terms));
}

double entropy(std::span<const int> a) {
    if (a.empty()) return 0.0;
    std::map<int, std::size_t> counts;
    for (int v : a) ++counts[v];
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (const auto& [v, c] : counts) {
        const double p = static_cast<double>(c) / n;
        terms.push_back(-p * std::log(p));
    }
    return sorted_sum(terms);
}

MigResult mig(const EmbeddingTable& table, const FactorTable& factors, std::size_t n_bins) {
    table.validate();
    const std::size_t n = table.size();
    const std::size_t dims = table.mu.dim(1);
    if (dims < 2) throw InvalidInput("mig: need at least 2 latent dims");
    if (factors.subject_ids.size() != n) throw InvalidInput("mig: factor table has a different number of rows");
    for (std::size_t i = 0; i < n; ++i)
        if (factors.subject_ids[i] != table.subject_ids[i])
            throw InvalidInput("mig: factor row " + std::to_string(i + 1) + " does not match the embedding table");

    std::vector<std::vector<int>> binned(dims);
    std::vector<double> column(n);
    for (std::size_t d = 0; d < dims; ++d) {
        for (std::size_t i = 0; i < n; ++i) column[i] = table.mu.at(i, d);
        binned[d] = equal_frequency_bins(column, n_bins);
    }

    MigResult out;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t f = 0; f < factors.names.size(); ++f) {
        MigFactor mf;
        mf.name = factors.names[f];
        std::vector<int> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = factors.values[i].at(f);
        mf.entropy = entropy(v);
        if (mf.entropy <= 0.0) {
            mf.skipped = true;
            out.warnings.push_back("factor '" + mf.name + "' is constant and was skipped");
            out.factors.push_back(std::move(mf));
            continue;
        }
        std::vector<double> mi(dims);
        for (std::size_t d = 0; d < dims; ++d) mi[d] = mutual_information(binned[d], v);
        std::vector<std::size_t> order(dims);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mi[a] > mi[b]; });
        mf.top_dim = order[0];
        mf.mi_top = mi[order[0]];
        mf.mi_second = mi[order[1]];
        mf.gap = (mf.mi_top - mf.mi_second) / mf.entropy;
        sum += mf.gap;
        ++used;
        out.factors.push_back(std::move(mf));
    }
    if (used == 0) throw InvalidInput("mig: every factor is constant");
    out.mig = sum / static_cast<double>(used);
    return out;
}

AccuracyF1 accuracy_f1(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) throw InvalidInput("accuracy_f1: length mismatch");
    if (labels.empty()) throw InvalidInput("accuracy_f1: empty input");
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        correct += p == y;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
    }
    AccuracyF1 r;
    r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
    const double denom = static_cast<double>(2 * tp + fp + fn);
    r.f1 = denom > 0.0 ? 100.0 * 2.0 * static_cast<double>(tp) / denom : 0.0;
    return r;
}

} // namespace tractgrid
