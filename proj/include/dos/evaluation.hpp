#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dos/errors.hpp"
#include "dos/kernels.hpp"
#include "dos/overloading.hpp"
#include "dos/tensor.hpp"

namespace dos {

struct ConfusionMatrix {
    int n = 0;
    std::vector<long long> counts; // row = truth, column = prediction

    long long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth * n + pred)]; }
    long long at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth * n + pred)];
    }
    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }
};

struct ClassMetrics {
    double precision = 0, recall = 0, f1 = 0;
};

struct PRPoint {
    double recall = 0, precision = 0;
};

struct PRCurve {
    int class_label = 0;
    std::vector<PRPoint> points; // recall nondecreasing
};

// Per-class and grouped metrics for one evaluator pass.
struct MetricsReport {
    std::string evaluator; // softmax | knn | lr
    std::vector<ClassMetrics> per_class;
    std::vector<double> auprc_per_class;
    std::vector<std::uint8_t> minority_flags;
    double minority_f1 = 0, majority_f1 = 0, overall_f1 = 0;
    double minority_auprc = 0, majority_auprc = 0, overall_auprc = 0;
    double wall_seconds = 0;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int n);

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

// Area under the step-wise one-vs-rest precision-recall curve: descending
// score sweep, tie groups processed as one threshold, no interpolation.
double auprc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truths);

PRCurve pr_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& truths,
                 int class_label);

// argmax with ties broken by lowest class index.
int argmax_class(const double* row, int n);

// Assembles a report from posterior rows (one per sample).  posteriors is
// sample-major: posteriors[i*n + c].
MetricsReport report_from_posteriors(const std::string& evaluator,
                                     const std::vector<double>& posteriors,
                                     const std::vector<int>& truths, int n,
                                     const std::vector<std::uint8_t>& minority_flags);

void report_to_csv(const MetricsReport& report, std::ostream& os);
void report_to_table(const MetricsReport& report, std::ostream& os);

// Brute-force kNN on deep features: majority vote among the k_nn nearest by
// squared Euclidean distance; posterior = per-class vote fraction.  Distance
// ties break by sample index, vote ties by lowest class index.
template <typename T>
std::pair<int, std::vector<double>> knn_classify(const std::vector<Tensor<T>>& train_embeddings,
                                                 const std::vector<int>& labels,
                                                 const Tensor<T>& query, int n_classes,
                                                 int k_nn) {
    if (train_embeddings.empty()) throw DataError("knn_classify: empty training set");
    if (train_embeddings.size() != labels.size()) {
        throw DataError("knn_classify: embedding/label count mismatch");
    }
    if (k_nn < 1 || static_cast<std::size_t>(k_nn) > train_embeddings.size()) {
        throw ArgumentError("knn_classify: k_nn must be in [1, training size]");
    }
    std::vector<std::pair<T, std::size_t>> order(train_embeddings.size());
    for (std::size_t i = 0; i < train_embeddings.size(); ++i) {
        order[i] = {detail::sq_dist(query.data(), train_embeddings[i].data(), query.size()), i};
    }
    std::nth_element(order.begin(), order.begin() + (k_nn - 1), order.end());
    std::sort(order.begin(), order.begin() + k_nn);
    // nth_element cuts by (distance, index); the pair ordering already
    // matches the documented tie rule.
    std::vector<double> posterior(static_cast<std::size_t>(n_classes), 0.0);
    for (int i = 0; i < k_nn; ++i) {
        posterior[static_cast<std::size_t>(labels[order[static_cast<std::size_t>(i)].second])] +=
            1.0 / static_cast<double>(k_nn);
    }
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
        if (posterior[static_cast<std::size_t>(c)] > posterior[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    return {best, posterior};
}

// Multinomial logistic regression probe on deep features, fit with a fixed
// budget of 500 full-batch gradient steps at rate 0.1 (zero init, double
// precision, mean cross-entropy).  Returns test posteriors, sample-major.
template <typename T>
std::vector<double> logistic_probe(const std::vector<Tensor<T>>& train_embeddings,
                                   const std::vector<int>& labels,
                                   const std::vector<Tensor<T>>& test_embeddings, int n_classes,
                                   int steps = 500, double lr = 0.1) {
    if (train_embeddings.empty()) throw DataError("logistic_probe: empty training set");
    if (train_embeddings.size() != labels.size()) {
        throw DataError("logistic_probe: embedding/label count mismatch");
    }
    {
        std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
        int distinct = 0;
        for (int y : labels) {
            if (!seen[static_cast<std::size_t>(y)]) {
                seen[static_cast<std::size_t>(y)] = true;
                distinct++;
            }
        }
        if (distinct < 2) throw DataError("logistic_probe: needs at least two classes present");
    }
    const std::size_t d = train_embeddings.front().size();
    const std::size_t m = train_embeddings.size();
    const std::size_t n = static_cast<std::size_t>(n_classes);

    std::vector<double> x(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < d; ++p) {
            x[i * d + p] = static_cast<double>(train_embeddings[i][p]);
        }
    }
    std::vector<double> w(n * d, 0.0), b(n, 0.0);
    std::vector<double> logits(n), gw(n * d), gb(n);
    for (int step = 0; step < steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* xi = x.data() + i * d;
            for (std::size_t c = 0; c < n; ++c) {
                logits[c] = detail::dot(w.data() + c * d, xi, d) + b[c];
            }
            detail::softmax_row(logits.data(), n);
            for (std::size_t c = 0; c < n; ++c) {
                const double delta =
                    (logits[c] - (c == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0)) /
                    static_cast<double>(m);
                detail::axpy(gw.data() + c * d, delta, xi, d);
                gb[c] += delta;
            }
        }
        detail::axpy(w.data(), -lr, gw.data(), w.size());
        detail::axpy(b.data(), -lr, gb.data(), b.size());
    }

    std::vector<double> out(test_embeddings.size() * n);
    std::vector<double> xt(d);
    for (std::size_t i = 0; i < test_embeddings.size(); ++i) {
        for (std::size_t p = 0; p < d; ++p) xt[p] = static_cast<double>(test_embeddings[i][p]);
        double* row = out.data() + i * n;
        for (std::size_t c = 0; c < n; ++c) {
            row[c] = detail::dot(w.data() + c * d, xt.data(), d) + b[c];
        }
        detail::softmax_row(row, n);
    }
    return out;
}

// Mean squared distance of class members to the class centroid.
template <typename T>
std::vector<double> in_class_variance(const EmbeddingStore<T>& store) {
    std::vector<double> out(store.n_classes(), 0.0);
    for (std::size_t c = 0; c < store.n_classes(); ++c) {
        const auto& mem = store.by_class[c];
        if (mem.empty()) continue;
        const std::size_t d = mem.front().v.size();
        std::vector<double> centroid(d, 0.0);
        for (const auto& e : mem) {
            for (std::size_t p = 0; p < d; ++p) centroid[p] += static_cast<double>(e.v[p]);
        }
        for (double& v : centroid) v /= static_cast<double>(mem.size());
        double s = 0.0;
        for (const auto& e : mem) {
            for (std::size_t p = 0; p < d; ++p) {
                const double diff = static_cast<double>(e.v[p]) - centroid[p];
                s += diff * diff;
            }
        }
        out[c] = s / static_cast<double>(mem.size());
    }
    return out;
}

// Mean of in_class_variance over classes that have members.
template <typename T>
double mean_in_class_variance(const EmbeddingStore<T>& store) {
    const auto per_class = in_class_variance(store);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < store.n_classes(); ++c) {
        if (!store.by_class[c].empty()) {
            s += per_class[c];
            n++;
        }
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

} // namespace dos
