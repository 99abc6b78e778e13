#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include "dos/data_io.hpp"
#include "dos/errors.hpp"
#include "dos/kernels.hpp"
#include "dos/rng.hpp"
#include "dos/tensor.hpp"

namespace dos {

template <typename T>
struct StoredEmbedding {
    std::size_t sample_index;
    Tensor<T> v;
};

// Per-class lists of (sample index, embedding), ordered by sample index.
template <typename T>
struct EmbeddingStore {
    std::vector<std::vector<StoredEmbedding<T>>> by_class;

    std::size_t n_classes() const { return by_class.size(); }

    const std::vector<StoredEmbedding<T>>& members(int c) const {
        if (c < 0 || static_cast<std::size_t>(c) >= by_class.size()) {
            throw ArgumentError("embedding store has no class " + std::to_string(c));
        }
        return by_class[static_cast<std::size_t>(c)];
    }
};

// Groups precomputed embeddings (one per dataset sample, in sample order)
// into the per-class store layout.
template <typename T, typename U>
EmbeddingStore<T> group_embeddings(const Dataset<U>& ds, std::vector<Tensor<T>> embeddings) {
    if (embeddings.size() != ds.size()) {
        throw DataError("group_embeddings: " + std::to_string(embeddings.size()) +
                        " embeddings for " + std::to_string(ds.size()) + " samples");
    }
    EmbeddingStore<T> store;
    store.by_class.resize(static_cast<std::size_t>(ds.n_classes));
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        store.by_class[static_cast<std::size_t>(ds.labels[i])].push_back(
            {i, std::move(embeddings[i])});
    }
    return store;
}

template <typename T>
struct OverloadedInstance {
    std::size_t sample_index = 0;
    Tensor<T> x;
    int y = 0;
    // Position 0 is the sample's own stored embedding, then k in-class
    // neighbors in ascending distance order.
    std::vector<Tensor<T>> neighbors;
    std::vector<std::size_t> neighbor_indices;
};

template <typename T>
struct WeightedInstance : OverloadedInstance<T> {
    Tensor<T> w; // simplex weights, arity |neighbors|
};

template <typename T>
struct DistanceMatrix {
    int class_label = 0;
    Tensor<T> d; // square, entry (a, b) = ||v_a - v_b||^2
};

template <typename T>
DistanceMatrix<T> distance_matrix(const EmbeddingStore<T>& store, int c) {
    const auto& mem = store.members(c);
    const std::size_t m = mem.size();
    DistanceMatrix<T> out;
    out.class_label = c;
    out.d = Tensor<T>({m, m});
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            T dd = detail::sq_dist(mem[a].v.data(), mem[b].v.data(), mem[a].v.size());
            out.d.at(a, b) = dd;
            out.d.at(b, a) = dd;
        }
    }
    return out;
}

namespace detail {

// Core selection on a row of the distance matrix: the k nearest in-class
// embeddings (ties by lowest sample index), self first then ascending.
template <typename T>
OverloadedInstance<T> select_neighbors_row(const EmbeddingStore<T>& store,
                                           const DistanceMatrix<T>& dist, std::size_t row,
                                           int k) {
    const auto& mem = store.members(dist.class_label);
    const std::size_t m = mem.size();
    if (k < 0) throw ArgumentError("select_neighbors: k must be nonnegative");
    if (static_cast<std::size_t>(k) + 1 > m) {
        throw CapacityError("select_neighbors: k=" + std::to_string(k) + " needs " +
                            std::to_string(k + 1) + " members but class " +
                            std::to_string(dist.class_label) + " has " + std::to_string(m));
    }
    OverloadedInstance<T> inst;
    inst.sample_index = mem[row].sample_index;
    inst.y = dist.class_label;
    inst.neighbors.push_back(mem[row].v);
    inst.neighbor_indices.push_back(mem[row].sample_index);
    if (k == 0) return inst;

    std::vector<std::pair<T, std::size_t>> order; // (distance, position)
    order.reserve(m - 1);
    for (std::size_t b = 0; b < m; ++b) {
        if (b == row) continue;
        order.push_back({dist.d.at(row, b), b});
    }
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return mem[a.second].sample_index < mem[b.second].sample_index;
    });
    for (int i = 0; i < k; ++i) {
        inst.neighbors.push_back(mem[order[static_cast<std::size_t>(i)].second].v);
        inst.neighbor_indices.push_back(mem[order[static_cast<std::size_t>(i)].second].sample_index);
    }
    return inst;
}

} // namespace detail

template <typename T>
OverloadedInstance<T> select_neighbors(const EmbeddingStore<T>& store,
                                       const DistanceMatrix<T>& dist, std::size_t sample_index,
                                       int k) {
    const auto& mem = store.members(dist.class_label);
    for (std::size_t row = 0; row < mem.size(); ++row) {
        if (mem[row].sample_index == sample_index) {
            return detail::select_neighbors_row(store, dist, row, k);
        }
    }
    throw ArgumentError("select_neighbors: sample " + std::to_string(sample_index) +
                        " not in class " + std::to_string(dist.class_label));
}

// Neighbor selection plus weight sampling over all classes (Z').  Per-class
// k is clamped to class size - 1 when necessary; r_j simplex draws are taken
// per sample from a per-class derived stream.  Output order: classes
// ascending, members in sample order, repetitions consecutive.
template <typename T, typename U>
std::vector<WeightedInstance<T>> build_weighted_set(const EmbeddingStore<T>& store,
                                                    const Dataset<U>& ds,
                                                    const std::vector<int>& k_per_class,
                                                    const std::vector<int>& r_per_class,
                                                    const SeededRng& rng) {
    const std::size_t n = store.n_classes();
    if (k_per_class.size() != n || r_per_class.size() != n) {
        throw ArgumentError("build_weighted_set: per-class parameter count mismatch");
    }
    for (int r : r_per_class) {
        if (r < 1) throw ArgumentError("build_weighted_set: r must be at least 1");
    }
    std::vector<WeightedInstance<T>> out;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& mem = store.by_class[j];
        if (mem.empty()) continue;
        int k = k_per_class[j];
        if (static_cast<std::size_t>(k) + 1 > mem.size()) {
            k = static_cast<int>(mem.size()) - 1; // clamp, see ledger
        }
        DistanceMatrix<T> dm;
        if (k > 0) dm = distance_matrix(store, static_cast<int>(j));
        else dm.class_label = static_cast<int>(j);
        SeededRng wrng = rng.derive(j);
        const int r = r_per_class[j];
        for (std::size_t row = 0; row < mem.size(); ++row) {
            OverloadedInstance<T> base = detail::select_neighbors_row(store, dm, row, k);
            base.x = ds.inputs[base.sample_index].template cast<T>();
            for (int rep = 0; rep < r; ++rep) {
                WeightedInstance<T> wi;
                static_cast<OverloadedInstance<T>&>(wi) = base;
                wi.w = sample_simplex<T>(base.neighbors.size(), wrng);
                out.push_back(std::move(wi));
            }
        }
    }
    return out;
}

// Line-delimited debug dump: sample index, class, neighbor sample indices,
// weight vector.
template <typename T>
void dump_weighted_set(std::ostream& os, const std::vector<WeightedInstance<T>>& set) {
    os.precision(9);
    for (const auto& wi : set) {
        os << wi.sample_index << " " << wi.y << " ";
        for (std::size_t i = 0; i < wi.neighbor_indices.size(); ++i) {
            if (i) os << ",";
            os << wi.neighbor_indices[i];
        }
        os << " ";
        for (std::size_t i = 0; i < wi.w.size(); ++i) {
            if (i) os << ",";
            os << wi.w[i];
        }
        os << "\n";
    }
}

} // namespace dos
