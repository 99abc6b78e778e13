#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dos/data_io.hpp"
#include "dos/evaluation.hpp"
#include "dos/network.hpp"
#include "dos/overloading.hpp"

namespace dos {

// Knobs for the over-sampling training loop.  `rounds` is the number of
// target-recompute iterations; each round runs `epochs_per_round` passes
// over the weighted set.  An empty r_per_class is filled with the default
// rule (minority ceil(1/R), majority 1).
struct TrainPlan {
    int k_mnr = 5;
    int k_mjr = 0;
    std::vector<int> r_per_class;
    int rounds = 3;
    int epochs_per_round = 1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    int stl_init_epochs = 1;
    bool trace_visits = false; // record (sample_index, loss) per visit

    void validate() const {
        if (k_mnr < 0 || k_mjr < 0) throw ArgumentError("k values must be nonnegative");
        if (k_mjr > k_mnr) throw ArgumentError("k_mjr must not exceed k_mnr");
        if (rounds < 1) throw ArgumentError("rounds must be at least 1");
        if (epochs_per_round < 1) throw ArgumentError("epochs_per_round must be at least 1");
        if (stl_init_epochs < 0) throw ArgumentError("stl_init_epochs must be nonnegative");
        if (alpha < 0) throw ArgumentError("alpha must be nonnegative");
        for (int r : r_per_class) {
            if (r < 1) throw ArgumentError("per-class r must be at least 1");
        }
    }
};

struct ParamSuggestion {
    double R = 1.0;
    int k_mnr = 5;
    int k_mjr = 0;
    double r_min = 1.0; // 1/R
    double r_max = 5.0; // k_mnr/R
};

// R = (total minority samples) / (total majority samples); the suggested
// over-sampling rate range is [1/R, k_mnr/R] at the default k_mnr = 5.
template <typename T>
ParamSuggestion suggest_params(const Dataset<T>& ds,
                               const std::vector<std::uint8_t>& minority_flags) {
    const auto& flags = minority_flags.empty() ? ds.minority_flags : minority_flags;
    if (flags.size() != static_cast<std::size_t>(ds.n_classes)) {
        throw DataError("suggest_params: minority flags missing or wrong length");
    }
    const auto counts = ds.class_counts();
    double minority = 0, majority = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        (flags[j] ? minority : majority) += static_cast<double>(counts[j]);
    }
    if (minority == 0 || majority == 0) {
        throw DataError("suggest_params: both class groups must be nonempty");
    }
    ParamSuggestion s;
    s.R = minority / majority;
    s.k_mnr = 5;
    s.k_mjr = 0;
    s.r_min = 1.0 / s.R;
    s.r_max = static_cast<double>(s.k_mnr) / s.R;
    return s;
}

// Default per-class over-sampling rates: ceil(1/R) for minority classes,
// 1 for majority.  Balanced data (no flags) gets all ones.
template <typename T>
std::vector<int> default_r_per_class(const Dataset<T>& ds) {
    std::vector<int> r(static_cast<std::size_t>(ds.n_classes), 1);
    bool any = false;
    for (std::uint8_t f : ds.minority_flags) any = any || f;
    if (!any) return r;
    const ParamSuggestion s = suggest_params(ds, {});
    const int r_mnr = std::max(1, static_cast<int>(std::ceil(1.0 / s.R)));
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (ds.minority_flags[j]) r[j] = r_mnr;
    }
    return r;
}

struct ProgressRecord {
    std::string kind; // stl_epoch | dos_round
    int index = 0;
    double loss_f = 0;
    double loss_g = 0;
    double seconds = 0;      // training time of the epoch/round
    double prep_seconds = 0; // target recompute + weighted set build (dos)
    double var_pre = 0;      // mean in-class variance of this round's store

    std::string to_line() const {
        std::ostringstream os;
        os.precision(9);
        os << "kind=" << kind << " index=" << index << " loss_f=" << loss_f
           << " loss_g=" << loss_g << " seconds=" << seconds << " prep_seconds=" << prep_seconds
           << " var_pre=" << var_pre;
        return os.str();
    }
};

template <typename T>
struct TrainResult {
    Parameters<T> params;
    std::vector<ProgressRecord> progress;
    double final_variance = 0; // mean in-class variance after the last round
    std::vector<std::pair<std::size_t, double>> visit_trace;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// RNG stream ids under the run seed.
enum : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kWeightStream = 3 };

} // namespace detail

// Shuffled-minibatch SGD on the single-task cross-entropy.  The shuffle
// stream advances one permutation per epoch; train_dos shares the same
// stream layout so its initialization epochs line up with this path.
template <typename T>
TrainResult<T> train_stl(const NetworkConfig& cfg, const Dataset<T>& ds, int epochs,
                         std::uint64_t seed, bool trace_visits = false) {
    cfg.validate();
    ds.validate();
    if (ds.size() == 0) throw DataError("train_stl: empty dataset");
    if (epochs < 0) throw ArgumentError("train_stl: epochs must be nonnegative");

    SeededRng base(seed);
    SeededRng init_rng = base.derive(detail::kInitStream);
    SeededRng shuffle_rng = base.derive(detail::kShuffleStream);

    TrainResult<T> res;
    res.params = init_parameters<T>(cfg, init_rng);

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    ForwardCache<T> cache;
    for (int e = 0; e < epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
            BackpropResult<T> bp = backprop_stl(cfg, res.params, ds, batch, &cache);
            sgd_step(res.params, bp.grads, cfg.learning_rate);
            loss_sum += bp.mean_loss * static_cast<double>(batch.size());
            if (trace_visits) {
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    res.visit_trace.push_back({batch[i], bp.instance_loss[i]});
                }
            }
        }
        ProgressRecord rec;
        rec.kind = "stl_epoch";
        rec.index = e + 1;
        rec.loss_g = loss_sum / static_cast<double>(ds.size());
        rec.seconds = detail::seconds_since(t0);
        res.progress.push_back(rec);
    }
    return res;
}

// Algorithm: single-task initialization, then `rounds` iterations of
// {compute all embeddings; per-class distance matrices where k > 0; build
// the weighted set Z'; multi-task epochs over shuffled Z'}.  Targets are
// recomputed at the start of every round.
template <typename T>
TrainResult<T> train_dos(const NetworkConfig& cfg, const Dataset<T>& ds, const TrainPlan& plan) {
    cfg.validate();
    ds.validate();
    plan.validate();
    if (ds.size() == 0) throw DataError("train_dos: empty dataset");

    const std::size_t n = static_cast<std::size_t>(ds.n_classes);
    std::vector<int> k_per_class(n, plan.k_mjr);
    if (!ds.minority_flags.empty()) {
        for (std::size_t j = 0; j < n; ++j) {
            if (ds.minority_flags[j]) k_per_class[j] = plan.k_mnr;
        }
    }
    std::vector<int> r_per_class = plan.r_per_class;
    if (r_per_class.empty()) {
        r_per_class = default_r_per_class(ds);
    } else if (r_per_class.size() != n) {
        throw ArgumentError("train_dos: r_per_class must have one entry per class");
    }

    SeededRng base(plan.seed);
    SeededRng init_rng = base.derive(detail::kInitStream);
    SeededRng shuffle_rng = base.derive(detail::kShuffleStream);

    TrainResult<T> res;
    res.params = init_parameters<T>(cfg, init_rng);

    // Single-task initialization, sharing the shuffle stream so that the
    // first MTL epoch continues exactly where an STL run would.
    {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        ForwardCache<T> cache;
        for (int e = 0; e < plan.stl_init_epochs; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            shuffle_rng.shuffle(order);
            double loss_sum = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(stop));
                BackpropResult<T> bp = backprop_stl(cfg, res.params, ds, batch, &cache);
                sgd_step(res.params, bp.grads, cfg.learning_rate);
                loss_sum += bp.mean_loss * static_cast<double>(batch.size());
            }
            ProgressRecord rec;
            rec.kind = "stl_epoch";
            rec.index = e + 1;
            rec.loss_g = loss_sum / static_cast<double>(ds.size());
            rec.seconds = detail::seconds_since(t0);
            res.progress.push_back(rec);
        }
    }

    ForwardCache<T> cache;
    for (int t = 1; t <= plan.rounds; ++t) {
        const auto prep0 = std::chrono::steady_clock::now();
        EmbeddingStore<T> store = compute_embeddings(cfg, res.params, ds);
        const double var_pre = mean_in_class_variance(store);
        std::vector<WeightedInstance<T>> z = build_weighted_set(
            store, ds, k_per_class, r_per_class,
            base.derive(detail::kWeightStream, static_cast<std::uint64_t>(t)));
        const double prep_seconds = detail::seconds_since(prep0);

        const auto t0 = std::chrono::steady_clock::now();
        double lf_sum = 0, lg_sum = 0;
        std::vector<std::size_t> order(z.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<const WeightedInstance<T>*> batch;
        for (int e = 0; e < plan.epochs_per_round; ++e) {
            shuffle_rng.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                batch.clear();
                for (std::size_t i = start; i < stop; ++i) batch.push_back(&z[order[i]]);
                BackpropResult<T> bp = backprop_mtl(cfg, res.params, batch, plan.alpha, &cache);
                sgd_step(res.params, bp.grads, cfg.learning_rate);
                lf_sum += bp.mean_loss_f * static_cast<double>(batch.size());
                lg_sum += bp.mean_loss_g * static_cast<double>(batch.size());
                if (plan.trace_visits) {
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        res.visit_trace.push_back({batch[i]->sample_index, bp.instance_loss[i]});
                    }
                }
            }
        }
        const double denom = static_cast<double>(z.size() * static_cast<std::size_t>(
                                                                plan.epochs_per_round));
        ProgressRecord rec;
        rec.kind = "dos_round";
        rec.index = t;
        rec.loss_f = lf_sum / denom;
        rec.loss_g = lg_sum / denom;
        rec.seconds = detail::seconds_since(t0);
        rec.prep_seconds = prep_seconds;
        rec.var_pre = var_pre;
        res.progress.push_back(rec);
    }

    EmbeddingStore<T> final_store = compute_embeddings(cfg, res.params, ds);
    res.final_variance = mean_in_class_variance(final_store);
    return res;
}

} // namespace dos
