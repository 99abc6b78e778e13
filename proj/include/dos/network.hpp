#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "dos/data_io.hpp"
#include "dos/errors.hpp"
#include "dos/kernels.hpp"
#include "dos/losses.hpp"
#include "dos/overloading.hpp"
#include "dos/rng.hpp"
#include "dos/tensor.hpp"

namespace dos {

// Architecture and optimization settings for the two-headed CNN: an
// embedding trunk f (convolutions + fully-connected layers, final hidden
// activation = the deep feature) and a linear softmax head g on top.
struct NetworkConfig {
    std::array<std::size_t, 3> input_shape{1, 28, 28}; // C x H x W
    std::vector<std::pair<std::size_t, std::size_t>> conv_filters{{6, 5}, {16, 5}}; // (count, kernel)
    std::vector<std::size_t> fc_widths{400, 120};
    std::size_t embedding_dim = 120;
    std::size_t n_classes = 10;
    double learning_rate = 0.01;
    std::size_t batch_size = 60;
    double alpha = 1.0; // blend of the embedding-head loss in the MTL objective

    void validate() const {
        if (fc_widths.empty()) throw ConfigError("at least one fully-connected layer is required");
        if (embedding_dim != fc_widths.back()) {
            throw ConfigError("embedding_dim " + std::to_string(embedding_dim) +
                              " must equal the final hidden width " +
                              std::to_string(fc_widths.back()));
        }
        if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
        if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (alpha < 0) throw ConfigError("alpha must be nonnegative");
        for (const auto& [count, k] : conv_filters) {
            if (count < 1 || k < 1) throw ConfigError("conv filter counts and sizes must be positive");
        }
        geometry_of(*this); // throws if a kernel outgrows its input
    }

    struct Geometry {
        std::vector<std::array<std::size_t, 3>> conv_out;
        std::size_t flat = 0;
    };

    static Geometry geometry_of(const NetworkConfig& cfg) {
        Geometry g;
        std::array<std::size_t, 3> cur = cfg.input_shape;
        for (const auto& [count, k] : cfg.conv_filters) {
            if (k > cur[1] || k > cur[2]) {
                throw ConfigError("conv kernel " + std::to_string(k) + " larger than input " +
                                  std::to_string(cur[1]) + "x" + std::to_string(cur[2]));
            }
            cur = {count, cur[1] - k + 1, cur[2] - k + 1};
            g.conv_out.push_back(cur);
        }
        g.flat = cur[0] * cur[1] * cur[2];
        return g;
    }
};

// W_f: convolution + fully-connected weights/biases (the embedding trunk).
// W_g: the linear head feeding softmax.
template <typename T>
struct Parameters {
    std::vector<Tensor<T>> conv_w; // [Co x Ci x k x k]
    std::vector<Tensor<T>> conv_b; // [Co]
    std::vector<Tensor<T>> fc_w;   // [out x in]
    std::vector<Tensor<T>> fc_b;   // [out]
    Tensor<T> head_w;              // [n x d]
    Tensor<T> head_b;              // [n]

    template <typename F>
    void for_each(F&& f) {
        for (std::size_t l = 0; l < conv_w.size(); ++l) {
            f(conv_w[l]);
            f(conv_b[l]);
        }
        for (std::size_t l = 0; l < fc_w.size(); ++l) {
            f(fc_w[l]);
            f(fc_b[l]);
        }
        f(head_w);
        f(head_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t l = 0; l < conv_w.size(); ++l) {
            f(conv_w[l]);
            f(conv_b[l]);
        }
        for (std::size_t l = 0; l < fc_w.size(); ++l) {
            f(fc_w[l]);
            f(fc_b[l]);
        }
        f(head_w);
        f(head_b);
    }

    bool is_finite() const {
        bool ok = true;
        for_each([&](const Tensor<T>& t) { ok = ok && t.is_finite(); });
        return ok;
    }

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        for (const auto& t : conv_w) out.conv_w.push_back(t.template cast<U>());
        for (const auto& t : conv_b) out.conv_b.push_back(t.template cast<U>());
        for (const auto& t : fc_w) out.fc_w.push_back(t.template cast<U>());
        for (const auto& t : fc_b) out.fc_b.push_back(t.template cast<U>());
        out.head_w = head_w.template cast<U>();
        out.head_b = head_b.template cast<U>();
        return out;
    }
};

template <typename T>
Parameters<T> zero_parameters(const NetworkConfig& cfg) {
    const auto geo = NetworkConfig::geometry_of(cfg);
    Parameters<T> p;
    std::size_t cin = cfg.input_shape[0];
    for (const auto& [count, k] : cfg.conv_filters) {
        p.conv_w.push_back(Tensor<T>({count, cin, k, k}));
        p.conv_b.push_back(Tensor<T>({count}));
        cin = count;
    }
    std::size_t in = geo.flat;
    for (std::size_t w : cfg.fc_widths) {
        p.fc_w.push_back(Tensor<T>({w, in}));
        p.fc_b.push_back(Tensor<T>({w}));
        in = w;
    }
    p.head_w = Tensor<T>({cfg.n_classes, cfg.embedding_dim});
    p.head_b = Tensor<T>({cfg.n_classes});
    return p;
}

// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, drawn in canonical
// tensor order so a seed pins the full initialization.
template <typename T>
Parameters<T> init_parameters(const NetworkConfig& cfg, SeededRng& rng) {
    cfg.validate();
    Parameters<T> p = zero_parameters<T>(cfg);
    std::size_t cin = cfg.input_shape[0];
    for (std::size_t l = 0; l < p.conv_w.size(); ++l) {
        const std::size_t k = cfg.conv_filters[l].second;
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        for (std::size_t i = 0; i < p.conv_w[l].size(); ++i) {
            p.conv_w[l][i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        for (std::size_t i = 0; i < p.conv_b[l].size(); ++i) {
            p.conv_b[l][i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        cin = cfg.conv_filters[l].first;
    }
    std::size_t in = NetworkConfig::geometry_of(cfg).flat;
    for (std::size_t l = 0; l < p.fc_w.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::size_t i = 0; i < p.fc_w[l].size(); ++i) {
            p.fc_w[l][i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        for (std::size_t i = 0; i < p.fc_b[l].size(); ++i) {
            p.fc_b[l][i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        in = cfg.fc_widths[l];
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.embedding_dim));
    for (std::size_t i = 0; i < p.head_w.size(); ++i) {
        p.head_w[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    for (std::size_t i = 0; i < p.head_b.size(); ++i) {
        p.head_b[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
}

// Per-minibatch activations.  Input pointers are borrowed: they must stay
// alive until the matching backward call is done.
template <typename T>
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<const Tensor<T>*> xs;
    std::vector<Tensor<T>> conv_z, conv_a; // [B x Co x H' x W']
    Tensor<T> x_flat;                      // [B x flat], used when there are no conv layers
    std::vector<Tensor<T>> fc_z, fc_a;     // [B x width]
    Tensor<T> logits, probs;               // [B x n]

    // Flattened trunk features feeding the first fully-connected layer.
    const T* flat_row(std::size_t flat, std::size_t b) const {
        return conv_a.empty() ? x_flat.data() + b * flat : conv_a.back().data() + b * flat;
    }
    const T* embedding_row(std::size_t b) const {
        const auto& emb = fc_a.back();
        return emb.data() + b * emb.extent(1);
    }
};

namespace detail {

// z[b,o] = dot(in[b,:], W[o,:]) + bias[o]; weight-row-major loop so each row
// is read once per batch.
template <typename T>
void fc_forward(const T* in, std::size_t b_count, std::size_t width_in, const Tensor<T>& w,
                const Tensor<T>& bias, T* z) {
    const std::size_t width_out = w.extent(0);
    for (std::size_t o = 0; o < width_out; ++o) {
        const T* wrow = w.data() + o * width_in;
        const T bv = bias[o];
        for (std::size_t b = 0; b < b_count; ++b) {
            z[b * width_out + o] = dot(in + b * width_in, wrow, width_in) + bv;
        }
    }
}

} // namespace detail

// Forward through the embedding trunk f for a batch of raw inputs; fills the
// cache up to the deep features (fc_a.back()).
template <typename T>
void forward_embed_batch(const NetworkConfig& cfg, const Parameters<T>& params,
                         const std::vector<const Tensor<T>*>& xs, ForwardCache<T>& cache) {
    const auto geo = NetworkConfig::geometry_of(cfg);
    const std::size_t b_count = xs.size();
    if (b_count == 0) throw DataError("forward pass on an empty batch");
    const std::vector<std::size_t> want{cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
    for (const Tensor<T>* x : xs) {
        if (x->shape() != want) {
            throw DimensionError("input shape " + x->shape_str() + " does not match configured " +
                                 Tensor<T>(want).shape_str());
        }
    }
    cache.batch = b_count;
    cache.xs = xs;

    const std::size_t n_conv = cfg.conv_filters.size();
    cache.conv_z.resize(n_conv);
    cache.conv_a.resize(n_conv);
    for (std::size_t l = 0; l < n_conv; ++l) {
        const auto& [cout, k] = cfg.conv_filters[l];
        const std::size_t cin = l == 0 ? cfg.input_shape[0] : cfg.conv_filters[l - 1].first;
        const std::size_t ih = l == 0 ? cfg.input_shape[1] : geo.conv_out[l - 1][1];
        const std::size_t iw = l == 0 ? cfg.input_shape[2] : geo.conv_out[l - 1][2];
        const auto& od = geo.conv_out[l];
        const std::size_t plane = od[0] * od[1] * od[2];
        Tensor<T>& z = cache.conv_z[l];
        if (z.shape() != std::vector<std::size_t>{b_count, od[0], od[1], od[2]}) {
            z = Tensor<T>({b_count, od[0], od[1], od[2]});
        } else {
            z.fill(T(0));
        }
        for (std::size_t b = 0; b < b_count; ++b) {
            const T* in = l == 0 ? xs[b]->data() : cache.conv_a[l - 1].data() + b * cin * ih * iw;
            detail::conv2d_raw(in, cin, ih, iw, params.conv_w[l].data(), cout, k, k,
                               std::size_t(1), z.data() + b * plane);
            T* zp = z.data() + b * plane;
            for (std::size_t co = 0; co < od[0]; ++co) {
                const T bv = params.conv_b[l][co];
                T* row = zp + co * od[1] * od[2];
                for (std::size_t i = 0; i < od[1] * od[2]; ++i) row[i] += bv;
            }
        }
        Tensor<T>& a = cache.conv_a[l];
        if (a.shape() != z.shape()) a = Tensor<T>(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > T(0) ? z[i] : T(0);
    }

    if (n_conv == 0) {
        if (cache.x_flat.shape() != std::vector<std::size_t>{b_count, geo.flat}) {
            cache.x_flat = Tensor<T>({b_count, geo.flat});
        }
        for (std::size_t b = 0; b < b_count; ++b) {
            const T* src = xs[b]->data();
            T* dst = cache.x_flat.data() + b * geo.flat;
            for (std::size_t i = 0; i < geo.flat; ++i) dst[i] = src[i];
        }
    }

    const std::size_t n_fc = cfg.fc_widths.size();
    cache.fc_z.resize(n_fc);
    cache.fc_a.resize(n_fc);
    std::size_t width_in = geo.flat;
    for (std::size_t l = 0; l < n_fc; ++l) {
        const std::size_t width_out = cfg.fc_widths[l];
        Tensor<T>& z = cache.fc_z[l];
        if (z.shape() != std::vector<std::size_t>{b_count, width_out}) {
            z = Tensor<T>({b_count, width_out});
        }
        const T* in = l == 0 ? cache.flat_row(geo.flat, 0) : cache.fc_a[l - 1].data();
        detail::fc_forward(in, b_count, width_in, params.fc_w[l], params.fc_b[l], z.data());
        Tensor<T>& a = cache.fc_a[l];
        if (a.shape() != z.shape()) a = Tensor<T>(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > T(0) ? z[i] : T(0);
        width_in = width_out;
    }
}

// Classifier head on the cached deep features: logits and softmax rows.
template <typename T>
void forward_head_batch(const NetworkConfig& cfg, const Parameters<T>& params,
                        ForwardCache<T>& cache) {
    const std::size_t b_count = cache.batch;
    const std::size_t n = cfg.n_classes;
    if (cache.logits.shape() != std::vector<std::size_t>{b_count, n}) {
        cache.logits = Tensor<T>({b_count, n});
    }
    detail::fc_forward(cache.fc_a.back().data(), b_count, cfg.embedding_dim, params.head_w,
                       params.head_b, cache.logits.data());
    cache.probs = cache.logits;
    for (std::size_t b = 0; b < b_count; ++b) {
        detail::softmax_row(cache.probs.data() + b * n, n);
    }
}

// f(x): deep feature vector for one input.
template <typename T>
Tensor<T> embed(const NetworkConfig& cfg, const Parameters<T>& params, const Tensor<T>& x) {
    ForwardCache<T> cache;
    forward_embed_batch(cfg, params, {&x}, cache);
    Tensor<T> out({cfg.embedding_dim});
    const T* row = cache.embedding_row(0);
    for (std::size_t i = 0; i < cfg.embedding_dim; ++i) out[i] = row[i];
    return out;
}

// g(v): class posterior for one deep feature vector.
template <typename T>
Tensor<T> classify(const NetworkConfig& cfg, const Parameters<T>& params, const Tensor<T>& v) {
    if (v.size() != cfg.embedding_dim) {
        throw DimensionError("classify: feature length " + std::to_string(v.size()) +
                             " does not match embedding_dim " + std::to_string(cfg.embedding_dim));
    }
    Tensor<T> out({cfg.n_classes});
    for (std::size_t o = 0; o < cfg.n_classes; ++o) {
        out[o] = detail::dot(v.data(), params.head_w.data() + o * cfg.embedding_dim,
                             cfg.embedding_dim) +
                 params.head_b[o];
    }
    detail::softmax_row(out.data(), out.size());
    return out;
}

template <typename T>
struct BackpropResult {
    Parameters<T> grads;
    double mean_loss = 0.0;   // full objective, averaged over the batch
    double mean_loss_f = 0.0; // embedding-head part (zero for single-task)
    double mean_loss_g = 0.0; // classifier part
    std::vector<double> instance_loss;
};

namespace detail {

// Backpropagates d(loss)/d(embedding) through the trunk, accumulating into
// grads.conv_* / grads.fc_*.  delta is [B x d] and is consumed.
template <typename T>
void backward_trunk(const NetworkConfig& cfg, const Parameters<T>& params,
                    const ForwardCache<T>& cache, Tensor<T>& delta, Parameters<T>& grads) {
    const auto geo = NetworkConfig::geometry_of(cfg);
    const std::size_t b_count = cache.batch;
    const std::size_t n_fc = cfg.fc_widths.size();

    Tensor<T> cur = std::move(delta);
    for (std::size_t li = n_fc; li-- > 0;) {
        const std::size_t width_out = cfg.fc_widths[li];
        const std::size_t width_in = li == 0 ? geo.flat : cfg.fc_widths[li - 1];
        const Tensor<T>& z = cache.fc_z[li];
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (!(z[i] > T(0))) cur[i] = T(0);
        }
        const T* in0 = li == 0 ? cache.flat_row(geo.flat, 0) : cache.fc_a[li - 1].data();
        Tensor<T>& gw = grads.fc_w[li];
        Tensor<T>& gb = grads.fc_b[li];
        for (std::size_t o = 0; o < width_out; ++o) {
            T* grow = gw.data() + o * width_in;
            T bs = 0;
            for (std::size_t b = 0; b < b_count; ++b) {
                const T d = cur[b * width_out + o];
                if (d != T(0)) axpy(grow, d, in0 + b * width_in, width_in);
                bs += d;
            }
            gb[o] += bs;
        }
        Tensor<T> prev({b_count, width_in});
        for (std::size_t o = 0; o < width_out; ++o) {
            const T* wrow = params.fc_w[li].data() + o * width_in;
            for (std::size_t b = 0; b < b_count; ++b) {
                const T d = cur[b * width_out + o];
                if (d != T(0)) axpy(prev.data() + b * width_in, d, wrow, width_in);
            }
        }
        cur = std::move(prev);
    }

    const std::size_t n_conv = cfg.conv_filters.size();
    if (n_conv == 0) return;
    for (std::size_t li = n_conv; li-- > 0;) {
        const auto& od = geo.conv_out[li];
        const std::size_t plane = od[0] * od[1] * od[2];
        const std::size_t cin = li == 0 ? cfg.input_shape[0] : cfg.conv_filters[li - 1].first;
        const std::size_t ih = li == 0 ? cfg.input_shape[1] : geo.conv_out[li - 1][1];
        const std::size_t iw = li == 0 ? cfg.input_shape[2] : geo.conv_out[li - 1][2];
        const std::size_t k = cfg.conv_filters[li].second;
        const Tensor<T>& z = cache.conv_z[li];
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (!(z[i] > T(0))) cur[i] = T(0);
        }
        Tensor<T> prev;
        if (li > 0) prev = Tensor<T>({b_count, cin, ih, iw});
        for (std::size_t b = 0; b < b_count; ++b) {
            const T* up = cur.data() + b * plane;
            const T* in = li == 0 ? cache.xs[b]->data()
                                  : cache.conv_a[li - 1].data() + b * cin * ih * iw;
            conv2d_bwd_kernels_raw(in, cin, ih, iw, up, od[0], od[1], od[2], k, k,
                                   grads.conv_w[li].data());
            for (std::size_t co = 0; co < od[0]; ++co) {
                const T* urow = up + co * od[1] * od[2];
                T s = 0;
                for (std::size_t i = 0; i < od[1] * od[2]; ++i) s += urow[i];
                grads.conv_b[li][co] += s;
            }
            if (li > 0) {
                conv2d_bwd_input_raw(params.conv_w[li].data(), cin, ih, iw, up, od[0], od[1],
                                     od[2], k, k, prev.data() + b * cin * ih * iw);
            }
        }
        if (li > 0) cur = std::move(prev);
    }
}

} // namespace detail

// Gradients of the mean single-task cross-entropy over a batch, with
// respect to all of W_f and W_g.
template <typename T>
BackpropResult<T> backprop_stl(const NetworkConfig& cfg, const Parameters<T>& params,
                               const Dataset<T>& ds, const std::vector<std::size_t>& indices,
                               ForwardCache<T>* scratch = nullptr) {
    if (indices.empty()) throw DataError("backprop_stl: empty batch");
    for (std::size_t i : indices) {
        if (ds.labels[i] < 0 || static_cast<std::size_t>(ds.labels[i]) >= cfg.n_classes) {
            throw DataError("backprop_stl: label " + std::to_string(ds.labels[i]) +
                            " out of range");
        }
    }
    std::vector<const Tensor<T>*> xs;
    xs.reserve(indices.size());
    for (std::size_t i : indices) xs.push_back(&ds.inputs[i]);

    ForwardCache<T> local;
    ForwardCache<T>& cache = scratch ? *scratch : local;
    forward_embed_batch(cfg, params, xs, cache);
    forward_head_batch(cfg, params, cache);

    const std::size_t b_count = indices.size();
    const std::size_t n = cfg.n_classes;
    const std::size_t d = cfg.embedding_dim;
    BackpropResult<T> res;
    res.grads = zero_parameters<T>(cfg);
    res.instance_loss.resize(b_count);

    Tensor<T> dlogits({b_count, n});
    const T inv_b = T(1) / static_cast<T>(b_count);
    for (std::size_t b = 0; b < b_count; ++b) {
        const int y = ds.labels[indices[b]];
        const T* prow = cache.probs.data() + b * n;
        Tensor<T> pv({n});
        for (std::size_t c = 0; c < n; ++c) pv[c] = prow[c];
        res.instance_loss[b] = cross_entropy(pv, y);
        res.mean_loss_g += res.instance_loss[b];
        T* drow = dlogits.data() + b * n;
        for (std::size_t c = 0; c < n; ++c) {
            drow[c] = (prow[c] - (static_cast<std::size_t>(y) == c ? T(1) : T(0))) * inv_b;
        }
    }
    res.mean_loss_g /= static_cast<double>(b_count);
    res.mean_loss = res.mean_loss_g;

    // Head gradients and the embedding delta.
    Tensor<T> demb({b_count, d});
    for (std::size_t o = 0; o < n; ++o) {
        T* grow = res.grads.head_w.data() + o * d;
        const T* wrow = params.head_w.data() + o * d;
        T bs = 0;
        for (std::size_t b = 0; b < b_count; ++b) {
            const T dv = dlogits[b * n + o];
            detail::axpy(grow, dv, cache.embedding_row(b), d);
            detail::axpy(demb.data() + b * d, dv, wrow, d);
            bs += dv;
        }
        res.grads.head_b[o] += bs;
    }

    detail::backward_trunk(cfg, params, cache, demb, res.grads);
    return res;
}

// Gradients of the mean weighted micro-cluster objective
//   alpha * l'_f + l'_g
// over a batch of weighted instances.  Routing: l'_f reaches W_f only (the
// stored targets v_i are constants), l'_g reaches W_g only (g is evaluated
// on the stored v_i), and the rho' weights are treated as constants.
template <typename T>
BackpropResult<T> backprop_mtl(const NetworkConfig& cfg, const Parameters<T>& params,
                               const std::vector<const WeightedInstance<T>*>& batch, double alpha,
                               ForwardCache<T>* scratch = nullptr) {
    if (batch.empty()) throw DataError("backprop_mtl: empty batch");
    const std::size_t d = cfg.embedding_dim;
    const std::size_t n = cfg.n_classes;
    for (const auto* wi : batch) {
        if (wi->neighbors.empty()) throw DataError("backprop_mtl: instance without neighbors");
        if (wi->w.size() != wi->neighbors.size()) {
            throw DataError("backprop_mtl: weight arity " + std::to_string(wi->w.size()) +
                            " does not match neighbor count " +
                            std::to_string(wi->neighbors.size()));
        }
        for (const auto& v : wi->neighbors) {
            if (v.size() != d) {
                throw DataError("backprop_mtl: stored embedding length " +
                                std::to_string(v.size()) + " does not match embedding_dim " +
                                std::to_string(d));
            }
        }
        if (wi->y < 0 || static_cast<std::size_t>(wi->y) >= n) {
            throw DataError("backprop_mtl: label " + std::to_string(wi->y) + " out of range");
        }
    }

    std::vector<const Tensor<T>*> xs;
    xs.reserve(batch.size());
    for (const auto* wi : batch) xs.push_back(&wi->x);

    ForwardCache<T> local;
    ForwardCache<T>& cache = scratch ? *scratch : local;
    forward_embed_batch(cfg, params, xs, cache);

    const std::size_t b_count = batch.size();
    BackpropResult<T> res;
    res.grads = zero_parameters<T>(cfg);
    res.instance_loss.resize(b_count);

    Tensor<T> demb({b_count, d});
    const double inv_b = 1.0 / static_cast<double>(b_count);
    Tensor<T> fx({d});
    for (std::size_t b = 0; b < b_count; ++b) {
        const WeightedInstance<T>& wi = *batch[b];
        const T* emb = cache.embedding_row(b);
        for (std::size_t i = 0; i < d; ++i) fx[i] = emb[i];

        const double lf = weighted_loss_f(fx, wi.neighbors, wi.w);
        const std::vector<double> rw = rho_weighted(fx, wi.neighbors, wi.w);

        // d(l'_f)/d(fx) = 2 (fx - sum_i w_i v_i), scaled by alpha / B.
        if (alpha != 0.0) {
            T* drow = demb.data() + b * d;
            const T scale = static_cast<T>(2.0 * alpha * inv_b);
            for (std::size_t i = 0; i < d; ++i) drow[i] = scale * fx[i];
            for (std::size_t i = 0; i < wi.neighbors.size(); ++i) {
                detail::axpy(drow, static_cast<T>(-2.0 * alpha * inv_b) * wi.w[i],
                             wi.neighbors[i].data(), d);
            }
        }

        // l'_g on the stored embeddings, each term scaled by its rho'.
        double lg = 0.0;
        for (std::size_t i = 0; i < wi.neighbors.size(); ++i) {
            Tensor<T> probs = classify(cfg, params, wi.neighbors[i]);
            lg += rw[i] * cross_entropy(probs, wi.y);
            const T scale = static_cast<T>(rw[i] * inv_b);
            for (std::size_t o = 0; o < n; ++o) {
                const T dv =
                    scale * (probs[o] - (static_cast<std::size_t>(wi.y) == o ? T(1) : T(0)));
                detail::axpy(res.grads.head_w.data() + o * d, dv, wi.neighbors[i].data(), d);
                res.grads.head_b[o] += dv;
            }
        }

        res.instance_loss[b] = alpha * lf + lg;
        res.mean_loss_f += lf;
        res.mean_loss_g += lg;
    }
    res.mean_loss_f *= inv_b;
    res.mean_loss_g *= inv_b;
    res.mean_loss = alpha * res.mean_loss_f + res.mean_loss_g;

    if (alpha != 0.0) {
        detail::backward_trunk(cfg, params, cache, demb, res.grads);
    }
    return res;
}

// params <- params - lr * grads
template <typename T>
void sgd_step(Parameters<T>& params, const Parameters<T>& grads, double lr) {
    const T step = static_cast<T>(lr);
    auto apply = [&](Tensor<T>& p, const Tensor<T>& g) {
        if (p.shape() != g.shape()) {
            throw DimensionError("sgd_step: parameter/gradient shape mismatch " + p.shape_str() +
                                 " vs " + g.shape_str());
        }
        detail::axpy(p.data(), -step, g.data(), p.size());
    };
    for (std::size_t l = 0; l < params.conv_w.size(); ++l) {
        apply(params.conv_w[l], grads.conv_w[l]);
        apply(params.conv_b[l], grads.conv_b[l]);
    }
    for (std::size_t l = 0; l < params.fc_w.size(); ++l) {
        apply(params.fc_w[l], grads.fc_w[l]);
        apply(params.fc_b[l], grads.fc_b[l]);
    }
    apply(params.head_w, grads.head_w);
    apply(params.head_b, grads.head_b);
}

// One embedding per training sample, grouped per class (sample order kept).
// Uses the batched trunk forward, which is bit-identical to per-sample
// embed() calls.
template <typename T>
EmbeddingStore<T> compute_embeddings(const NetworkConfig& cfg, const Parameters<T>& params,
                                     const Dataset<T>& ds) {
    std::vector<Tensor<T>> embs;
    embs.reserve(ds.size());
    ForwardCache<T> cache;
    std::vector<const Tensor<T>*> xs;
    for (std::size_t start = 0; start < ds.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(ds.size(), start + cfg.batch_size);
        xs.clear();
        for (std::size_t i = start; i < stop; ++i) xs.push_back(&ds.inputs[i]);
        forward_embed_batch(cfg, params, xs, cache);
        for (std::size_t b = 0; b < xs.size(); ++b) {
            Tensor<T> e({cfg.embedding_dim});
            const T* row = cache.embedding_row(b);
            for (std::size_t i = 0; i < cfg.embedding_dim; ++i) e[i] = row[i];
            embs.push_back(std::move(e));
        }
    }
    return group_embeddings(ds, std::move(embs));
}

} // namespace dos
