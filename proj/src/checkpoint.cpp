#include "dos/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace dos {

namespace {

// Config field tags.  Tag 0 terminates the config block.
enum : std::uint8_t {
    kTagEnd = 0,
    kTagInputShape = 1,
    kTagConvFilters = 2,
    kTagFcWidths = 3,
    kTagEmbeddingDim = 4,
    kTagNClasses = 5,
    kTagLearningRate = 6,
    kTagBatchSize = 7,
    kTagAlpha = 8,
};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError(path + ": truncated checkpoint");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

float get_f32(std::istream& is, const std::string& path) {
    std::uint32_t v = get_u32(is, path);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

void put_tensor(std::ostream& os, const Tensor<float>& t) {
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t a = 0; a < t.rank(); ++a) {
        put_u32(os, static_cast<std::uint32_t>(t.extent(a)));
    }
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(os, t[i]);
}

Tensor<float> get_tensor(std::istream& is, const std::string& path) {
    const std::uint32_t rank = get_u32(is, path);
    if (rank > 8) throw FormatError(path + ": implausible tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = get_u32(is, path);
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32(is, path);
    return t;
}

} // namespace

void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const Parameters<float>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing");
    os.write("DOSM", 4);
    put_u32(os, kCheckpointVersion);

    os.put(kTagInputShape);
    for (std::size_t v : cfg.input_shape) put_u32(os, static_cast<std::uint32_t>(v));
    os.put(kTagConvFilters);
    put_u32(os, static_cast<std::uint32_t>(cfg.conv_filters.size()));
    for (const auto& [count, k] : cfg.conv_filters) {
        put_u32(os, static_cast<std::uint32_t>(count));
        put_u32(os, static_cast<std::uint32_t>(k));
    }
    os.put(kTagFcWidths);
    put_u32(os, static_cast<std::uint32_t>(cfg.fc_widths.size()));
    for (std::size_t w : cfg.fc_widths) put_u32(os, static_cast<std::uint32_t>(w));
    os.put(kTagEmbeddingDim);
    put_u32(os, static_cast<std::uint32_t>(cfg.embedding_dim));
    os.put(kTagNClasses);
    put_u32(os, static_cast<std::uint32_t>(cfg.n_classes));
    os.put(kTagLearningRate);
    put_f32(os, static_cast<float>(cfg.learning_rate));
    os.put(kTagBatchSize);
    put_u32(os, static_cast<std::uint32_t>(cfg.batch_size));
    os.put(kTagAlpha);
    put_f32(os, static_cast<float>(cfg.alpha));
    os.put(kTagEnd);

    std::uint32_t count = 0;
    params.for_each([&](const Tensor<float>&) { count++; });
    put_u32(os, count);
    params.for_each([&](const Tensor<float>& t) { put_tensor(os, t); });
    if (!os) throw FormatError(path + ": write failed");
}

std::pair<NetworkConfig, Parameters<float>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DOSM", 4) != 0) {
        throw FormatError(path + ": bad checkpoint magic");
    }
    const std::uint32_t version = get_u32(is, path);
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }

    NetworkConfig cfg;
    cfg.conv_filters.clear();
    cfg.fc_widths.clear();
    for (;;) {
        const int tag = is.get();
        if (tag == EOF) throw FormatError(path + ": truncated checkpoint");
        if (tag == kTagEnd) break;
        switch (tag) {
            case kTagInputShape:
                for (auto& v : cfg.input_shape) v = get_u32(is, path);
                break;
            case kTagConvFilters: {
                const std::uint32_t c = get_u32(is, path);
                for (std::uint32_t i = 0; i < c; ++i) {
                    std::size_t count = get_u32(is, path);
                    std::size_t k = get_u32(is, path);
                    cfg.conv_filters.push_back({count, k});
                }
                break;
            }
            case kTagFcWidths: {
                const std::uint32_t c = get_u32(is, path);
                for (std::uint32_t i = 0; i < c; ++i) cfg.fc_widths.push_back(get_u32(is, path));
                break;
            }
            case kTagEmbeddingDim:
                cfg.embedding_dim = get_u32(is, path);
                break;
            case kTagNClasses:
                cfg.n_classes = get_u32(is, path);
                break;
            case kTagLearningRate:
                cfg.learning_rate = get_f32(is, path);
                break;
            case kTagBatchSize:
                cfg.batch_size = get_u32(is, path);
                break;
            case kTagAlpha:
                cfg.alpha = get_f32(is, path);
                break;
            default:
                throw FormatError(path + ": unknown config field tag " + std::to_string(tag));
        }
    }
    cfg.validate();

    const std::uint32_t count = get_u32(is, path);
    Parameters<float> params = zero_parameters<float>(cfg);
    std::uint32_t expected = 0;
    params.for_each([&](const Tensor<float>&) { expected++; });
    if (count != expected) {
        throw FormatError(path + ": checkpoint holds " + std::to_string(count) +
                          " tensors, config implies " + std::to_string(expected));
    }
    params.for_each([&](Tensor<float>& t) {
        Tensor<float> loaded = get_tensor(is, path);
        if (loaded.shape() != t.shape()) {
            throw FormatError(path + ": tensor shape " + loaded.shape_str() +
                              " does not match config shape " + t.shape_str());
        }
        t = std::move(loaded);
    });
    return {cfg, std::move(params)};
}

} // namespace dos
