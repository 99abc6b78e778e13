#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dos/errors.hpp"
#include "dos/rng.hpp"
#include "dos/tensor.hpp"

namespace dos {

// A labeled dataset with uniform input shape.  Minority bookkeeping (which
// classes were artificially reduced) travels with the data so evaluation can
// group metrics without replaying the preparation step.
template <typename T>
struct Dataset {
    std::vector<Tensor<T>> inputs;
    std::vector<int> labels;
    int n_classes = 0;
    std::vector<std::uint8_t> minority_flags; // per class, 1 = reduced
    std::string provenance;

    std::size_t size() const { return inputs.size(); }

    std::array<std::size_t, 3> input_shape() const {
        if (inputs.empty()) return {0, 0, 0};
        const auto& s = inputs.front().shape();
        return {s[0], s[1], s[2]};
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
        for (int y : labels) counts[static_cast<std::size_t>(y)]++;
        return counts;
    }

    void validate() const {
        if (inputs.size() != labels.size()) {
            throw DataError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                            std::to_string(labels.size()) + " labels");
        }
        if (n_classes < 1) throw DataError("dataset must declare at least one class");
        if (!minority_flags.empty() &&
            minority_flags.size() != static_cast<std::size_t>(n_classes)) {
            throw DataError("minority flag count does not match class count");
        }
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= n_classes) {
                throw DataError("label " + std::to_string(labels[i]) + " of sample " +
                                std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
            }
            if (inputs[i].shape() != inputs.front().shape()) {
                throw DataError("sample " + std::to_string(i) + " has shape " +
                                inputs[i].shape_str() + ", expected " + inputs.front().shape_str());
            }
        }
    }

    template <typename U>
    Dataset<U> cast() const {
        Dataset<U> out;
        out.inputs.reserve(inputs.size());
        for (const auto& x : inputs) out.inputs.push_back(x.template cast<U>());
        out.labels = labels;
        out.n_classes = n_classes;
        out.minority_flags = minority_flags;
        out.provenance = provenance;
        return out;
    }
};

struct ImbalanceSpec {
    enum class Mode { random_classes, gaussian_overall };
    Mode mode = Mode::random_classes;
    int minority_count = 4;
    double p = 0.0;            // removal fraction for random_classes
    double overall_rate = 0.0; // for gaussian_overall
    std::uint64_t seed = 0;
};

// IDX container (big-endian), type codes 0x08 (u8) and 0x0D (f32).
enum class IdxPixelFormat { u8, f32 };

Dataset<float> load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset<float>& ds, const std::string& images_path,
               const std::string& labels_path, IdxPixelFormat fmt = IdxPixelFormat::f32);

// Isotropic Gaussian clusters (sigma 1) rendered into dims = C x H x W.
// Centroids are smooth low-frequency patterns, scaled so their minimum
// pairwise distance equals `separation`.
Dataset<float> synth_blobs(int n_classes, const std::vector<std::size_t>& per_class_counts,
                           const std::array<std::size_t, 3>& dims, double separation,
                           std::uint64_t seed);

Dataset<float> make_imbalanced_random(const Dataset<float>& ds, const ImbalanceSpec& spec);
Dataset<float> make_imbalanced_gaussian(const Dataset<float>& ds, double overall_rate,
                                        std::uint64_t seed);

// factor copies per sample: original, horizontal mirror, then rotations at
// seeded uniform angles (nearest-neighbor resampling about the center).
Dataset<float> augment_mirror_rotate(const Dataset<float>& ds, int factor, std::uint64_t seed);

void write_manifest(const Dataset<float>& ds, std::uint64_t seed, std::ostream& os);
void write_manifest_file(const Dataset<float>& ds, std::uint64_t seed, const std::string& path);

// Reads back the key=value manifest written above; used to restore minority
// flags and provenance when a prepared dataset is loaded from disk.
void apply_manifest(Dataset<float>& ds, const std::string& path);

} // namespace dos
