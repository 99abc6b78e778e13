#include "dos/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dos {

namespace {

// ---- IDX plumbing -------------------------------------------------------

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t& offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
        throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
    }
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

float read_be_f32(std::istream& in, const std::string& path, std::size_t& offset) {
    std::uint32_t bits = read_be32(in, path, offset);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_be_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_be32(out, bits);
}

struct IdxHeader {
    std::uint8_t type = 0;
    std::uint8_t rank = 0;
    std::vector<std::uint32_t> dims;
};

IdxHeader read_idx_header(std::istream& in, const std::string& path, std::size_t& offset) {
    std::uint32_t magic = read_be32(in, path, offset);
    if ((magic >> 16) != 0) {
        std::ostringstream os;
        os << path << ": bad magic 0x" << std::hex << magic << " at byte offset 0";
        throw FormatError(os.str());
    }
    IdxHeader h;
    h.type = static_cast<std::uint8_t>((magic >> 8) & 0xFF);
    h.rank = static_cast<std::uint8_t>(magic & 0xFF);
    for (std::uint8_t i = 0; i < h.rank; ++i) h.dims.push_back(read_be32(in, path, offset));
    return h;
}

// ---- seeded selection helpers -------------------------------------------

// Keep all but `remove` samples of the index list, chosen by a seeded
// shuffle; survivors are returned in their original order.
std::vector<std::size_t> survivors_after_removal(std::vector<std::size_t> members,
                                                 std::size_t remove, SeededRng& rng) {
    rng.shuffle(members);
    members.erase(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(remove));
    std::sort(members.begin(), members.end());
    return members;
}

Dataset<float> keep_samples(const Dataset<float>& ds, const std::vector<std::size_t>& keep) {
    Dataset<float> out;
    out.inputs.reserve(keep.size());
    out.labels.reserve(keep.size());
    for (std::size_t i : keep) {
        out.inputs.push_back(ds.inputs[i]);
        out.labels.push_back(ds.labels[i]);
    }
    out.n_classes = ds.n_classes;
    return out;
}

} // namespace

Dataset<float> load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(images_path + ": cannot open");
    std::size_t img_off = 0;
    IdxHeader ih = read_idx_header(img, images_path, img_off);
    if (ih.rank != 3 && ih.rank != 4) {
        throw FormatError(images_path + ": expected rank 3 or 4 image data, got rank " +
                          std::to_string(int(ih.rank)));
    }
    if (ih.type != 0x08 && ih.type != 0x0D) {
        std::ostringstream os;
        os << images_path << ": unsupported element type 0x" << std::hex << int(ih.type);
        throw FormatError(os.str());
    }

    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw FormatError(labels_path + ": cannot open");
    std::size_t lbl_off = 0;
    IdxHeader lh = read_idx_header(lbl, labels_path, lbl_off);
    if (lh.type != 0x08 || lh.rank != 1) {
        throw FormatError(labels_path + ": expected rank-1 u8 label data");
    }

    const std::size_t count = ih.dims[0];
    if (lh.dims[0] != count) {
        throw FormatError(labels_path + ": label count " + std::to_string(lh.dims[0]) +
                          " does not match image count " + std::to_string(count));
    }
    std::size_t channels = 1, h, w;
    if (ih.rank == 3) {
        h = ih.dims[1];
        w = ih.dims[2];
    } else {
        channels = ih.dims[1];
        h = ih.dims[2];
        w = ih.dims[3];
    }
    const std::size_t per_image = channels * h * w;

    Dataset<float> ds;
    ds.inputs.reserve(count);
    if (ih.type == 0x08) {
        std::vector<unsigned char> buf(per_image);
        for (std::size_t i = 0; i < count; ++i) {
            img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(per_image));
            if (!img) {
                throw FormatError(images_path + ": truncated at byte offset " +
                                  std::to_string(img_off));
            }
            img_off += per_image;
            Tensor<float> x({channels, h, w});
            for (std::size_t p = 0; p < per_image; ++p) x[p] = float(buf[p]) / 255.0f;
            ds.inputs.push_back(std::move(x));
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            Tensor<float> x({channels, h, w});
            for (std::size_t p = 0; p < per_image; ++p) {
                x[p] = read_be_f32(img, images_path, img_off);
            }
            ds.inputs.push_back(std::move(x));
        }
    }

    ds.labels.reserve(count);
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        char c;
        lbl.read(&c, 1);
        if (!lbl) {
            throw FormatError(labels_path + ": truncated at byte offset " + std::to_string(lbl_off));
        }
        lbl_off += 1;
        int y = static_cast<unsigned char>(c);
        max_label = std::max(max_label, y);
        ds.labels.push_back(y);
    }
    ds.n_classes = max_label + 1;
    ds.provenance = "idx:" + images_path;
    ds.validate();
    return ds;
}

void write_idx(const Dataset<float>& ds, const std::string& images_path,
               const std::string& labels_path, IdxPixelFormat fmt) {
    ds.validate();
    const auto shape = ds.input_shape();
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(images_path + ": cannot open for writing");
    const bool multichannel = shape[0] != 1;
    const std::uint8_t type = fmt == IdxPixelFormat::u8 ? 0x08 : 0x0D;
    const std::uint8_t rank = multichannel ? 4 : 3;
    write_be32(img, (std::uint32_t(type) << 8) | rank);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    if (multichannel) write_be32(img, static_cast<std::uint32_t>(shape[0]));
    write_be32(img, static_cast<std::uint32_t>(shape[1]));
    write_be32(img, static_cast<std::uint32_t>(shape[2]));
    for (const auto& x : ds.inputs) {
        if (fmt == IdxPixelFormat::u8) {
            for (std::size_t p = 0; p < x.size(); ++p) {
                float v = std::clamp(x[p], 0.0f, 1.0f);
                img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
            }
        } else {
            for (std::size_t p = 0; p < x.size(); ++p) write_be_f32(img, x[p]);
        }
    }

    std::ofstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw FormatError(labels_path + ": cannot open for writing");
    write_be32(lbl, 0x00000801u);
    write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) lbl.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset<float> synth_blobs(int n_classes, const std::vector<std::size_t>& per_class_counts,
                           const std::array<std::size_t, 3>& dims, double separation,
                           std::uint64_t seed) {
    if (n_classes < 1) throw ArgumentError("synth_blobs: need at least one class");
    if (per_class_counts.size() != static_cast<std::size_t>(n_classes)) {
        throw ArgumentError("synth_blobs: per_class_counts size mismatch");
    }
    for (std::size_t c : per_class_counts) {
        if (c < 1) throw ArgumentError("synth_blobs: per-class counts must be positive");
    }
    if (separation < 0) throw ArgumentError("synth_blobs: separation must be nonnegative");
    const std::size_t dim = dims[0] * dims[1] * dims[2];

    SeededRng base(seed);
    SeededRng centroid_rng = base.derive(0);
    std::vector<std::vector<double>> centroids(static_cast<std::size_t>(n_classes),
                                               std::vector<double>(dim));
    for (auto& c : centroids) {
        for (double& v : c) v = centroid_rng.normal();
    }
    // Box-blur each centroid plane so class patterns are low-frequency: local
    // patch averages then carry class signal, which small conv stacks can
    // pick up.  The separation rescale below runs on the smoothed patterns,
    // so the minimum pairwise distance contract is unaffected.
    const std::size_t ph = dims[1], pw = dims[2];
    const std::size_t radius =
        std::min<std::size_t>(3, std::min(ph, pw) > 1 ? (std::min(ph, pw) - 1) / 2 : 0);
    if (radius > 0) {
        for (auto& c : centroids) {
            std::vector<double> sm(dim);
            for (std::size_t ch = 0; ch < dims[0]; ++ch) {
                const std::size_t off = ch * ph * pw;
                for (std::size_t y = 0; y < ph; ++y) {
                    for (std::size_t x = 0; x < pw; ++x) {
                        const std::size_t y0 = y > radius ? y - radius : 0;
                        const std::size_t y1 = std::min(ph - 1, y + radius);
                        const std::size_t x0 = x > radius ? x - radius : 0;
                        const std::size_t x1 = std::min(pw - 1, x + radius);
                        double s = 0;
                        for (std::size_t yy = y0; yy <= y1; ++yy)
                            for (std::size_t xx = x0; xx <= x1; ++xx) s += c[off + yy * pw + xx];
                        sm[off + y * pw + x] =
                            s / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
                    }
                }
            }
            c = std::move(sm);
        }
    }
    if (n_classes > 1) {
        double min_d = -1.0;
        for (std::size_t a = 0; a < centroids.size(); ++a) {
            for (std::size_t b = a + 1; b < centroids.size(); ++b) {
                double s = 0;
                for (std::size_t p = 0; p < dim; ++p) {
                    double d = centroids[a][p] - centroids[b][p];
                    s += d * d;
                }
                double dd = std::sqrt(s);
                if (min_d < 0 || dd < min_d) min_d = dd;
            }
        }
        const double scale = min_d > 0 ? separation / min_d : 0.0;
        for (auto& c : centroids) {
            for (double& v : c) v *= scale;
        }
    }

    Dataset<float> ds;
    ds.n_classes = n_classes;
    for (int j = 0; j < n_classes; ++j) {
        SeededRng noise = base.derive(1 + static_cast<std::uint64_t>(j));
        for (std::size_t s = 0; s < per_class_counts[static_cast<std::size_t>(j)]; ++s) {
            Tensor<float> x({dims[0], dims[1], dims[2]});
            for (std::size_t p = 0; p < dim; ++p) {
                x[p] = static_cast<float>(centroids[static_cast<std::size_t>(j)][p] +
                                          noise.normal());
            }
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(j);
        }
    }
    std::ostringstream os;
    os << "synth_blobs classes=" << n_classes << " sep=" << separation << " seed=" << seed;
    ds.provenance = os.str();
    return ds;
}

Dataset<float> make_imbalanced_random(const Dataset<float>& ds, const ImbalanceSpec& spec) {
    ds.validate();
    if (spec.p < 0.0 || spec.p >= 1.0) {
        throw ArgumentError("make_imbalanced_random: p must be in [0, 1)");
    }
    if (spec.minority_count < 0 || spec.minority_count >= ds.n_classes) {
        throw ArgumentError("make_imbalanced_random: minority count must be below class count");
    }

    SeededRng base(spec.seed);
    // Minority classes drawn uniformly without replacement.
    std::vector<int> classes(static_cast<std::size_t>(ds.n_classes));
    for (int j = 0; j < ds.n_classes; ++j) classes[static_cast<std::size_t>(j)] = j;
    SeededRng pick = base.derive(0);
    pick.shuffle(classes);
    std::vector<std::uint8_t> chosen(static_cast<std::size_t>(ds.n_classes), 0);
    for (int i = 0; i < spec.minority_count; ++i) {
        chosen[static_cast<std::size_t>(classes[static_cast<std::size_t>(i)])] = 1;
    }

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(ds.n_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        members[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    std::vector<std::size_t> keep;
    // A class counts as minority only if samples were actually removed
    // (p=0 leaves the dataset, and the bookkeeping, untouched).
    std::vector<std::uint8_t> minority(static_cast<std::size_t>(ds.n_classes), 0);
    for (int j = 0; j < ds.n_classes; ++j) {
        auto& m = members[static_cast<std::size_t>(j)];
        std::size_t remove =
            chosen[static_cast<std::size_t>(j)]
                ? static_cast<std::size_t>(std::floor(spec.p * static_cast<double>(m.size())))
                : 0;
        if (remove > 0) {
            minority[static_cast<std::size_t>(j)] = 1;
            SeededRng rng = base.derive(1, static_cast<std::uint64_t>(j));
            auto kept = survivors_after_removal(m, remove, rng);
            keep.insert(keep.end(), kept.begin(), kept.end());
        } else {
            keep.insert(keep.end(), m.begin(), m.end());
        }
    }
    std::sort(keep.begin(), keep.end());

    Dataset<float> out = keep_samples(ds, keep);
    out.minority_flags = minority;
    std::ostringstream os;
    os << ds.provenance << " | imbalance random p=" << spec.p
       << " minority_count=" << spec.minority_count << " seed=" << spec.seed;
    out.provenance = os.str();
    return out;
}

Dataset<float> make_imbalanced_gaussian(const Dataset<float>& ds, double overall_rate,
                                        std::uint64_t seed) {
    ds.validate();
    if (overall_rate < 0.0 || overall_rate >= 1.0) {
        throw ArgumentError("make_imbalanced_gaussian: overall rate must be in [0, 1)");
    }
    SeededRng base(seed);
    const auto counts = ds.class_counts();
    const std::size_t n = counts.size();
    const double total = static_cast<double>(ds.size());
    const std::size_t target_remove =
        static_cast<std::size_t>(std::floor(overall_rate * total));

    // Raw per-class removal propensities: |N(0,1)| draws, then rescaled so
    // the expected removals hit the target.  Fractions are clipped at 0.99
    // (never delete a whole class) and the unclipped remainder rescaled.
    SeededRng frac_rng = base.derive(0);
    std::vector<double> raw(n);
    for (double& v : raw) v = std::fabs(frac_rng.normal());
    std::vector<double> frac(n, 0.0);
    if (target_remove > 0) {
        std::vector<bool> capped(n, false);
        for (int pass = 0; pass < 100; ++pass) {
            double weighted = 0.0;
            double capped_removals = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (capped[j]) {
                    capped_removals += 0.99 * static_cast<double>(counts[j]);
                } else {
                    weighted += raw[j] * static_cast<double>(counts[j]);
                }
            }
            double remaining = static_cast<double>(target_remove) - capped_removals;
            if (remaining <= 0 || weighted <= 0) break;
            double scale = remaining / weighted;
            bool newly_capped = false;
            for (std::size_t j = 0; j < n; ++j) {
                if (capped[j]) {
                    frac[j] = 0.99;
                    continue;
                }
                frac[j] = raw[j] * scale;
                if (frac[j] > 0.99) {
                    capped[j] = true;
                    newly_capped = true;
                }
            }
            if (!newly_capped) break;
        }
        for (std::size_t j = 0; j < n; ++j) frac[j] = std::min(frac[j], 0.99);
    }

    // Integer removal counts: floors, then largest fractional remainders
    // until the target total is met (ties by class index).
    std::vector<std::size_t> remove(n);
    std::size_t removed = 0;
    std::vector<std::pair<double, std::size_t>> rema;
    for (std::size_t j = 0; j < n; ++j) {
        double exact = frac[j] * static_cast<double>(counts[j]);
        remove[j] = static_cast<std::size_t>(std::floor(exact));
        removed += remove[j];
        rema.push_back({exact - std::floor(exact), j});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [r, j] : rema) {
        if (removed >= target_remove) break;
        std::size_t cap = static_cast<std::size_t>(0.99 * static_cast<double>(counts[j]));
        if (remove[j] < cap) {
            remove[j]++;
            removed++;
        }
    }

    std::vector<std::vector<std::size_t>> members(n);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        members[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    std::vector<std::size_t> keep;
    std::vector<std::uint8_t> minority(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        if (remove[j] > 0) minority[j] = 1;
        SeededRng rng = base.derive(1, static_cast<std::uint64_t>(j));
        auto kept = survivors_after_removal(members[j], remove[j], rng);
        keep.insert(keep.end(), kept.begin(), kept.end());
    }
    std::sort(keep.begin(), keep.end());

    Dataset<float> out = keep_samples(ds, keep);
    out.minority_flags = minority;
    std::ostringstream os;
    os << ds.provenance << " | imbalance gaussian rate=" << overall_rate << " seed=" << seed;
    out.provenance = os.str();
    return out;
}

Dataset<float> augment_mirror_rotate(const Dataset<float>& ds, int factor, std::uint64_t seed) {
    ds.validate();
    if (factor < 1) throw ArgumentError("augment_mirror_rotate: factor must be at least 1");
    const auto shape = ds.input_shape();
    if (shape[1] != shape[2]) {
        throw ArgumentError("augment_mirror_rotate: requires square images, got " +
                            std::to_string(shape[1]) + "x" + std::to_string(shape[2]));
    }
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;

    SeededRng base(seed);
    Dataset<float> out;
    out.n_classes = ds.n_classes;
    out.minority_flags = ds.minority_flags;
    out.inputs.reserve(ds.size() * static_cast<std::size_t>(factor));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        SeededRng rng = base.derive(i);
        const Tensor<float>& src = ds.inputs[i];
        for (int copy = 0; copy < factor; ++copy) {
            if (copy == 0) {
                out.inputs.push_back(src);
            } else if (copy == 1) {
                Tensor<float> m({c, h, w});
                for (std::size_t ci = 0; ci < c; ++ci) {
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w; ++x) {
                            m.at(ci, y, x) = src.at(ci, y, w - 1 - x);
                        }
                    }
                }
                out.inputs.push_back(std::move(m));
            } else {
                const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                const double ca = std::cos(angle), sa = std::sin(angle);
                Tensor<float> r({c, h, w});
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        // Rotate the destination coordinate back into the
                        // source and pick the nearest pixel.
                        double dy = static_cast<double>(y) - cy;
                        double dx = static_cast<double>(x) - cy;
                        double sy = ca * dy + sa * dx + cy;
                        double sx = -sa * dy + ca * dx + cy;
                        long iy = std::lround(sy);
                        long ix = std::lround(sx);
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) ||
                            ix >= static_cast<long>(w)) {
                            continue; // out-of-frame stays zero
                        }
                        for (std::size_t ci = 0; ci < c; ++ci) {
                            r.at(ci, y, x) = src.at(ci, static_cast<std::size_t>(iy),
                                                    static_cast<std::size_t>(ix));
                        }
                    }
                }
                out.inputs.push_back(std::move(r));
            }
            out.labels.push_back(ds.labels[i]);
        }
    }
    std::ostringstream os;
    os << ds.provenance << " | augment x" << factor << " seed=" << seed;
    out.provenance = os.str();
    return out;
}

void write_manifest(const Dataset<float>& ds, std::uint64_t seed, std::ostream& os) {
    os << "n_classes=" << ds.n_classes << "\n";
    os << "total=" << ds.size() << "\n";
    os << "seed=" << seed << "\n";
    os << "provenance=" << ds.provenance << "\n";
    const auto counts = ds.class_counts();
    int reduced = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const bool flag = !ds.minority_flags.empty() && ds.minority_flags[j];
        if (flag) reduced++;
        os << "class." << j << ".count=" << counts[j] << "\n";
        os << "class." << j << ".minority=" << (flag ? 1 : 0) << "\n";
    }
    os << "minority_classes_reduced=" << reduced << "\n";
}

void write_manifest_file(const Dataset<float>& ds, std::uint64_t seed, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError(path + ": cannot open for writing");
    write_manifest(ds, seed, f);
}

void apply_manifest(Dataset<float>& ds, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError(path + ": cannot open");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (kv.count("provenance")) ds.provenance = kv["provenance"];
    ds.minority_flags.assign(static_cast<std::size_t>(ds.n_classes), 0);
    for (int j = 0; j < ds.n_classes; ++j) {
        auto it = kv.find("class." + std::to_string(j) + ".minority");
        if (it != kv.end() && it->second == "1") {
            ds.minority_flags[static_cast<std::size_t>(j)] = 1;
        }
    }
}

} // namespace dos
