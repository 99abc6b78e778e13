#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "dos/data_io.hpp"
#include "dos/rng.hpp"

using namespace dos;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "dos_data_io_tests";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

// One 2x2 u8 image with pixels 0, 51, 102, 255 and label 7.
void write_single_image_fixture(const fs::path& img, const fs::path& lbl) {
    std::vector<std::uint8_t> ib;
    push_be32(ib, 0x00000803u);
    push_be32(ib, 1);
    push_be32(ib, 2);
    push_be32(ib, 2);
    ib.insert(ib.end(), {0, 51, 102, 255});
    write_file(img, ib);

    std::vector<std::uint8_t> lb;
    push_be32(lb, 0x00000801u);
    push_be32(lb, 1);
    lb.push_back(7);
    write_file(lbl, lb);
}

std::vector<double> class_mean(const Dataset<float>& ds, int c) {
    std::vector<double> mean(ds.inputs.front().size(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] != c) continue;
        for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += ds.inputs[i][p];
        count++;
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        double d = a[p] - b[p];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

// ---------- IDX ----------

TEST_CASE("a hand-built single-image file loads with scaled pixels and label 7") {
    auto img = temp_dir() / "one.img";
    auto lbl = temp_dir() / "one.lbl";
    write_single_image_fixture(img, lbl);
    auto ds = load_idx(img.string(), lbl.string());
    REQUIRE(ds.size() == 1);
    CHECK(ds.labels[0] == 7);
    CHECK(ds.n_classes == 8);
    CHECK(ds.input_shape() == std::array<std::size_t, 3>{1, 2, 2});
    CHECK(ds.inputs[0][0] == 0.0f);
    CHECK(ds.inputs[0][1] == doctest::Approx(51.0 / 255.0).epsilon(1e-7));
    CHECK(ds.inputs[0][3] == 1.0f);
    CHECK(ds.provenance.find("idx:") == 0);
}

TEST_CASE("label and image counts must agree") {
    auto img = temp_dir() / "mismatch.img";
    auto lbl = temp_dir() / "mismatch.lbl";
    write_single_image_fixture(img, lbl);
    std::vector<std::uint8_t> lb;
    push_be32(lb, 0x00000801u);
    push_be32(lb, 2);
    lb.push_back(1);
    lb.push_back(2);
    write_file(lbl, lb);
    CHECK_THROWS_AS(load_idx(img.string(), lbl.string()), FormatError);
}

TEST_CASE("bad magic and truncation are reported as format errors") {
    auto img = temp_dir() / "bad.img";
    auto lbl = temp_dir() / "bad.lbl";
    write_single_image_fixture(img, lbl);

    std::vector<std::uint8_t> junk;
    push_be32(junk, 0xDEADBEEFu);
    write_file(img, junk);
    CHECK_THROWS_AS(load_idx(img.string(), lbl.string()), FormatError);

    // rebuild a valid header but cut the pixel payload short
    std::vector<std::uint8_t> cut;
    push_be32(cut, 0x00000803u);
    push_be32(cut, 1);
    push_be32(cut, 2);
    push_be32(cut, 2);
    cut.insert(cut.end(), {9, 9}); // 2 of 4 pixels
    write_file(img, cut);
    CHECK_THROWS_AS(load_idx(img.string(), lbl.string()), FormatError);

    CHECK_THROWS_AS(load_idx((temp_dir() / "absent.img").string(), lbl.string()), FormatError);
}

TEST_CASE("f32 round trip preserves every pixel bit and rank-4 layout") {
    SeededRng rng(3);
    Dataset<float> ds;
    ds.n_classes = 3;
    for (int i = 0; i < 5; ++i) {
        Tensor<float> x({2, 3, 3}); // multichannel forces the rank-4 branch
        for (std::size_t p = 0; p < x.size(); ++p) x[p] = static_cast<float>(rng.normal());
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(i % 3);
    }
    auto img = temp_dir() / "rt.img";
    auto lbl = temp_dir() / "rt.lbl";
    write_idx(ds, img.string(), lbl.string(), IdxPixelFormat::f32);
    auto back = load_idx(img.string(), lbl.string());
    REQUIRE(back.size() == 5);
    CHECK(back.input_shape() == std::array<std::size_t, 3>{2, 3, 3});
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.inputs[i] == ds.inputs[i]); // exact float equality
    }
    // writing the loaded data again reproduces the files byte for byte
    auto img2 = temp_dir() / "rt2.img";
    auto lbl2 = temp_dir() / "rt2.lbl";
    write_idx(back, img2.string(), lbl2.string(), IdxPixelFormat::f32);
    CHECK(read_file(img) == read_file(img2));
    CHECK(read_file(lbl) == read_file(lbl2));
}

TEST_CASE("u8 round trip is exact on the 256-level grid") {
    Dataset<float> ds;
    ds.n_classes = 2;
    Tensor<float> x({1, 2, 2});
    x[0] = 0.0f;
    x[1] = 17.0f / 255.0f;
    x[2] = 200.0f / 255.0f;
    x[3] = 1.0f;
    ds.inputs.push_back(x);
    ds.labels.push_back(1);
    auto img = temp_dir() / "u8.img";
    auto lbl = temp_dir() / "u8.lbl";
    write_idx(ds, img.string(), lbl.string(), IdxPixelFormat::u8);
    auto back = load_idx(img.string(), lbl.string());
    CHECK(back.inputs[0] == ds.inputs[0]);
}

// ---------- synthetic blobs ----------

TEST_CASE("blobs honor the requested per-class counts") {
    auto ds = synth_blobs(3, {5, 9, 2}, {1, 4, 4}, 6.0, 11);
    ds.validate();
    CHECK(ds.size() == 16);
    CHECK(ds.class_counts() == std::vector<std::size_t>{5, 9, 2});
    CHECK(ds.input_shape() == std::array<std::size_t, 3>{1, 4, 4});
    CHECK(ds.n_classes == 3);
    CHECK(ds.provenance.find("synth_blobs") == 0);
}

TEST_CASE("blob generation is seed-deterministic") {
    auto a = synth_blobs(2, {4, 4}, {1, 3, 3}, 5.0, 21);
    auto b = synth_blobs(2, {4, 4}, {1, 3, 3}, 5.0, 21);
    auto c = synth_blobs(2, {4, 4}, {1, 3, 3}, 5.0, 22);
    bool same = true, diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.inputs[i] == b.inputs[i])) same = false;
        if (!(a.inputs[i] == c.inputs[i])) diff = true;
    }
    CHECK(same);
    CHECK(diff);
}

TEST_CASE("separation 10 makes classes nearest-centroid separable") {
    auto ds = synth_blobs(4, {150, 150, 150, 150}, {1, 6, 6}, 10.0, 31);
    std::vector<std::vector<double>> means;
    for (int c = 0; c < 4; ++c) means.push_back(class_mean(ds, c));
    // empirical centroids respect the configured minimum separation
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            CHECK(dist(means[static_cast<std::size_t>(a)], means[static_cast<std::size_t>(b)]) >
                  8.0);
        }
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> p(ds.inputs[i].data(), ds.inputs[i].data() + ds.inputs[i].size());
        int best = 0;
        double bd = dist(p, means[0]);
        for (int c = 1; c < 4; ++c) {
            double d = dist(p, means[static_cast<std::size_t>(c)]);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        correct += best == ds.labels[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) >= 0.99);
}

TEST_CASE("separation 0 collapses all centroids together") {
    auto ds = synth_blobs(3, {200, 200, 200}, {1, 6, 6}, 0.0, 41);
    std::vector<std::vector<double>> means;
    for (int c = 0; c < 3; ++c) means.push_back(class_mean(ds, c));
    for (int a = 0; a < 3; ++a) {
        std::vector<double> zero(means[0].size(), 0.0);
        CHECK(dist(means[static_cast<std::size_t>(a)], zero) < 1.0);
    }
}

TEST_CASE("blob parameter validation") {
    CHECK_THROWS_AS(synth_blobs(0, {}, {1, 2, 2}, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(synth_blobs(2, {3}, {1, 2, 2}, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(synth_blobs(2, {3, 0}, {1, 2, 2}, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(synth_blobs(2, {3, 3}, {1, 2, 2}, -1.0, 1), ArgumentError);
}

// ---------- random-class imbalance ----------

TEST_CASE("p=0 leaves the data untouched and marks nothing as minority") {
    auto ds = synth_blobs(4, {20, 20, 20, 20}, {1, 3, 3}, 5.0, 1);
    ImbalanceSpec spec;
    spec.minority_count = 2;
    spec.p = 0.0;
    spec.seed = 5;
    auto out = make_imbalanced_random(ds, spec);
    CHECK(out.size() == ds.size());
    CHECK(out.class_counts() == ds.class_counts());
    int reduced = 0;
    for (std::uint8_t f : out.minority_flags) reduced += f;
    CHECK(reduced == 0);
    std::ostringstream os;
    write_manifest(out, spec.seed, os);
    CHECK(os.str().find("minority_classes_reduced=0") != std::string::npos);
}

TEST_CASE("p=0.9 removes ninety percent of each chosen class") {
    auto ds = synth_blobs(5, {50, 50, 50, 50, 50}, {1, 3, 3}, 5.0, 2);
    ImbalanceSpec spec;
    spec.minority_count = 2;
    spec.p = 0.9;
    spec.seed = 9;
    auto out = make_imbalanced_random(ds, spec);
    out.validate();
    auto counts = out.class_counts();
    int small = 0, full = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] == 5) {
            ++small;
            CHECK(out.minority_flags[j] == 1);
        }
        if (counts[j] == 50) {
            ++full;
            CHECK(out.minority_flags[j] == 0);
        }
    }
    CHECK(small == 2);
    CHECK(full == 3);
    CHECK(out.size() == 3 * 50 + 2 * 5);

    // deterministic under the same seed, different under another
    auto again = make_imbalanced_random(ds, spec);
    CHECK(again.labels == out.labels);
    bool inputs_same = true;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(again.inputs[i] == out.inputs[i])) inputs_same = false;
    }
    CHECK(inputs_same);
    ImbalanceSpec other = spec;
    other.seed = 10;
    auto different = make_imbalanced_random(ds, other);
    CHECK(different.minority_flags != out.minority_flags);
}

TEST_CASE("surviving samples keep their original relative order") {
    auto ds = synth_blobs(2, {30, 30}, {1, 2, 2}, 4.0, 3);
    ImbalanceSpec spec;
    spec.minority_count = 1;
    spec.p = 0.5;
    spec.seed = 13;
    auto out = make_imbalanced_random(ds, spec);
    // under original order, equal inputs must appear in the same sequence:
    // walk the source and match greedily
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < ds.size() && cursor < out.size(); ++i) {
        if (ds.inputs[i] == out.inputs[cursor] && ds.labels[i] == out.labels[cursor]) cursor++;
    }
    CHECK(cursor == out.size());
}

TEST_CASE("imbalance spec validation") {
    auto ds = synth_blobs(3, {10, 10, 10}, {1, 2, 2}, 4.0, 4);
    ImbalanceSpec spec;
    spec.minority_count = 3; // must stay below n_classes
    CHECK_THROWS_AS(make_imbalanced_random(ds, spec), ArgumentError);
    spec.minority_count = 1;
    spec.p = 1.0;
    CHECK_THROWS_AS(make_imbalanced_random(ds, spec), ArgumentError);
    spec.p = -0.1;
    CHECK_THROWS_AS(make_imbalanced_random(ds, spec), ArgumentError);
}

// ---------- gaussian imbalance ----------

TEST_CASE("gaussian rate 0 changes nothing") {
    auto ds = synth_blobs(3, {25, 25, 25}, {1, 2, 2}, 4.0, 6);
    auto out = make_imbalanced_gaussian(ds, 0.0, 7);
    CHECK(out.size() == ds.size());
    int reduced = 0;
    for (std::uint8_t f : out.minority_flags) reduced += f;
    CHECK(reduced == 0);
}

TEST_CASE("gaussian removal hits the requested overall rate") {
    auto ds = synth_blobs(4, {100, 100, 100, 100}, {1, 2, 2}, 4.0, 8);
    for (double rate : {0.1, 0.3, 0.6}) {
        auto out = make_imbalanced_gaussian(ds, rate, 17);
        out.validate();
        const auto target = static_cast<std::size_t>(std::floor(rate * 400.0));
        const std::size_t removed = 400 - out.size();
        CHECK(std::llabs(static_cast<long long>(removed) - static_cast<long long>(target)) <= 1);
        for (std::size_t c : out.class_counts()) CHECK(c >= 1); // never empties a class
        // flags mark exactly the classes that lost samples
        auto before = ds.class_counts();
        auto after = out.class_counts();
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK((after[j] < before[j]) == (out.minority_flags[j] == 1));
        }
    }
    CHECK_THROWS_AS(make_imbalanced_gaussian(ds, 1.0, 1), ArgumentError);
}

TEST_CASE("gaussian removal is seed-deterministic") {
    auto ds = synth_blobs(3, {60, 60, 60}, {1, 2, 2}, 4.0, 9);
    auto a = make_imbalanced_gaussian(ds, 0.4, 23);
    auto b = make_imbalanced_gaussian(ds, 0.4, 23);
    CHECK(a.labels == b.labels);
    CHECK(a.minority_flags == b.minority_flags);
    auto c = make_imbalanced_gaussian(ds, 0.4, 24);
    CHECK(a.class_counts() != c.class_counts());
}

// ---------- augmentation ----------

TEST_CASE("factor 1 returns the dataset unchanged") {
    auto ds = synth_blobs(2, {6, 6}, {1, 5, 5}, 4.0, 10);
    auto out = augment_mirror_rotate(ds, 1, 3);
    REQUIRE(out.size() == ds.size());
    CHECK(out.labels == ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(out.inputs[i] == ds.inputs[i]);
}

TEST_CASE("factor 10 produces ten aligned copies per sample") {
    auto ds = synth_blobs(2, {3, 3}, {1, 5, 5}, 4.0, 12);
    auto out = augment_mirror_rotate(ds, 10, 5);
    REQUIRE(out.size() == ds.size() * 10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        // copy 0 is the original, copy 1 its horizontal mirror
        CHECK(out.inputs[i * 10] == ds.inputs[i]);
        const auto& src = ds.inputs[i];
        const auto& mir = out.inputs[i * 10 + 1];
        for (std::size_t y = 0; y < 5; ++y) {
            for (std::size_t x = 0; x < 5; ++x) {
                CHECK(mir.at(std::size_t(0), y, x) == src.at(std::size_t(0), y, 4 - x));
            }
        }
        for (int copy = 0; copy < 10; ++copy) {
            CHECK(out.labels[i * 10 + static_cast<std::size_t>(copy)] == ds.labels[i]);
        }
        // rotation about the center fixes the center pixel of odd images
        for (int copy = 2; copy < 10; ++copy) {
            CHECK(out.inputs[i * 10 + static_cast<std::size_t>(copy)].at(std::size_t(0), 2, 2) ==
                  src.at(std::size_t(0), 2, 2));
        }
    }
}

TEST_CASE("augmentation is seeded and requires square inputs") {
    auto ds = synth_blobs(2, {4, 4}, {1, 5, 5}, 4.0, 14);
    auto a = augment_mirror_rotate(ds, 4, 6);
    auto b = augment_mirror_rotate(ds, 4, 6);
    auto c = augment_mirror_rotate(ds, 4, 7);
    bool same = true, diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.inputs[i] == b.inputs[i])) same = false;
        if (!(a.inputs[i] == c.inputs[i])) diff = true;
    }
    CHECK(same);
    CHECK(diff);

    auto rect = synth_blobs(2, {2, 2}, {1, 3, 4}, 4.0, 15);
    CHECK_THROWS_AS(augment_mirror_rotate(rect, 2, 1), ArgumentError);
    CHECK_THROWS_AS(augment_mirror_rotate(ds, 0, 1), ArgumentError);
}

// ---------- manifest ----------

TEST_CASE("manifest writes counts and reads back flags and provenance") {
    auto ds = synth_blobs(3, {30, 30, 30}, {1, 2, 2}, 5.0, 16);
    ImbalanceSpec spec;
    spec.minority_count = 1;
    spec.p = 0.8;
    spec.seed = 19;
    auto out = make_imbalanced_random(ds, spec);

    std::ostringstream os;
    write_manifest(out, spec.seed, os);
    const std::string text = os.str();
    CHECK(text.find("n_classes=3") != std::string::npos);
    CHECK(text.find("total=" + std::to_string(out.size())) != std::string::npos);
    CHECK(text.find("seed=19") != std::string::npos);
    CHECK(text.find("minority_classes_reduced=1") != std::string::npos);

    auto path = temp_dir() / "manifest.txt";
    write_manifest_file(out, spec.seed, path.string());
    Dataset<float> restored = out;
    restored.minority_flags.clear();
    restored.provenance = "";
    apply_manifest(restored, path.string());
    CHECK(restored.minority_flags == out.minority_flags);
    CHECK(restored.provenance == out.provenance);

    Dataset<float> nofile = out;
    CHECK_THROWS_AS(apply_manifest(nofile, (temp_dir() / "absent.txt").string()), FormatError);
}
