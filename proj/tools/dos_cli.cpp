// Command-line driver: dataset preparation, training, evaluation, and
// cross-run reporting.  Configuration comes from an optional JSON file,
// overridden by flags; the effective merged config is echoed into the run
// directory.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dos/dos.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    std::string config_path, out, mode = "dos";
    std::uint64_t seed = 0;
    int k_mnr = 5, k_mjr = 0, r = 1, rounds = 3, minority_count = 4, precision = 32;
    double alpha = 1.0, reduction_rate = 0.0;
    CLI::Option *o_config = nullptr, *o_seed = nullptr, *o_mode = nullptr, *o_k_mnr = nullptr,
                *o_k_mjr = nullptr, *o_r = nullptr, *o_rounds = nullptr, *o_alpha = nullptr,
                *o_rate = nullptr, *o_minority = nullptr, *o_precision = nullptr;
};

void add_common_flags(CLI::App* sub, Flags& f) {
    f.o_config = sub->add_option("--config", f.config_path, "JSON config file");
    sub->add_option("--out", f.out, "run directory")->required();
    f.o_seed = sub->add_option("--seed", f.seed, "base RNG seed");
    f.o_mode = sub->add_option("--mode", f.mode, "training mode")
                   ->check(CLI::IsMember({"stl", "dos"}));
    f.o_k_mnr = sub->add_option("--k-mnr", f.k_mnr, "minority neighbor count")
                    ->check(CLI::NonNegativeNumber);
    f.o_k_mjr = sub->add_option("--k-mjr", f.k_mjr, "majority neighbor count")
                    ->check(CLI::NonNegativeNumber);
    f.o_r = sub->add_option("--r", f.r, "over-sampling rate for minority classes")
                ->check(CLI::PositiveNumber);
    f.o_rounds = sub->add_option("--rounds", f.rounds, "target-recompute rounds (T)")
                     ->check(CLI::NonNegativeNumber);
    f.o_alpha = sub->add_option("--alpha", f.alpha, "embedding-loss blend")
                    ->check(CLI::NonNegativeNumber);
    f.o_rate = sub->add_option("--reduction-rate", f.reduction_rate, "minority removal fraction p");
    f.o_minority =
        sub->add_option("--minority-count", f.minority_count, "number of reduced classes")
            ->check(CLI::NonNegativeNumber);
    f.o_precision = sub->add_option("--precision", f.precision, "training float width")
                        ->check(CLI::IsMember({32, 64}));
}

json merged_config(const Flags& f) {
    json j = json::object();
    if (f.o_config->count() > 0) {
        std::ifstream in(f.config_path);
        if (!in) throw dos::ConfigError(f.config_path + ": cannot open config file");
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw dos::ConfigError(f.config_path + ": " + e.what());
        }
        if (!j.is_object()) throw dos::ConfigError(f.config_path + ": config root must be an object");
    }
    if (f.o_seed->count()) j["seed"] = f.seed;
    if (f.o_precision->count()) j["precision"] = f.precision;
    if (f.o_mode->count()) j["train"]["mode"] = f.mode;
    if (f.o_k_mnr->count()) j["train"]["k_mnr"] = f.k_mnr;
    if (f.o_k_mjr->count()) j["train"]["k_mjr"] = f.k_mjr;
    if (f.o_r->count()) j["train"]["r"] = f.r;
    if (f.o_rounds->count()) j["train"]["rounds"] = f.rounds;
    if (f.o_alpha->count()) j["train"]["alpha"] = f.alpha;
    if (f.o_rate->count()) j["data"]["imbalance"]["p"] = f.reduction_rate;
    if (f.o_minority->count()) j["data"]["imbalance"]["minority_count"] = f.minority_count;
    return j;
}

json section(const json& j, const std::string& key) {
    if (j.contains(key) && j.at(key).is_object()) return j.at(key);
    return json::object();
}

void echo_config(const json& j, const fs::path& out, const std::string& name) {
    std::ofstream f(out / name);
    if (!f) throw dos::FormatError((out / name).string() + ": cannot open for writing");
    f << j.dump(2) << "\n";
}

std::uint64_t require_seed(const json& j) {
    if (!j.contains("seed")) throw dos::ConfigError("seed is required (--seed or config)");
    return j.at("seed").get<std::uint64_t>();
}

void write_kv_file(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream f(path);
    if (!f) throw dos::FormatError(path.string() + ": cannot open for writing");
    for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_kv_file(const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::ifstream f(path);
    if (!f) throw dos::FormatError(path.string() + ": cannot open");
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

// ---- prepare ---------------------------------------------------------------

int cmd_prepare(const Flags& flags) {
    const json j = merged_config(flags);
    const fs::path out(flags.out);
    fs::create_directories(out);
    const std::uint64_t seed = require_seed(j);
    const json data = section(j, "data");

    dos::Dataset<float> train, test;
    if (data.contains("images")) {
        train = dos::load_idx(data.at("images").get<std::string>(),
                              data.at("labels").get<std::string>());
        if (data.contains("test_images")) {
            test = dos::load_idx(data.at("test_images").get<std::string>(),
                                 data.at("test_labels").get<std::string>());
        }
    } else {
        const json synth = section(data, "synth");
        const int n_classes = synth.value("n_classes", 10);
        const std::size_t per_class = synth.value("per_class", std::size_t(600));
        const std::size_t test_per_class = synth.value("test_per_class", std::size_t(0));
        std::array<std::size_t, 3> dims{1, 28, 28};
        if (synth.contains("dims")) {
            const auto& d = synth.at("dims");
            dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(),
                    d.at(2).get<std::size_t>()};
        }
        const double separation = synth.value("separation", 6.0);
        std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes),
                                        per_class + test_per_class);
        dos::Dataset<float> all = dos::synth_blobs(n_classes, counts, dims, separation, seed);
        // class blocks are contiguous: the first per_class of each block go
        // to training, the remainder to the held-out split
        train.n_classes = test.n_classes = n_classes;
        train.provenance = all.provenance;
        test.provenance = all.provenance + " | test split";
        std::size_t cursor = 0;
        for (int c = 0; c < n_classes; ++c) {
            for (std::size_t i = 0; i < per_class + test_per_class; ++i, ++cursor) {
                auto& dst = i < per_class ? train : test;
                dst.inputs.push_back(std::move(all.inputs[cursor]));
                dst.labels.push_back(all.labels[cursor]);
            }
        }
    }
    train.validate();

    const json aug = section(data, "augment");
    const int factor = aug.value("factor", 1);
    if (factor > 1) {
        train = dos::augment_mirror_rotate(train, factor, seed + 1);
    }

    const json imb = section(data, "imbalance");
    const std::string imb_mode = imb.value("mode", "random");
    if (imb_mode == "random") {
        dos::ImbalanceSpec spec;
        spec.mode = dos::ImbalanceSpec::Mode::random_classes;
        spec.minority_count = imb.value("minority_count", std::min(4, train.n_classes - 1));
        spec.p = imb.value("p", 0.0);
        spec.seed = seed + 2;
        train = dos::make_imbalanced_random(train, spec);
    } else if (imb_mode == "gaussian") {
        train = dos::make_imbalanced_gaussian(train, imb.value("rate", 0.0), seed + 2);
    } else if (imb_mode != "none") {
        throw dos::ConfigError("unknown imbalance mode '" + imb_mode + "'");
    }

    dos::write_idx(train, (out / "train.img").string(), (out / "train.lbl").string());
    dos::write_manifest_file(train, seed, (out / "manifest.txt").string());
    if (test.size() > 0) {
        test.validate();
        dos::write_idx(test, (out / "test.img").string(), (out / "test.lbl").string());
        dos::write_manifest_file(test, seed, (out / "test_manifest.txt").string());
    }
    write_kv_file(out / "prepare_meta.txt",
                  {{"seed", std::to_string(seed)},
                   {"imbalance_mode", imb_mode},
                   {"reduction_rate", fmt_double(imb.value("p", 0.0))},
                   {"minority_count",
                    std::to_string(imb.value("minority_count", std::min(4, train.n_classes - 1)))},
                   {"augment_factor", std::to_string(factor)}});
    echo_config(j, out, "effective_prepare.json");
    std::cout << "prepared " << train.size() << " training samples";
    if (test.size() > 0) std::cout << " and " << test.size() << " test samples";
    std::cout << " in " << out.string() << "\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

int manifest_n_classes(const fs::path& manifest) {
    auto kv = read_kv_file(manifest);
    auto it = kv.find("n_classes");
    if (it == kv.end()) throw dos::FormatError(manifest.string() + ": missing n_classes");
    return std::stoi(it->second);
}

dos::Dataset<float> load_prepared(const fs::path& dir, const std::string& stem) {
    auto ds = dos::load_idx((dir / (stem + ".img")).string(), (dir / (stem + ".lbl")).string());
    const fs::path manifest =
        dir / (stem == "train" ? "manifest.txt" : stem + "_manifest.txt");
    if (fs::exists(manifest)) {
        ds.n_classes = std::max(ds.n_classes, manifest_n_classes(manifest));
        dos::apply_manifest(ds, manifest.string());
    }
    ds.validate();
    return ds;
}

dos::NetworkConfig network_config_for(const json& j, const dos::Dataset<float>& ds) {
    dos::NetworkConfig cfg; // C6-C16-F400-F120 defaults
    const json net = section(j, "network");
    const auto shape = ds.input_shape();
    cfg.input_shape = shape;
    cfg.n_classes = static_cast<std::size_t>(ds.n_classes);
    if (net.contains("input_shape")) {
        const auto& s = net.at("input_shape");
        std::array<std::size_t, 3> want{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(),
                                        s.at(2).get<std::size_t>()};
        if (want != shape) {
            throw dos::ConfigError("configured input shape does not match the dataset");
        }
    }
    if (net.contains("conv")) {
        cfg.conv_filters.clear();
        for (const auto& e : net.at("conv")) {
            cfg.conv_filters.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
        }
    }
    if (net.contains("fc")) {
        cfg.fc_widths.clear();
        for (const auto& e : net.at("fc")) cfg.fc_widths.push_back(e.get<std::size_t>());
        cfg.embedding_dim = cfg.fc_widths.back();
    }
    cfg.learning_rate = net.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = net.value("batch_size", cfg.batch_size);
    cfg.validate();
    return cfg;
}

dos::TrainPlan train_plan_for(const json& j, std::uint64_t seed,
                              const dos::Dataset<float>& ds) {
    const json t = section(j, "train");
    dos::TrainPlan plan;
    plan.k_mnr = t.value("k_mnr", 5);
    plan.k_mjr = t.value("k_mjr", 0);
    plan.rounds = t.value("rounds", 3);
    plan.epochs_per_round = t.value("epochs_per_round", 1);
    plan.stl_init_epochs = t.value("stl_init_epochs", 1);
    plan.alpha = t.value("alpha", 1.0);
    plan.seed = seed;
    if (t.contains("r")) {
        // fixed rate for reduced classes (all classes when nothing is flagged)
        const int r = t.at("r").get<int>();
        bool any = false;
        for (std::uint8_t f : ds.minority_flags) any = any || f;
        plan.r_per_class.assign(static_cast<std::size_t>(ds.n_classes), any ? 1 : r);
        if (any) {
            for (std::size_t c = 0; c < plan.r_per_class.size(); ++c) {
                if (ds.minority_flags[c]) plan.r_per_class[c] = r;
            }
        }
    }
    plan.validate();
    return plan;
}

template <typename T>
void write_progress_log(const dos::TrainResult<T>& res, const fs::path& path, bool is_dos) {
    std::ofstream f(path);
    if (!f) throw dos::FormatError(path.string() + ": cannot open for writing");
    for (const auto& rec : res.progress) f << rec.to_line() << "\n";
    if (is_dos) {
        f.precision(9);
        f << "final_variance=" << res.final_variance << "\n";
    }
}

int cmd_train(const Flags& flags) {
    const json j = merged_config(flags);
    const fs::path out(flags.out);
    const std::uint64_t seed = require_seed(j);
    const std::string mode = section(j, "train").value("mode", std::string("dos"));
    const int precision = j.value("precision", 32);

    auto ds = load_prepared(out, "train");
    const dos::NetworkConfig cfg = network_config_for(j, ds);
    dos::TrainPlan plan = train_plan_for(j, seed, ds);
    const int stl_epochs = section(j, "train").value("epochs", plan.rounds);

    dos::Parameters<float> trained;
    const fs::path log_path = out / (mode + ".log");
    if (precision == 64) {
        auto ds64 = ds.cast<double>();
        if (mode == "stl") {
            auto res = dos::train_stl(cfg, ds64, stl_epochs, seed);
            write_progress_log(res, log_path, false);
            trained = res.params.template cast<float>();
        } else {
            auto res = dos::train_dos(cfg, ds64, plan);
            write_progress_log(res, log_path, true);
            trained = res.params.template cast<float>();
        }
    } else {
        if (mode == "stl") {
            auto res = dos::train_stl(cfg, ds, stl_epochs, seed);
            write_progress_log(res, log_path, false);
            trained = std::move(res.params);
        } else {
            auto res = dos::train_dos(cfg, ds, plan);
            write_progress_log(res, log_path, true);
            trained = std::move(res.params);
        }
    }

    // stage the checkpoint, then rename: a failed save never leaves a
    // partial .dosm behind
    const fs::path ckpt = out / (mode + ".dosm");
    const fs::path tmp = out / (mode + ".dosm.tmp");
    try {
        dos::NetworkConfig saved = cfg;
        saved.alpha = plan.alpha;
        dos::save_checkpoint(tmp.string(), saved, trained);
        fs::rename(tmp, ckpt);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }

    std::vector<std::pair<std::string, std::string>> meta{
        {"mode", mode},
        {"seed", std::to_string(seed)},
        {"precision", std::to_string(precision)},
        {"k_mnr", std::to_string(plan.k_mnr)},
        {"k_mjr", std::to_string(plan.k_mjr)},
        {"rounds", std::to_string(plan.rounds)},
        {"alpha", fmt_double(plan.alpha)}};
    if (fs::exists(out / "prepare_meta.txt")) {
        auto pm = read_kv_file(out / "prepare_meta.txt");
        if (pm.count("reduction_rate")) meta.push_back({"reduction_rate", pm["reduction_rate"]});
    }
    write_kv_file(out / ("train_meta_" + mode + ".txt"), meta);
    echo_config(j, out, "effective_train_" + mode + ".json");
    std::cout << "trained mode=" << mode << " -> " << ckpt.string() << "\n";
    return 0;
}

// ---- eval ------------------------------------------------------------------

std::vector<dos::Tensor<float>> embed_all(const dos::NetworkConfig& cfg,
                                          const dos::Parameters<float>& params,
                                          const dos::Dataset<float>& ds) {
    std::vector<dos::Tensor<float>> out;
    out.reserve(ds.size());
    dos::ForwardCache<float> cache;
    std::vector<const dos::Tensor<float>*> xs;
    for (std::size_t start = 0; start < ds.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(ds.size(), start + cfg.batch_size);
        xs.clear();
        for (std::size_t i = start; i < stop; ++i) xs.push_back(&ds.inputs[i]);
        dos::forward_embed_batch(cfg, params, xs, cache);
        for (std::size_t b = 0; b < xs.size(); ++b) {
            dos::Tensor<float> e({cfg.embedding_dim});
            const float* row = cache.embedding_row(b);
            for (std::size_t i = 0; i < cfg.embedding_dim; ++i) e[i] = row[i];
            out.push_back(std::move(e));
        }
    }
    return out;
}

void write_posteriors_csv(const fs::path& path, const std::vector<double>& posteriors,
                          const std::vector<int>& truths, int n) {
    std::ofstream f(path);
    if (!f) throw dos::FormatError(path.string() + ": cannot open for writing");
    f << "sample,truth";
    for (int c = 0; c < n; ++c) f << ",p" << c;
    f << "\n";
    f.precision(17);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        f << i << "," << truths[i];
        for (int c = 0; c < n; ++c) {
            f << "," << posteriors[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)];
        }
        f << "\n";
    }
}

void write_pr_csv(const fs::path& path, const std::vector<double>& posteriors,
                  const std::vector<int>& truths, int n) {
    std::ofstream f(path);
    if (!f) throw dos::FormatError(path.string() + ": cannot open for writing");
    f << "class,recall,precision\n";
    f.precision(17);
    for (int c = 0; c < n; ++c) {
        std::vector<double> scores(truths.size());
        std::vector<std::uint8_t> pos(truths.size());
        bool any = false;
        for (std::size_t i = 0; i < truths.size(); ++i) {
            scores[i] = posteriors[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)];
            pos[i] = truths[i] == c;
            any = any || pos[i];
        }
        if (!any) continue;
        for (const auto& pt : dos::pr_curve(scores, pos, c).points) {
            f << c << "," << pt.recall << "," << pt.precision << "\n";
        }
    }
}

int cmd_eval(const Flags& flags) {
    const json j = merged_config(flags);
    const fs::path out(flags.out);
    const std::string mode = section(j, "train").value("mode", std::string("dos"));
    const json ev = section(j, "eval");
    const int knn_k = ev.value("knn_k", 5);
    const bool probe = ev.value("probe", true);

    auto [cfg, params] = dos::load_checkpoint((out / (mode + ".dosm")).string());
    auto train = load_prepared(out, "train");
    const bool has_test = fs::exists(out / "test.img");
    auto test = has_test ? load_prepared(out, "test") : train;

    for (const auto* ds : {&train, &test}) {
        if (ds->input_shape() != cfg.input_shape) {
            throw dos::ConfigError("dataset shape does not match the checkpoint input shape");
        }
        if (static_cast<std::size_t>(ds->n_classes) > cfg.n_classes) {
            throw dos::ConfigError("dataset has more classes than the checkpoint head");
        }
    }
    const int n = static_cast<int>(cfg.n_classes);
    const std::vector<std::uint8_t>& flags_src = train.minority_flags;

    auto train_embs = embed_all(cfg, params, train);
    auto test_embs = embed_all(cfg, params, test);

    std::ofstream report_txt(out / ("report_" + mode + ".txt"));
    if (!report_txt) {
        throw dos::FormatError((out / ("report_" + mode + ".txt")).string() +
                               ": cannot open for writing");
    }

    auto emit = [&](const std::string& name, const std::vector<double>& posteriors,
                    double wall_seconds) {
        auto rep = dos::report_from_posteriors(name, posteriors, test.labels, n, flags_src);
        rep.wall_seconds = wall_seconds;
        std::ofstream csv(out / ("metrics_" + name + "_" + mode + ".csv"));
        dos::report_to_csv(rep, csv);
        dos::report_to_table(rep, report_txt);
        report_txt << "\n";
        write_posteriors_csv(out / ("posteriors_" + name + "_" + mode + ".csv"), posteriors,
                             test.labels, n);
        write_pr_csv(out / ("pr_" + name + "_" + mode + ".csv"), posteriors, test.labels, n);
    };

    using clock = std::chrono::steady_clock;
    {
        const auto t0 = clock::now();
        std::vector<double> post(test.size() * static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < test.size(); ++i) {
            dos::Tensor<float> p = dos::classify(cfg, params, test_embs[i]);
            for (int c = 0; c < n; ++c) {
                post[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)] =
                    static_cast<double>(p[static_cast<std::size_t>(c)]);
            }
        }
        emit("softmax", post, std::chrono::duration<double>(clock::now() - t0).count());
    }
    {
        const auto t0 = clock::now();
        std::vector<double> post(test.size() * static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < test.size(); ++i) {
            auto [pred, p] = dos::knn_classify(train_embs, train.labels, test_embs[i], n, knn_k);
            for (int c = 0; c < n; ++c) {
                post[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)] =
                    p[static_cast<std::size_t>(c)];
            }
        }
        emit("knn", post, std::chrono::duration<double>(clock::now() - t0).count());
    }
    if (probe) {
        const auto t0 = clock::now();
        auto post = dos::logistic_probe(train_embs, train.labels, test_embs, n);
        emit("lr", post, std::chrono::duration<double>(clock::now() - t0).count());
    }

    echo_config(j, out, "effective_eval_" + mode + ".json");
    std::cout << "evaluated mode=" << mode << " on " << test.size() << " samples -> "
              << (out / ("report_" + mode + ".txt")).string() << "\n";
    return 0;
}

// ---- report ----------------------------------------------------------------

struct GroupStats {
    int runs = 0;
    double min_f1 = 0, maj_f1 = 0, all_f1 = 0;
    double min_pr = 0, maj_pr = 0, all_pr = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

// Per-run group means recomputed from the per-class CSV rows.
bool csv_group_means(const fs::path& csv, double out[6]) {
    std::ifstream f(csv);
    if (!f) return false;
    std::string line;
    std::getline(f, line); // header
    double min_f1 = 0, maj_f1 = 0, all_f1 = 0, min_pr = 0, maj_pr = 0, all_pr = 0;
    int n_min = 0, n_maj = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 6) return false;
        const double f1 = std::stod(cells[3]);
        const double pr = std::stod(cells[4]);
        if (cells[5] == "minority") {
            min_f1 += f1;
            min_pr += pr;
            n_min++;
        } else {
            maj_f1 += f1;
            maj_pr += pr;
            n_maj++;
        }
        all_f1 += f1;
        all_pr += pr;
    }
    const int total = n_min + n_maj;
    if (total == 0) return false;
    out[0] = n_min ? min_f1 / n_min : 0;
    out[1] = n_maj ? maj_f1 / n_maj : 0;
    out[2] = all_f1 / total;
    out[3] = n_min ? min_pr / n_min : 0;
    out[4] = n_maj ? maj_pr / n_maj : 0;
    out[5] = all_pr / total;
    return true;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out_dir) {
    std::map<std::tuple<std::string, std::string, std::string>, GroupStats> groups;
    for (const auto& dir_str : dirs) {
        const fs::path dir(dir_str);
        int found = 0;
        for (const std::string mode : {"stl", "dos"}) {
            std::string p = "?", k = "?";
            const fs::path meta = dir / ("train_meta_" + mode + ".txt");
            if (fs::exists(meta)) {
                auto kv = read_kv_file(meta);
                if (kv.count("reduction_rate")) p = kv["reduction_rate"];
                if (kv.count("k_mnr")) k = kv["k_mnr"];
            }
            for (const std::string ev : {"softmax", "knn", "lr"}) {
                const fs::path csv = dir / ("metrics_" + ev + "_" + mode + ".csv");
                if (!fs::exists(csv)) continue;
                double means[6];
                if (!csv_group_means(csv, means)) {
                    std::cerr << "warning: " << csv.string() << ": unreadable, skipped\n";
                    continue;
                }
                auto& g = groups[{mode + "-" + ev, p, k}];
                g.runs++;
                g.min_f1 += means[0];
                g.maj_f1 += means[1];
                g.all_f1 += means[2];
                g.min_pr += means[3];
                g.maj_pr += means[4];
                g.all_pr += means[5];
                found++;
            }
        }
        if (found == 0) {
            std::cerr << "warning: " << dir.string() << ": no metrics files found, skipped\n";
        }
    }
    if (groups.empty()) throw dos::DataError("report: no completed runs found");

    std::ostringstream table;
    table << "model        p        k    runs  min_f1  maj_f1  all_f1  min_auprc  maj_auprc  "
             "all_auprc\n";
    for (const auto& [key, g] : groups) {
        const auto& [model, p, k] = key;
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "%-12s %-8s %-4s %-5d %-7.4f %-7.4f %-7.4f %-10.4f %-10.4f %-10.4f\n",
                      model.c_str(), p.c_str(), k.c_str(), g.runs, g.min_f1 / g.runs,
                      g.maj_f1 / g.runs, g.all_f1 / g.runs, g.min_pr / g.runs, g.maj_pr / g.runs,
                      g.all_pr / g.runs);
        table << buf;
    }
    std::cout << table.str();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / "comparison.txt");
        if (!f) {
            throw dos::FormatError((fs::path(out_dir) / "comparison.txt").string() +
                                   ": cannot open for writing");
        }
        f << table.str();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep over-sampling trainer"};
    app.require_subcommand(1);

    Flags prep_flags, train_flags, eval_flags;
    CLI::App* prep = app.add_subcommand("prepare", "build a dataset into a run directory");
    add_common_flags(prep, prep_flags);
    CLI::App* train = app.add_subcommand("train", "train on a prepared run directory");
    add_common_flags(train, train_flags);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
    add_common_flags(eval, eval_flags);

    std::vector<std::string> report_dirs;
    std::string report_out;
    CLI::App* report = app.add_subcommand("report", "merge metrics across run directories");
    report->add_option("dirs", report_dirs, "run directories")->required();
    report->add_option("--out", report_out, "directory for comparison.txt");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed()) return cmd_prepare(prep_flags);
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_flags);
        if (report->parsed()) return cmd_report(report_dirs, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
