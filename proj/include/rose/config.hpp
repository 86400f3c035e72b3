#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rose/bytes.hpp"
#include "rose/dataset.hpp"
#include "rose/nn.hpp"
#include "rose/sha256.hpp"
#include "rose/synth.hpp"

namespace rose::config {

// Flat `[section] key = value` text. Comment lines start with # or ;.
struct Ini {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string raw;

    static Ini parse(const std::string& text) {
        Ini ini;
        ini.raw = text;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        while (std::getline(is, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
            ini.sections[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
        }
        return ini;
    }

    static Ini parse_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot read config file: " + path);
        std::ostringstream os;
        os << f.rdbuf();
        return parse(os.str());
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        return s != sections.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const {
        auto s = sections.find(section);
        if (s == sections.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    long long get_int(const std::string& section, const std::string& key, long long fallback) const {
        std::string v = get(section, key);
        return v.empty() ? fallback : std::stoll(v);
    }

    uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const {
        std::string v = get(section, key);
        return v.empty() ? fallback : std::stoull(v);
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        std::string v = get(section, key);
        return v.empty() ? fallback : std::stod(v);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        std::string v = get(section, key);
        if (v.empty()) return fallback;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::runtime_error("config: bad boolean for " + section + "." + key + ": " + v);
    }

    std::string digest16() const {
        Digest d = sha256(ByteView(reinterpret_cast<const uint8_t*>(raw.data()), raw.size()));
        return to_hex(ByteView(d.data(), d.size())).substr(0, 16);
    }
};

// Everything one experiment needs; re-running the same file reproduces every
// deterministic artifact bit-exactly.
struct ExperimentConfig {
    // [dataset]
    std::string dataset_kind = "synth-digits";  // idx | cifar | synth-digits | synth-shapes
    std::string dataset_path;
    size_t limit = 0;
    size_t test_limit = 0;
    int synth_n = 10000;
    int synth_test_n = 2000;
    uint64_t synth_seed = 1;
    uint64_t split_seed = 1;
    // [model]
    std::string preset = "desk-mnist";
    uint64_t model_seed = 1;
    // [watermark]
    int s = 40;
    int level = 2;
    std::optional<uint64_t> key_seed;
    std::string key_file;
    uint64_t selection_seed = 1;
    double max_fraction = 0.05;
    // [train]
    nn::Hyper hyper;
    // [attack]
    int prune_rounds = 50;
    int finetune_epochs = 30;
    // [output]
    std::string out_dir = "out";
    bool baseline = true;
    bool disclose_key = false;  // keys never ship in bundles unless asked

    std::string digest;

    static ExperimentConfig from_ini(const Ini& ini) {
        ExperimentConfig c;
        c.dataset_kind = ini.get("dataset", "kind", c.dataset_kind);
        c.dataset_path = ini.get("dataset", "path", "");
        c.limit = size_t(ini.get_int("dataset", "limit", 0));
        c.test_limit = size_t(ini.get_int("dataset", "test_limit", 0));
        c.synth_n = int(ini.get_int("dataset", "synth_n", c.synth_n));
        c.synth_test_n = int(ini.get_int("dataset", "synth_test_n", c.synth_test_n));
        c.synth_seed = ini.get_u64("dataset", "synth_seed", c.synth_seed);
        c.split_seed = ini.get_u64("dataset", "split_seed", c.split_seed);

        c.preset = ini.get("model", "preset", c.preset);
        c.model_seed = ini.get_u64("model", "seed", c.model_seed);

        c.s = int(ini.get_int("watermark", "s", c.s));
        c.level = int(ini.get_int("watermark", "level", c.level));
        if (ini.has("watermark", "key_seed")) c.key_seed = ini.get_u64("watermark", "key_seed", 0);
        c.key_file = ini.get("watermark", "key_file", "");
        c.selection_seed = ini.get_u64("watermark", "selection_seed", c.selection_seed);
        c.max_fraction = ini.get_double("watermark", "max_fraction", c.max_fraction);

        c.hyper.optimizer = ini.get("train", "optimizer", "adam");
        c.hyper.lr = ini.get_double("train", "lr", 1e-3);
        c.hyper.momentum = ini.get_double("train", "momentum", 0.9);
        c.hyper.epochs = int(ini.get_int("train", "epochs", 30));
        c.hyper.batch = int(ini.get_int("train", "batch", 64));

        c.prune_rounds = int(ini.get_int("attack", "prune_rounds", c.prune_rounds));
        c.finetune_epochs = int(ini.get_int("attack", "finetune_epochs", c.finetune_epochs));

        c.out_dir = ini.get("output", "dir", c.out_dir);
        c.baseline = ini.get_bool("output", "baseline", c.baseline);
        c.disclose_key = ini.get_bool("output", "disclose_key", c.disclose_key);

        c.digest = ini.digest16();
        return c;
    }

    static ExperimentConfig load(const std::string& path) { return from_ini(Ini::parse_file(path)); }
};

// Loads (corpus-with-splits, test set) per the config's dataset section.
inline std::pair<dataset::LabeledDataset, dataset::LabeledDataset> load_dataset(
    const ExperimentConfig& c) {
    dataset::LabeledDataset corpus, test;
    if (c.dataset_kind == "synth-digits") {
        corpus = synth::digits(c.synth_n, c.synth_seed);
        test = synth::digits(c.synth_test_n, mix_seed(c.synth_seed, 0x7e57));
    } else if (c.dataset_kind == "synth-shapes") {
        corpus = synth::shapes(c.synth_n, c.synth_seed);
        test = synth::shapes(c.synth_test_n, mix_seed(c.synth_seed, 0x7e57));
    } else if (c.dataset_kind == "idx") {
        if (c.dataset_path.empty()) throw std::runtime_error("dataset.path required for idx datasets");
        corpus = dataset::load_idx(c.dataset_path + "/train-images-idx3-ubyte",
                                   c.dataset_path + "/train-labels-idx1-ubyte", 10, c.limit);
        test = dataset::load_idx(c.dataset_path + "/t10k-images-idx3-ubyte",
                                 c.dataset_path + "/t10k-labels-idx1-ubyte", 10, c.test_limit);
    } else if (c.dataset_kind == "cifar") {
        if (c.dataset_path.empty()) throw std::runtime_error("dataset.path required for cifar datasets");
        std::vector<std::string> batches;
        for (int i = 1; i <= 5; ++i)
            batches.push_back(c.dataset_path + "/data_batch_" + std::to_string(i) + ".bin");
        corpus = dataset::load_cifar(batches, c.limit);
        test = dataset::load_cifar({c.dataset_path + "/test_batch.bin"}, c.test_limit);
    } else {
        throw std::runtime_error("unknown dataset kind: " + c.dataset_kind);
    }
    if (c.limit > 0 && corpus.images.size() > c.limit) {
        corpus.images.resize(c.limit);
        corpus.labels.resize(c.limit);
    }
    if (c.test_limit > 0 && test.images.size() > c.test_limit) {
        test.images.resize(c.test_limit);
        test.labels.resize(c.test_limit);
    }
    dataset::make_splits(corpus, c.split_seed);
    return {std::move(corpus), std::move(test)};
}

}  // namespace rose::config
