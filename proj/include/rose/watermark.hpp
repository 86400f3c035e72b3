#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rose/dataset.hpp"
#include "rose/keying.hpp"
#include "rose/nn.hpp"
#include "rose/stats.hpp"

namespace rose::wm {

// The Owner's evidence material: which training samples became triggers and
// the key-derived labels they were taught to answer.
struct TriggerSet {
    int level = 2;
    int s = 0;
    int class_count = 0;
    uint64_t selection_seed = 0;
    std::vector<int> indices;          // positions in the training corpus
    std::vector<Image> images;         // owned copies, byte-identical to the corpus
    std::vector<int> original_labels;  // true classes, for reporting only
    keying::LabelAssignment labels;    // set by the level-N keying rule
    std::string key_id;
    double corpus_fraction = 0.0;      // s / n at selection time

    bool labels_set() const { return int(labels.labels.size()) == s; }
};

// Black-box prediction oracle; the only thing recovery and verification ever
// see of a model.
using PredictFn = std::function<int(const Image&)>;

inline PredictFn model_oracle(const nn::Model& net) {
    return [&net](const Image& img) { return nn::predict(net, img); };
}

// Draws s distinct training-split samples via a seeded permutation. The cap
// keeps the trigger set a vanishing fraction of the training data.
inline TriggerSet select_triggers(const dataset::LabeledDataset& data, int s, uint64_t selection_seed,
                                  double max_fraction = 0.05) {
    if (data.train_idx.empty()) throw std::invalid_argument("select_triggers: dataset has no train split");
    if (s < 1) throw std::invalid_argument("select_triggers: s must be >= 1");
    size_t n = data.train_idx.size();
    if (double(s) > max_fraction * double(n))
        throw std::invalid_argument("select_triggers: s exceeds the trigger-fraction cap (" +
                                    std::to_string(s) + " > " + std::to_string(max_fraction) + " * " +
                                    std::to_string(n) + ")");
    std::vector<int> perm(data.train_idx);
    Rng rng(mix_seed(selection_seed, 0x7419));
    rng.shuffle(perm.begin(), perm.end());

    TriggerSet t;
    t.s = s;
    t.class_count = data.class_count;
    t.selection_seed = selection_seed;
    t.corpus_fraction = double(s) / double(n);
    t.indices.assign(perm.begin(), perm.begin() + s);
    for (int i : t.indices) {
        t.images.push_back(data.images[size_t(i)]);
        t.original_labels.push_back(data.labels[size_t(i)]);
    }
    return t;
}

// Returns a dataset whose trigger samples carry the key-derived labels; all
// other samples are untouched and the input is never mutated.
inline dataset::LabeledDataset inject(const dataset::LabeledDataset& data, const TriggerSet& triggers) {
    if (!triggers.labels_set()) throw std::invalid_argument("inject: trigger labels not set");
    if (triggers.labels.class_count != data.class_count)
        throw std::invalid_argument("inject: class count mismatch between labels and dataset");
    dataset::LabeledDataset out = data;
    for (size_t i = 0; i < triggers.indices.size(); ++i) {
        int idx = triggers.indices[i];
        int label = triggers.labels.labels[i];
        if (label < 0 || label >= data.class_count) throw std::invalid_argument("inject: label out of range");
        out.labels[size_t(idx)] = label;
    }
    return out;
}

struct RecoveryResult {
    int m = 0;
    int s = 0;
    double rec = 0.0;  // percent
    stats::RarityResult rarity;
};

// Match count over the trigger set using ONLY black-box predictions.
inline RecoveryResult recovery_rate(const PredictFn& oracle, const TriggerSet& triggers) {
    if (!triggers.labels_set()) throw std::invalid_argument("recovery_rate: trigger labels not set");
    RecoveryResult r;
    r.s = triggers.s;
    for (int i = 0; i < triggers.s; ++i)
        if (oracle(triggers.images[size_t(i)]) == triggers.labels.labels[size_t(i)]) ++r.m;
    r.rec = 100.0 * double(r.m) / double(r.s);
    r.rarity = stats::rarity(r.s, r.m, triggers.class_count);
    return r;
}

struct EmbedResult {
    nn::Model model;
    TriggerSet triggers;
};

// The owner-side pipeline: select -> key labels -> inject -> train. The
// per-epoch trigger recovery is appended to the model's training log (it is
// monitored, never used for early stopping).
inline EmbedResult embed(const dataset::LabeledDataset& data, const keying::SecretKey& sk, int s,
                         int level, const nn::ArchitectureSpec& spec, const nn::Hyper& hyper,
                         uint64_t model_seed, uint64_t selection_seed, double max_fraction = 0.05) {
    nn::Model net = nn::build(spec, model_seed);
    if (s == 0) {
        // empty injection: the pipeline is exactly baseline training
        EmbedResult res{nn::train(net, data, hyper), TriggerSet{}};
        res.triggers.level = level;
        res.triggers.class_count = data.class_count;
        res.triggers.key_id = sk.key_id;
        return res;
    }
    TriggerSet triggers = select_triggers(data, s, selection_seed, max_fraction);
    triggers.level = level;
    triggers.labels = keying::derive_labels(level, triggers.images, sk, data.class_count);
    triggers.key_id = sk.key_id;
    dataset::LabeledDataset poisoned = inject(data, triggers);

    nn::EpochCallback monitor = [&triggers](int epoch, nn::Model& m) {
        RecoveryResult r = recovery_rate(model_oracle(m), triggers);
        (void)epoch;
        m.log.back() += " trigger_rec " + std::to_string(r.rec);
    };
    EmbedResult res{nn::train(net, poisoned, hyper, monitor), std::move(triggers)};
    return res;
}

// Transfer-learning embedding: freeze the convolutional stack of a donor
// model, re-initialize the dense head, then train on the target data with
// triggers injected. Emulates watermarking during transfer at desk scale.
inline EmbedResult embed_transfer(const nn::Model& donor, const dataset::LabeledDataset& data,
                                  const keying::SecretKey& sk, int s, int level,
                                  const nn::Hyper& hyper, uint64_t head_seed, uint64_t selection_seed) {
    nn::Model net = donor;
    net.seed = head_seed;
    // re-init dense layers only
    for (size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        if (l.def.kind != nn::LayerKind::Dense) continue;
        Rng rng(mix_seed(head_seed, 0x1a7e5 + i));
        double limit = std::sqrt(6.0 / double(l.in_size()));
        for (auto& x : l.w) x = float(rng.uniform(-limit, limit));
        std::fill(l.b.begin(), l.b.end(), 0.0f);
    }
    TriggerSet triggers = select_triggers(data, s, selection_seed);
    triggers.level = level;
    triggers.labels = keying::derive_labels(level, triggers.images, sk, data.class_count);
    triggers.key_id = sk.key_id;
    dataset::LabeledDataset poisoned = inject(data, triggers);

    // frozen conv stack: mask their gradients by restoring weights after train
    // (cheap at desk scale and keeps the training loop unchanged)
    nn::Model trained = nn::train(net, poisoned, hyper);
    for (size_t i = 0; i < trained.layers.size(); ++i) {
        if (trained.layers[i].def.kind == nn::LayerKind::Conv) {
            trained.layers[i].w = donor.layers[i].w;
            trained.layers[i].b = donor.layers[i].b;
        }
    }
    return EmbedResult{std::move(trained), std::move(triggers)};
}

// ---------------------------------------------------------------------------
// trigger file: text header + canonical image blocks

inline void save_triggers(const std::string& path, const TriggerSet& t,
                          const std::string& config_digest = "") {
    if (!t.labels_set()) throw std::invalid_argument("save_triggers: labels not set");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write trigger file: " + path);
    f << "ROSETRIG v1\n";
    f << "level = " << t.level << "\n";
    f << "s = " << t.s << "\n";
    f << "classes = " << t.class_count << "\n";
    f << "selection_seed = " << t.selection_seed << "\n";
    f << "key_id = " << t.key_id << "\n";
    f << "config = " << (config_digest.empty() ? "-" : config_digest) << "\n";
    auto ints = [&f](const char* key, const std::vector<int>& v) {
        f << key << " =";
        for (int x : v) f << " " << x;
        f << "\n";
    };
    ints("indices", t.indices);
    ints("labels", t.labels.labels);
    ints("original_labels", t.original_labels);
    if (t.labels.binding_digest)
        f << "binding = " << to_hex(ByteView(t.labels.binding_digest->data(), 32)) << "\n";
    else
        f << "binding = -\n";
    for (const Image& img : t.images) {
        Bytes canon = canonical_bytes(img);
        Bytes len;
        put_u32be(len, uint32_t(canon.size()));
        f.write(reinterpret_cast<const char*>(len.data()), 4);
        f.write(reinterpret_cast<const char*>(canon.data()), std::streamsize(canon.size()));
    }
}

inline TriggerSet load_triggers(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read trigger file: " + path);
    std::string line;
    auto next = [&]() {
        if (!std::getline(f, line)) throw std::runtime_error("trigger file truncated: " + path);
        return line;
    };
    auto field = [&](const std::string& l, const std::string& key) -> std::string {
        std::string prefix = key + " = ";
        if (l.rfind(prefix, 0) != 0) throw std::runtime_error("trigger file: expected " + key);
        return l.substr(prefix.size());
    };
    auto ints = [&](const std::string& text) {
        std::vector<int> v;
        std::istringstream is(text);
        int x;
        while (is >> x) v.push_back(x);
        return v;
    };
    if (next() != "ROSETRIG v1") throw std::runtime_error("not a trigger file: " + path);
    TriggerSet t;
    t.level = std::stoi(field(next(), "level"));
    t.s = std::stoi(field(next(), "s"));
    t.class_count = std::stoi(field(next(), "classes"));
    t.selection_seed = std::stoull(field(next(), "selection_seed"));
    t.key_id = field(next(), "key_id");
    next();  // config digest, informational
    t.indices = ints(field(next(), "indices"));
    t.labels.labels = ints(field(next(), "labels"));
    t.labels.level = t.level;
    t.labels.class_count = t.class_count;
    t.original_labels = ints(field(next(), "original_labels"));
    std::string binding = field(next(), "binding");
    if (binding != "-") {
        Bytes raw = from_hex(binding);
        if (raw.size() != 32) throw std::runtime_error("trigger file: bad binding digest");
        Digest d;
        std::copy(raw.begin(), raw.end(), d.begin());
        t.labels.binding_digest = d;
    }
    for (int i = 0; i < t.s; ++i) {
        uint8_t lenbuf[4];
        f.read(reinterpret_cast<char*>(lenbuf), 4);
        if (!f) throw std::runtime_error("trigger file: truncated image block");
        uint32_t len = get_u32be(lenbuf);
        Bytes canon(len);
        f.read(reinterpret_cast<char*>(canon.data()), std::streamsize(len));
        if (!f) throw std::runtime_error("trigger file: truncated image block");
        t.images.push_back(parse_canonical(ByteView(canon.data(), canon.size())));
    }
    if (int(t.indices.size()) != t.s || int(t.labels.labels.size()) != t.s)
        throw std::runtime_error("trigger file: field count mismatch");
    return t;
}

}  // namespace rose::wm
