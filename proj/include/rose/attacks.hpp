#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rose/dataset.hpp"
#include "rose/jpeg.hpp"
#include "rose/nn.hpp"
#include "rose/stats.hpp"
#include "rose/watermark.hpp"

namespace rose::attacks {

enum class AttackKind { PruneGlobal, PruneFc, QuantDynamic, QuantFullInt, QuantFloat16, Jpeg, Finetune };

inline const char* kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::PruneGlobal: return "prune-global";
        case AttackKind::PruneFc: return "prune-fc";
        case AttackKind::QuantDynamic: return "quant-dynamic";
        case AttackKind::QuantFullInt: return "quant-fullint";
        case AttackKind::QuantFloat16: return "quant-float16";
        case AttackKind::Jpeg: return "jpeg";
        case AttackKind::Finetune: return "finetune";
    }
    return "?";
}

struct AttackSpec {
    AttackKind kind = AttackKind::PruneGlobal;
    double prune_rate = 0.0;  // pruning
    int jpeg_qf = 95;         // jpeg
    nn::Hyper finetune_hyper; // finetune; defaults set by finetune_defaults()
    int repeats = 1;          // rounds for stochastic kinds
    uint64_t rng_seed = 1;

    std::string params() const {
        std::ostringstream os;
        switch (kind) {
            case AttackKind::PruneGlobal:
            case AttackKind::PruneFc: os << "k=" << prune_rate; break;
            case AttackKind::Jpeg: os << "qf=" << jpeg_qf; break;
            case AttackKind::Finetune:
                os << "lr=" << finetune_hyper.lr << " epochs=" << finetune_hyper.epochs
                   << " batch=" << finetune_hyper.batch;
                break;
            default: break;
        }
        return os.str();
    }
};

// Fine-tuning re-trains with the training algorithm at a small rate; no head
// re-initialization.
inline nn::Hyper finetune_defaults(int epochs = 30) {
    nn::Hyper h;
    h.lr = 1e-5;
    h.epochs = epochs;
    h.batch = 64;
    return h;
}

// ---------------------------------------------------------------------------
// pruning

enum class PruneScope { Global, FcOnly };

// Zeroes floor(k * weight_count) seeded-random weights independently per layer
// in scope; biases untouched. Returns a new model.
inline nn::Model prune(const nn::Model& model, double k, PruneScope scope, uint64_t seed) {
    if (!(k >= 0.0 && k <= 1.0)) throw std::domain_error("prune: rate must be in [0,1]");
    nn::Model out = model;
    for (size_t li = 0; li < out.layers.size(); ++li) {
        auto& l = out.layers[li];
        if (l.w.empty()) continue;
        if (scope == PruneScope::FcOnly && l.def.kind != nn::LayerKind::Dense) continue;
        size_t count = l.w.size();
        size_t zeros = size_t(k * double(count));
        if (zeros == 0) continue;
        // partial Fisher-Yates over the index range
        std::vector<uint32_t> idx(count);
        for (size_t j = 0; j < count; ++j) idx[j] = uint32_t(j);
        Rng rng(mix_seed(seed, 0x9e0e + li));
        for (size_t j = 0; j < zeros; ++j) {
            size_t pick = j + size_t(rng.next_u64() % (count - j));
            std::swap(idx[j], idx[pick]);
            l.w[idx[j]] = 0.0f;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// quantization

enum class QuantMode { Dynamic, FullInt, Float16 };

namespace detail {

// round-to-nearest-even float -> IEEE binary16 -> float
inline float to_half_and_back(float v) {
    uint32_t x;
    std::memcpy(&x, &v, 4);
    uint32_t sign = x & 0x80000000u;
    int32_t exp = int32_t((x >> 23) & 0xff) - 127;
    uint32_t mant = x & 0x7fffffu;

    uint16_t h;
    if (exp == 128) {  // inf/nan
        h = uint16_t((sign >> 16) | 0x7c00 | (mant ? 0x200 : 0));
    } else if (exp > 15) {  // overflow -> inf
        h = uint16_t((sign >> 16) | 0x7c00);
    } else if (exp >= -14) {  // normal
        uint32_t m = mant >> 13;
        uint32_t rest = mant & 0x1fff;
        if (rest > 0x1000 || (rest == 0x1000 && (m & 1))) ++m;  // round half to even
        uint32_t e = uint32_t(exp + 15);
        h = uint16_t((sign >> 16) | (e << 10) | m);  // mantissa carry bumps exponent correctly
    } else if (exp >= -25) {  // subnormal (or rounds up into the subnormals)
        uint32_t full = mant | 0x800000u;
        int shift = -exp - 14 + 13;
        uint32_t m = full >> shift;
        uint32_t rest = full & ((1u << shift) - 1);
        uint32_t half = 1u << (shift - 1);
        if (rest > half || (rest == half && (m & 1))) ++m;
        h = uint16_t((sign >> 16) | m);
    } else {  // underflow to zero
        h = uint16_t(sign >> 16);
    }

    // expand back
    uint32_t hs = uint32_t(h & 0x8000) << 16;
    uint32_t he = (h >> 10) & 0x1f;
    uint32_t hm = h & 0x3ff;
    uint32_t y;
    if (he == 0x1f) {
        y = hs | 0x7f800000u | (hm << 13);
    } else if (he != 0) {
        y = hs | ((he + 112) << 23) | (hm << 13);
    } else if (hm != 0) {
        int e = -1;
        uint32_t m = hm;
        while (!(m & 0x400)) {
            m <<= 1;
            --e;
        }
        y = hs | uint32_t(114 + e) << 23 | ((m & 0x3ff) << 13);
    } else {
        y = hs;
    }
    float out;
    std::memcpy(&out, &y, 4);
    return out;
}

// per-tensor symmetric int8: scale = max|w|/127, w -> round(w/scale)*scale
inline void quantize_tensor_int8(std::vector<float>& w) {
    float mx = 0.0f;
    for (float v : w) mx = std::max(mx, std::abs(v));
    if (mx == 0.0f) return;
    float scale = mx / 127.0f;
    for (auto& v : w) {
        float q = std::round(v / scale);
        q = std::min(127.0f, std::max(-127.0f, q));
        v = q * scale;
    }
}

}  // namespace detail

// Weight (and for FullInt, activation) quantization. calib supplies training
// images for activation range calibration; required for FullInt only.
inline nn::Model quantize(const nn::Model& model, QuantMode mode,
                          const std::vector<Image>* calib = nullptr, size_t calib_limit = 256) {
    nn::Model out = model;
    switch (mode) {
        case QuantMode::Float16:
            for (auto& l : out.layers) {
                for (auto& v : l.w) v = detail::to_half_and_back(v);
                for (auto& v : l.b) v = detail::to_half_and_back(v);
            }
            break;
        case QuantMode::Dynamic:
            for (auto& l : out.layers) detail::quantize_tensor_int8(l.w);
            break;
        case QuantMode::FullInt: {
            if (!calib || calib->empty())
                throw std::invalid_argument("quantize: full-integer mode needs a calibration set");
            // min/max activation calibration on the original model
            size_t n = std::min(calib_limit, calib->size());
            nn::Workspace<float> ws;
            ws.prepare(model);
            std::vector<float> lo(model.layers.size(), 0.0f), hi(model.layers.size(), 0.0f);
            bool first = true;
            for (size_t i = 0; i < n; ++i) {
                nn::image_to_input((*calib)[i], model, ws.acts[0]);
                nn::forward(model, ws);
                for (size_t li = 0; li < model.layers.size(); ++li) {
                    for (float v : ws.acts[li + 1]) {
                        if (first) {
                            lo[li] = hi[li] = v;
                        } else {
                            lo[li] = std::min(lo[li], v);
                            hi[li] = std::max(hi[li], v);
                        }
                    }
                    first = false;
                }
            }
            for (auto& l : out.layers) detail::quantize_tensor_int8(l.w);
            out.act_quant.assign(out.layers.size(), std::nullopt);
            for (size_t li = 0; li < out.layers.size(); ++li) {
                float range = hi[li] - lo[li];
                if (range <= 0.0f) continue;
                nn::ActQuant q;
                q.scale = range / 255.0f;
                q.zero_point = std::round(-lo[li] / q.scale);
                out.act_quant[li] = q;
            }
            break;
        }
    }
    return out;
}

// JPEG input preprocessing; composes with any prediction oracle.
inline Image jpeg_preprocess(const Image& img, int qf) { return jpeg::roundtrip(img, qf); }

inline wm::PredictFn jpeg_oracle(const wm::PredictFn& inner, int qf) {
    return [inner, qf](const Image& img) { return inner(jpeg_preprocess(img, qf)); };
}

// Fine-tuning on the held-out 10% split, same algorithm as training.
inline nn::Model finetune_attack(const nn::Model& model, const dataset::LabeledDataset& data,
                                 const nn::Hyper& hyper) {
    if (data.finetune_idx.empty())
        throw std::invalid_argument("finetune_attack: dataset has no finetune split");
    return nn::train_on_indices(model, data, data.finetune_idx, hyper);
}

// ---------------------------------------------------------------------------
// sweep orchestration

struct AttackRow {
    std::string kind;
    std::string params;
    int rounds = 1;
    double acc_mean = 0.0, acc_sd = 0.0;
    double rec_mean = 0.0, rec_sd = 0.0;
    double m_mean = 0.0;
    double rarity_min = 0.0, rarity_max = 0.0;
    double rarity_of_mean = 0.0;  // rarity evaluated at the rounded mean match count
    bool failed = false;
    std::string error;
};

struct AttackReport {
    int s = 0;
    int class_count = 0;
    AttackRow baseline;
    std::vector<AttackRow> rows;
};

namespace detail {

struct RoundStats {
    std::vector<double> accs, recs;
    std::vector<int> ms;

    void add(double acc, const wm::RecoveryResult& r) {
        accs.push_back(acc);
        recs.push_back(r.rec);
        ms.push_back(r.m);
    }
};

inline void fill_row(AttackRow& row, const RoundStats& st, int s, int c) {
    size_t n = st.accs.size();
    row.rounds = int(n);
    auto mean_sd = [n](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= double(n);
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        sd = n > 1 ? std::sqrt(var / double(n - 1)) : 0.0;
    };
    mean_sd(st.accs, row.acc_mean, row.acc_sd);
    mean_sd(st.recs, row.rec_mean, row.rec_sd);
    double msum = 0.0;
    double rmin = HUGE_VAL, rmax = -HUGE_VAL;
    for (int m : st.ms) {
        msum += m;
        double bits = stats::rarity(s, m, c).rarity_bits;
        rmin = std::min(rmin, bits);
        rmax = std::max(rmax, bits);
    }
    row.m_mean = msum / double(n);
    row.rarity_min = rmin;
    row.rarity_max = rmax;
    row.rarity_of_mean = stats::rarity(s, int(std::lround(row.m_mean)), c).rarity_bits;
}

}  // namespace detail

// Worker-thread cap for stochastic attack rounds, from the ROSE_THREADS
// environment variable. Defaults to sequential.
inline int thread_cap() {
    const char* v = std::getenv("ROSE_THREADS");
    if (!v) return 1;
    int n = std::atoi(v);
    return n < 1 ? 1 : n;
}

// Applies one attack (repeats x for stochastic kinds), measuring test accuracy
// and trigger recovery against the attacked predictor. Rounds of a stochastic
// attack use seeds derived from (seed, round index), so results do not depend
// on the execution schedule; with ROSE_THREADS > 1 they run concurrently.
inline AttackRow run_attack(const nn::Model& model, const wm::TriggerSet& triggers,
                            const dataset::LabeledDataset& corpus,
                            const dataset::LabeledDataset& test, const AttackSpec& spec) {
    AttackRow row;
    row.kind = kind_name(spec.kind);
    row.params = spec.params();
    int rounds = std::max(1, spec.repeats);
    bool stochastic = spec.kind == AttackKind::PruneGlobal || spec.kind == AttackKind::PruneFc;
    if (!stochastic) rounds = 1;

    std::vector<Image> calib;
    if (spec.kind == AttackKind::QuantFullInt)
        for (size_t i = 0; i < std::min<size_t>(256, corpus.train_idx.size()); ++i)
            calib.push_back(corpus.images[size_t(corpus.train_idx[i])]);

    auto run_round = [&](int round, double& acc_out, wm::RecoveryResult& rec_out) {
        uint64_t round_seed = mix_seed(spec.rng_seed, uint64_t(round));
        nn::Model attacked;
        wm::PredictFn oracle;
        switch (spec.kind) {
            case AttackKind::PruneGlobal:
                attacked = prune(model, spec.prune_rate, PruneScope::Global, round_seed);
                break;
            case AttackKind::PruneFc:
                attacked = prune(model, spec.prune_rate, PruneScope::FcOnly, round_seed);
                break;
            case AttackKind::QuantDynamic: attacked = quantize(model, QuantMode::Dynamic); break;
            case AttackKind::QuantFullInt:
                attacked = quantize(model, QuantMode::FullInt, &calib);
                break;
            case AttackKind::QuantFloat16: attacked = quantize(model, QuantMode::Float16); break;
            case AttackKind::Finetune:
                attacked = finetune_attack(model, corpus, spec.finetune_hyper);
                break;
            case AttackKind::Jpeg: attacked = model; break;
        }
        if (spec.kind == AttackKind::Jpeg) {
            oracle = jpeg_oracle(wm::model_oracle(attacked), spec.jpeg_qf);
        } else {
            oracle = wm::model_oracle(attacked);
        }
        size_t correct = 0;
        for (size_t i = 0; i < test.images.size(); ++i)
            if (oracle(test.images[i]) == test.labels[i]) ++correct;
        acc_out = 100.0 * double(correct) / double(test.images.size());
        rec_out = wm::recovery_rate(oracle, triggers);
    };

    std::vector<double> accs(static_cast<size_t>(rounds));
    std::vector<wm::RecoveryResult> recs(static_cast<size_t>(rounds));
    int workers = stochastic ? std::min(thread_cap(), rounds) : 1;
    if (workers > 1) {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int r = next.fetch_add(1); r < rounds; r = next.fetch_add(1))
                    run_round(r, accs[size_t(r)], recs[size_t(r)]);
            });
        }
        for (auto& th : pool) th.join();
    } else {
        for (int r = 0; r < rounds; ++r) run_round(r, accs[size_t(r)], recs[size_t(r)]);
    }

    detail::RoundStats st;
    for (int r = 0; r < rounds; ++r) st.add(accs[size_t(r)], recs[size_t(r)]);
    detail::fill_row(row, st, triggers.s, triggers.class_count);
    return row;
}

// The default grid: fine-tune, the three quantization modes, the JPEG QF
// ladder 55..100 step 5, and the pruning-rate grid 0.05*{0..19} + {0.97,0.99}.
inline std::vector<AttackSpec> default_suite(uint64_t seed, int prune_repeats = 50,
                                             int finetune_epochs = 30) {
    std::vector<AttackSpec> specs;
    AttackSpec ft;
    ft.kind = AttackKind::Finetune;
    ft.finetune_hyper = finetune_defaults(finetune_epochs);
    specs.push_back(ft);
    for (AttackKind k : {AttackKind::QuantDynamic, AttackKind::QuantFullInt, AttackKind::QuantFloat16}) {
        AttackSpec q;
        q.kind = k;
        specs.push_back(q);
    }
    for (int qf = 55; qf <= 100; qf += 5) {
        AttackSpec j;
        j.kind = AttackKind::Jpeg;
        j.jpeg_qf = qf;
        specs.push_back(j);
    }
    for (int i = 0; i <= 19; ++i) {
        AttackSpec p;
        p.kind = AttackKind::PruneGlobal;
        p.prune_rate = 0.05 * i;
        p.repeats = prune_repeats;
        p.rng_seed = mix_seed(seed, 0x90 + i);
        specs.push_back(p);
    }
    for (double k : {0.97, 0.99}) {
        AttackSpec p;
        p.kind = AttackKind::PruneGlobal;
        p.prune_rate = k;
        p.repeats = prune_repeats;
        p.rng_seed = mix_seed(seed, uint64_t(k * 1000));
        specs.push_back(p);
    }
    return specs;
}

// Runs every spec; per-row failures are recorded and the sweep continues.
inline AttackReport run_sweep(const nn::Model& model, const wm::TriggerSet& triggers,
                              const dataset::LabeledDataset& corpus,
                              const dataset::LabeledDataset& test,
                              const std::vector<AttackSpec>& specs) {
    if (test.images.empty()) throw std::invalid_argument("run_sweep: empty test set");
    AttackReport report;
    report.s = triggers.s;
    report.class_count = triggers.class_count;

    // baseline row: no attack
    {
        detail::RoundStats st;
        wm::PredictFn oracle = wm::model_oracle(model);
        size_t correct = 0;
        for (size_t i = 0; i < test.images.size(); ++i)
            if (oracle(test.images[i]) == test.labels[i]) ++correct;
        st.add(100.0 * double(correct) / double(test.images.size()),
               wm::recovery_rate(oracle, triggers));
        report.baseline.kind = "baseline";
        detail::fill_row(report.baseline, st, triggers.s, triggers.class_count);
    }

    for (const AttackSpec& spec : specs) {
        try {
            report.rows.push_back(run_attack(model, triggers, corpus, test, spec));
        } catch (const std::exception& e) {
            AttackRow row;
            row.kind = kind_name(spec.kind);
            row.params = spec.params();
            row.failed = true;
            row.error = e.what();
            report.rows.push_back(row);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// report emission

inline std::string report_csv(const AttackReport& r) {
    std::ostringstream os;
    os << "kind,params,rounds,acc_mean,acc_sd,rec_mean,rec_sd,m_mean,rarity_min,rarity_max\n";
    auto row = [&os](const AttackRow& x) {
        os << x.kind << "," << '"' << x.params << '"' << "," << x.rounds << ",";
        if (x.failed) {
            os << ",,,,,,\n";
            return;
        }
        os << std::fixed << std::setprecision(4) << x.acc_mean << "," << x.acc_sd << ","
           << x.rec_mean << "," << x.rec_sd << "," << x.m_mean << "," << x.rarity_min << ","
           << x.rarity_max << "\n";
        os.unsetf(std::ios::fixed);
    };
    row(r.baseline);
    for (const auto& x : r.rows) row(x);
    return os.str();
}

inline std::string report_text(const AttackReport& r) {
    std::ostringstream os;
    os << "attack report: s = " << r.s << ", classes = " << r.class_count << "\n";
    os << std::left << std::setw(14) << "kind" << std::setw(26) << "params" << std::right
       << std::setw(8) << "acc" << std::setw(8) << "rec" << std::setw(8) << "m" << std::setw(14)
       << "rarity[bits]" << "\n";
    auto row = [&os](const AttackRow& x) {
        os << std::left << std::setw(14) << x.kind << std::setw(26) << x.params << std::right;
        if (x.failed) {
            os << "  FAILED: " << x.error << "\n";
            return;
        }
        os << std::fixed << std::setprecision(1) << std::setw(8) << x.acc_mean << std::setw(8)
           << x.rec_mean << std::setw(8) << std::setprecision(1) << x.m_mean;
        std::ostringstream rr;
        rr << int(x.rarity_min) << "--" << int(x.rarity_max);
        os << std::setw(14) << rr.str() << "\n";
        os.unsetf(std::ios::fixed);
    };
    row(r.baseline);
    for (const auto& x : r.rows) row(x);
    return os.str();
}

// (k, acc, rec) columns for the accuracy-vs-recovery pruning curves.
inline std::string plot_data(const AttackReport& r, const std::string& kind) {
    std::ostringstream os;
    os << "k,acc,rec\n";
    for (const auto& x : r.rows) {
        if (x.kind != kind || x.failed) continue;
        std::string k = x.params;
        auto eq = k.find('=');
        if (eq != std::string::npos) k = k.substr(eq + 1);
        os << k << "," << x.acc_mean << "," << x.rec_mean << "\n";
    }
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

}  // namespace rose::attacks
