#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rose/keying.hpp"
#include "rose/nn.hpp"
#include "rose/stats.hpp"

namespace rose::usurper {

// Forgery cost ledger. Gradient passes are worth two inference units; hashes
// are tracked separately and weighted by omega_H/omega_F at reporting time.
struct WorkCounter {
    uint64_t inferences = 0;
    uint64_t gradient_passes = 0;
    uint64_t hashes = 0;

    double omega_f_units() const { return double(inferences) + 2.0 * double(gradient_passes); }
};

// Every model call in this module goes through here, so the counter is a
// complete record of the adversary's oracle usage.
class CountedModel {
public:
    CountedModel(const nn::Model& net, WorkCounter& wc) : net_(&net), wc_(&wc) {
        ws_.prepare(net);
        grads_.prepare(net);
        dlogits_.resize(size_t(net.spec.class_count));
    }

    int predict(const Image& img) {
        ++wc_->inferences;
        return nn::predict(*net_, img, ws_);
    }

    // One gradient pass: dLoss(target)/dinput plus the prediction from the
    // same forward.
    std::pair<const std::vector<float>*, int> gradient(const Image& img, int target) {
        ++wc_->gradient_passes;
        nn::image_to_input(img, *net_, ws_.acts[0]);
        nn::forward(*net_, ws_);
        int pred = nn::argmax_lowest(ws_.acts.back());
        nn::softmax_ce(ws_.acts.back(), target, dlogits_);
        grads_.zero();
        nn::backward(*net_, ws_, dlogits_, grads_);
        return {&ws_.din[0], pred};
    }

    const nn::Model& net() const { return *net_; }
    WorkCounter& counter() { return *wc_; }

private:
    const nn::Model* net_;
    WorkCounter* wc_;
    nn::Workspace<float> ws_;
    nn::Grads<float> grads_;
    std::vector<float> dlogits_;
};

inline Digest counted_hash(ByteView data, const keying::SecretKey& sk, WorkCounter& wc) {
    ++wc.hashes;
    return keying::keyed_hash(data, sk);
}

struct CraftResult {
    Image image;
    int prediction = -1;
};

// Targeted projected gradient descent on the 8-bit pixel grid: t sign steps of
// size eps/10, projected onto the L-inf ball around the original and onto
// [0,255] after every step. Outputs are always valid 8-bit images, so they
// hash canonically. current_pred is the caller's known starting prediction;
// when it already equals the target the input is returned with zero work.
inline CraftResult craft_adversarial(CountedModel& model, const Image& image, int current_pred,
                                     int target, int eps, int iters) {
    if (eps <= 0) throw std::domain_error("craft_adversarial: eps must be positive");
    if (iters < 1) throw std::domain_error("craft_adversarial: need at least one iteration");
    if (target < 0 || target >= model.net().spec.class_count)
        throw std::domain_error("craft_adversarial: target class out of range");
    if (current_pred == target) return {image, current_pred};

    const Image& x0 = image;
    Image x = image;
    const int alpha = std::max(1, eps / 10);
    const int H = image.height, W = image.width, C = image.channels;

    for (int it = 0; it < iters; ++it) {
        auto [din, pred] = model.gradient(x, target);
        if (pred == target) return {x, pred};
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y) {
                for (int xx = 0; xx < W; ++xx) {
                    float g = (*din)[(size_t(c) * H + y) * W + xx];
                    if (g == 0.0f) continue;
                    size_t p = (size_t(y) * W + xx) * C + c;
                    int v = int(x.pixels[p]) + (g > 0.0f ? -alpha : alpha);
                    int lo = std::max(0, int(x0.pixels[p]) - eps);
                    int hi = std::min(255, int(x0.pixels[p]) + eps);
                    x.pixels[p] = uint8_t(std::min(hi, std::max(lo, v)));
                }
            }
        }
    }
    int final_pred = model.predict(x);
    return {x, final_pred};
}

struct ForgeryAttempt {
    int level = 0;
    int s = 0;
    int c = 0;
    int t = 0;
    std::vector<Image> forged_triggers;
    keying::SecretKey forged_key;
    std::vector<int> labels;       // key-derived labels at the end of the run
    std::vector<int> predictions;  // model answers on the forged triggers
    int achieved_m = 0;
    int target_m = 0;
    uint64_t attempts = 0;  // level 2: joint label evaluations
    WorkCounter work;
    bool success = false;
    double achieved_rarity = 0.0;

    void finish() {
        achieved_rarity = achieved_m > 0 ? stats::rarity(s, achieved_m, c).rarity_bits : 0.0;
        success = achieved_m >= target_m;
    }
};

namespace detail {

inline std::vector<Image> sample_pool(const std::vector<Image>& pool, int s, Rng& rng) {
    if (int(pool.size()) < s) throw std::invalid_argument("forge: image pool smaller than s");
    std::vector<int> idx(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) idx[i] = int(i);
    rng.shuffle(idx.begin(), idx.end());
    std::vector<Image> out;
    out.reserve(size_t(s));
    for (int i = 0; i < s; ++i) out.push_back(pool[size_t(idx[size_t(i)])]);
    return out;
}

inline int default_target_m(int s, int c, double r_min = 20.0) {
    if (double(s) * std::log2(double(c)) < r_min) return s;
    return stats::match_threshold(s, c, r_min);
}

inline void check_class_count(const nn::Model& net, int c) {
    if (c < 2) throw std::domain_error("forge: c must be >= 2");
    if (net.spec.class_count != c)
        throw std::invalid_argument("forge: label class count must equal the model's class count");
}

}  // namespace detail

// Level 0: the key only seeds the label PRNG, so the usurper picks any key,
// derives labels and crafts one targeted adversarial image per trigger.
// Expected work ~ 2*s*t inference units (less when attacks converge early).
inline ForgeryAttempt forge_level0(const nn::Model& net, const std::vector<Image>& pool, int s,
                                   int t, int eps, int c, uint64_t seed,
                                   std::optional<int> target_m = std::nullopt) {
    if (s < 1) throw std::domain_error("forge_level0: s must be >= 1");
    detail::check_class_count(net, c);
    ForgeryAttempt fa;
    fa.level = 0;
    fa.s = s;
    fa.c = c;
    fa.t = t;
    fa.target_m = target_m ? *target_m : detail::default_target_m(s, c);
    Rng rng(mix_seed(seed, 0xf0));
    fa.forged_key = keying::generate_key(rng.next_u64());
    keying::LabelAssignment labels = keying::labels_level0(fa.forged_key, s, c);
    fa.labels = labels.labels;

    CountedModel model(net, fa.work);
    std::vector<Image> triggers = detail::sample_pool(pool, s, rng);
    for (int i = 0; i < s; ++i) {
        int current = model.predict(triggers[size_t(i)]);
        CraftResult r = craft_adversarial(model, triggers[size_t(i)], current, fa.labels[size_t(i)], eps, t);
        fa.forged_triggers.push_back(std::move(r.image));
        fa.predictions.push_back(r.prediction);
        if (r.prediction == fa.labels[size_t(i)]) ++fa.achieved_m;
    }
    fa.finish();
    return fa;
}

// Level 1: labels are keyed hashes of the triggers themselves. Craft an
// adversarial image, then walk the image through LSB flips until its hash
// label matches its prediction; each accepted flip is re-checked with one
// inference and reverted if the prediction moved. Expected hashes per matched
// trigger = c.
inline ForgeryAttempt forge_level1(const nn::Model& net, const keying::SecretKey& sk,
                                   const std::vector<Image>& pool, int s, int t, int eps, int c,
                                   uint64_t seed, std::optional<int> target_m = std::nullopt,
                                   std::vector<uint64_t>* per_trigger_hashes = nullptr) {
    if (s < 1) throw std::domain_error("forge_level1: s must be >= 1");
    detail::check_class_count(net, c);
    ForgeryAttempt fa;
    fa.level = 1;
    fa.s = s;
    fa.c = c;
    fa.t = t;
    fa.target_m = target_m ? *target_m : detail::default_target_m(s, c);
    fa.forged_key = sk;
    Rng rng(mix_seed(seed, 0xf1));
    CountedModel model(net, fa.work);
    std::vector<Image> triggers = detail::sample_pool(pool, s, rng);
    const uint64_t cap = uint64_t(100) * uint64_t(c);

    for (int i = 0; i < s; ++i) {
        int y = rng.next_int(c);
        int current = model.predict(triggers[size_t(i)]);
        CraftResult r = craft_adversarial(model, triggers[size_t(i)], current, y, eps, t);
        Image img = std::move(r.image);
        // hunt toward the achieved prediction: for a failed craft the attacker
        // binds the hash to whatever class the model actually answers
        int want = r.prediction;
        uint64_t spent = 0;
        bool matched = false;
        // the crafted image may already hash right
        int label = keying::digest_mod(counted_hash(canonical_bytes(img), sk, fa.work), c);
        ++spent;
        if (label == want) matched = true;
        while (!matched && spent < cap) {
            size_t p = size_t(rng.next_u64() % img.pixels.size());
            img.pixels[p] ^= 1;
            label = keying::digest_mod(counted_hash(canonical_bytes(img), sk, fa.work), c);
            ++spent;
            if (label != want) continue;
            int check = model.predict(img);
            if (check == want) {
                matched = true;
            } else {
                img.pixels[p] ^= 1;  // revert, resample a different pixel
            }
        }
        if (per_trigger_hashes) per_trigger_hashes->push_back(spent);
        fa.forged_triggers.push_back(std::move(img));
        fa.predictions.push_back(want);
        fa.labels.push_back(label);
        if (matched) ++fa.achieved_m;
    }
    fa.finish();
    return fa;
}

// Level 2: labels are a joint hash of all triggers, so every LSB flip
// re-randomizes all labels and the usurper faces a geometric search with
// success probability P(M >= m). Desk-feasible only for small rarity; the
// precondition enforces that.
inline ForgeryAttempt forge_level2(const nn::Model& net, const keying::SecretKey& sk,
                                   const std::vector<Image>& pool, int s, int t, int eps, int c,
                                   int target_m, uint64_t seed, bool full_reinference = false,
                                   std::vector<std::pair<uint64_t, int>>* trace = nullptr) {
    if (s < 1) throw std::domain_error("forge_level2: s must be >= 1");
    detail::check_class_count(net, c);
    if (target_m < 0 || target_m > s) throw std::domain_error("forge_level2: need 0 <= target_m <= s");
    double target_rarity = stats::rarity(s, target_m, c).rarity_bits;
    if (target_rarity > 24.0)
        throw std::invalid_argument(
            "forge_level2: target rarity " + std::to_string(target_rarity) +
            " bits is desk-infeasible (expected ~2^rarity hash rounds; cap is 24 bits)");

    ForgeryAttempt fa;
    fa.level = 2;
    fa.s = s;
    fa.c = c;
    fa.t = t;
    fa.target_m = target_m;
    fa.forged_key = sk;
    Rng rng(mix_seed(seed, 0xf2));
    CountedModel model(net, fa.work);
    std::vector<Image> triggers = detail::sample_pool(pool, s, rng);

    // craft once toward random targets; predictions then stay fixed under
    // LSB flips (verified lazily below)
    fa.predictions.resize(size_t(s));
    for (int i = 0; i < s; ++i) {
        int y = rng.next_int(c);
        int current = model.predict(triggers[size_t(i)]);
        CraftResult r = craft_adversarial(model, triggers[size_t(i)], current, y, eps, t);
        triggers[size_t(i)] = std::move(r.image);
        fa.predictions[size_t(i)] = r.prediction;
    }

    const uint64_t cap = uint64_t(std::ceil(64.0 * std::exp2(target_rarity)));
    auto joint_labels = [&]() {
        // one joint hash over s canonical images + s per-label derivations
        fa.work.hashes += uint64_t(s) + 1;
        return keying::labels_level2(triggers, sk, c).labels;
    };
    auto count_matches = [&](const std::vector<int>& labels) {
        int m = 0;
        for (int i = 0; i < s; ++i) m += labels[size_t(i)] == fa.predictions[size_t(i)];
        return m;
    };

    int flipped_trigger = -1;
    std::vector<int> labels;
    int m = 0;
    while (fa.attempts < cap) {
        if (fa.attempts > 0) {
            // walk: flip one LSB in one trigger, then re-derive all labels
            flipped_trigger = rng.next_int(s);
            auto& pix = triggers[size_t(flipped_trigger)].pixels;
            pix[size_t(rng.next_u64() % pix.size())] ^= 1;
        }
        ++fa.attempts;
        labels = joint_labels();
        m = count_matches(labels);
        if (trace) trace->push_back({fa.attempts, m});
        if (m >= target_m) {
            // lazy prediction re-verification
            if (full_reinference) {
                for (int i = 0; i < s; ++i) fa.predictions[size_t(i)] = model.predict(triggers[size_t(i)]);
                m = count_matches(labels);
            } else if (flipped_trigger >= 0) {
                int check = model.predict(triggers[size_t(flipped_trigger)]);
                if (check != fa.predictions[size_t(flipped_trigger)]) {
                    fa.predictions[size_t(flipped_trigger)] = check;
                    m = count_matches(labels);
                }
            }
            if (m >= target_m) break;
        }
    }
    fa.labels = labels;
    fa.achieved_m = m;
    fa.forged_triggers = triggers;
    fa.finish();
    return fa;
}

// ---------------------------------------------------------------------------
// reporting

inline std::string forgery_report(const std::vector<ForgeryAttempt>& attempts, double r_min,
                                  double hash_cost_ratio = 1.0) {
    std::ostringstream os;
    os << "forgery report (R_min = " << r_min << " bits, omega_H/omega_F = " << hash_cost_ratio
       << ")\n";
    if (attempts.empty()) {
        os << "  no attempts\n";
        return os.str();
    }
    for (int level = 0; level <= 2; ++level) {
        std::vector<const ForgeryAttempt*> rows;
        for (const auto& a : attempts)
            if (a.level == level) rows.push_back(&a);
        if (rows.empty()) continue;
        double mean_units = 0, mean_hashes = 0, mean_attempts = 0;
        int wins = 0;
        for (const auto* a : rows) {
            mean_units += a->work.omega_f_units();
            mean_hashes += double(a->work.hashes);
            mean_attempts += double(a->attempts);
            wins += a->achieved_rarity >= r_min;
        }
        size_t n = rows.size();
        mean_units /= double(n);
        mean_hashes /= double(n);
        mean_attempts /= double(n);
        const auto& first = *rows[0];
        os << "level " << level << ": runs " << n << ", success@R>=" << r_min << " "
           << (100.0 * wins / double(n)) << "%, mean work " << std::setprecision(6) << mean_units
           << " omega_F-units + " << mean_hashes << " hashes";
        if (level == 2) os << " (" << mean_attempts << " joint attempts)";
        os << "\n";
        for (double R : {20.0, 50.0, 86.0}) {
            stats::WorkEstimate w =
                stats::work_model(level, first.s, std::max(1, first.t), first.c, R, hash_cost_ratio);
            os << "    model cost at R=" << R << ": " << w.expected_cost << " omega_F-units";
            if (level == 2)
                os << "  (" << first.s << " * 2^" << R << " hashes)";
            os << "\n";
        }
    }
    return os.str();
}

inline std::string forgery_csv(const std::vector<ForgeryAttempt>& attempts) {
    std::ostringstream os;
    os << "level,s,c,t,target_m,achieved_m,achieved_rarity,success,inferences,gradient_passes,"
          "hashes,omega_f_units,attempts\n";
    for (const auto& a : attempts) {
        os << a.level << "," << a.s << "," << a.c << "," << a.t << "," << a.target_m << ","
           << a.achieved_m << "," << a.achieved_rarity << "," << (a.success ? 1 : 0) << ","
           << a.work.inferences << "," << a.work.gradient_passes << "," << a.work.hashes << ","
           << a.work.omega_f_units() << "," << a.attempts << "\n";
    }
    return os.str();
}

}  // namespace rose::usurper
