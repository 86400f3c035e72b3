// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria 5-7 and 10 share one desk-scale embedding run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rose/rose.hpp"

#include "oracle.hpp"

using namespace rose;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
    int failures = 0;
    int index = 0;

    void run(const std::string& name, double budget_seconds,
             const std::function<std::string()>& body) {
        ++index;
        auto t0 = Clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = body();
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        if (ok && budget_seconds > 0 && elapsed > budget_seconds) {
            ok = false;
            detail += " [runtime " + std::to_string(elapsed) + "s exceeds budget " +
                      std::to_string(budget_seconds) + "s]";
        }
        if (!ok) ++failures;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", index, name.c_str(),
                    detail.c_str(), elapsed);
        std::fflush(stdout);
    }
};

struct Check {
    bool ok = true;
    std::ostringstream msg;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            msg << "FAILED{" << what << "} ";
        }
    }

    std::string done(const std::string& summary) {
        if (!ok) throw std::runtime_error(msg.str() + "| " + summary);
        return summary;
    }
};

// shared state produced by criterion 5
struct DeskRun {
    dataset::LabeledDataset corpus;
    dataset::LabeledDataset test;
    keying::SecretKey sk;
    std::optional<wm::EmbedResult> embedded;
    double acc_base = 0.0;
    double acc_wm = 0.0;
    wm::RecoveryResult recovery;
};

nn::Model micro_pool_model(uint64_t seed, int classes) {
    nn::ArchitectureSpec s;
    s.name = "micro12";
    s.in_h = 12;
    s.in_w = 12;
    s.in_c = 1;
    s.class_count = classes;
    s.layers = {nn::dense(16, nn::Activation::Relu), nn::dense(classes)};
    return nn::build(s, seed);
}

std::vector<Image> random_pool(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<Image> pool;
    for (int i = 0; i < n; ++i) {
        Image img(12, 12, 1);
        for (auto& p : img.pixels) p = uint8_t(rng.next_int(256));
        pool.push_back(std::move(img));
    }
    return pool;
}

}  // namespace

int main() {
    Harness h;
    DeskRun desk;

    // 1. rarity exactness at the frozen spot values
    h.run("rarity exactness", 1.0, [] {
        Check c;
        double r1 = stats::rarity(40, 33, 10).rarity_bits;
        double r2 = stats::rarity(128, 112, 10).rarity_bits;
        double r3 = stats::rarity(40, 37, 10).rarity_bits;
        c.require(r1 >= 85.0 && r1 <= 87.0, "rarity(40,33,10) in [85,87]");
        c.require(r2 >= 307.0 && r2 <= 309.0, "rarity(128,112,10) in [307,309]");
        c.require(r3 >= 109.0 && r3 <= 111.0, "rarity(40,37,10) in [109,111]");
        std::ostringstream os;
        os << "bits = " << r1 << ", " << r2 << ", " << r3;
        return c.done(os.str());
    });

    // 2. oracle equivalence over the full small grid
    h.run("exact-tail oracle equivalence", 10.0, [] {
        Check c;
        int cases = 0;
        double worst = 0.0;
        for (int cc : {2, 4, 10}) {
            for (int s = 1; s <= 30; ++s) {
                for (int m = 1; m <= s; ++m) {
                    long double exact = oracle::log2_binomial_tail_exact(s, m, cc);
                    double got = stats::rarity(s, m, cc).log2_pvalue;
                    double rel = std::abs(got - double(exact)) / std::abs(double(exact));
                    worst = std::max(worst, rel);
                    ++cases;
                }
            }
        }
        c.require(worst < 1e-9, "relative log error < 1e-9");
        std::ostringstream os;
        os << cases << " cases, worst relative log error " << worst;
        return c.done(os.str());
    });

    // 3. verifier threshold policy
    h.run("match threshold policy", 5.0, [] {
        Check c;
        int t40 = stats::match_threshold(40, 10, 20.0);
        int t64 = stats::match_threshold(64, 10, 20.0);
        int t128 = stats::match_threshold(128, 10, 20.0);
        c.require(t40 == 16, "threshold(40,10,20) == 16");
        c.require(std::abs(t64 - 21) <= 1, "threshold(64,10,20) == 21 +- 1");
        c.require(std::abs(t128 - 32) <= 1, "threshold(128,10,20) == 32 +- 1");
        std::ostringstream os;
        os << "thresholds " << t40 << "/" << t64 << "/" << t128 << " for s=40/64/128";
        return c.done(os.str());
    });

    // 4. Hoeffding bits never exceed exact bits
    h.run("hoeffding dominance", 10.0, [] {
        Check c;
        int cases = 0, violations = 0;
        for (int cc : {2, 4, 10}) {
            for (int s = 1; s <= 30; ++s) {
                for (int m = 0; m <= s; ++m) {
                    if (double(m) / s <= 1.0 / cc) continue;
                    ++cases;
                    if (stats::rarity_hoeffding(s, m, cc) > stats::rarity(s, m, cc).rarity_bits)
                        ++violations;
                }
            }
        }
        c.require(violations == 0, "zero violations");
        std::ostringstream os;
        os << cases << " grid points, " << violations << " violations";
        return c.done(os.str());
    });

    // 5. desk-scale embedding
    h.run("desk-scale embedding", 600.0, [&desk] {
        Check c;
        desk.corpus = synth::digits(10000, 424242);
        dataset::make_splits(desk.corpus, 31);
        desk.test = synth::digits(2000, mix_seed(424242, 0x7e57));
        desk.sk = keying::generate_key(uint64_t{2024});

        nn::ArchitectureSpec arch = nn::arch_preset("desk-mnist");
        nn::Hyper hyper = nn::adam_defaults(40);
        desk.embedded = wm::embed(desk.corpus, desk.sk, 40, 2, arch, hyper, 7, 13);
        nn::Model baseline = nn::train(nn::build(arch, 7), desk.corpus, hyper);

        desk.acc_wm = nn::evaluate(desk.embedded->model, desk.test);
        desk.acc_base = nn::evaluate(baseline, desk.test);
        desk.recovery =
            wm::recovery_rate(wm::model_oracle(desk.embedded->model), desk.embedded->triggers);

        c.require(desk.acc_base >= 95.0, "baseline test accuracy >= 95%");
        c.require(desk.recovery.rec >= 70.0, "recovery >= 70%");
        c.require(desk.recovery.rarity.rarity_bits >= 60.0, "rarity >= 60 bits");
        c.require(desk.acc_base - desk.acc_wm <= 2.0, "accuracy drop <= 2 pp");
        std::ostringstream os;
        os << "rec " << desk.recovery.rec << "% (m=" << desk.recovery.m << "), rarity "
           << desk.recovery.rarity.rarity_bits << " bits, acc " << desk.acc_base << " -> "
           << desk.acc_wm << " (drop " << desk.acc_base - desk.acc_wm << " pp)";
        return c.done(os.str());
    });

    // 6. quantization robustness on the criterion-5 model
    h.run("quantization robustness", 60.0, [&desk] {
        Check c;
        if (!desk.embedded) throw std::runtime_error("criterion 5 model unavailable");
        std::vector<Image> calib;
        for (size_t i = 0; i < 256 && i < desk.corpus.train_idx.size(); ++i)
            calib.push_back(desk.corpus.images[size_t(desk.corpus.train_idx[i])]);
        std::ostringstream os;
        for (auto [mode, name] :
             {std::pair{attacks::QuantMode::Dynamic, "dynamic"},
              std::pair{attacks::QuantMode::FullInt, "fullint"},
              std::pair{attacks::QuantMode::Float16, "float16"}}) {
            nn::Model q = attacks::quantize(desk.embedded->model, mode, &calib);
            double acc = nn::evaluate(q, desk.test);
            wm::RecoveryResult rec = wm::recovery_rate(wm::model_oracle(q), desk.embedded->triggers);
            double dacc = std::abs(acc - desk.acc_wm);
            double drec = std::abs(rec.rec - desk.recovery.rec);
            c.require(dacc <= 1.0, std::string(name) + ": |d acc| <= 1 pp");
            c.require(drec <= 5.0, std::string(name) + ": |d rec| <= 5 pp");
            os << name << " dacc " << dacc << " drec " << drec << "; ";
        }
        return c.done(os.str());
    });

    // 7. pruning tradeoff: watermark loss only with accuracy collapse
    h.run("pruning tradeoff", 600.0, [&desk] {
        Check c;
        if (!desk.embedded) throw std::runtime_error("criterion 5 model unavailable");
        std::vector<double> grid;
        for (int i = 0; i <= 19; ++i) grid.push_back(0.05 * i);
        grid.push_back(0.97);
        grid.push_back(0.99);
        const int rounds = 10;
        std::ostringstream os;
        for (double k : grid) {
            double acc_sum = 0.0, m_sum = 0.0;
            for (int round = 0; round < rounds; ++round) {
                nn::Model pruned =
                    attacks::prune(desk.embedded->model, k, attacks::PruneScope::Global,
                                   mix_seed(999, uint64_t(k * 1000) + uint64_t(round)));
                acc_sum += nn::evaluate(pruned, desk.test);
                m_sum +=
                    wm::recovery_rate(wm::model_oracle(pruned), desk.embedded->triggers).m;
            }
            double acc_mean = acc_sum / rounds;
            double m_mean = m_sum / rounds;
            double bits = stats::rarity(40, int(std::lround(m_mean)), 10).rarity_bits;
            double drop = desk.acc_wm - acc_mean;
            if (bits < 20.0) {
                std::ostringstream what;
                what << "k=" << k << ": rarity " << bits << " < 20 but drop " << drop << " < 15 pp";
                c.require(drop >= 15.0, what.str());
                os << "k=" << k << "(r" << int(bits) << ",d" << int(drop) << ") ";
            }
            if (k == 0.99) c.require(acc_mean <= 30.0, "extreme pruning ruins the model");
        }
        return c.done("watermark-dead rates all show >= 15 pp accuracy loss: " + os.str());
    });

    // 8. level-1 forgery cost: c hashes per matched trigger
    h.run("level-1 forgery cost", 120.0, [] {
        Check c;
        std::ostringstream os;
        for (int cc : {4, 10}) {
            nn::Model net = micro_pool_model(17, cc);
            auto pool = random_pool(220, mix_seed(99, uint64_t(cc)));
            std::vector<uint64_t> per_trigger;
            usurper::ForgeryAttempt fa =
                usurper::forge_level1(net, keying::generate_key(uint64_t(1000 + cc)), pool, 200, 4,
                                      16, cc, uint64_t(2000 + cc), std::nullopt, &per_trigger);
            c.require(fa.achieved_m >= 195, "nearly all triggers matched");
            double mean = 0.0;
            int matched = 0;
            for (size_t i = 0; i < per_trigger.size(); ++i) {
                if (i < fa.labels.size() && fa.labels[i] == fa.predictions[i]) {
                    mean += double(per_trigger[i]);
                    ++matched;
                }
            }
            mean /= std::max(1, matched);
            std::ostringstream what;
            what << "c=" << cc << ": mean hashes " << mean << " within " << cc << " +- 30%";
            c.require(mean >= 0.7 * cc && mean <= 1.3 * cc, what.str());
            os << "c=" << cc << " mean " << mean << " (" << matched << " matched); ";
        }
        return c.done(os.str());
    });

    // 9. level-2 forgery cost: geometric in the exact tail probability
    h.run("level-2 forgery cost", 300.0, [] {
        Check c;
        nn::Model net = micro_pool_model(23, 4);
        auto pool = random_pool(40, 777);
        std::ostringstream os;

        // p = 4^-6 -> 4096 expected attempts
        {
            double mean = 0.0;
            const int runs = 20;
            for (int r = 0; r < runs; ++r) {
                usurper::ForgeryAttempt fa =
                    usurper::forge_level2(net, keying::generate_key(uint64_t(3000 + r)), pool, 6, 4,
                                          16, 4, 6, uint64_t(4000 + r));
                c.require(fa.success, "run reached m=6");
                mean += double(fa.attempts);
            }
            mean /= runs;
            c.require(mean >= 2048.0 && mean <= 8192.0, "mean attempts for m=6 within 2x of 4096");
            os << "m=6 mean attempts " << mean << " (expect 4096); ";
        }
        // p = P(Bin(6,1/4) >= 5) from the exact integer oracle
        {
            long double log2p = oracle::log2_binomial_tail_exact(6, 5, 4);
            double expected = double(std::exp2l(-log2p));
            double mean = 0.0;
            const int runs = 20;
            for (int r = 0; r < runs; ++r) {
                usurper::ForgeryAttempt fa =
                    usurper::forge_level2(net, keying::generate_key(uint64_t(5000 + r)), pool, 6, 4,
                                          16, 4, 5, uint64_t(6000 + r));
                c.require(fa.achieved_m >= 5, "run reached m=5");
                mean += double(fa.attempts);
            }
            mean /= runs;
            std::ostringstream what;
            what << "mean attempts for m=5 (" << mean << ") within 2x of 1/p = " << expected;
            c.require(mean >= expected / 2.0 && mean <= expected * 2.0, what.str());
            os << "m=5 mean attempts " << mean << " (expect " << expected << ")";
        }
        return c.done(os.str());
    });

    // 10. protocol round trip: grant, statistical denial, remote equivalence
    h.run("protocol round trip", 60.0, [&desk] {
        Check c;
        if (!desk.embedded) throw std::runtime_error("criterion 5 model unavailable");
        const nn::Model& model = desk.embedded->model;
        const wm::TriggerSet& triggers = desk.embedded->triggers;

        protocol::EvidenceBundle honest = protocol::make_evidence(desk.sk, triggers, true);
        protocol::VerificationReport rep = protocol::verify(honest, wm::model_oracle(model), 20.0);
        c.require(rep.granted, "honest evidence granted at R_min=20");

        // usurper with a fresh key over the same triggers
        keying::SecretKey fresh = keying::generate_key(uint64_t{987654});
        wm::TriggerSet stolen = triggers;
        stolen.labels = keying::derive_labels(2, stolen.images, fresh, 10);
        stolen.key_id = fresh.key_id;
        protocol::EvidenceBundle forged = protocol::make_evidence(fresh, stolen, true);
        protocol::VerificationReport deny = protocol::verify(forged, wm::model_oracle(model), 20.0);
        c.require(!deny.granted, "fresh-random-key bundle denied");

        // remote equals in-process
        wire::PredictionServer server(wm::model_oracle(model));
        server.start(0);
        std::string endpoint = "127.0.0.1:" + std::to_string(server.port());
        protocol::VerificationReport remote = protocol::verify_remote(honest, endpoint, 20.0);
        server.stop();
        c.require(remote.m == rep.m && remote.granted == rep.granted &&
                      remote.rarity_bits == rep.rarity_bits &&
                      remote.labels_digest == rep.labels_digest,
                  "remote report equals in-process report");

        std::ostringstream os;
        os << "grant m=" << rep.m << " rarity " << rep.rarity_bits << "; deny m=" << deny.m
           << " rarity " << deny.rarity_bits << "; remote m=" << remote.m;
        return c.done(os.str());
    });

    // 11. engine gradient check across all layer types
    h.run("gradient check", 30.0, [] {
        Check c;
        nn::ArchitectureSpec s;
        s.name = "gradcheck";
        s.in_h = 10;
        s.in_w = 10;
        s.in_c = 2;
        s.class_count = 5;
        s.layers = {nn::conv(4, 3, 1, nn::Activation::Relu), nn::maxpool(), nn::dropout(0.2),
                    nn::conv(6, 3, 0, nn::Activation::Relu), nn::dense(16, nn::Activation::Relu),
                    nn::dense(5)};
        nn::Model net = nn::build(s, 41);
        Rng rng(42);
        Image img(10, 10, 2);
        for (auto& p : img.pixels) p = uint8_t(rng.next_int(256));
        double dev = nn::gradient_check(net, img, 3, 80, 7);
        c.require(dev < 1e-3, "max relative deviation < 1e-3");
        std::ostringstream os;
        os << "max relative deviation " << dev;
        return c.done(os.str());
    });

    std::printf("%s: %d/%d criteria passed\n", h.failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                h.index - h.failures, h.index);
    return h.failures == 0 ? 0 : 1;
}
