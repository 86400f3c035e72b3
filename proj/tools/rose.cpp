// rose: black-box DNN watermarking toolkit.
//
// Subcommands: embed, attack, verify, serve, usurp, stats, plus the plumbing
// commands keygen, bundle and synth. Exit codes: 0 success (or ownership
// granted), 1 ownership denied, 2 usage error or abort.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "rose/rose.hpp"

namespace fs = std::filesystem;
using namespace rose;

namespace {

std::string file_digest16(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    Sha256 h;
    char buf[65536];
    while (f.read(buf, sizeof buf) || f.gcount() > 0)
        h.write(reinterpret_cast<const uint8_t*>(buf), size_t(f.gcount()));
    Digest d = h.finalize();
    return to_hex(ByteView(d.data(), d.size())).substr(0, 16);
}

// --out flag wins, then ROSE_OUT_DIR, then the config's [output] dir.
void apply_out_override(config::ExperimentConfig& cfg, const std::string& flag_value) {
    if (!flag_value.empty()) {
        cfg.out_dir = flag_value;
        return;
    }
    if (const char* env = std::getenv("ROSE_OUT_DIR")) cfg.out_dir = env;
}

keying::SecretKey resolve_key(const config::ExperimentConfig& cfg) {
    if (!cfg.key_file.empty()) return keying::load_key(cfg.key_file);
    return keying::generate_key(cfg.key_seed);
}

int run_embed(const std::string& config_path, std::string out_override) {
    config::ExperimentConfig cfg = config::ExperimentConfig::load(config_path);
    apply_out_override(cfg, out_override);
    auto [corpus, test] = config::load_dataset(cfg);
    fs::create_directories(cfg.out_dir);

    keying::SecretKey sk = resolve_key(cfg);
    nn::ArchitectureSpec arch = nn::arch_preset(cfg.preset);

    std::printf("embedding: preset %s, %zu corpus samples (train %zu), s=%d level=%d\n",
                cfg.preset.c_str(), corpus.images.size(), corpus.train_idx.size(), cfg.s, cfg.level);
    wm::EmbedResult res = wm::embed(corpus, sk, cfg.s, cfg.level, arch, cfg.hyper, cfg.model_seed,
                                    cfg.selection_seed, cfg.max_fraction);
    double acc_wm = nn::evaluate(res.model, test);

    double acc_base = -1.0;
    if (cfg.baseline) {
        nn::Model base = nn::train(nn::build(arch, cfg.model_seed), corpus, cfg.hyper);
        acc_base = nn::evaluate(base, test);
    }

    std::string model_path = cfg.out_dir + "/model.rosemodel";
    nn::save_model(model_path, res.model, cfg.digest);
    std::string key_path = cfg.out_dir + "/key.rosekey";
    keying::save_key(key_path, sk);
    std::printf("wrote %s\nwrote %s\n", model_path.c_str(), key_path.c_str());

    if (cfg.s > 0) {
        std::string trig_path = cfg.out_dir + "/triggers.rosetrig";
        wm::save_triggers(trig_path, res.triggers, cfg.digest);
        protocol::EvidenceBundle bundle = protocol::make_evidence(sk, res.triggers, cfg.disclose_key);
        std::string bundle_path = cfg.out_dir + "/bundle.rosebundle";
        protocol::save_bundle(bundle_path, bundle);
        std::printf("wrote %s\nwrote %s\n", trig_path.c_str(), bundle_path.c_str());

        wm::RecoveryResult rec = wm::recovery_rate(wm::model_oracle(res.model), res.triggers);
        if (acc_base >= 0.0)
            std::printf("accuracy: baseline %.2f%% | watermarked %.2f%% (drop %.2f pp)\n", acc_base,
                        acc_wm, acc_base - acc_wm);
        else
            std::printf("accuracy: watermarked %.2f%%\n", acc_wm);
        std::printf("watermark: recovery %.1f%% (%d/%d), rarity %d bits (exact %.2f)\n", rec.rec,
                    rec.m, rec.s, rec.rarity.floor_bits(), rec.rarity.rarity_bits);
    } else {
        std::printf("accuracy: %.2f%% (no triggers embedded)\n", acc_wm);
    }
    return 0;
}

int run_attack(const std::string& model_path, const std::string& trig_path,
               const std::string& config_path, std::string out_override) {
    config::ExperimentConfig cfg = config::ExperimentConfig::load(config_path);
    apply_out_override(cfg, out_override);
    auto [corpus, test] = config::load_dataset(cfg);
    fs::create_directories(cfg.out_dir);

    nn::Model model = nn::load_model(model_path);
    wm::TriggerSet triggers = wm::load_triggers(trig_path);

    auto specs = attacks::default_suite(mix_seed(cfg.model_seed, 0xa77ac), cfg.prune_rounds,
                                        cfg.finetune_epochs);
    std::printf("running %zu attacks (+%d pruning rounds each where stochastic)\n", specs.size(),
                cfg.prune_rounds);
    attacks::AttackReport report = attacks::run_sweep(model, triggers, corpus, test, specs);

    attacks::write_file(cfg.out_dir + "/report.csv", attacks::report_csv(report));
    attacks::write_file(cfg.out_dir + "/report.txt", attacks::report_text(report));
    attacks::write_file(cfg.out_dir + "/plot_prune_global.csv",
                        attacks::plot_data(report, "prune-global"));
    std::printf("wrote %s/report.{csv,txt} and plot_prune_global.csv\n", cfg.out_dir.c_str());

    const attacks::AttackRow* worst = nullptr;
    int failures = 0;
    for (const auto& row : report.rows) {
        if (row.failed) {
            ++failures;
            continue;
        }
        if (!worst || row.rec_mean < worst->rec_mean) worst = &row;
    }
    if (worst)
        std::printf("worst-case recovery: %s %s -> rec %.1f%% (acc %.1f%%), rarity %d--%d bits\n",
                    worst->kind.c_str(), worst->params.c_str(), worst->rec_mean, worst->acc_mean,
                    int(worst->rarity_min), int(worst->rarity_max));
    if (failures == int(report.rows.size()) && failures > 0) {
        std::fprintf(stderr, "error: every attack row failed\n");
        return 2;
    }
    return 0;
}

int run_verify(const std::string& bundle_path, const std::string& model_path,
               const std::string& endpoint, double r_min, const std::string& out_path) {
    protocol::EvidenceBundle bundle = protocol::load_bundle(bundle_path);
    protocol::VerificationReport rep;
    nn::Model model;  // kept alive for the oracle
    if (!model_path.empty()) {
        model = nn::load_model(model_path);
        rep = protocol::verify(bundle, wm::model_oracle(model), r_min,
                               "file:" + file_digest16(model_path));
    } else {
        rep = protocol::verify_remote(bundle, endpoint, r_min);
    }
    std::printf("%s\n", rep.granted ? "GRANTED" : "DENIED");
    std::printf("%s\n", rep.summary().c_str());
    if (!out_path.empty()) {
        std::ostringstream os;
        os << "decision = " << rep.decision << "\n"
           << "m = " << rep.m << "\n"
           << "s = " << rep.s << "\n"
           << "rec = " << rep.rec << "\n"
           << "rarity_bits = " << rep.rarity_bits << "\n"
           << "rarity_floor = " << rep.rarity_floor << "\n"
           << "r_min = " << rep.r_min << "\n"
           << "labels_digest = " << rep.labels_digest << "\n"
           << "model_fingerprint = " << rep.model_fingerprint << "\n"
           << "endpoint = " << (rep.endpoint.empty() ? "-" : rep.endpoint) << "\n";
        attacks::write_file(out_path, os.str());
        std::printf("wrote %s\n", out_path.c_str());
    }
    return rep.granted ? 0 : 1;
}

int run_serve(const std::string& model_path, const std::string& host, int port, long max_requests) {
    nn::Model model = nn::load_model(model_path);
    wire::PredictionServer server(wm::model_oracle(model));
    server.start(uint16_t(port), host);
    std::printf("serving %s on %s:%u (model fingerprint file:%s)\n", model_path.c_str(),
                host.c_str(), unsigned(server.port()), file_digest16(model_path).c_str());
    std::fflush(stdout);
    while (true) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (max_requests > 0 && server.requests_served() >= uint64_t(max_requests)) break;
    }
    server.stop();
    std::printf("served %llu requests, shutting down\n",
                static_cast<unsigned long long>(server.requests_served()));
    return 0;
}

int run_usurp(const std::string& model_path, const std::string& config_path, int level, int s,
              int t, int eps, int c, int target_m, int runs, uint64_t seed, double r_min,
              std::string out_override) {
    config::ExperimentConfig cfg = config::ExperimentConfig::load(config_path);
    apply_out_override(cfg, out_override);
    auto [corpus, test] = config::load_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    nn::Model model = nn::load_model(model_path);
    if (c == 0) c = model.spec.class_count;

    if (level == 2) {
        if (target_m < 0) throw std::runtime_error("usurp level 2 requires --target-m");
        double bits = stats::rarity(s, target_m, c).rarity_bits;
        if (bits > 24.0) {
            std::fprintf(stderr,
                         "error: target rarity %.1f bits is desk-infeasible (cap 24 bits; expected "
                         "~s*2^R hash work)\n",
                         bits);
            return 2;
        }
    }

    std::vector<usurper::ForgeryAttempt> attempts;
    for (int r = 0; r < runs; ++r) {
        uint64_t run_seed = mix_seed(seed, uint64_t(r));
        switch (level) {
            case 0:
                attempts.push_back(usurper::forge_level0(model, test.images, s, t, eps, c, run_seed));
                break;
            case 1:
                attempts.push_back(usurper::forge_level1(model, keying::generate_key(run_seed),
                                                         test.images, s, t, eps, c, run_seed));
                break;
            case 2:
                attempts.push_back(usurper::forge_level2(model, keying::generate_key(run_seed),
                                                         test.images, s, t, eps, c, target_m,
                                                         run_seed));
                break;
            default:
                throw std::runtime_error("usurp: level must be 0, 1 or 2");
        }
        const auto& fa = attempts.back();
        std::printf("run %d: m %d/%d (target %d), rarity %.1f bits, work %.0f omega_F-units + %llu "
                    "hashes%s\n",
                    r, fa.achieved_m, fa.s, fa.target_m, fa.achieved_rarity,
                    fa.work.omega_f_units(), static_cast<unsigned long long>(fa.work.hashes),
                    fa.success ? " [success]" : "");
    }

    std::string report = usurper::forgery_report(attempts, r_min);
    attacks::write_file(cfg.out_dir + "/forgery.txt", report);
    attacks::write_file(cfg.out_dir + "/forgery.csv", usurper::forgery_csv(attempts));
    std::printf("%s", report.c_str());

    stats::WorkEstimate predicted = stats::work_model(
        level, s, t, c, level == 2 ? stats::rarity(s, target_m, c).rarity_bits : 0.0, 1.0);
    double measured = 0;
    for (const auto& fa : attempts) measured += fa.work.omega_f_units() + double(fa.work.hashes);
    measured /= double(attempts.size());
    std::printf("measured mean work %.0f vs work_model %.0f omega_F-units (ratio %.2f)\n", measured,
                predicted.expected_cost, measured / predicted.expected_cost);
    std::printf("wrote %s/forgery.{txt,csv}\n", cfg.out_dir.c_str());
    return 0;
}

int run_stats_rarity(int s, int m, int c) {
    stats::RarityResult r = stats::rarity(s, m, c);
    std::printf("rarity = %d bits (exact %.6f, log2 p-value %.6f)\n", r.floor_bits(), r.rarity_bits,
                r.log2_pvalue);
    if (m > 0 && double(m) / s > 1.0 / c)
        std::printf("hoeffding bound >= %.6f bits\n", stats::rarity_hoeffding(s, m, c));
    else
        std::printf("hoeffding bound vacuous (m/s <= 1/c)\n");
    return 0;
}

int run_stats_threshold(int s, int c, double r_min) {
    int m = stats::match_threshold(s, c, r_min);
    stats::RarityResult r = stats::rarity(s, m, c);
    std::printf("%d\n", m);
    std::printf("matches %d/%d (rec %.1f%%) reach %.6f bits >= %.2f\n", m, s, 100.0 * m / s,
                r.rarity_bits, r_min);
    return 0;
}

int run_stats_size(double R, double r, int c) {
    int s = stats::required_triggers(R, r, c);
    std::printf("%d\n", s);
    int m = int(std::ceil(r * s));
    std::printf("s = %d triggers at rate %.3f: hoeffding %.3f bits, exact %.3f bits\n", s, r,
                stats::rarity_hoeffding(s, m, c), stats::rarity(s, m, c).rarity_bits);
    return 0;
}

int run_stats_work(int level, int s, int t, int c, double R, double ratio) {
    stats::WorkEstimate w = stats::work_model(level, s, t, c, R, ratio);
    std::printf("level %d work: %.6g omega_F-units total\n", level, w.expected_cost);
    std::printf("  inference work: %.6g omega_F-units (2*s*t)\n", w.cost_inferences);
    switch (level) {
        case 0: std::printf("  hash work: none\n"); break;
        case 1: std::printf("  hash work: s*c = %d*%d = %.6g hashes\n", s, c, w.cost_hashes); break;
        case 2:
            std::printf("  hash work: s * 2^R = %d * 2^%g hashes = %.6g\n", s, R, w.cost_hashes);
            break;
    }
    return 0;
}

int run_keygen(bool seeded, uint64_t seed, const std::string& out) {
    keying::SecretKey sk =
        seeded ? keying::generate_key(seed) : keying::generate_key(std::nullopt);
    keying::save_key(out, sk);
    std::printf("wrote %s (key id %s)\n", out.c_str(), sk.key_id.c_str());
    return 0;
}

int run_synth(const std::string& kind, int n, int test_n, uint64_t seed, const std::string& out) {
    fs::create_directories(out);
    if (kind == "digits") {
        auto train = synth::digits(n, seed);
        auto test = synth::digits(test_n, mix_seed(seed, 0x7e57));
        dataset::save_idx(out + "/train-images-idx3-ubyte", out + "/train-labels-idx1-ubyte", train);
        dataset::save_idx(out + "/t10k-images-idx3-ubyte", out + "/t10k-labels-idx1-ubyte", test);
        std::printf("wrote %d train + %d test digit images (idx format) under %s\n", n, test_n,
                    out.c_str());
    } else if (kind == "shapes") {
        auto train = synth::shapes(n, seed);
        auto test = synth::shapes(test_n, mix_seed(seed, 0x7e57));
        dataset::save_cifar_batch(out + "/data_batch_1.bin", train);
        dataset::save_cifar_batch(out + "/test_batch.bin", test);
        std::printf("wrote %d train + %d test shape images (cifar binary) under %s\n", n, test_n,
                    out.c_str());
    } else {
        throw std::runtime_error("synth kind must be digits or shapes");
    }
    return 0;
}

int run_bundle(const std::string& trig_path, const std::string& key_path, bool disclose,
               const std::string& out) {
    wm::TriggerSet triggers = wm::load_triggers(trig_path);
    keying::SecretKey sk = keying::load_key(key_path);
    protocol::EvidenceBundle bundle = protocol::make_evidence(sk, triggers, disclose);
    protocol::save_bundle(out, bundle);
    std::printf("wrote %s (level %d, s %d, key %s, key %sdisclosed)\n", out.c_str(), bundle.level,
                bundle.s, bundle.key_id.c_str(), disclose ? "" : "NOT ");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rose: black-box DNN watermarking with measurable proof value and security level"};
    app.require_subcommand(1);
    std::function<int()> action;

    // embed
    {
        auto* cmd = app.add_subcommand("embed", "train a watermarked model from a config file");
        auto config_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--config", *config_path, "experiment config file")->required();
        cmd->add_option("--out", *out, "override [output] dir");
        cmd->callback([=, &action] { action = [=] { return run_embed(*config_path, *out); }; });
    }
    // attack
    {
        auto* cmd = app.add_subcommand("attack", "run the robustness attack suite");
        auto model = std::make_shared<std::string>();
        auto triggers = std::make_shared<std::string>();
        auto config_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--model", *model, "model file")->required();
        cmd->add_option("--triggers", *triggers, "trigger file")->required();
        cmd->add_option("--config", *config_path, "experiment config file")->required();
        cmd->add_option("--out", *out, "override [output] dir");
        cmd->callback([=, &action] {
            action = [=] { return run_attack(*model, *triggers, *config_path, *out); };
        });
    }
    // verify
    {
        auto* cmd = app.add_subcommand("verify", "verify ownership evidence against a model");
        auto bundle = std::make_shared<std::string>();
        auto model = std::make_shared<std::string>();
        auto endpoint = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto r_min = std::make_shared<double>(20.0);
        cmd->add_option("--bundle", *bundle, "evidence bundle file")->required();
        auto* mopt = cmd->add_option("--model", *model, "model file (in-process verification)");
        auto* eopt = cmd->add_option("--endpoint", *endpoint, "host:port prediction service");
        mopt->excludes(eopt);
        cmd->add_option("--rmin", *r_min, "grant threshold in bits (default 20)");
        cmd->add_option("--out", *out, "write the verification report here");
        cmd->callback([=, &action] {
            action = [=] {
                if (model->empty() && endpoint->empty())
                    throw CLI::ValidationError("verify", "need --model or --endpoint");
                return run_verify(*bundle, *model, *endpoint, *r_min, *out);
            };
        });
    }
    // serve
    {
        auto* cmd = app.add_subcommand("serve", "expose a model file over the prediction wire protocol");
        auto model = std::make_shared<std::string>();
        auto host = std::make_shared<std::string>("127.0.0.1");
        auto port = std::make_shared<int>(0);
        auto max_requests = std::make_shared<long>(0);
        cmd->add_option("--model", *model, "model file")->required();
        cmd->add_option("--host", *host, "listen address (default 127.0.0.1)");
        cmd->add_option("--port", *port, "listen port (0 = ephemeral)");
        cmd->add_option("--max-requests", *max_requests, "exit after N requests (0 = run forever)");
        cmd->callback([=, &action] {
            action = [=] { return run_serve(*model, *host, *port, *max_requests); };
        });
    }
    // usurp
    {
        auto* cmd = app.add_subcommand("usurp", "simulate an a-posteriori key forgery");
        auto model = std::make_shared<std::string>();
        auto config_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto level = std::make_shared<int>(1);
        auto s = std::make_shared<int>(8);
        auto t = std::make_shared<int>(100);
        auto eps = std::make_shared<int>(41);
        auto c = std::make_shared<int>(0);
        auto target_m = std::make_shared<int>(-1);
        auto runs = std::make_shared<int>(1);
        auto seed = std::make_shared<uint64_t>(1);
        auto r_min = std::make_shared<double>(20.0);
        cmd->add_option("--model", *model, "stolen model file")->required();
        cmd->add_option("--config", *config_path, "config file naming the attacker's image pool")
            ->required();
        cmd->add_option("--level", *level, "protocol level to forge against (0|1|2)")->required();
        cmd->add_option("--s", *s, "number of forged triggers");
        cmd->add_option("--t", *t, "gradient iterations per adversarial image");
        cmd->add_option("--eps", *eps, "L-inf budget in 8-bit pixel units");
        cmd->add_option("--c", *c, "class count (default: model's)");
        cmd->add_option("--target-m", *target_m, "required matches (level 2)");
        cmd->add_option("--runs", *runs, "independent forgery runs");
        cmd->add_option("--seed", *seed, "master seed");
        cmd->add_option("--rmin", *r_min, "report success threshold in bits");
        cmd->add_option("--out", *out, "override [output] dir");
        cmd->callback([=, &action] {
            action = [=] {
                return run_usurp(*model, *config_path, *level, *s, *t, *eps, *c, *target_m, *runs,
                                 *seed, *r_min, *out);
            };
        });
    }
    // stats
    {
        auto* cmd = app.add_subcommand("stats", "rarity / threshold / sizing / work calculators");
        cmd->require_subcommand(1);
        {
            auto* sub = cmd->add_subcommand("rarity", "rarity S M C");
            auto s = std::make_shared<int>(), m = std::make_shared<int>(), c = std::make_shared<int>();
            sub->add_option("s", *s)->required();
            sub->add_option("m", *m)->required();
            sub->add_option("c", *c)->required();
            sub->callback([=, &action] { action = [=] { return run_stats_rarity(*s, *m, *c); }; });
        }
        {
            auto* sub = cmd->add_subcommand("threshold", "threshold S C RMIN");
            auto s = std::make_shared<int>(), c = std::make_shared<int>();
            auto rmin = std::make_shared<double>();
            sub->add_option("s", *s)->required();
            sub->add_option("c", *c)->required();
            sub->add_option("rmin", *rmin)->required();
            sub->callback(
                [=, &action] { action = [=] { return run_stats_threshold(*s, *c, *rmin); }; });
        }
        {
            auto* sub = cmd->add_subcommand("size", "size R REC_RATE C");
            auto R = std::make_shared<double>(), r = std::make_shared<double>();
            auto c = std::make_shared<int>();
            sub->add_option("R", *R)->required();
            sub->add_option("rate", *r)->required();
            sub->add_option("c", *c)->required();
            sub->callback([=, &action] { action = [=] { return run_stats_size(*R, *r, *c); }; });
        }
        {
            auto* sub = cmd->add_subcommand("work", "work LEVEL --s --t [--c] [--R] [--ratio]");
            auto level = std::make_shared<int>();
            auto s = std::make_shared<int>(40), t = std::make_shared<int>(100);
            auto c = std::make_shared<int>(10);
            auto R = std::make_shared<double>(0.0), ratio = std::make_shared<double>(1.0);
            sub->add_option("level", *level)->required();
            sub->add_option("--s", *s);
            sub->add_option("--t", *t);
            sub->add_option("--c", *c);
            sub->add_option("--R", *R);
            sub->add_option("--ratio", *ratio, "omega_H / omega_F");
            sub->callback([=, &action] {
                action = [=] { return run_stats_work(*level, *s, *t, *c, *R, *ratio); };
            });
        }
    }
    // keygen
    {
        auto* cmd = app.add_subcommand("keygen", "generate a secret key file");
        auto seed = std::make_shared<uint64_t>(0);
        auto out = std::make_shared<std::string>("key.rosekey");
        auto* seed_opt = cmd->add_option("--seed", *seed, "deterministic expansion seed");
        cmd->add_option("--out", *out, "key file path");
        cmd->callback([=, &action] {
            bool seeded = seed_opt->count() > 0;
            action = [=] { return run_keygen(seeded, *seed, *out); };
        });
    }
    // synth
    {
        auto* cmd = app.add_subcommand("synth", "generate a synthetic dataset on disk");
        auto kind = std::make_shared<std::string>("digits");
        auto n = std::make_shared<int>(10000), test_n = std::make_shared<int>(2000);
        auto seed = std::make_shared<uint64_t>(1);
        auto out = std::make_shared<std::string>();
        cmd->add_option("--kind", *kind, "digits | shapes");
        cmd->add_option("--n", *n, "training samples");
        cmd->add_option("--test", *test_n, "test samples");
        cmd->add_option("--seed", *seed);
        cmd->add_option("--out", *out, "output directory")->required();
        cmd->callback([=, &action] {
            action = [=] { return run_synth(*kind, *n, *test_n, *seed, *out); };
        });
    }
    // bundle
    {
        auto* cmd = app.add_subcommand("bundle", "seal trigger evidence into a bundle");
        auto triggers = std::make_shared<std::string>();
        auto key = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto disclose = std::make_shared<bool>(false);
        cmd->add_option("--triggers", *triggers, "trigger file")->required();
        cmd->add_option("--key", *key, "key file")->required();
        cmd->add_flag("--disclose-key", *disclose,
                      "write the secret key into the bundle (default ships labels + fingerprint)");
        cmd->add_option("--out", *out, "bundle file path")->required();
        cmd->callback([=, &action] {
            action = [=] { return run_bundle(*triggers, *key, *disclose, *out); };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action ? action() : 2;
    } catch (const TransportError& e) {
        std::fprintf(stderr, "transport error (verification aborted, no decision): %s\n", e.what());
        return 2;
    } catch (const VerifyError& e) {
        std::fprintf(stderr, "protocol error (aborted, no decision): %s\n", e.what());
        return 2;
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
