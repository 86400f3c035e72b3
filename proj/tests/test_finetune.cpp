#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rose/rose.hpp"

using namespace rose;

// Fine-tuning at the stock attack defaults (lr 1e-5, batch 64), scaled to 10
// epochs, barely moves watermark recovery. Slow test (trains a small model).
TEST_CASE("finetune attack: recovery shift stays within 10 points at desk scale") {
    auto corpus = synth::digits(2500, 91);
    dataset::make_splits(corpus, 92);
    keying::SecretKey sk = keying::generate_key(uint64_t{93});
    wm::EmbedResult emb = wm::embed(corpus, sk, 20, 2, nn::arch_preset("desk-mnist"),
                                    nn::adam_defaults(25), 7, 13);
    wm::RecoveryResult before = wm::recovery_rate(wm::model_oracle(emb.model), emb.triggers);
    MESSAGE("recovery before finetune: ", before.rec);
    CHECK(before.rec >= 60.0);  // the watermark must exist for the test to mean anything

    nn::Model tuned = attacks::finetune_attack(emb.model, corpus, attacks::finetune_defaults(10));
    wm::RecoveryResult after = wm::recovery_rate(wm::model_oracle(tuned), emb.triggers);
    MESSAGE("recovery after finetune: ", after.rec);
    CHECK(std::abs(after.rec - before.rec) <= 10.0);

    auto test = synth::digits(500, 94);
    double acc_before = nn::evaluate(emb.model, test);
    double acc_after = nn::evaluate(tuned, test);
    MESSAGE("accuracy ", acc_before, " -> ", acc_after);
    CHECK(std::abs(acc_after - acc_before) <= 3.0);
}
