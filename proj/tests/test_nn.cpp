#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "rose/nn.hpp"
#include "rose/synth.hpp"

using namespace rose;
using namespace rose::nn;

namespace {

ArchitectureSpec tiny_mlp(int in_h, int in_w, int in_c, int hidden, int classes) {
    ArchitectureSpec s;
    s.name = "tiny-mlp";
    s.in_h = in_h;
    s.in_w = in_w;
    s.in_c = in_c;
    s.class_count = classes;
    s.layers = {dense(hidden, Activation::Relu), dense(classes)};
    return s;
}

Image random_image(Rng& rng, int h, int w, int c) {
    Image img(h, w, c);
    for (auto& p : img.pixels) p = uint8_t(rng.next_int(256));
    return img;
}

// two interleaved 2-D gaussian blobs, linearly separable by pixel0 > pixel1
dataset::LabeledDataset separable_toy(int n, uint64_t seed) {
    dataset::LabeledDataset d;
    d.class_count = 2;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        int label = rng.next_int(2);
        int a = 40 + rng.next_int(60);
        int b = 160 + rng.next_int(60);
        Image img(1, 2, 1);
        img.pixels[0] = uint8_t(label == 0 ? b : a);
        img.pixels[1] = uint8_t(label == 0 ? a : b);
        d.images.push_back(img);
        d.labels.push_back(label);
    }
    for (int i = 0; i < n; ++i) d.train_idx.push_back(i);
    return d;
}

}  // namespace

TEST_CASE("build: determinism and shapes") {
    ArchitectureSpec spec = arch_preset("desk-mnist");
    Model a = build(spec, 7);
    Model b = build(spec, 7);
    for (size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].w == b.layers[i].w);
        CHECK(a.layers[i].b == b.layers[i].b);
    }
    CHECK(a.layers.back().out_c == 10);
    CHECK(a.layers.back().out_h == 1);

    Model c = build(spec, 8);
    CHECK(c.layers[0].w != a.layers[0].w);

    ArchitectureSpec mlp = tiny_mlp(1, 256, 1, 256, 10);
    mlp.layers = {dense(10)};
    Model d = build(mlp, 1);
    CHECK(d.layers[0].w.size() == 256 * 10);
    CHECK(d.layers[0].b.size() == 10);
}

TEST_CASE("build: rejects inconsistent chains") {
    ArchitectureSpec s;
    s.in_h = 4;
    s.in_w = 4;
    s.in_c = 1;
    s.class_count = 10;
    s.layers = {conv(4, 7), dense(10)};  // kernel larger than input
    CHECK_THROWS_AS(build(s, 1), std::invalid_argument);

    s.layers = {dense(12)};  // head dimension != class_count
    CHECK_THROWS_AS(build(s, 1), std::invalid_argument);

    s.layers = {dense(10, Activation::Relu)};  // head must be linear
    CHECK_THROWS_AS(build(s, 1), std::invalid_argument);

    s.layers = {dense(10), conv(4, 3)};  // conv after flatten
    CHECK_THROWS_AS(build(s, 1), std::invalid_argument);
}

TEST_CASE("predict: tie-break toward the lowest class index") {
    ArchitectureSpec spec = tiny_mlp(1, 4, 1, 4, 4);
    Model net = build(spec, 3);
    for (auto& l : net.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0f);
        std::fill(l.b.begin(), l.b.end(), 0.0f);
    }
    Image img(1, 4, 1, 200);
    CHECK(predict(net, img) == 0);  // uniform logits

    // bump class 2's bias: unique argmax
    net.layers.back().b[2] = 1.0f;
    CHECK(predict(net, img) == 2);
}

TEST_CASE("predict: shape mismatch and determinism") {
    Model net = build(arch_preset("desk-mnist"), 5);
    Image wrong(16, 16, 1);
    CHECK_THROWS_AS(predict(net, wrong), std::invalid_argument);
    Rng rng(9);
    Image img = random_image(rng, 28, 28, 1);
    CHECK(predict(net, img) == predict(net, img));
}

TEST_CASE("softmax probabilities sum to one") {
    Model net = build(arch_preset("desk-mnist"), 11);
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = predict_probs(net, random_image(rng, 28, 28, 1));
        double sum = 0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("zero-weight network reproduces the closed-form softmax gradient") {
    ArchitectureSpec spec = tiny_mlp(1, 4, 1, 4, 4);
    spec.layers = {dense(4)};
    Model net = build(spec, 3);
    std::fill(net.layers[0].w.begin(), net.layers[0].w.end(), 0.0f);

    Workspace<float> ws;
    ws.prepare(net);
    Image img(1, 4, 1, 255);
    image_to_input(img, net, ws.acts[0]);
    forward(net, ws);
    std::vector<float> dlogits(4);
    double loss = softmax_ce(ws.acts.back(), 1, dlogits);
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
    for (int j = 0; j < 4; ++j)
        CHECK(dlogits[size_t(j)] == doctest::Approx(0.25 - (j == 1 ? 1.0 : 0.0)).epsilon(1e-6));

    Grads<float> g;
    g.prepare(net);
    backward(net, ws, dlogits, g);
    // dw[u][d] = dlogits[u] * in[d], with in[d] = 1.0 here
    for (int u = 0; u < 4; ++u)
        for (int d = 0; d < 4; ++d)
            CHECK(g.w[0][size_t(u) * 4 + d] == doctest::Approx(double(dlogits[size_t(u)])).epsilon(1e-6));
}

TEST_CASE("gradient check: dense layers") {
    Model net = build(tiny_mlp(1, 8, 1, 12, 4), 21);
    Rng rng(22);
    Image img = random_image(rng, 1, 8, 1);
    CHECK(gradient_check(net, img, 2, 100, 1) < 1e-3);
}

TEST_CASE("gradient check: single 3x3 conv filter") {
    ArchitectureSpec s;
    s.in_h = 6;
    s.in_w = 6;
    s.in_c = 1;
    s.class_count = 3;
    s.layers = {conv(1, 3, 0, Activation::Relu), dense(3)};
    Model net = build(s, 31);
    Rng rng(32);
    Image img = random_image(rng, 6, 6, 1);
    CHECK(gradient_check(net, img, 1, 100, 2) < 1e-3);
}

TEST_CASE("gradient check: every layer kind chained") {
    ArchitectureSpec s;
    s.in_h = 10;
    s.in_w = 10;
    s.in_c = 2;
    s.class_count = 5;
    s.layers = {conv(4, 3, 1, Activation::Relu), maxpool(), dropout(0.2),
                conv(6, 3, 0, Activation::Relu), dense(16, Activation::Relu), dense(5)};
    Model net = build(s, 41);
    Rng rng(42);
    Image img = random_image(rng, 10, 10, 2);
    CHECK(gradient_check(net, img, 4, 60, 3) < 1e-3);
}

TEST_CASE("train: linearly separable toy set") {
    auto data = separable_toy(200, 51);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 52);
    Hyper hyper = adam_defaults(50);
    hyper.batch = 16;
    Model trained = train_on_indices(net, data, data.train_idx, hyper);
    double acc = evaluate(trained, data, data.train_idx);
    CHECK(acc >= 99.0);
    // memorization sanity: a training point predicts its own label
    CHECK(predict(trained, data.images[0]) == data.labels[0]);
}

TEST_CASE("train: zero epochs is the identity") {
    auto data = separable_toy(50, 61);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 62);
    Model out = train_on_indices(net, data, data.train_idx, adam_defaults(0));
    for (size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(out.layers[i].w == net.layers[i].w);
        CHECK(out.layers[i].b == net.layers[i].b);
    }
}

TEST_CASE("train: bit-exact determinism across runs") {
    auto data = separable_toy(120, 71);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 72);
    Hyper hyper = adam_defaults(5);
    Model a = train_on_indices(net, data, data.train_idx, hyper);
    Model b = train_on_indices(net, data, data.train_idx, hyper);
    for (size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].w == b.layers[i].w);
        CHECK(a.layers[i].b == b.layers[i].b);
    }
}

TEST_CASE("train: sgd with momentum also runs") {
    auto data = separable_toy(120, 81);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 82);
    Model out = train_on_indices(net, data, data.train_idx, sgd_momentum(20, 0.05, 0.9));
    CHECK(evaluate(out, data, data.train_idx) >= 95.0);
}

TEST_CASE("train: divergence reports the epoch") {
    auto data = separable_toy(60, 91);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 92);
    Hyper bad = sgd_momentum(3, 1e25, 0.0);
    try {
        train_on_indices(net, data, data.train_idx, bad);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch >= 0);
        CHECK(e.epoch < 3);
    }
}

TEST_CASE("evaluate: degenerate slices") {
    ArchitectureSpec spec = tiny_mlp(1, 4, 1, 4, 4);
    spec.layers = {dense(4)};
    Model net = build(spec, 3);
    for (auto& l : net.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0f);
        std::fill(l.b.begin(), l.b.end(), 0.0f);
    }
    net.layers[0].b[2] = 1.0f;  // constant class-2 predictor

    dataset::LabeledDataset d;
    d.class_count = 4;
    d.images.assign(4, Image(1, 4, 1, 100));
    d.labels = {2, 2, 2, 2};
    std::vector<int> all = {0, 1, 2, 3};
    CHECK(evaluate(net, d, all) == 100.0);
    d.labels = {0, 0, 0, 0};
    CHECK(evaluate(net, d, all) == 0.0);
    CHECK_THROWS_AS(evaluate(net, d, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("evaluate: untrained model on balanced labels is near chance") {
    Model net = build(arch_preset("desk-mnist"), 101);
    auto data = synth::digits(600, 102);
    std::vector<int> all(data.images.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
    double acc = evaluate(net, data, all);
    CHECK(acc > 2.0);
    CHECK(acc < 35.0);
}

TEST_CASE("model file: bit-exact round trip") {
    auto data = separable_toy(100, 111);
    Model net = build(tiny_mlp(1, 2, 1, 8, 2), 112);
    net = train_on_indices(net, data, data.train_idx, adam_defaults(3));
    save_model("test_model.tmp", net, "cafe1234");
    Model back = load_model("test_model.tmp");
    CHECK(back.spec.name == net.spec.name);
    CHECK(back.seed == net.seed);
    CHECK(back.log == net.log);
    REQUIRE(back.layers.size() == net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(back.layers[i].w == net.layers[i].w);
        CHECK(back.layers[i].b == net.layers[i].b);
    }
    Rng rng(113);
    for (int trial = 0; trial < 100; ++trial) {
        Image img = random_image(rng, 1, 2, 1);
        CHECK(predict(back, img) == predict(net, img));
    }
    std::remove("test_model.tmp");
}

TEST_CASE("model file: desk preset with act quant entries") {
    Model net = build(arch_preset("desk-mnist"), 121);
    net.act_quant.assign(net.layers.size(), std::nullopt);
    net.act_quant[0] = ActQuant{0.05f, 3.0f};
    save_model("test_model2.tmp", net);
    Model back = load_model("test_model2.tmp");
    REQUIRE(back.act_quant.size() == net.layers.size());
    CHECK(back.act_quant[0].has_value());
    CHECK(back.act_quant[0]->scale == doctest::Approx(0.05));
    CHECK(!back.act_quant[1].has_value());
    Rng rng(122);
    Image img = random_image(rng, 28, 28, 1);
    CHECK(predict(back, img) == predict(net, img));
    std::remove("test_model2.tmp");
}

TEST_CASE("presets resolve to consistent shapes") {
    for (const char* name : {"mnist-cnn", "fashion-cnn", "desk-mnist", "desk-fashion"}) {
        Model net = build(arch_preset(name), 1);
        CHECK(net.layers.back().out_c == 10);
    }
    for (const char* name : {"cifar-cnn", "desk-cifar"}) {
        Model net = build(arch_preset(name), 1);
        CHECK(net.spec.in_c == 3);
        CHECK(net.layers.back().out_c == 10);
    }
    CHECK_THROWS_AS(arch_preset("no-such-net"), std::invalid_argument);
}
