#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "rose/bytes.hpp"
#include "rose/dataset.hpp"
#include "rose/image.hpp"
#include "rose/rng.hpp"

namespace rose::nn {

enum class LayerKind { Conv, MaxPool, Dropout, Dense };
enum class Activation { None, Relu };

struct LayerDef {
    LayerKind kind = LayerKind::Dense;
    int filters = 0;  // conv
    int kernel = 0;   // conv
    int pad = 0;      // conv
    int units = 0;    // dense
    double rate = 0;  // dropout
    Activation act = Activation::None;
};

inline LayerDef conv(int filters, int kernel, int pad = 0, Activation act = Activation::Relu) {
    LayerDef d;
    d.kind = LayerKind::Conv;
    d.filters = filters;
    d.kernel = kernel;
    d.pad = pad;
    d.act = act;
    return d;
}
inline LayerDef maxpool() {
    LayerDef d;
    d.kind = LayerKind::MaxPool;
    return d;
}
inline LayerDef dropout(double rate) {
    LayerDef d;
    d.kind = LayerKind::Dropout;
    d.rate = rate;
    return d;
}
inline LayerDef dense(int units, Activation act = Activation::None) {
    LayerDef d;
    d.kind = LayerKind::Dense;
    d.units = units;
    d.act = act;
    return d;
}

struct ArchitectureSpec {
    std::string name = "custom";
    int in_h = 0, in_w = 0, in_c = 0;
    int class_count = 0;
    std::vector<LayerDef> layers;
};

// Resolved layer: architecture entry plus chained shapes and parameters.
// Activations are CHW throughout the engine.
template <class T>
struct LayerT {
    LayerDef def;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    std::vector<T> w, b;

    size_t in_size() const { return size_t(in_c) * in_h * in_w; }
    size_t out_size() const { return size_t(out_c) * out_h * out_w; }
};

// Post-activation fake quantization, set by the full-integer quantization
// attack: x -> (clamp(round(x/scale)+zp, 0, 255)-zp)*scale.
struct ActQuant {
    float scale = 1.0f;
    float zero_point = 0.0f;
};

struct TrainRecord {
    int epoch = 0;
    double loss = 0.0;
    double val_acc = -1.0;
    double extra = -1.0;  // e.g. trigger recovery, when a callback fills it in
};

template <class T>
struct NetT {
    ArchitectureSpec spec;
    std::vector<LayerT<T>> layers;
    uint64_t seed = 0;
    std::vector<std::string> log;                 // one line per training event
    std::vector<std::optional<ActQuant>> act_quant;  // aligned with layers when non-empty

    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

using Model = NetT<float>;

// ---------------------------------------------------------------------------
// construction

template <class T>
NetT<T> build(const ArchitectureSpec& spec, uint64_t seed) {
    if (spec.in_h <= 0 || spec.in_w <= 0 || spec.in_c <= 0)
        throw std::invalid_argument("build: input shape not set");
    if (spec.class_count < 2) throw std::invalid_argument("build: class_count must be >= 2");
    if (spec.layers.empty()) throw std::invalid_argument("build: no layers");
    const LayerDef& last = spec.layers.back();
    if (last.kind != LayerKind::Dense || last.units != spec.class_count || last.act != Activation::None)
        throw std::invalid_argument("build: network must end in a linear dense layer of class_count units");

    NetT<T> net;
    net.spec = spec;
    net.seed = seed;
    int c = spec.in_c, h = spec.in_h, w = spec.in_w;
    bool flattened = false;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDef& def = spec.layers[i];
        LayerT<T> layer;
        layer.def = def;
        layer.in_c = c;
        layer.in_h = h;
        layer.in_w = w;
        Rng rng(mix_seed(seed, 0x1a7e5 + i));
        switch (def.kind) {
            case LayerKind::Conv: {
                if (flattened) throw std::invalid_argument("build: conv after dense");
                if (def.kernel < 1 || def.filters < 1 || def.pad < 0)
                    throw std::invalid_argument("build: bad conv geometry");
                int oh = h + 2 * def.pad - def.kernel + 1;
                int ow = w + 2 * def.pad - def.kernel + 1;
                if (oh < 1 || ow < 1) throw std::invalid_argument("build: conv kernel larger than input");
                layer.out_c = def.filters;
                layer.out_h = oh;
                layer.out_w = ow;
                size_t fan_in = size_t(c) * def.kernel * def.kernel;
                layer.w.resize(size_t(def.filters) * fan_in);
                layer.b.assign(size_t(def.filters), T(0));
                // He-uniform, fan-in scaled
                double limit = std::sqrt(6.0 / double(fan_in));
                for (auto& x : layer.w) x = T(rng.uniform(-limit, limit));
                c = def.filters;
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::MaxPool: {
                if (flattened) throw std::invalid_argument("build: pool after dense");
                if (h < 2 || w < 2) throw std::invalid_argument("build: pool on degenerate input");
                layer.out_c = c;
                layer.out_h = h / 2;
                layer.out_w = w / 2;
                h /= 2;
                w /= 2;
                break;
            }
            case LayerKind::Dropout: {
                if (!(def.rate >= 0.0 && def.rate < 1.0))
                    throw std::invalid_argument("build: dropout rate must be in [0,1)");
                layer.out_c = c;
                layer.out_h = h;
                layer.out_w = w;
                break;
            }
            case LayerKind::Dense: {
                if (def.units < 1) throw std::invalid_argument("build: dense needs units");
                size_t in_dim = size_t(c) * h * w;
                layer.out_c = def.units;
                layer.out_h = 1;
                layer.out_w = 1;
                layer.w.resize(size_t(def.units) * in_dim);
                layer.b.assign(size_t(def.units), T(0));
                double limit = std::sqrt(6.0 / double(in_dim));
                for (auto& x : layer.w) x = T(rng.uniform(-limit, limit));
                c = def.units;
                h = 1;
                w = 1;
                flattened = true;
                break;
            }
        }
        net.layers.push_back(std::move(layer));
    }
    if (c != spec.class_count) throw std::invalid_argument("build: output dimension != class_count");
    return net;
}

inline Model build(const ArchitectureSpec& spec, uint64_t seed) { return build<float>(spec, seed); }

template <class U, class T>
NetT<U> convert(const NetT<T>& src) {
    NetT<U> dst;
    dst.spec = src.spec;
    dst.seed = src.seed;
    dst.log = src.log;
    dst.act_quant = src.act_quant;
    dst.layers.reserve(src.layers.size());
    for (const auto& l : src.layers) {
        LayerT<U> o;
        o.def = l.def;
        o.in_c = l.in_c;
        o.in_h = l.in_h;
        o.in_w = l.in_w;
        o.out_c = l.out_c;
        o.out_h = l.out_h;
        o.out_w = l.out_w;
        o.w.assign(l.w.begin(), l.w.end());
        o.b.assign(l.b.begin(), l.b.end());
        dst.layers.push_back(std::move(o));
    }
    return dst;
}

// ---------------------------------------------------------------------------
// presets

inline ArchitectureSpec arch_preset(const std::string& name) {
    ArchitectureSpec s;
    s.name = name;
    s.class_count = 10;
    auto relu = Activation::Relu;
    if (name == "mnist-cnn" || name == "desk-mnist" || name == "fashion-cnn" || name == "desk-fashion") {
        s.in_h = 28;
        s.in_w = 28;
        s.in_c = 1;
        bool desk = name.rfind("desk-", 0) == 0;
        bool drop = name == "fashion-cnn" || name == "desk-fashion";
        int f1 = desk ? 8 : 64;
        int f2 = desk ? 16 : 128;
        int fc = desk ? 128 : 256;
        s.layers.push_back(conv(f1, 5, 0, relu));
        s.layers.push_back(maxpool());
        s.layers.push_back(conv(f2, 5, 0, relu));
        s.layers.push_back(maxpool());
        if (drop) s.layers.push_back(dropout(0.2));
        s.layers.push_back(dense(fc, relu));
        if (drop) s.layers.push_back(dropout(0.2));
        s.layers.push_back(dense(10));
    } else if (name == "cifar-cnn") {
        s.in_h = 32;
        s.in_w = 32;
        s.in_c = 3;
        for (int f : {32, 64, 128, 256}) {
            s.layers.push_back(conv(f, 3, 1, relu));
            s.layers.push_back(conv(f, 3, 1, relu));
            s.layers.push_back(maxpool());
            s.layers.push_back(dropout(0.2));
        }
        s.layers.push_back(dense(128, relu));
        s.layers.push_back(dropout(0.2));
        s.layers.push_back(dense(256, relu));
        s.layers.push_back(dense(10));
    } else if (name == "desk-cifar") {
        // no dropout here: at desk-scale epoch counts it suppresses trigger
        // memorization; the full cifar-cnn preset keeps it
        s.in_h = 32;
        s.in_w = 32;
        s.in_c = 3;
        s.layers.push_back(conv(16, 3, 1, relu));
        s.layers.push_back(maxpool());
        s.layers.push_back(conv(32, 3, 1, relu));
        s.layers.push_back(maxpool());
        s.layers.push_back(dense(128, relu));
        s.layers.push_back(dense(10));
    } else {
        throw std::invalid_argument("unknown architecture preset: " + name);
    }
    return s;
}

// ---------------------------------------------------------------------------
// forward / backward

template <class T>
struct Workspace {
    std::vector<std::vector<T>> acts;          // acts[0] = input, acts[i+1] = output of layer i
    std::vector<std::vector<int>> pool_idx;    // per layer (empty unless maxpool)
    std::vector<std::vector<T>> drop_mask;     // per layer (empty unless dropout), scaled keep factors
    std::vector<std::vector<T>> col;           // per layer (conv im2col buffer)
    std::vector<std::vector<T>> din;           // backward scratch per layer
    std::vector<T> dcol;

    template <class Net>
    void prepare(const Net& net) {
        size_t n = net.layers.size();
        acts.resize(n + 1);
        acts[0].resize(net.layers.front().in_size());
        pool_idx.resize(n);
        drop_mask.resize(n);
        col.resize(n);
        din.resize(n + 1);
        din[0].resize(net.layers.front().in_size());
        for (size_t i = 0; i < n; ++i) {
            const auto& l = net.layers[i];
            acts[i + 1].resize(l.out_size());
            din[i + 1].resize(l.out_size());
            if (l.def.kind == LayerKind::MaxPool) pool_idx[i].resize(l.out_size());
            if (l.def.kind == LayerKind::Dropout) drop_mask[i].resize(l.out_size());
            if (l.def.kind == LayerKind::Conv)
                col[i].resize(size_t(l.in_c) * l.def.kernel * l.def.kernel * l.out_h * l.out_w);
        }
    }
};

namespace detail {

template <class T>
void im2col(const T* in, int in_c, int in_h, int in_w, int k, int pad, int out_h, int out_w, T* col) {
    for (int ic = 0; ic < in_c; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + ((size_t(ic) * k + ky) * k + kx) * (size_t(out_h) * out_w);
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy + ky - pad;
                    if (iy < 0 || iy >= in_h) {
                        for (int ox = 0; ox < out_w; ++ox) dst[size_t(oy) * out_w + ox] = T(0);
                        continue;
                    }
                    const T* src_row = in + (size_t(ic) * in_h + iy) * in_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        int ix = ox + kx - pad;
                        dst[size_t(oy) * out_w + ox] =
                            (ix >= 0 && ix < in_w) ? src_row[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* col, int in_c, int in_h, int in_w, int k, int pad, int out_h, int out_w, T* in) {
    std::fill(in, in + size_t(in_c) * in_h * in_w, T(0));
    for (int ic = 0; ic < in_c; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + ((size_t(ic) * k + ky) * k + kx) * (size_t(out_h) * out_w);
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy + ky - pad;
                    if (iy < 0 || iy >= in_h) continue;
                    T* dst_row = in + (size_t(ic) * in_h + iy) * in_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        int ix = ox + kx - pad;
                        if (ix >= 0 && ix < in_w) dst_row[ix] += src[size_t(oy) * out_w + ox];
                    }
                }
            }
        }
    }
}

template <class T>
void apply_act_quant(std::vector<T>& x, const ActQuant& q) {
    for (auto& v : x) {
        double t = std::round(double(v) / q.scale) + q.zero_point;
        t = std::min(255.0, std::max(0.0, t));
        v = T((t - q.zero_point) * q.scale);
    }
}

}  // namespace detail

// Forward pass for one sample. acts[0] must hold the CHW input. When train is
// true, dropout draws its masks from rng (required non-null if the net has
// dropout layers).
template <class T>
void forward(const NetT<T>& net, Workspace<T>& ws, bool train = false, Rng* rng = nullptr) {
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerT<T>& l = net.layers[i];
        const std::vector<T>& in = ws.acts[i];
        std::vector<T>& out = ws.acts[i + 1];
        switch (l.def.kind) {
            case LayerKind::Conv: {
                int k = l.def.kernel;
                size_t rows = size_t(l.in_c) * k * k;
                size_t cols = size_t(l.out_h) * l.out_w;
                detail::im2col(in.data(), l.in_c, l.in_h, l.in_w, k, l.def.pad, l.out_h, l.out_w,
                               ws.col[i].data());
                const T* col = ws.col[i].data();
                for (int f = 0; f < l.out_c; ++f) {
                    T* o = out.data() + size_t(f) * cols;
                    std::fill(o, o + cols, l.b[size_t(f)]);
                    const T* wf = l.w.data() + size_t(f) * rows;
                    for (size_t r = 0; r < rows; ++r) {
                        T wv = wf[r];
                        if (wv == T(0)) continue;
                        const T* c = col + r * cols;
                        for (size_t p = 0; p < cols; ++p) o[p] += wv * c[p];
                    }
                }
                if (l.def.act == Activation::Relu)
                    for (auto& v : out) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::MaxPool: {
                int oh = l.out_h, ow = l.out_w, ih = l.in_h, iw = l.in_w;
                for (int c = 0; c < l.in_c; ++c) {
                    const T* ip = in.data() + size_t(c) * ih * iw;
                    T* op = out.data() + size_t(c) * oh * ow;
                    int* idx = ws.pool_idx[i].data() + size_t(c) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                        for (int x = 0; x < ow; ++x) {
                            int base = 2 * y * iw + 2 * x;
                            int best = base;
                            T bv = ip[base];
                            if (ip[base + 1] > bv) { bv = ip[base + 1]; best = base + 1; }
                            if (ip[base + iw] > bv) { bv = ip[base + iw]; best = base + iw; }
                            if (ip[base + iw + 1] > bv) { bv = ip[base + iw + 1]; best = base + iw + 1; }
                            op[size_t(y) * ow + x] = bv;
                            idx[size_t(y) * ow + x] = best;
                        }
                    }
                }
                break;
            }
            case LayerKind::Dropout: {
                if (train) {
                    if (!rng) throw std::logic_error("forward: dropout training needs an rng");
                    T keep_scale = T(1.0 / (1.0 - l.def.rate));
                    for (size_t j = 0; j < out.size(); ++j) {
                        T m = rng->next_unit() < l.def.rate ? T(0) : keep_scale;
                        ws.drop_mask[i][j] = m;
                        out[j] = in[j] * m;
                    }
                } else {
                    out = in;
                }
                break;
            }
            case LayerKind::Dense: {
                size_t in_dim = l.in_size();
                for (int u = 0; u < l.out_c; ++u) {
                    const T* wu = l.w.data() + size_t(u) * in_dim;
                    T acc = l.b[size_t(u)];
                    for (size_t d = 0; d < in_dim; ++d) acc += wu[d] * in[d];
                    out[size_t(u)] = acc;
                }
                if (l.def.act == Activation::Relu)
                    for (auto& v : out) v = v > T(0) ? v : T(0);
                break;
            }
        }
        if (!net.act_quant.empty() && net.act_quant[i]) detail::apply_act_quant(out, *net.act_quant[i]);
    }
}

template <class T>
struct Grads {
    std::vector<std::vector<T>> w, b;

    template <class Net>
    void prepare(const Net& net) {
        w.resize(net.layers.size());
        b.resize(net.layers.size());
        for (size_t i = 0; i < net.layers.size(); ++i) {
            w[i].assign(net.layers[i].w.size(), T(0));
            b[i].assign(net.layers[i].b.size(), T(0));
        }
    }
    void zero() {
        for (auto& v : w) std::fill(v.begin(), v.end(), T(0));
        for (auto& v : b) std::fill(v.begin(), v.end(), T(0));
    }
};

// Softmax cross-entropy on the final logits. Returns the loss and writes
// dLoss/dlogits into dlogits.
template <class T>
double softmax_ce(const std::vector<T>& logits, int target, std::vector<T>& dlogits) {
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    double denom = 0.0;
    for (T v : logits) denom += std::exp(double(v - mx));
    double log_denom = std::log(denom);
    for (size_t j = 0; j < logits.size(); ++j) {
        double p = std::exp(double(logits[j] - mx)) / denom;
        dlogits[j] = T(p - (int(j) == target ? 1.0 : 0.0));
    }
    return log_denom - double(logits[size_t(target)] - mx);
}

// Backward pass for one sample; forward() must have been called on ws with
// the same mode. Accumulates parameter gradients into g and leaves
// dLoss/dinput in ws.din[0].
template <class T>
void backward(const NetT<T>& net, Workspace<T>& ws, const std::vector<T>& dlogits, Grads<T>& g,
              bool train = false) {
    ws.din[net.layers.size()] = dlogits;
    for (size_t ii = net.layers.size(); ii-- > 0;) {
        const LayerT<T>& l = net.layers[ii];
        std::vector<T>& dout = ws.din[ii + 1];
        std::vector<T>& din = ws.din[ii];
        const std::vector<T>& out = ws.acts[ii + 1];
        const std::vector<T>& in = ws.acts[ii];
        if (l.def.act == Activation::Relu) {
            for (size_t j = 0; j < dout.size(); ++j)
                if (out[j] <= T(0)) dout[j] = T(0);
        }
        switch (l.def.kind) {
            case LayerKind::Conv: {
                int k = l.def.kernel;
                size_t rows = size_t(l.in_c) * k * k;
                size_t cols = size_t(l.out_h) * l.out_w;
                const T* col = ws.col[ii].data();
                // bias and weight gradients
                for (int f = 0; f < l.out_c; ++f) {
                    const T* dof = dout.data() + size_t(f) * cols;
                    T acc = T(0);
                    for (size_t p = 0; p < cols; ++p) acc += dof[p];
                    g.b[ii][size_t(f)] += acc;
                    T* gw = g.w[ii].data() + size_t(f) * rows;
                    for (size_t r = 0; r < rows; ++r) {
                        const T* c = col + r * cols;
                        T dot = T(0);
                        for (size_t p = 0; p < cols; ++p) dot += dof[p] * c[p];
                        gw[r] += dot;
                    }
                }
                // input gradient via dcol
                ws.dcol.assign(rows * cols, T(0));
                for (int f = 0; f < l.out_c; ++f) {
                    const T* dof = dout.data() + size_t(f) * cols;
                    const T* wf = l.w.data() + size_t(f) * rows;
                    for (size_t r = 0; r < rows; ++r) {
                        T wv = wf[r];
                        if (wv == T(0)) continue;
                        T* dc = ws.dcol.data() + r * cols;
                        for (size_t p = 0; p < cols; ++p) dc[p] += wv * dof[p];
                    }
                }
                detail::col2im(ws.dcol.data(), l.in_c, l.in_h, l.in_w, k, l.def.pad, l.out_h, l.out_w,
                               din.data());
                break;
            }
            case LayerKind::MaxPool: {
                std::fill(din.begin(), din.end(), T(0));
                int oh = l.out_h, ow = l.out_w, ih = l.in_h, iw = l.in_w;
                for (int c = 0; c < l.in_c; ++c) {
                    const T* dop = dout.data() + size_t(c) * oh * ow;
                    T* dip = din.data() + size_t(c) * ih * iw;
                    const int* idx = ws.pool_idx[ii].data() + size_t(c) * oh * ow;
                    for (size_t j = 0; j < size_t(oh) * ow; ++j) dip[idx[j]] += dop[j];
                }
                break;
            }
            case LayerKind::Dropout: {
                if (train) {
                    for (size_t j = 0; j < dout.size(); ++j) din[j] = dout[j] * ws.drop_mask[ii][j];
                } else {
                    din = dout;
                }
                break;
            }
            case LayerKind::Dense: {
                size_t in_dim = l.in_size();
                std::fill(din.begin(), din.end(), T(0));
                for (int u = 0; u < l.out_c; ++u) {
                    T d = dout[size_t(u)];
                    g.b[ii][size_t(u)] += d;
                    T* gw = g.w[ii].data() + size_t(u) * in_dim;
                    const T* wu = l.w.data() + size_t(u) * in_dim;
                    if (d == T(0)) continue;
                    for (size_t j = 0; j < in_dim; ++j) {
                        gw[j] += d * in[j];
                        din[j] += d * wu[j];
                    }
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// inference

template <class T>
void image_to_input(const Image& img, const NetT<T>& net, std::vector<T>& input) {
    const ArchitectureSpec& s = net.spec;
    if (img.height != s.in_h || img.width != s.in_w || img.channels != s.in_c)
        throw std::invalid_argument("predict: image shape does not match the architecture");
    input.resize(size_t(s.in_c) * s.in_h * s.in_w);
    // HWC bytes -> CHW floats in [0,1]
    for (int c = 0; c < s.in_c; ++c)
        for (int y = 0; y < s.in_h; ++y)
            for (int x = 0; x < s.in_w; ++x)
                input[(size_t(c) * s.in_h + y) * s.in_w + x] =
                    T(img.pixels[(size_t(y) * s.in_w + x) * s.in_c + c]) / T(255);
}

template <class T>
int argmax_lowest(const std::vector<T>& v) {
    int best = 0;
    for (size_t j = 1; j < v.size(); ++j)
        if (v[j] > v[size_t(best)]) best = int(j);
    return best;
}

template <class T>
std::vector<double> predict_probs(const NetT<T>& net, const Image& img, Workspace<T>& ws) {
    image_to_input(img, net, ws.acts[0]);
    forward(net, ws);
    const std::vector<T>& logits = ws.acts.back();
    double mx = double(*std::max_element(logits.begin(), logits.end()));
    std::vector<double> p(logits.size());
    double denom = 0.0;
    for (size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(double(logits[j]) - mx);
        denom += p[j];
    }
    for (auto& v : p) v /= denom;
    return p;
}

template <class T>
std::vector<double> predict_probs(const NetT<T>& net, const Image& img) {
    Workspace<T> ws;
    ws.prepare(net);
    return predict_probs(net, img, ws);
}

// Argmax class; ties break toward the lowest index.
template <class T>
int predict(const NetT<T>& net, const Image& img, Workspace<T>& ws) {
    image_to_input(img, net, ws.acts[0]);
    forward(net, ws);
    return argmax_lowest(ws.acts.back());
}

template <class T>
int predict(const NetT<T>& net, const Image& img) {
    Workspace<T> ws;
    ws.prepare(net);
    return predict(net, img, ws);
}

// Loss gradient with respect to the (normalized, CHW) input for a target
// class, plus the prediction from the same forward pass.
template <class T>
std::pair<std::vector<T>, int> input_gradient(const NetT<T>& net, const Image& img, int target) {
    Workspace<T> ws;
    ws.prepare(net);
    image_to_input(img, net, ws.acts[0]);
    forward(net, ws);
    int pred = argmax_lowest(ws.acts.back());
    std::vector<T> dlogits(ws.acts.back().size());
    softmax_ce(ws.acts.back(), target, dlogits);
    Grads<T> g;
    g.prepare(net);
    backward(net, ws, dlogits, g);
    return {ws.din[0], pred};
}

// ---------------------------------------------------------------------------
// training

struct Hyper {
    std::string optimizer = "adam";  // "adam" | "sgd"
    double lr = 1e-3;
    double momentum = 0.9;  // sgd only
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int epochs = 0;
    int batch = 64;
};

inline Hyper adam_defaults(int epochs) {
    Hyper h;
    h.epochs = epochs;
    return h;
}

inline Hyper sgd_momentum(int epochs, double lr = 1e-3, double momentum = 0.9) {
    Hyper h;
    h.optimizer = "sgd";
    h.lr = lr;
    h.momentum = momentum;
    h.epochs = epochs;
    return h;
}

// Invoked after each epoch; may append to the model log (e.g. per-epoch
// trigger recovery) but must not touch weights.
using EpochCallback = std::function<void(int epoch, Model& net)>;

namespace detail {

template <class T>
struct Optimizer {
    const Hyper* hyper;
    bool adam;
    long step_count = 0;
    Grads<T> m, v;  // adam moments / sgd velocity (m only)

    Optimizer(const NetT<T>& net, const Hyper& h) : hyper(&h), adam(h.optimizer == "adam") {
        if (!adam && h.optimizer != "sgd")
            throw std::invalid_argument("unknown optimizer: " + h.optimizer);
        m.prepare(net);
        if (adam) v.prepare(net);
    }

    void step(NetT<T>& net, Grads<T>& g) {
        ++step_count;
        for (size_t i = 0; i < net.layers.size(); ++i) {
            apply(net.layers[i].w, g.w[i], m.w[i], adam ? &v.w[i] : nullptr);
            apply(net.layers[i].b, g.b[i], m.b[i], adam ? &v.b[i] : nullptr);
        }
    }

    void apply(std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m1, std::vector<T>* m2) {
        const double lr = hyper->lr;
        if (adam) {
            const double b1 = hyper->beta1, b2 = hyper->beta2, eps = hyper->eps;
            const double c1 = 1.0 - std::pow(b1, double(step_count));
            const double c2 = 1.0 - std::pow(b2, double(step_count));
            for (size_t j = 0; j < w.size(); ++j) {
                double gj = double(g[j]);
                double mj = b1 * double(m1[j]) + (1.0 - b1) * gj;
                double vj = b2 * double((*m2)[j]) + (1.0 - b2) * gj * gj;
                m1[j] = T(mj);
                (*m2)[j] = T(vj);
                w[j] -= T(lr * (mj / c1) / (std::sqrt(vj / c2) + eps));
            }
        } else {
            const double mom = hyper->momentum;
            for (size_t j = 0; j < w.size(); ++j) {
                double vel = mom * double(m1[j]) - lr * double(g[j]);
                m1[j] = T(vel);
                w[j] += T(vel);
            }
        }
    }
};

}  // namespace detail

template <class T>
double evaluate(const NetT<T>& net, const std::vector<Image>& images, const std::vector<int>& labels,
                const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate: empty slice");
    Workspace<T> ws;
    ws.prepare(net);
    size_t correct = 0;
    for (int i : indices)
        if (predict(net, images[size_t(i)], ws) == labels[size_t(i)]) ++correct;
    return 100.0 * double(correct) / double(indices.size());
}

template <class T>
double evaluate(const NetT<T>& net, const dataset::LabeledDataset& data,
                const std::vector<int>& indices) {
    return evaluate(net, data.images, data.labels, indices);
}

// Accuracy over a whole dataset (e.g. a held-out test set).
template <class T>
double evaluate(const NetT<T>& net, const dataset::LabeledDataset& data) {
    std::vector<int> all(data.images.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
    return evaluate(net, data.images, data.labels, all);
}

// Mini-batch training over explicit sample indices. Deterministic: shuffling
// and dropout both derive from the model seed, and accumulation order is
// fixed. Returns a new model; the input model is untouched.
template <class T>
NetT<T> train_on_indices(const NetT<T>& model, const dataset::LabeledDataset& data,
                         const std::vector<int>& train_idx, const Hyper& hyper,
                         const std::vector<int>& val_idx = {}, const EpochCallback& cb = {}) {
    if (train_idx.empty()) throw std::invalid_argument("train: empty training slice");
    if (hyper.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (hyper.epochs < 0) throw std::invalid_argument("train: negative epoch count");
    for (int i : train_idx)
        if (data.labels[size_t(i)] < 0 || data.labels[size_t(i)] >= model.spec.class_count)
            throw std::invalid_argument("train: label out of range");

    NetT<T> net = model;
    if (hyper.epochs == 0) return net;

    Workspace<T> ws;
    ws.prepare(net);
    Grads<T> grads;
    grads.prepare(net);
    detail::Optimizer<T> opt(net, hyper);
    Rng drop_rng(mix_seed(net.seed, 0xd20b0));

    std::vector<int> order(train_idx);
    std::vector<T> dlogits(size_t(net.spec.class_count));

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(mix_seed(net.seed, 0xe90c4), uint64_t(epoch)));
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += size_t(hyper.batch)) {
            size_t stop = std::min(order.size(), start + size_t(hyper.batch));
            grads.zero();
            for (size_t j = start; j < stop; ++j) {
                const Image& img = data.images[size_t(order[j])];
                image_to_input(img, net, ws.acts[0]);
                forward(net, ws, true, &drop_rng);
                loss_sum += softmax_ce(ws.acts.back(), data.labels[size_t(order[j])], dlogits);
                backward(net, ws, dlogits, grads, true);
            }
            T inv = T(1.0 / double(stop - start));
            for (auto& gv : grads.w)
                for (auto& x : gv) x *= inv;
            for (auto& gv : grads.b)
                for (auto& x : gv) x *= inv;
            opt.step(net, grads);
            seen += stop - start;
        }
        double mean_loss = loss_sum / double(seen);
        if (!std::isfinite(mean_loss))
            throw TrainingDiverged(epoch, "training diverged: non-finite loss at epoch " +
                                              std::to_string(epoch));
        std::ostringstream line;
        line << "epoch " << (epoch + 1) << "/" << hyper.epochs << " loss " << mean_loss;
        if (!val_idx.empty()) {
            double va = evaluate(net, data, val_idx);
            line << " val_acc " << va;
        }
        net.log.push_back(line.str());
        if (cb) {
            if constexpr (std::is_same_v<T, float>) cb(epoch + 1, net);
        }
    }
    return net;
}

// Standard entry point: train on the 80% split, validate on the 10% split.
template <class T>
NetT<T> train(const NetT<T>& model, const dataset::LabeledDataset& data, const Hyper& hyper,
              const EpochCallback& cb = {}) {
    if (data.train_idx.empty()) throw std::invalid_argument("train: dataset has no train split");
    return train_on_indices(model, data, data.train_idx, hyper, data.val_idx, cb);
}

// ---------------------------------------------------------------------------
// gradient check

// Backprop versus central finite differences (step 1e-3), evaluated in double
// precision through the same templated code path the float engine uses.
// Deviation per coordinate is |bp - fd| / max(|bp|, |fd|, 1e-6); returns the
// maximum over all sampled coordinates (weights, biases and input pixels).
inline double gradient_check(const Model& model, const Image& img, int label,
                             int samples_per_layer = 100, uint64_t seed = 1) {
    NetT<double> net = convert<double>(model);
    Workspace<double> ws;
    ws.prepare(net);

    auto loss_at = [&]() {
        image_to_input(img, net, ws.acts[0]);
        forward(net, ws);
        std::vector<double> scratch(ws.acts.back().size());
        return softmax_ce(ws.acts.back(), label, scratch);
    };

    // analytic gradients
    image_to_input(img, net, ws.acts[0]);
    forward(net, ws);
    std::vector<double> dlogits(ws.acts.back().size());
    softmax_ce(ws.acts.back(), label, dlogits);
    Grads<double> g;
    g.prepare(net);
    backward(net, ws, dlogits, g);
    std::vector<double> dinput = ws.din[0];

    const double h = 1e-3;
    Rng rng(mix_seed(seed, 0x9c4d));
    double worst = 0.0;

    auto probe = [&](double* param, double analytic) {
        double keep = *param;
        // five-point central stencil: O(h^4) truncation
        *param = keep + h;
        double f1 = loss_at();
        *param = keep - h;
        double f_1 = loss_at();
        *param = keep + 2 * h;
        double f2 = loss_at();
        *param = keep - 2 * h;
        double f_2 = loss_at();
        *param = keep;
        double fd = (f_2 - 8.0 * f_1 + 8.0 * f1 - f2) / (12.0 * h);
        double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(analytic - fd) / denom);
    };

    for (size_t li = 0; li < net.layers.size(); ++li) {
        auto& l = net.layers[li];
        size_t nw = l.w.size(), nb = l.b.size();
        for (int trial = 0; trial < samples_per_layer && nw > 0; ++trial) {
            size_t j = size_t(rng.next_u64() % nw);
            probe(&l.w[j], g.w[li][j]);
        }
        for (int trial = 0; trial < std::min(samples_per_layer, 8) && nb > 0; ++trial) {
            size_t j = size_t(rng.next_u64() % nb);
            probe(&l.b[j], g.b[li][j]);
        }
    }

    // input coordinates, checked by perturbing the normalized input directly
    std::vector<double> input0;
    image_to_input(img, net, input0);
    for (int trial = 0; trial < samples_per_layer; ++trial) {
        size_t j = size_t(rng.next_u64() % input0.size());
        auto loss_with_input = [&](double delta) {
            std::vector<double> in = input0;
            in[j] += delta;
            ws.acts[0] = in;
            forward(net, ws);
            std::vector<double> scratch(ws.acts.back().size());
            return softmax_ce(ws.acts.back(), label, scratch);
        };
        double f1 = loss_with_input(h), f_1 = loss_with_input(-h);
        double f2 = loss_with_input(2 * h), f_2 = loss_with_input(-2 * h);
        double fd = (f_2 - 8.0 * f_1 + 8.0 * f1 - f2) / (12.0 * h);
        double denom = std::max({std::abs(dinput[j]), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(dinput[j] - fd) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// model file: versioned text header + raw little-endian float32 weight blob

namespace detail {

inline void put_f32le(std::string& out, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    out.push_back(char(u & 0xff));
    out.push_back(char((u >> 8) & 0xff));
    out.push_back(char((u >> 16) & 0xff));
    out.push_back(char((u >> 24) & 0xff));
}

inline float get_f32le(const char* p) {
    uint32_t u = uint32_t(uint8_t(p[0])) | uint32_t(uint8_t(p[1])) << 8 |
                 uint32_t(uint8_t(p[2])) << 16 | uint32_t(uint8_t(p[3])) << 24;
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline std::string layer_line(const LayerDef& d) {
    std::ostringstream os;
    switch (d.kind) {
        case LayerKind::Conv:
            os << "conv filters=" << d.filters << " kernel=" << d.kernel << " pad=" << d.pad
               << " act=" << (d.act == Activation::Relu ? "relu" : "none");
            break;
        case LayerKind::MaxPool:
            os << "maxpool";
            break;
        case LayerKind::Dropout:
            os << "dropout rate=" << d.rate;
            break;
        case LayerKind::Dense:
            os << "dense units=" << d.units
               << " act=" << (d.act == Activation::Relu ? "relu" : "none");
            break;
    }
    return os.str();
}

inline LayerDef parse_layer_line(const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    LayerDef d;
    auto kv = [&](const std::string& tok, const std::string& key) -> std::string {
        if (tok.rfind(key + "=", 0) != 0) throw std::runtime_error("model file: expected " + key);
        return tok.substr(key.size() + 1);
    };
    std::string tok;
    if (kind == "conv") {
        d.kind = LayerKind::Conv;
        is >> tok;
        d.filters = std::stoi(kv(tok, "filters"));
        is >> tok;
        d.kernel = std::stoi(kv(tok, "kernel"));
        is >> tok;
        d.pad = std::stoi(kv(tok, "pad"));
        is >> tok;
        d.act = kv(tok, "act") == "relu" ? Activation::Relu : Activation::None;
    } else if (kind == "maxpool") {
        d.kind = LayerKind::MaxPool;
    } else if (kind == "dropout") {
        d.kind = LayerKind::Dropout;
        is >> tok;
        d.rate = std::stod(kv(tok, "rate"));
    } else if (kind == "dense") {
        d.kind = LayerKind::Dense;
        is >> tok;
        d.units = std::stoi(kv(tok, "units"));
        is >> tok;
        d.act = kv(tok, "act") == "relu" ? Activation::Relu : Activation::None;
    } else {
        throw std::runtime_error("model file: unknown layer kind " + kind);
    }
    return d;
}

}  // namespace detail

inline void save_model(const std::string& path, const Model& net,
                       const std::string& config_digest = "") {
    std::ostringstream head;
    head << "ROSEMODEL v1\n";
    head << "name = " << net.spec.name << "\n";
    head << "input = " << net.spec.in_h << " " << net.spec.in_w << " " << net.spec.in_c << "\n";
    head << "classes = " << net.spec.class_count << "\n";
    head << "seed = " << net.seed << "\n";
    for (const auto& l : net.layers) head << "layer = " << detail::layer_line(l.def) << "\n";
    if (net.act_quant.empty()) {
        head << "actquant = none\n";
    } else {
        head << "actquant =";
        for (const auto& q : net.act_quant) {
            if (q)
                head << " " << q->scale << ":" << q->zero_point;
            else
                head << " -";
        }
        head << "\n";
    }
    head << "config = " << (config_digest.empty() ? "-" : config_digest) << "\n";
    head << "log = " << net.log.size() << "\n";
    for (const auto& line : net.log) head << "  " << line << "\n";

    std::string blob;
    for (const auto& l : net.layers) {
        for (float v : l.w) detail::put_f32le(blob, v);
        for (float v : l.b) detail::put_f32le(blob, v);
    }
    head << "weights = " << blob.size() << "\n";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write model file: " + path);
    f << head.str();
    f.write(blob.data(), std::streamsize(blob.size()));
}

inline Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read model file: " + path);
    std::string line;
    auto next = [&]() {
        if (!std::getline(f, line)) throw std::runtime_error("model file truncated: " + path);
        return line;
    };
    if (next() != "ROSEMODEL v1") throw std::runtime_error("not a model file: " + path);

    ArchitectureSpec spec;
    uint64_t seed = 0;
    std::vector<std::string> log;
    std::string actquant_line;
    size_t weight_bytes = 0;

    auto field = [&](const std::string& l, const std::string& key) -> std::string {
        std::string prefix = key + " = ";
        if (l.rfind(prefix, 0) != 0) throw std::runtime_error("model file: expected " + key);
        return l.substr(prefix.size());
    };

    spec.name = field(next(), "name");
    {
        std::istringstream is(field(next(), "input"));
        is >> spec.in_h >> spec.in_w >> spec.in_c;
    }
    spec.class_count = std::stoi(field(next(), "classes"));
    seed = std::stoull(field(next(), "seed"));
    while (true) {
        next();
        if (line.rfind("layer = ", 0) == 0) {
            spec.layers.push_back(detail::parse_layer_line(line.substr(8)));
        } else {
            break;
        }
    }
    actquant_line = field(line, "actquant");
    next();  // config digest, informational
    size_t log_n = std::stoul(field(next(), "log"));
    for (size_t i = 0; i < log_n; ++i) {
        next();
        log.push_back(line.size() >= 2 ? line.substr(2) : line);
    }
    weight_bytes = std::stoul(field(next(), "weights"));

    Model net = build(spec, seed);
    net.log = std::move(log);
    if (actquant_line != "none") {
        std::istringstream is(actquant_line);
        std::string tok;
        while (is >> tok) {
            if (tok == "-") {
                net.act_quant.push_back(std::nullopt);
            } else {
                auto colon = tok.find(':');
                if (colon == std::string::npos) throw std::runtime_error("model file: bad actquant");
                ActQuant q;
                q.scale = std::stof(tok.substr(0, colon));
                q.zero_point = std::stof(tok.substr(colon + 1));
                net.act_quant.push_back(q);
            }
        }
        if (net.act_quant.size() != net.layers.size())
            throw std::runtime_error("model file: actquant entry count mismatch");
    }

    std::string blob(weight_bytes, '\0');
    f.read(blob.data(), std::streamsize(weight_bytes));
    if (size_t(f.gcount()) != weight_bytes) throw std::runtime_error("model file: weight blob truncated");
    size_t off = 0;
    for (auto& l : net.layers) {
        for (auto& v : l.w) {
            v = detail::get_f32le(blob.data() + off);
            off += 4;
        }
        for (auto& v : l.b) {
            v = detail::get_f32le(blob.data() + off);
            off += 4;
        }
    }
    if (off != weight_bytes) throw std::runtime_error("model file: weight blob size mismatch");
    return net;
}

}  // namespace rose::nn

