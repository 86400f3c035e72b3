#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rose/bytes.hpp"
#include "rose/image.hpp"
#include "rose/rng.hpp"

namespace rose::dataset {

// Labeled corpus with the 80/10/10 train/validation/fine-tune partition of
// the training data. Test sets are separate datasets with empty splits.
struct LabeledDataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int class_count = 0;
    std::vector<int> train_idx, val_idx, finetune_idx;

    size_t size() const { return images.size(); }
};

inline void make_splits(LabeledDataset& data, uint64_t seed) {
    size_t n = data.images.size();
    if (n == 0) throw std::invalid_argument("make_splits: empty dataset");
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = int(i);
    Rng rng(mix_seed(seed, 0x5b117));
    rng.shuffle(order.begin(), order.end());
    size_t n80 = n * 8 / 10, n90 = n * 9 / 10;
    data.train_idx.assign(order.begin(), order.begin() + n80);
    data.val_idx.assign(order.begin() + n80, order.begin() + n90);
    data.finetune_idx.assign(order.begin() + n90, order.end());
}

// ---------------------------------------------------------------------------
// IDX (the MNIST container format)

namespace detail {

inline uint32_t read_u32be(std::istream& f) {
    uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("idx: truncated header");
    return get_u32be(b);
}

inline void write_u32be(std::ostream& f, uint32_t v) {
    uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               int class_count = 10, size_t limit = 0) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("cannot open idx image file: " + images_path);
    if (detail::read_u32be(fi) != 0x00000803u)
        throw std::runtime_error("bad idx image magic in " + images_path);
    uint32_t n = detail::read_u32be(fi);
    uint32_t h = detail::read_u32be(fi);
    uint32_t w = detail::read_u32be(fi);
    if (h == 0 || w == 0 || h > 4096 || w > 4096)
        throw std::runtime_error("implausible idx image dimensions in " + images_path);

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("cannot open idx label file: " + labels_path);
    if (detail::read_u32be(fl) != 0x00000801u)
        throw std::runtime_error("bad idx label magic in " + labels_path);
    uint32_t nl = detail::read_u32be(fl);
    if (nl != n) throw std::runtime_error("idx image/label count mismatch");

    if (limit > 0 && limit < n) n = uint32_t(limit);
    LabeledDataset d;
    d.class_count = class_count;
    d.images.reserve(n);
    d.labels.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Image img(int(h), int(w), 1);
        fi.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
        if (!fi) throw std::runtime_error("idx: truncated image data");
        uint8_t lab;
        fl.read(reinterpret_cast<char*>(&lab), 1);
        if (!fl) throw std::runtime_error("idx: truncated label data");
        if (int(lab) >= class_count) throw std::runtime_error("idx: label out of range");
        d.images.push_back(std::move(img));
        d.labels.push_back(int(lab));
    }
    return d;
}

inline void save_idx(const std::string& images_path, const std::string& labels_path,
                     const LabeledDataset& d) {
    if (d.images.empty()) throw std::invalid_argument("save_idx: empty dataset");
    int h = d.images[0].height, w = d.images[0].width;
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("cannot write idx image file: " + images_path);
    detail::write_u32be(fi, 0x00000803u);
    detail::write_u32be(fi, uint32_t(d.images.size()));
    detail::write_u32be(fi, uint32_t(h));
    detail::write_u32be(fi, uint32_t(w));
    for (const Image& img : d.images) {
        if (img.channels != 1 || img.height != h || img.width != w)
            throw std::invalid_argument("save_idx: idx requires uniform single-channel images");
        fi.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    }
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("cannot write idx label file: " + labels_path);
    detail::write_u32be(fl, 0x00000801u);
    detail::write_u32be(fl, uint32_t(d.labels.size()));
    for (int lab : d.labels) {
        uint8_t b = uint8_t(lab);
        fl.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: records of 1 label byte + 3072 planar RGB bytes.

inline void load_cifar_batch(const std::string& path, LabeledDataset& d, size_t limit = 0) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open cifar batch: " + path);
    const size_t rec = 1 + 3 * 32 * 32;
    std::vector<uint8_t> buf(rec);
    while (f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(rec))) {
        if (limit > 0 && d.images.size() >= limit) return;
        if (buf[0] >= 10) throw std::runtime_error("cifar: label byte out of range in " + path);
        Image img(32, 32, 3);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    img.at(y, x, c) = buf[1 + size_t(c) * 1024 + size_t(y) * 32 + x];
        d.images.push_back(std::move(img));
        d.labels.push_back(int(buf[0]));
    }
    if (f.gcount() != 0 && !f.eof()) throw std::runtime_error("cifar: truncated record in " + path);
}

inline LabeledDataset load_cifar(const std::vector<std::string>& batch_files, size_t limit = 0) {
    LabeledDataset d;
    d.class_count = 10;
    for (const auto& p : batch_files) {
        load_cifar_batch(p, d, limit);
        if (limit > 0 && d.images.size() >= limit) break;
    }
    return d;
}

inline void save_cifar_batch(const std::string& path, const LabeledDataset& d) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write cifar batch: " + path);
    for (size_t i = 0; i < d.images.size(); ++i) {
        const Image& img = d.images[i];
        if (img.height != 32 || img.width != 32 || img.channels != 3)
            throw std::invalid_argument("save_cifar_batch: images must be 32x32x3");
        uint8_t lab = uint8_t(d.labels[i]);
        f.write(reinterpret_cast<const char*>(&lab), 1);
        std::vector<uint8_t> planar(3072);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    planar[size_t(c) * 1024 + size_t(y) * 32 + x] = img.at(y, x, c);
        f.write(reinterpret_cast<const char*>(planar.data()), 3072);
    }
}

}  // namespace rose::dataset
