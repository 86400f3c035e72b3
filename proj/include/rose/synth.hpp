#pragma once

// Procedural stand-in corpora for desk-scale runs: a jittered-glyph digit set
// (28x28 grayscale, MNIST-shaped) and a random-color shape set (32x32 RGB,
// CIFAR-shaped). Everything derives from one seed.

#include <cmath>
#include <cstdint>

#include "rose/dataset.hpp"
#include "rose/image.hpp"
#include "rose/rng.hpp"

namespace rose::synth {

namespace detail {

inline double normal(Rng& rng) {
    double u1 = 1.0 - rng.next_unit();  // (0,1]
    double u2 = rng.next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// 5x7 digit glyphs, one row per byte, low 5 bits used.
inline const uint8_t* glyph(int digit) {
    static const uint8_t font[10][7] = {
        {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
        {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
        {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
        {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
        {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
        {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
        {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
        {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
        {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
        {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
    };
    return font[digit];
}

inline double glyph_sample(int digit, double gx, double gy) {
    // bilinear over the binary glyph grid, zero outside
    const uint8_t* rows = glyph(digit);
    auto cell = [&](int x, int y) -> double {
        if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
        return (rows[y] >> (4 - x)) & 1 ? 1.0 : 0.0;
    };
    int x0 = int(std::floor(gx)), y0 = int(std::floor(gy));
    double fx = gx - x0, fy = gy - y0;
    return cell(x0, y0) * (1 - fx) * (1 - fy) + cell(x0 + 1, y0) * fx * (1 - fy) +
           cell(x0, y0 + 1) * (1 - fx) * fy + cell(x0 + 1, y0 + 1) * fx * fy;
}

inline uint8_t clamp_u8(double v) {
    return uint8_t(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace detail

inline Image digit_image(int digit, Rng& rng) {
    const int N = 28;
    double theta = rng.uniform(-0.30, 0.30);
    double scale = rng.uniform(0.80, 1.15);
    double shear = rng.uniform(-0.20, 0.20);
    double dx = rng.uniform(-3.0, 3.0), dy = rng.uniform(-3.0, 3.0);
    double cell = 3.1 * scale;
    double fg = rng.uniform(165.0, 255.0);
    double bg = rng.uniform(0.0, 45.0);
    double sigma = rng.uniform(6.0, 24.0);

    // inverse of: out = center + R(theta) * [[1, shear],[0,1]] * (g - gc) * cell
    double ct = std::cos(theta), st = std::sin(theta);
    Image img(N, N, 1);
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < N; ++x) {
            double px = x - (N / 2.0 + dx);
            double py = y - (N / 2.0 + dy);
            double rx = (ct * px + st * py) / cell;
            double ry = (-st * px + ct * py) / cell;
            rx -= shear * ry;
            double gx = rx + 2.5, gy = ry + 3.5;
            double v = detail::glyph_sample(digit, gx - 0.5, gy - 0.5);
            double pix = bg + (fg - bg) * v + sigma * detail::normal(rng);
            img.at(y, x, 0) = detail::clamp_u8(pix);
        }
    }
    return img;
}

inline dataset::LabeledDataset digits(int n, uint64_t seed) {
    dataset::LabeledDataset d;
    d.class_count = 10;
    d.images.reserve(size_t(n));
    d.labels.reserve(size_t(n));
    Rng rng(mix_seed(seed, 0xd161));
    for (int i = 0; i < n; ++i) {
        int label = rng.next_int(10);
        d.images.push_back(digit_image(label, rng));
        d.labels.push_back(label);
    }
    return d;
}

// ---------------------------------------------------------------------------
// color shapes

namespace detail {

inline bool in_triangle(double x, double y, double r, bool up) {
    if (!up) y = -y;
    // apex at (0,-r), base at y = 0.75r
    double ax = 0.0, ay = -r;
    double bx = -0.95 * r, by = 0.75 * r;
    double cx = 0.95 * r, cy = 0.75 * r;
    auto side = [&](double x1, double y1, double x2, double y2) {
        return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
    };
    double d1 = side(ax, ay, bx, by), d2 = side(bx, by, cx, cy), d3 = side(cx, cy, ax, ay);
    bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
    bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
    return !(neg && pos);
}

inline bool shape_inside(int cls, double x, double y, double r) {
    double ax = std::abs(x), ay = std::abs(y);
    switch (cls) {
        case 0: return x * x + y * y <= r * r;                                    // disc
        case 1: {                                                                 // ring
            double d2 = x * x + y * y;
            return d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
        }
        case 2: return std::max(ax, ay) <= 0.85 * r;                              // square
        case 3: {                                                                 // frame
            double m = std::max(ax, ay);
            return m <= 0.85 * r && m >= 0.5 * r;
        }
        case 4: return in_triangle(x, y, r, true);                                // triangle up
        case 5: return in_triangle(x, y, r, false);                               // triangle down
        case 6: return (ax <= 0.28 * r && ay <= r) || (ay <= 0.28 * r && ax <= r);  // plus
        case 7: {                                                                 // diagonal cross
            double u = (x + y) * M_SQRT1_2, v = (x - y) * M_SQRT1_2;
            return (std::abs(u) <= 0.28 * r || std::abs(v) <= 0.28 * r) && std::max(ax, ay) <= 0.9 * r;
        }
        case 8: {                                                                 // horizontal stripes
            if (ax > r || ay > r) return false;
            return (int(std::floor((y + r) / (r / 2.0))) % 2) == 0;
        }
        case 9: {                                                                 // checkerboard
            if (ax > r || ay > r) return false;
            int ix = int(std::floor((x + r) / r));
            int iy = int(std::floor((y + r) / r));
            return ((ix + iy) % 2) == 0;
        }
        default: return false;
    }
}

}  // namespace detail

inline Image shape_image(int cls, Rng& rng) {
    const int N = 32;
    double r = rng.uniform(8.0, 12.5);
    double cx = N / 2.0 + rng.uniform(-3.0, 3.0);
    double cy = N / 2.0 + rng.uniform(-3.0, 3.0);
    double theta = rng.uniform(-0.22, 0.22);
    double ct = std::cos(theta), st = std::sin(theta);
    double fg[3], bg[3];
    double dist = 0;
    do {
        dist = 0;
        for (int c = 0; c < 3; ++c) {
            fg[c] = rng.uniform(0.0, 255.0);
            bg[c] = rng.uniform(0.0, 255.0);
            dist += (fg[c] - bg[c]) * (fg[c] - bg[c]);
        }
    } while (dist < 90.0 * 90.0);
    double sigma = rng.uniform(4.0, 18.0);

    Image img(N, N, 3);
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < N; ++x) {
            // 2x2 supersampling
            double cover = 0.0;
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    double px = x + 0.25 + 0.5 * sx - cx;
                    double py = y + 0.25 + 0.5 * sy - cy;
                    double rx = ct * px + st * py;
                    double ry = -st * px + ct * py;
                    cover += detail::shape_inside(cls, rx, ry, r) ? 0.25 : 0.0;
                }
            }
            for (int c = 0; c < 3; ++c) {
                double pix = bg[c] + (fg[c] - bg[c]) * cover + sigma * detail::normal(rng);
                img.at(y, x, c) = detail::clamp_u8(pix);
            }
        }
    }
    return img;
}

inline dataset::LabeledDataset shapes(int n, uint64_t seed) {
    dataset::LabeledDataset d;
    d.class_count = 10;
    d.images.reserve(size_t(n));
    d.labels.reserve(size_t(n));
    Rng rng(mix_seed(seed, 0x54a9e));
    for (int i = 0; i < n; ++i) {
        int label = rng.next_int(10);
        d.images.push_back(shape_image(label, rng));
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace rose::synth
