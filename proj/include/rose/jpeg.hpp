#pragma once

// Baseline-JPEG-style lossy round trip used as an input-preprocessing attack:
// 8x8 block DCT per channel (RGB via YCbCr, no chroma subsampling), standard
// quantization tables scaled by the conventional quality mapping, inverse
// transform, clamp. Deliberately codec-free; the semantic is the lossy 8x8
// DCT quantization, not bit parity with any particular encoder.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rose/image.hpp"

namespace rose::jpeg {

namespace detail {

// Annex-K reference tables.
inline const int* luma_table() {
    static const int t[64] = {
        16, 11, 10, 16, 24,  40,  51,  61,
        12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,
        14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,
        24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99};
    return t;
}

inline const int* chroma_table() {
    static const int t[64] = {
        17, 18, 24, 47, 99, 99, 99, 99,
        18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99,
        47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99};
    return t;
}

inline std::array<int, 64> scaled_table(const int* base, int qf) {
    int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
    std::array<int, 64> out{};
    for (int i = 0; i < 64; ++i) {
        int q = (base[i] * scale + 50) / 100;
        out[i] = std::min(255, std::max(1, q));
    }
    return out;
}

// 8-point DCT-II / DCT-III pair (JPEG normalization), applied separably.
inline void dct8(const double* in, double* out) {
    for (int u = 0; u < 8; ++u) {
        double cu = u == 0 ? M_SQRT1_2 : 1.0;
        double acc = 0.0;
        for (int x = 0; x < 8; ++x) acc += in[x] * std::cos((2 * x + 1) * u * M_PI / 16.0);
        out[u] = 0.5 * cu * acc;
    }
}

inline void idct8(const double* in, double* out) {
    for (int x = 0; x < 8; ++x) {
        double acc = 0.0;
        for (int u = 0; u < 8; ++u) {
            double cu = u == 0 ? M_SQRT1_2 : 1.0;
            acc += cu * in[u] * std::cos((2 * x + 1) * u * M_PI / 16.0);
        }
        out[x] = 0.5 * acc;
    }
}

inline void code_plane(std::vector<double>& plane, int ph, int pw, const std::array<int, 64>& q) {
    double block[64], tmp[64], row[8], col[8];
    for (int by = 0; by < ph; by += 8) {
        for (int bx = 0; bx < pw; bx += 8) {
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) block[y * 8 + x] = plane[size_t(by + y) * pw + bx + x] - 128.0;
            // forward: rows then columns
            for (int y = 0; y < 8; ++y) dct8(block + y * 8, tmp + y * 8);
            for (int x = 0; x < 8; ++x) {
                for (int y = 0; y < 8; ++y) col[y] = tmp[y * 8 + x];
                dct8(col, row);
                for (int y = 0; y < 8; ++y) block[y * 8 + x] = row[y];
            }
            // quantize / dequantize
            for (int i = 0; i < 64; ++i) block[i] = std::round(block[i] / q[size_t(i)]) * q[size_t(i)];
            // inverse: columns then rows
            for (int x = 0; x < 8; ++x) {
                for (int y = 0; y < 8; ++y) col[y] = block[y * 8 + x];
                idct8(col, row);
                for (int y = 0; y < 8; ++y) tmp[y * 8 + x] = row[y];
            }
            for (int y = 0; y < 8; ++y) idct8(tmp + y * 8, block + y * 8);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) plane[size_t(by + y) * pw + bx + x] = block[y * 8 + x] + 128.0;
        }
    }
}

inline uint8_t clamp_u8(double v) {
    return uint8_t(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace detail

// Lossy round trip at quality factor qf in [1,100]. Returns a new image of
// identical shape; the input is untouched.
inline Image roundtrip(const Image& img, int qf) {
    if (qf < 1 || qf > 100) throw std::domain_error("jpeg: quality factor must be in [1,100]");
    if (img.channels != 1 && img.channels != 3)
        throw std::domain_error("jpeg: only 1- or 3-channel images");
    int ph = (img.height + 7) / 8 * 8;
    int pw = (img.width + 7) / 8 * 8;

    // planes, edge-replicated to block multiples
    int nplanes = img.channels;
    std::vector<std::vector<double>> planes(size_t(nplanes), std::vector<double>(size_t(ph) * pw));
    for (int y = 0; y < ph; ++y) {
        int sy = std::min(y, img.height - 1);
        for (int x = 0; x < pw; ++x) {
            int sx = std::min(x, img.width - 1);
            if (img.channels == 1) {
                planes[0][size_t(y) * pw + x] = img.at(sy, sx, 0);
            } else {
                double r = img.at(sy, sx, 0), g = img.at(sy, sx, 1), b = img.at(sy, sx, 2);
                planes[0][size_t(y) * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b;
                planes[1][size_t(y) * pw + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
                planes[2][size_t(y) * pw + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
            }
        }
    }

    auto luma_q = detail::scaled_table(detail::luma_table(), qf);
    auto chroma_q = detail::scaled_table(detail::chroma_table(), qf);
    for (int p = 0; p < nplanes; ++p)
        detail::code_plane(planes[size_t(p)], ph, pw, p == 0 ? luma_q : chroma_q);

    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.channels == 1) {
                out.at(y, x, 0) = detail::clamp_u8(planes[0][size_t(y) * pw + x]);
            } else {
                double Y = planes[0][size_t(y) * pw + x];
                double cb = planes[1][size_t(y) * pw + x] - 128.0;
                double cr = planes[2][size_t(y) * pw + x] - 128.0;
                out.at(y, x, 0) = detail::clamp_u8(Y + 1.402 * cr);
                out.at(y, x, 1) = detail::clamp_u8(Y - 0.344136 * cb - 0.714136 * cr);
                out.at(y, x, 2) = detail::clamp_u8(Y + 1.772 * cb);
            }
        }
    }
    return out;
}

}  // namespace rose::jpeg
