#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rose/bytes.hpp"

namespace rose {

// 8-bit image, row-major, channel-interleaved (HWC). This is the only pixel
// storage in the project: hashing, triggers and attacks all operate on it,
// independent of whatever normalization the inference engine applies.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    Bytes pixels;  // height * width * channels bytes

    Image() = default;
    Image(int h, int w, int c, uint8_t fill = 0)
        : height(h), width(w), channels(c), pixels(size_t(h) * w * c, fill) {}

    size_t size() const { return pixels.size(); }

    uint8_t& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * channels + c]; }
    uint8_t at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * channels + c]; }

    bool operator==(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels && pixels == o.pixels;
    }
};

inline constexpr char kCanonicalTag[4] = {'R', 'O', 'S', 'E'};

// Platform-independent byte serialization: tag | height | width | channels
// (4-byte big-endian each) | raw pixel bytes. Keyed hashing is defined over
// exactly these bytes.
inline Bytes canonical_bytes(const Image& img) {
    if (img.height <= 0 || img.width <= 0 || img.channels <= 0)
        throw std::invalid_argument("canonical_bytes: empty image");
    if (img.pixels.size() != size_t(img.height) * img.width * img.channels)
        throw std::invalid_argument("canonical_bytes: pixel buffer does not match declared shape");
    Bytes out;
    out.reserve(16 + img.pixels.size());
    out.insert(out.end(), kCanonicalTag, kCanonicalTag + 4);
    put_u32be(out, uint32_t(img.height));
    put_u32be(out, uint32_t(img.width));
    put_u32be(out, uint32_t(img.channels));
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline Image parse_canonical(ByteView bytes) {
    if (bytes.size() < 16) throw std::invalid_argument("canonical image: truncated header");
    if (std::memcmp(bytes.data(), kCanonicalTag, 4) != 0)
        throw std::invalid_argument("canonical image: bad tag");
    Image img;
    img.height = int(get_u32be(bytes.data() + 4));
    img.width = int(get_u32be(bytes.data() + 8));
    img.channels = int(get_u32be(bytes.data() + 12));
    if (img.height <= 0 || img.width <= 0 || img.channels <= 0 ||
        img.height > 1 << 16 || img.width > 1 << 16 || img.channels > 16)
        throw std::invalid_argument("canonical image: implausible shape");
    size_t n = size_t(img.height) * img.width * img.channels;
    if (bytes.size() != 16 + n) throw std::invalid_argument("canonical image: length mismatch");
    img.pixels.assign(bytes.begin() + 16, bytes.end());
    return img;
}

}  // namespace rose
