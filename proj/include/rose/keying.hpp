#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "rose/bytes.hpp"
#include "rose/image.hpp"
#include "rose/sha256.hpp"

namespace rose::keying {

struct SecretKey {
    std::array<uint8_t, 32> key_bytes{};
    std::string key_id;  // first 8 hex chars of sha256(key_bytes)
};

inline std::string key_fingerprint(const std::array<uint8_t, 32>& key_bytes) {
    Digest d = sha256(ByteView(key_bytes.data(), key_bytes.size()));
    return to_hex(ByteView(d.data(), d.size())).substr(0, 8);
}

inline SecretKey key_from_bytes(const std::array<uint8_t, 32>& bytes) {
    SecretKey sk;
    sk.key_bytes = bytes;
    sk.key_id = key_fingerprint(bytes);
    return sk;
}

// Keyed MAC over the owner's 32-byte key. All label derivations go through
// this one primitive so the three levels stay bit-exact across platforms.
inline Digest keyed_hash(ByteView data, const SecretKey& sk) {
    return hmac_sha256(ByteView(sk.key_bytes.data(), sk.key_bytes.size()), data);
}

// With an explicit seed the key expands deterministically from the same MAC
// primitive; without one it draws from the system entropy source.
inline SecretKey generate_key(std::optional<uint64_t> seed = std::nullopt) {
    std::array<uint8_t, 32> bytes{};
    if (seed) {
        Bytes seed_key;
        put_u64be(seed_key, *seed);
        static const char* label = "rose/keygen/v1";
        Digest d = hmac_sha256(ByteView(seed_key.data(), seed_key.size()),
                               ByteView(reinterpret_cast<const uint8_t*>(label), 14));
        std::copy(d.begin(), d.end(), bytes.begin());
    } else {
        std::random_device rd;
        Bytes pool;
        for (int i = 0; i < 8; ++i) put_u32be(pool, rd());
        put_u64be(pool, uint64_t(std::chrono::steady_clock::now().time_since_epoch().count()));
        put_u64be(pool, uint64_t(std::chrono::system_clock::now().time_since_epoch().count()));
        Digest d = sha256(ByteView(pool.data(), pool.size()));
        std::copy(d.begin(), d.end(), bytes.begin());
    }
    return key_from_bytes(bytes);
}

// Big-endian digest value modulo c. With a 256-bit digest and c <= 10^4 the
// deviation from uniform is below 2^-240 per class.
inline int digest_mod(const Digest& d, int c) {
    uint64_t acc = 0;
    for (uint8_t b : d) acc = (acc * 256 + b) % uint64_t(c);
    return int(acc);
}

struct LabelAssignment {
    int level = 0;
    int class_count = 0;
    std::vector<int> labels;
    // level 2: the joint hash h; level 0: the derivation record digest;
    // level 1: absent.
    std::optional<Digest> binding_digest;
};

namespace detail {

inline Bytes counter_bytes(uint32_t i) {
    Bytes b;
    put_u32be(b, i);
    return b;
}

inline void reject_duplicates(const std::vector<Bytes>& canon) {
    std::set<Digest> seen;
    for (const Bytes& b : canon) {
        Digest d = sha256(ByteView(b.data(), b.size()));
        if (!seen.insert(d).second)
            throw std::invalid_argument("duplicate trigger images are not allowed");
    }
}

}  // namespace detail

// Level 0: keyed-hash counter stream standing in for a seeded PRNG.
// labels[i] = H(counter_i; sk) mod c.
inline LabelAssignment labels_level0(const SecretKey& sk, int s, int c) {
    if (s < 1) throw std::domain_error("labels_level0: s must be >= 1");
    if (c < 2) throw std::domain_error("labels_level0: c must be >= 2");
    LabelAssignment a;
    a.level = 0;
    a.class_count = c;
    a.labels.reserve(size_t(s));
    for (int i = 0; i < s; ++i) {
        Bytes ctr = detail::counter_bytes(uint32_t(i));
        a.labels.push_back(digest_mod(keyed_hash(ByteView(ctr.data(), ctr.size()), sk), c));
    }
    static const char* record = "rose/level0/v1";
    a.binding_digest = keyed_hash(ByteView(reinterpret_cast<const uint8_t*>(record), 14), sk);
    return a;
}

// Level 1: per-trigger binding. labels[i] = H(canonical(x_i); sk) mod c.
inline LabelAssignment labels_level1(const std::vector<Image>& triggers, const SecretKey& sk, int c) {
    if (triggers.empty()) throw std::domain_error("labels_level1: triggers must be non-empty");
    if (c < 2) throw std::domain_error("labels_level1: c must be >= 2");
    std::vector<Bytes> canon;
    canon.reserve(triggers.size());
    for (const Image& img : triggers) canon.push_back(canonical_bytes(img));
    detail::reject_duplicates(canon);
    LabelAssignment a;
    a.level = 1;
    a.class_count = c;
    a.labels.reserve(triggers.size());
    for (const Bytes& b : canon)
        a.labels.push_back(digest_mod(keyed_hash(ByteView(b.data(), b.size()), sk), c));
    return a;
}

// Level 2: joint binding. h = H(canonical(x_1) || ... || canonical(x_s); sk),
// labels[i] = H(h || counter_i; sk) mod c. Editing any byte of any trigger,
// or permuting the order, re-randomizes every label.
inline LabelAssignment labels_level2(const std::vector<Image>& triggers, const SecretKey& sk, int c) {
    if (triggers.empty()) throw std::domain_error("labels_level2: triggers must be non-empty");
    if (c < 2) throw std::domain_error("labels_level2: c must be >= 2");
    std::vector<Bytes> canon;
    canon.reserve(triggers.size());
    for (const Image& img : triggers) canon.push_back(canonical_bytes(img));
    detail::reject_duplicates(canon);
    HmacSha256 joint(sk.key_bytes.data(), sk.key_bytes.size());
    for (const Bytes& b : canon) joint.write(ByteView(b.data(), b.size()));
    Digest h = joint.finalize();
    LabelAssignment a;
    a.level = 2;
    a.class_count = c;
    a.binding_digest = h;
    a.labels.reserve(triggers.size());
    for (size_t i = 0; i < triggers.size(); ++i) {
        Bytes msg(h.begin(), h.end());
        put_u32be(msg, uint32_t(i));
        a.labels.push_back(digest_mod(keyed_hash(ByteView(msg.data(), msg.size()), sk), c));
    }
    return a;
}

inline LabelAssignment derive_labels(int level, const std::vector<Image>& triggers,
                                     const SecretKey& sk, int c) {
    switch (level) {
        case 0: return labels_level0(sk, int(triggers.size()), c);
        case 1: return labels_level1(triggers, sk, c);
        case 2: return labels_level2(triggers, sk, c);
        default: throw std::domain_error("derive_labels: level must be 0, 1 or 2");
    }
}

// Key file: 64 hex chars + newline. Holds the raw secret; bundles only ever
// carry it under an explicit disclose flag.
inline void save_key(const std::string& path, const SecretKey& sk) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write key file: " + path);
    f << to_hex(ByteView(sk.key_bytes.data(), sk.key_bytes.size())) << "\n";
}

inline SecretKey load_key(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read key file: " + path);
    std::string hex;
    f >> hex;
    Bytes raw = from_hex(hex);
    if (raw.size() != 32) throw std::runtime_error("key file must hold exactly 64 hex chars: " + path);
    std::array<uint8_t, 32> bytes{};
    std::copy(raw.begin(), raw.end(), bytes.begin());
    return key_from_bytes(bytes);
}

}  // namespace rose::keying
