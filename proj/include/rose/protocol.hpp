#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rose/bytes.hpp"
#include "rose/keying.hpp"
#include "rose/stats.hpp"
#include "rose/watermark.hpp"
#include "rose/wire.hpp"

namespace rose::protocol {

// What a claimed Owner hands the Verifier: the triggers in committed order
// plus keying material. Either the secret key itself is disclosed (the
// Verifier re-derives every label) or the precomputed labels ship with only
// the key fingerprint.
struct EvidenceBundle {
    int level = 2;
    int s = 0;
    int class_count = 0;
    std::vector<Image> triggers;
    bool key_disclosed = false;
    std::optional<keying::SecretKey> sk;
    std::optional<keying::LabelAssignment> labels;
    std::string key_id;
    Digest digest{};  // seals every field above
};

namespace detail {

inline Digest bundle_digest(const EvidenceBundle& b) {
    Sha256 h;
    static const char* tag = "ROSEBUNDLE v1";
    h.write(reinterpret_cast<const uint8_t*>(tag), 13);
    Bytes fixed;
    put_u32be(fixed, uint32_t(b.level));
    put_u32be(fixed, uint32_t(b.s));
    put_u32be(fixed, uint32_t(b.class_count));
    fixed.push_back(b.key_disclosed ? 1 : 0);
    h.write(ByteView(fixed.data(), fixed.size()));
    if (b.key_disclosed) {
        if (!b.sk) throw VerifyError("bundle: disclosed flag set but no key present");
        h.write(b.sk->key_bytes.data(), b.sk->key_bytes.size());
    } else {
        if (!b.labels) throw VerifyError("bundle: undisclosed key but no labels present");
        Bytes lab;
        for (int l : b.labels->labels) put_u32be(lab, uint32_t(l));
        h.write(ByteView(lab.data(), lab.size()));
    }
    h.write(reinterpret_cast<const uint8_t*>(b.key_id.data()), b.key_id.size());
    for (const Image& img : b.triggers) {
        Bytes canon = canonical_bytes(img);
        Bytes len;
        put_u32be(len, uint32_t(canon.size()));
        h.write(ByteView(len.data(), len.size()));
        h.write(ByteView(canon.data(), canon.size()));
    }
    return h.finalize();
}

inline std::string labels_digest_hex(const std::vector<int>& labels) {
    Bytes raw;
    for (int l : labels) put_u32be(raw, uint32_t(l));
    Digest d = sha256(ByteView(raw.data(), raw.size()));
    return to_hex(ByteView(d.data(), d.size()));
}

}  // namespace detail

// Seals the Owner's evidence. Labels are re-derived from (sk, level,
// triggers) and must agree with the trigger set, otherwise the bundle is
// refused: an inconsistent bundle could never verify anyway.
inline EvidenceBundle make_evidence(const keying::SecretKey& sk, const wm::TriggerSet& triggers,
                                    bool disclose_key) {
    if (!triggers.labels_set()) throw std::invalid_argument("make_evidence: trigger labels not set");
    if (triggers.s < 1) throw std::invalid_argument("make_evidence: empty trigger set");
    keying::LabelAssignment fresh =
        keying::derive_labels(triggers.level, triggers.images, sk, triggers.class_count);
    if (fresh.labels != triggers.labels.labels)
        throw VerifyError(
            "make_evidence: trigger labels are inconsistent with this key/level; refusing to seal");
    if (sk.key_id != triggers.key_id)
        throw VerifyError("make_evidence: key fingerprint does not match the trigger set");

    EvidenceBundle b;
    b.level = triggers.level;
    b.s = triggers.s;
    b.class_count = triggers.class_count;
    b.triggers = triggers.images;
    b.key_disclosed = disclose_key;
    b.key_id = sk.key_id;
    if (disclose_key)
        b.sk = sk;
    else
        b.labels = fresh;
    b.digest = detail::bundle_digest(b);
    return b;
}

struct VerificationReport {
    int m = 0;
    int s = 0;
    int class_count = 0;
    double rec = 0.0;
    double rarity_bits = 0.0;
    int rarity_floor = 0;
    double r_min = 20.0;
    bool granted = false;
    std::string decision;  // "granted" | "denied"
    std::string labels_digest;
    std::string model_fingerprint;
    std::string endpoint;  // set by remote verification

    std::string summary() const {
        std::ostringstream os;
        os << decision << ": matches " << m << "/" << s << " (rec " << rec << "%), rarity "
           << rarity_floor << " bits (exact " << rarity_bits << "), threshold " << r_min << " bits";
        return os.str();
    }
};

// Black-box verification: recompute labels (when the key is disclosed), query
// the oracle exactly once per trigger, threshold the rarity. Transport and
// format problems throw (abort); only a completed count can deny.
inline VerificationReport verify(const EvidenceBundle& bundle, const wm::PredictFn& oracle,
                                 double r_min = 20.0, const std::string& fingerprint = "") {
    if (bundle.s < 1 || int(bundle.triggers.size()) != bundle.s)
        throw VerifyError("verify: malformed bundle (trigger count)");
    if (detail::bundle_digest(bundle) != bundle.digest)
        throw VerifyError("verify: bundle digest mismatch (evidence tampered or corrupted)");

    std::vector<int> labels;
    if (bundle.key_disclosed) {
        // the Verifier trusts only its own recomputation
        labels = keying::derive_labels(bundle.level, bundle.triggers, *bundle.sk, bundle.class_count)
                     .labels;
    } else {
        labels = bundle.labels->labels;
    }
    if (int(labels.size()) != bundle.s) throw VerifyError("verify: label count mismatch");

    int m = 0;
    for (int i = 0; i < bundle.s; ++i) {  // exactly s oracle queries
        int cls = oracle(bundle.triggers[size_t(i)]);
        if (cls < 0 || cls >= bundle.class_count)
            throw VerifyError("verify: oracle answered class " + std::to_string(cls) +
                              ", outside 0.." + std::to_string(bundle.class_count - 1));
        if (cls == labels[size_t(i)]) ++m;
    }

    stats::RarityResult rar = stats::rarity(bundle.s, m, bundle.class_count);
    VerificationReport rep;
    rep.m = m;
    rep.s = bundle.s;
    rep.class_count = bundle.class_count;
    rep.rec = 100.0 * double(m) / double(bundle.s);
    rep.rarity_bits = rar.rarity_bits;
    rep.rarity_floor = rar.floor_bits();
    rep.r_min = r_min;
    rep.granted = rar.rarity_bits >= r_min;
    rep.decision = rep.granted ? "granted" : "denied";
    rep.labels_digest = detail::labels_digest_hex(labels);
    rep.model_fingerprint = fingerprint;
    return rep;
}

// Same protocol against a remote prediction service. Endpoint identity is
// recorded in the report; transport failure aborts with TransportError, which
// is distinct from a denial.
inline VerificationReport verify_remote(const EvidenceBundle& bundle, const std::string& endpoint,
                                        double r_min = 20.0, int timeout_ms = 5000) {
    wire::PredictionClient client = wire::PredictionClient::parse(endpoint, timeout_ms);
    wm::PredictFn oracle = [&client](const Image& img) { return client.predict(img); };
    VerificationReport rep = verify(bundle, oracle, r_min, "endpoint:" + endpoint);
    rep.endpoint = endpoint;
    return rep;
}

// ---------------------------------------------------------------------------
// bundle file: structured-text header + binary trigger block

inline void save_bundle(const std::string& path, const EvidenceBundle& b) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write bundle file: " + path);
    f << "ROSEBUNDLE v1\n";
    f << "level = " << b.level << "\n";
    f << "s = " << b.s << "\n";
    f << "classes = " << b.class_count << "\n";
    f << "key_id = " << b.key_id << "\n";
    f << "digest = " << to_hex(ByteView(b.digest.data(), b.digest.size())) << "\n";
    f << "key_disclosed = " << (b.key_disclosed ? 1 : 0) << "\n";
    if (b.key_disclosed) {
        f << "key = " << to_hex(ByteView(b.sk->key_bytes.data(), 32)) << "\n";
    } else {
        f << "labels =";
        for (int l : b.labels->labels) f << " " << l;
        f << "\n";
    }
    for (const Image& img : b.triggers) {
        Bytes canon = canonical_bytes(img);
        Bytes len;
        put_u32be(len, uint32_t(canon.size()));
        f.write(reinterpret_cast<const char*>(len.data()), 4);
        f.write(reinterpret_cast<const char*>(canon.data()), std::streamsize(canon.size()));
    }
}

inline EvidenceBundle load_bundle(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read bundle file: " + path);
    std::string line;
    auto next = [&]() {
        if (!std::getline(f, line)) throw std::runtime_error("bundle file truncated: " + path);
        return line;
    };
    auto field = [&](const std::string& l, const std::string& key) -> std::string {
        std::string prefix = key + " = ";
        if (l.rfind(prefix, 0) != 0) throw std::runtime_error("bundle file: expected " + key);
        return l.substr(prefix.size());
    };
    if (next() != "ROSEBUNDLE v1") throw std::runtime_error("not a bundle file: " + path);
    EvidenceBundle b;
    b.level = std::stoi(field(next(), "level"));
    b.s = std::stoi(field(next(), "s"));
    b.class_count = std::stoi(field(next(), "classes"));
    b.key_id = field(next(), "key_id");
    Bytes dig = from_hex(field(next(), "digest"));
    if (dig.size() != 32) throw std::runtime_error("bundle file: bad digest length");
    std::copy(dig.begin(), dig.end(), b.digest.begin());
    b.key_disclosed = std::stoi(field(next(), "key_disclosed")) != 0;
    if (b.key_disclosed) {
        Bytes raw = from_hex(field(next(), "key"));
        if (raw.size() != 32) throw std::runtime_error("bundle file: bad key length");
        std::array<uint8_t, 32> kb{};
        std::copy(raw.begin(), raw.end(), kb.begin());
        b.sk = keying::key_from_bytes(kb);
    } else {
        keying::LabelAssignment a;
        a.level = b.level;
        a.class_count = b.class_count;
        std::istringstream is(field(next(), "labels"));
        int x;
        while (is >> x) a.labels.push_back(x);
        b.labels = a;
    }
    for (int i = 0; i < b.s; ++i) {
        uint8_t lenbuf[4];
        f.read(reinterpret_cast<char*>(lenbuf), 4);
        if (!f) throw std::runtime_error("bundle file: truncated trigger block");
        uint32_t len = get_u32be(lenbuf);
        Bytes canon(len);
        f.read(reinterpret_cast<char*>(canon.data()), std::streamsize(len));
        if (!f) throw std::runtime_error("bundle file: truncated trigger block");
        b.triggers.push_back(parse_canonical(ByteView(canon.data(), canon.size())));
    }
    return b;
}

}  // namespace rose::protocol
