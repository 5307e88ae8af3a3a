#pragma once

#include "util.hpp"

namespace xdx::crypto {

// SHA-256 over arbitrary bytes.
Hash sha256(const u8* data, size_t n);
inline Hash sha256(const Bytes& b) { return sha256(b.data(), b.size()); }

struct Keypair {
    PeerId pub{};
    std::array<u8, 64> secret{};   // Ed25519 expanded secret key
};

// Deterministic keypair from a 32-byte seed. Peers derive their seed from
// the scenario seed, which keeps identities and signatures reproducible.
Keypair keypair_from_seed(const Hash& seed);

Signature sign(const Keypair& kp, const u8* msg, size_t n);
inline Signature sign(const Keypair& kp, const Bytes& b) { return sign(kp, b.data(), b.size()); }
inline Signature sign(const Keypair& kp, const Hash& h) { return sign(kp, h.data(), h.size()); }

bool verify(const PeerId& pub, const u8* msg, size_t n, const Signature& sig);
inline bool verify(const PeerId& pub, const Bytes& b, const Signature& sig) {
    return verify(pub, b.data(), b.size(), sig);
}
inline bool verify(const PeerId& pub, const Hash& h, const Signature& sig) {
    return verify(pub, h.data(), h.size(), sig);
}

}  // namespace xdx::crypto
