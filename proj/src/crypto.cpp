#include "crypto.hpp"

#include <sodium.h>

#include <mutex>

namespace xdx::crypto {

static void ensure_init() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    });
}

Hash sha256(const u8* data, size_t n) {
    ensure_init();
    Hash h;
    crypto_hash_sha256(h.data(), data, n);
    return h;
}

Keypair keypair_from_seed(const Hash& seed) {
    ensure_init();
    static_assert(crypto_sign_SEEDBYTES == 32);
    Keypair kp;
    crypto_sign_seed_keypair(kp.pub.data(), kp.secret.data(), seed.data());
    return kp;
}

Signature sign(const Keypair& kp, const u8* msg, size_t n) {
    ensure_init();
    Signature sig;
    crypto_sign_detached(sig.data(), nullptr, msg, n, kp.secret.data());
    return sig;
}

bool verify(const PeerId& pub, const u8* msg, size_t n, const Signature& sig) {
    ensure_init();
    return crypto_sign_verify_detached(sig.data(), msg, n, pub.data()) == 0;
}

}  // namespace xdx::crypto
