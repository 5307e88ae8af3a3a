#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace xdx {

using u8 = std::uint8_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// Simulated time in microseconds from run start.
using SimTime = i64;

constexpr SimTime operator""_ms(unsigned long long v) { return static_cast<SimTime>(v) * 1000; }
constexpr SimTime operator""_s(unsigned long long v) { return static_cast<SimTime>(v) * 1000000; }

using Bytes = std::vector<u8>;
using Hash = std::array<u8, 32>;
using PeerId = std::array<u8, 32>;   // Ed25519 public key
using Signature = std::array<u8, 64>;

constexpr Hash kZeroHash{};          // genesis / absent-link sentinel

std::string to_hex(const u8* data, size_t n);

template <size_t N>
std::string to_hex(const std::array<u8, N>& a) { return to_hex(a.data(), N); }
inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }

// Short display form used in traces and reports.
template <size_t N>
std::string hex8(const std::array<u8, N>& a) { return to_hex(a.data(), 8 < N ? 8 : N); }

bool from_hex(const std::string& s, Bytes& out);

// Deterministic PRNG. std::mt19937_64 itself is portable but the std
// distributions are not; everything below avoids them.
class Rng {
public:
    explicit Rng(u64 seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    u64 next() {
        // splitmix64: tiny, well mixed, reproducible everywhere.
        u64 z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [lo, hi] inclusive. Modulo bias is irrelevant at our scales.
    i64 range(i64 lo, i64 hi) {
        if (lo >= hi) return lo;
        u64 span = static_cast<u64>(hi - lo) + 1;
        return lo + static_cast<i64>(next() % span);
    }

    double unit() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }

    // Sample k distinct values from [0, n) preserving ascending order.
    std::vector<u32> sample(u32 n, u32 k);

private:
    u64 state_;
};

// Exact rational with normalized sign and gcd-reduced terms. Prices must
// never round, so no floating point anywhere near ordering decisions.
struct Rational {
    i64 num = 0;
    i64 den = 1;

    Rational() = default;
    Rational(i64 n, i64 d) : num(n), den(d) {
        if (den == 0) throw std::invalid_argument("rational: zero denominator");
        if (den < 0) { num = -num; den = -den; }
        i64 g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    // Comparisons via cross multiplication in 128-bit to dodge overflow.
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
    }
    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

    friend Rational operator-(const Rational& a, const Rational& b) {
        return Rational(static_cast<i64>(static_cast<__int128>(a.num) * b.den -
                                         static_cast<__int128>(b.num) * a.den),
                        a.den * b.den);
    }

    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

std::string format_us(SimTime t);

}  // namespace xdx
