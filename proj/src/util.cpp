#include "util.hpp"

#include <algorithm>

namespace xdx {

std::string to_hex(const u8* data, size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

static int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

bool from_hex(const std::string& s, Bytes& out) {
    if (s.size() % 2) return false;
    out.clear();
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = hex_val(s[i]), lo = hex_val(s[i + 1]);
        if (hi < 0 || lo < 0) return false;
        out.push_back(static_cast<u8>(hi << 4 | lo));
    }
    return true;
}

std::vector<u32> Rng::sample(u32 n, u32 k) {
    std::vector<u32> pool(n);
    for (u32 i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    // partial Fisher-Yates, then sort the prefix for stable output
    for (u32 i = 0; i < k; ++i) {
        u32 j = i + static_cast<u32>(next() % (n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::string format_us(SimTime t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(t));
    return buf;
}

}  // namespace xdx
