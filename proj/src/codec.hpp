#pragma once

// Canonical length-prefixed encoding. Every hashed, signed, or wire-carried
// structure serializes through this, so the rules are deliberately rigid:
// all integers big-endian, byte strings u32-length-prefixed, sequences
// u32-count-prefixed, optionals a 0/1 presence byte. Two encoders given the
// same value produce identical bytes on any platform.

#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>

#include "util.hpp"

namespace xdx {

class Encoder {
public:
    void put_u8(u8 v) { buf_.push_back(v); }

    void put_u32(u32 v) {
        for (int i = 3; i >= 0; --i) buf_.push_back(static_cast<u8>(v >> (8 * i)));
    }

    void put_u64(u64 v) {
        for (int i = 7; i >= 0; --i) buf_.push_back(static_cast<u8>(v >> (8 * i)));
    }

    void put_i64(i64 v) { put_u64(static_cast<u64>(v)); }

    template <size_t N>
    void put_fixed(const std::array<u8, N>& a) { buf_.insert(buf_.end(), a.begin(), a.end()); }

    void put_bytes(const u8* data, size_t n) {
        put_u32(static_cast<u32>(n));
        buf_.insert(buf_.end(), data, data + n);
    }
    void put_bytes(const Bytes& b) { put_bytes(b.data(), b.size()); }
    void put_str(const std::string& s) { put_bytes(reinterpret_cast<const u8*>(s.data()), s.size()); }

    void put_bool(bool b) { put_u8(b ? 1 : 0); }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& what) : std::runtime_error("decode: " + what) {}
};

class Decoder {
public:
    explicit Decoder(const Bytes& b) : data_(b.data()), size_(b.size()) {}
    Decoder(const u8* data, size_t n) : data_(data), size_(n) {}

    u8 get_u8() { need(1); return data_[pos_++]; }

    u32 get_u32() {
        need(4);
        u32 v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | data_[pos_++];
        return v;
    }

    u64 get_u64() {
        need(8);
        u64 v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | data_[pos_++];
        return v;
    }

    i64 get_i64() { return static_cast<i64>(get_u64()); }

    template <size_t N>
    std::array<u8, N> get_fixed() {
        need(N);
        std::array<u8, N> a;
        std::memcpy(a.data(), data_ + pos_, N);
        pos_ += N;
        return a;
    }

    Bytes get_bytes() {
        u32 n = get_u32();
        need(n);
        Bytes b(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return b;
    }

    std::string get_str() {
        Bytes b = get_bytes();
        return std::string(b.begin(), b.end());
    }

    bool get_bool() {
        u8 v = get_u8();
        if (v > 1) throw DecodeError("bad bool");
        return v == 1;
    }

    bool done() const { return pos_ == size_; }
    size_t remaining() const { return size_ - pos_; }

    void expect_done() const {
        if (!done()) throw DecodeError("trailing bytes");
    }

private:
    void need(size_t n) const {
        if (pos_ + n > size_) throw DecodeError("truncated input");
    }

    const u8* data_;
    size_t size_;
    size_t pos_ = 0;
};

}  // namespace xdx
