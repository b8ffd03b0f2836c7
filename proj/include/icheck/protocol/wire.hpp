// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "icheck/core/errors.hpp"

namespace icheck::proto {

using Blob = std::vector<std::byte>;

inline constexpr std::size_t kMaxFramePayload = 64u << 20; // per-frame cap
inline constexpr std::size_t kFrameHeaderLen = 10;         // ICHK + ver + type + len
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr char kMagic[4] = {'I', 'C', 'H', 'K'};

// Big-endian primitive writer. Strings are u16 length + UTF-8, blobs are
// u32 length + bytes.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<std::byte>(v)); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v >> 8));
        u8(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        u16(static_cast<std::uint16_t>(v >> 16));
        u16(static_cast<std::uint16_t>(v));
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v >> 32));
        u32(static_cast<std::uint32_t>(v));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void str(const std::string &s) {
        if (s.size() > 0xFFFF)
            throw ProtocolError("string", "field exceeds 65535 bytes");
        u16(static_cast<std::uint16_t>(s.size()));
        append(s.data(), s.size());
    }
    void blob(const Blob &b) {
        if (b.size() > 0xFFFFFFFFull)
            throw ProtocolError("blob", "field exceeds u32 length");
        u32(static_cast<std::uint32_t>(b.size()));
        append(b.data(), b.size());
    }
    void append(const void *data, std::size_t len) {
        const auto *p = static_cast<const std::byte *>(data);
        buf_.insert(buf_.end(), p, p + len);
    }

    Blob take() { return std::move(buf_); }
    const Blob &bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

  private:
    Blob buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(u8()) << 8 | u8(); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(u16()) << 16 | u16(); }
    std::uint64_t u64() { return static_cast<std::uint64_t>(u32()) << 32 | u32(); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const auto len = u16();
        need(len);
        std::string s(reinterpret_cast<const char *>(data_.data() + pos_), len);
        pos_ += len;
        return s;
    }
    Blob blob() {
        const auto len = u32();
        need(len);
        Blob b(data_.begin() + pos_, data_.begin() + pos_ + len);
        pos_ += len;
        return b;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) {
        if (data_.size() - pos_ < n)
            throw ProtocolError("payload", "truncated payload");
    }

    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

} // namespace icheck::proto
