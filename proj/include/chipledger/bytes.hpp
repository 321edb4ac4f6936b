#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chipledger/error.hpp"

namespace chipledger {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

inline void put_be32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_be64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void append(Bytes& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

inline void append(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

// 4-byte big-endian length followed by the payload.
inline void put_prefixed(Bytes& out, ByteView data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  append(out, data);
}

// Cursor over a wire buffer; every short read raises Malformed.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint32_t be32() {
    auto raw = take(4);
    std::uint32_t v = 0;
    for (auto b : raw) v = (v << 8) | b;
    return v;
  }

  std::uint64_t be64() {
    auto raw = take(8);
    std::uint64_t v = 0;
    for (auto b : raw) v = (v << 8) | b;
    return v;
  }

  ByteView take(std::size_t n) {
    if (n > remaining()) throw Error(ErrorCode::Malformed, "truncated buffer");
    auto view = data_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  Digest digest() {
    Digest d{};
    auto raw = take(d.size());
    std::copy(raw.begin(), raw.end(), d.begin());
    return d;
  }

  Bytes prefixed() {
    auto n = be32();
    auto raw = take(n);
    return Bytes(raw.begin(), raw.end());
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

  void expect_done() const {
    if (!done()) throw Error(ErrorCode::Malformed, "trailing bytes");
  }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

inline std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(ErrorCode::Malformed, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::Malformed, "invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

}  // namespace chipledger
