#pragma once

#include <gmpxx.h>

#include "chipledger/bytes.hpp"

namespace chipledger {

using BigInt = mpz_class;

inline std::size_t bit_length(const BigInt& v) { return v == 0 ? 0 : mpz_sizeinbase(v.get_mpz_t(), 2); }

inline std::size_t byte_length(const BigInt& v) { return (bit_length(v) + 7) / 8; }

// Minimal big-endian magnitude; zero encodes as no bytes.
inline Bytes to_bytes_be(const BigInt& v) {
  Bytes out(byte_length(v));
  if (!out.empty()) {
    std::size_t written = 0;
    mpz_export(out.data(), &written, 1, 1, 1, 0, v.get_mpz_t());
  }
  return out;
}

// Left-padded to exactly `width` bytes; callers guarantee it fits.
inline Bytes to_bytes_be(const BigInt& v, std::size_t width) {
  auto raw = to_bytes_be(v);
  Bytes out(width - raw.size(), 0);
  out.insert(out.end(), raw.begin(), raw.end());
  return out;
}

inline BigInt from_bytes_be(ByteView data) {
  BigInt v;
  if (!data.empty()) mpz_import(v.get_mpz_t(), data.size(), 1, 1, 1, 0, data.data());
  return v;
}

}  // namespace chipledger
