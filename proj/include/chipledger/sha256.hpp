#pragma once

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

#include "chipledger/bytes.hpp"

namespace chipledger {

// Incremental SHA-256 over an owned EVP context. The context is reusable:
// finish() leaves it ready for the next message.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_) throw std::bad_alloc();
    reset();
  }

  Sha256(const Sha256& other) : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_) throw std::bad_alloc();
    if (EVP_MD_CTX_copy_ex(ctx_.get(), other.ctx_.get()) != 1) throw std::runtime_error("EVP_MD_CTX_copy_ex");
  }

  Sha256& operator=(const Sha256& other) {
    if (this != &other && EVP_MD_CTX_copy_ex(ctx_.get(), other.ctx_.get()) != 1)
      throw std::runtime_error("EVP_MD_CTX_copy_ex");
    return *this;
  }

  Sha256(Sha256&&) noexcept = default;
  Sha256& operator=(Sha256&&) noexcept = default;

  Sha256& update(ByteView data) {
    if (!data.empty() && EVP_DigestUpdate(ctx_.get(), data.data(), data.size()) != 1)
      throw std::runtime_error("EVP_DigestUpdate");
    return *this;
  }

  Sha256& update(std::string_view text) {
    return update(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  Digest finish() {
    Digest out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1) throw std::runtime_error("EVP_DigestFinal_ex");
    reset();
    return out;
  }

  void reset() {
    if (EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("EVP_DigestInit_ex");
  }

 private:
  struct Deleter {
    void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
  };
  std::unique_ptr<EVP_MD_CTX, Deleter> ctx_;
};

inline Digest sha256(ByteView data) { return Sha256().update(data).finish(); }

// HMAC over SHA-256 (two passes, 64-byte block). The padded key states are
// absorbed once, so each mac() costs two finalizations.
class HmacSha256 {
 public:
  static constexpr std::size_t kBlock = 64;

  explicit HmacSha256(ByteView key) {
    std::array<std::uint8_t, kBlock> block{};
    if (key.size() > kBlock) {
      auto folded = sha256(key);
      std::copy(folded.begin(), folded.end(), block.begin());
    } else {
      std::copy(key.begin(), key.end(), block.begin());
    }
    std::array<std::uint8_t, kBlock> ipad{}, opad{};
    for (std::size_t i = 0; i < kBlock; ++i) {
      ipad[i] = block[i] ^ 0x36;
      opad[i] = block[i] ^ 0x5c;
    }
    inner_.update(ipad);
    outer_.update(opad);
  }

  Digest mac(ByteView message) const {
    Sha256 inner = inner_;
    auto inner_digest = inner.update(message).finish();
    Sha256 outer = outer_;
    return outer.update(inner_digest).finish();
  }

 private:
  Sha256 inner_;
  Sha256 outer_;
};

inline unsigned leading_zero_bits(const Digest& d) {
  unsigned bits = 0;
  for (auto b : d) {
    if (b == 0) {
      bits += 8;
      continue;
    }
    for (int i = 7; i >= 0 && !(b & (1u << i)); --i) ++bits;
    break;
  }
  return bits;
}

}  // namespace chipledger
