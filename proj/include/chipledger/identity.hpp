#pragma once

#include <gmpxx.h>

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "chipledger/bigint.hpp"
#include "chipledger/bytes.hpp"
#include "chipledger/chip_model.hpp"
#include "chipledger/error.hpp"
#include "chipledger/sha256.hpp"

namespace chipledger {

enum class Issuer : std::uint8_t { management, security };

constexpr std::string_view issuer_name(Issuer issuer) {
  return issuer == Issuer::management ? "management" : "security";
}

struct Challenge {
  std::uint64_t state_index = 0;
  Issuer issuer = Issuer::management;
  Digest bytes{};
};

// C_l = SHA-256(domain tag || issuer tag || be64(l)). The issuer tag keeps
// management and security challenges apart for the same l.
inline Challenge make_challenge(std::uint64_t state_index, Issuer issuer) {
  Bytes input;
  append(input, std::string_view("chipledger/challenge/v1"));
  input.push_back(0);
  append(input, issuer_name(issuer));
  input.push_back(0);
  put_be64(input, state_index);
  return {state_index, issuer, sha256(input)};
}

struct Response {
  ChipId chip_id;
  std::uint64_t state_index = 0;
  std::array<std::uint8_t, 64> bytes{};

  friend bool operator==(const Response&, const Response&) = default;
};

// R_n(C) = f(C, PRN(n)): HMAC-SHA-256 keyed by the PRN's canonical bytes,
// then stretched to 64 bytes as SHA-256(mac || be32(1)) || SHA-256(mac || be32(2)).
inline Response respond(const Prn& prn, const Challenge& challenge) {
  const auto key = prn.canonical_bytes();
  const auto mac = HmacSha256(key).mac(challenge.bytes);
  Response r{prn.chip_id, challenge.state_index, {}};
  for (std::uint32_t block = 1; block <= 2; ++block) {
    Bytes input(mac.begin(), mac.end());
    put_be32(input, block);
    auto d = sha256(input);
    std::copy(d.begin(), d.end(), r.bytes.begin() + (block - 1) * 32);
  }
  return r;
}

struct PublicKey {
  BigInt modulus;
  BigInt exponent;

  std::size_t modulus_bytes() const { return byte_length(modulus); }

  // [be32 len | modulus BE][be32 len | exponent BE]
  Bytes serialize() const {
    Bytes out;
    put_prefixed(out, to_bytes_be(modulus));
    put_prefixed(out, to_bytes_be(exponent));
    return out;
  }

  static PublicKey read(ByteReader& reader) {
    auto mod = reader.prefixed();
    auto exp = reader.prefixed();
    if (mod.empty() || exp.empty() || mod.front() == 0 || exp.front() == 0)
      throw Error(ErrorCode::Malformed, "non-canonical public key encoding");
    return {from_bytes_be(mod), from_bytes_be(exp)};
  }

  static PublicKey parse(ByteView data) {
    ByteReader reader(data);
    auto pk = read(reader);
    reader.expect_done();
    return pk;
  }

  friend bool operator==(const PublicKey& a, const PublicKey& b) {
    return a.modulus == b.modulus && a.exponent == b.exponent;
  }
};

struct SecretKey {
  BigInt modulus;
  BigInt exponent;
  // Retained so tests can check the key algebra; never serialized.
  BigInt prime_p;
  BigInt prime_q;
};

struct ChipKeyPair {
  ChipId chip_id;
  std::uint64_t state_index = 0;
  unsigned modulus_bits = 0;
  PublicKey public_key;
  SecretKey secret_key;
};

namespace detail {

inline const std::vector<unsigned long>& small_primes() {
  static const std::vector<unsigned long> primes = [] {
    constexpr unsigned long kLimit = 2048;
    std::vector<bool> composite(kLimit, false);
    std::vector<unsigned long> out;
    for (unsigned long i = 2; i < kLimit; ++i) {
      if (composite[i]) continue;
      out.push_back(i);
      for (unsigned long j = i * i; j < kLimit; j += i) composite[j] = true;
    }
    return out;
  }();
  return primes;
}

// Counter-mode SHA-256 stream keyed by a response.
class KeygenStream {
 public:
  explicit KeygenStream(std::span<const std::uint8_t, 64> seed) : seed_(seed.begin(), seed.end()) {}

  Bytes take(std::size_t n) {
    Bytes out;
    out.reserve(n);
    while (out.size() < n) {
      if (offset_ == block_.size()) refill();
      out.push_back(block_[offset_++]);
    }
    return out;
  }

 private:
  void refill() {
    Bytes input;
    append(input, std::string_view("chipledger/keygen/v1"));
    append(input, seed_);
    put_be32(input, counter_++);
    block_ = sha256(input);
    offset_ = 0;
  }

  Bytes seed_;
  Digest block_{};
  std::size_t offset_ = 32;
  std::uint32_t counter_ = 0;
};

}  // namespace detail

constexpr unsigned kMillerRabinRounds = 40;

// Miller-Rabin with the first 40 primes as witnesses (a fixed schedule, so
// the result is deterministic). `n` must be odd and larger than the bases.
inline bool miller_rabin(const BigInt& n, unsigned rounds = kMillerRabinRounds) {
  const auto& bases = detail::small_primes();
  BigInt d = n - 1;
  const auto s = mpz_scan1(d.get_mpz_t(), 0);
  mpz_tdiv_q_2exp(d.get_mpz_t(), d.get_mpz_t(), s);
  const BigInt n_minus_1 = n - 1;
  BigInt x;
  for (unsigned i = 0; i < rounds && i < bases.size(); ++i) {
    BigInt a = bases[i];
    if (a >= n_minus_1) continue;
    mpz_powm(x.get_mpz_t(), a.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
    if (x == 1 || x == n_minus_1) continue;
    bool witness = true;
    for (mp_bitcnt_t r = 1; r < s; ++r) {
      mpz_powm_ui(x.get_mpz_t(), x.get_mpz_t(), 2, n.get_mpz_t());
      if (x == n_minus_1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

inline bool is_probable_prime(const BigInt& n) {
  if (n < 2) return false;
  for (auto p : detail::small_primes()) {
    if (n == p) return true;
    if (mpz_divisible_ui_p(n.get_mpz_t(), p)) return false;
  }
  return miller_rabin(n);
}

// Smallest probable prime >= start (start made odd), scanning at most
// `window` odd candidates without leaving [0, 2^bits).
inline BigInt next_prime(BigInt candidate, std::size_t bits, std::uint32_t window) {
  if (mpz_even_p(candidate.get_mpz_t())) candidate += 1;
  const auto& primes = detail::small_primes();
  std::vector<unsigned long> residues(primes.size());
  for (std::size_t i = 0; i < primes.size(); ++i) residues[i] = mpz_fdiv_ui(candidate.get_mpz_t(), primes[i]);
  for (std::uint32_t step = 0; step < window; ++step) {
    if (bit_length(candidate) > bits) break;
    bool sieved = false;
    for (std::size_t i = 0; i < primes.size(); ++i) {
      if (residues[i] == 0 && candidate != primes[i]) {
        sieved = true;
        break;
      }
    }
    if (!sieved && candidate > 2 && miller_rabin(candidate)) return candidate;
    candidate += 2;
    for (std::size_t i = 0; i < primes.size(); ++i) {
      residues[i] += 2;
      if (residues[i] >= primes[i]) residues[i] -= primes[i];
    }
  }
  throw Error(ErrorCode::PrimeSearchExhausted, "no prime within the search window");
}

struct KeygenOptions {
  unsigned modulus_bits = 1024;
  std::uint32_t search_window = 1u << 16;  // odd candidates per prime
};

// SK_n(C) / PK_n(C): RSA keys grown deterministically from a response.
// Accepts any modulus size that is a multiple of 16 (>= 32); the desk sizes
// go through the unsigned overload below.
inline ChipKeyPair derive_keypair(const Response& response, const KeygenOptions& options) {
  const unsigned bits = options.modulus_bits;
  if (bits < 32 || bits % 16 != 0) throw Error(ErrorCode::InvalidArgument, "modulus_bits must be a multiple of 16");
  const std::size_t half = bits / 2;
  detail::KeygenStream stream(response.bytes);

  auto draw_prime = [&] {
    BigInt c = from_bytes_be(stream.take(half / 8));
    mpz_setbit(c.get_mpz_t(), half - 1);
    mpz_setbit(c.get_mpz_t(), half - 2);
    mpz_setbit(c.get_mpz_t(), 0);
    return next_prime(c, half, options.search_window);
  };

  BigInt p = draw_prime();
  BigInt q = draw_prime();
  for (int guard = 0; q == p; ++guard) {
    if (guard > 8) throw Error(ErrorCode::PrimeSearchExhausted, "could not draw distinct primes");
    q = draw_prime();
  }
  if (p < q) std::swap(p, q);

  const BigInt n = p * q;
  const BigInt phi = (p - 1) * (q - 1);
  BigInt e = 65537;
  BigInt g;
  while (true) {
    mpz_gcd(g.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t());
    if (g == 1) break;
    e += 2;
  }
  BigInt d;
  mpz_invert(d.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t());

  ChipKeyPair kp;
  kp.chip_id = response.chip_id;
  kp.state_index = response.state_index;
  kp.modulus_bits = bits;
  kp.public_key = {n, e};
  kp.secret_key = {n, d, p, q};
  return kp;
}

inline ChipKeyPair derive_keypair(const Response& response, unsigned modulus_bits = 1024) {
  if (modulus_bits != 512 && modulus_bits != 1024 && modulus_bits != 2048)
    throw Error(ErrorCode::InvalidArgument, "modulus_bits must be 512, 1024 or 2048");
  return derive_keypair(response, KeygenOptions{modulus_bits});
}

namespace detail {

// 00 01 FF..FF 00 || SHA-256(message), sized to the modulus.
inline BigInt encode_digest(ByteView message, std::size_t modulus_bytes) {
  constexpr std::size_t kMinPadding = 8;
  if (modulus_bytes < 32 + 3 + kMinPadding)
    throw Error(ErrorCode::SignatureMalformed, "modulus too small for digest padding");
  Bytes em(modulus_bytes, 0xff);
  em[0] = 0x00;
  em[1] = 0x01;
  em[modulus_bytes - 33] = 0x00;
  const auto digest = sha256(message);
  std::copy(digest.begin(), digest.end(), em.end() - 32);
  return from_bytes_be(em);
}

}  // namespace detail

using Signature = Bytes;

inline Signature sign(const SecretKey& key, ByteView message) {
  const auto k = byte_length(key.modulus);
  const BigInt m = detail::encode_digest(message, k);
  BigInt s;
  mpz_powm(s.get_mpz_t(), m.get_mpz_t(), key.exponent.get_mpz_t(), key.modulus.get_mpz_t());
  return to_bytes_be(s, k);
}

// Throws SignatureMalformed when the signature is not exactly modulus-sized.
inline bool verify(const PublicKey& key, ByteView message, ByteView signature) {
  const auto k = key.modulus_bytes();
  if (signature.size() != k) throw Error(ErrorCode::SignatureMalformed, "signature length does not match modulus");
  const BigInt s = from_bytes_be(signature);
  if (s >= key.modulus) return false;
  BigInt m;
  mpz_powm(m.get_mpz_t(), s.get_mpz_t(), key.exponent.get_mpz_t(), key.modulus.get_mpz_t());
  return m == detail::encode_digest(message, k);
}

inline bool verify_quiet(const PublicKey& key, ByteView message, ByteView signature) noexcept {
  try {
    return verify(key, message, signature);
  } catch (...) {
    return false;
  }
}

// The security state |l>: an index selecting C_l.
struct SecurityState {
  std::uint64_t index = 0;
  bool active = true;
};

// Response and keys of one chip "observed" at state l. Re-observing the same
// state yields identical values.
struct StateObservation {
  Challenge challenge;
  Response response;
  ChipKeyPair keys;
};

inline StateObservation observe_state(const Prn& prn, std::uint64_t state_index, unsigned modulus_bits) {
  auto challenge = make_challenge(state_index, Issuer::management);
  auto response = respond(prn, challenge);
  auto keys = derive_keypair(response, modulus_bits);
  return {challenge, std::move(response), std::move(keys)};
}

enum class AuditVerdict { genuine, impostor };

constexpr std::string_view verdict_name(AuditVerdict v) { return v == AuditVerdict::genuine ? "Genuine" : "Impostor"; }

inline Bytes audit_message(const Digest& nonce) {
  Bytes msg;
  append(msg, std::string_view("chipledger/audit/v1"));
  append(msg, nonce);
  return msg;
}

// What a device hands back for an audit: the key it derived and its
// signature over the nonce.
struct PossessionProof {
  PublicKey public_key;
  Signature signature;
};

inline PossessionProof prove_possession(SimulatedChip& chip, std::uint64_t state_index, const Digest& nonce,
                                        unsigned modulus_bits, std::uint32_t column = 0) {
  auto obs = observe_state(extract_prn(chip, column), state_index, modulus_bits);
  return {obs.keys.public_key, sign(obs.keys.secret_key, audit_message(nonce))};
}

inline AuditVerdict check_possession(const PublicKey& expected, const Digest& nonce, const PossessionProof& proof) {
  const bool ok = proof.public_key == expected && verify_quiet(expected, audit_message(nonce), proof.signature);
  return ok ? AuditVerdict::genuine : AuditVerdict::impostor;
}

// Genuine iff the chip re-derives `expected` at the state's index and its
// signature over the nonce verifies under it.
inline AuditVerdict crp_audit(SimulatedChip& chip, const PublicKey& expected, const SecurityState& state,
                              const Digest& nonce, unsigned modulus_bits = 1024) {
  if (!state.active) throw Error(ErrorCode::StateMismatch, "audit requires the active security state");
  return check_possession(expected, nonce, prove_possession(chip, state.index, nonce, modulus_bits));
}

}  // namespace chipledger
