#include <gtest/gtest.h>
#include <openssl/hmac.h>

#include <set>

#include "chipledger/identity.hpp"
#include "chipledger/rng.hpp"

using namespace chipledger;

namespace {

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

SimulatedChip chip(std::uint64_t seed) {
  return new_chip(ChipId{"c" + std::to_string(seed)}, ChipGeometry::preset_4mb(), {}, seed);
}

ChipKeyPair keys_of(std::uint64_t seed, std::uint64_t l = 1, unsigned bits = 512) {
  auto c = chip(seed);
  return observe_state(extract_prn(c), l, bits).keys;
}

Response fake_response(std::uint64_t tag) {
  Response r{ChipId{"r"}, 0, {}};
  Rng rng(tag);
  for (auto& b : r.bytes) b = static_cast<std::uint8_t>(rng.next());
  return r;
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256(bytes_of("abc"))), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(to_hex(sha256(Bytes{})), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Sha256 h;
  h.update(std::string_view("ab")).update(std::string_view("c"));
  Sha256 copy = h;
  EXPECT_EQ(h.finish(), sha256(bytes_of("abc")));
  EXPECT_EQ(copy.finish(), sha256(bytes_of("abc")));
}

TEST(Hmac, Rfc4231Vectors) {
  struct Case {
    Bytes key, data;
    const char* mac;
  };
  std::vector<Case> cases{
      {Bytes(20, 0x0b), bytes_of("Hi There"), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"},
      {bytes_of("Jefe"), bytes_of("what do ya want for nothing?"),
       "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"},
      {Bytes(20, 0xaa), Bytes(50, 0xdd), "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"},
      {Bytes(131, 0xaa), bytes_of("Test Using Larger Than Block-Size Key - Hash Key First"),
       "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"},
  };
  for (const auto& c : cases) EXPECT_EQ(to_hex(HmacSha256(c.key).mac(c.data)), c.mac);
}

TEST(Hmac, AgreesWithOpenSsl) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Bytes key(rng.below(200), 0), msg(rng.below(300), 0);
    for (auto& b : key) b = static_cast<std::uint8_t>(rng.next());
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng.next());
    Digest ref{};
    unsigned len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), ref.data(), &len);
    ASSERT_EQ(len, 32u);
    ASSERT_EQ(HmacSha256(key).mac(msg), ref);
  }
}

TEST(Challenge, DeterministicAndSeparated) {
  EXPECT_EQ(make_challenge(0, Issuer::management).bytes, make_challenge(0, Issuer::management).bytes);
  EXPECT_NE(make_challenge(0, Issuer::management).bytes, make_challenge(0, Issuer::security).bytes);
  EXPECT_NE(make_challenge(0, Issuer::management).bytes, make_challenge(1, Issuer::management).bytes);
  std::set<Digest> seen;
  for (std::uint64_t l = 0; l < 1000; ++l) {
    ASSERT_TRUE(seen.insert(make_challenge(l, Issuer::management).bytes).second);
    ASSERT_TRUE(seen.insert(make_challenge(l, Issuer::security).bytes).second);
  }
}

TEST(Challenge, MatchesDefinition) {
  Bytes input = bytes_of("chipledger/challenge/v1");
  input.push_back(0);
  append(input, std::string_view("security"));
  input.push_back(0);
  put_be64(input, 7);
  EXPECT_EQ(make_challenge(7, Issuer::security).bytes, sha256(input));
}

TEST(Respond, MatchesIndependentConstruction) {
  auto c = chip(3);
  auto prn = extract_prn(c);
  auto ch = make_challenge(4, Issuer::management);
  auto r = respond(prn, ch);
  // OpenSSL HMAC plus explicit counter expansion.
  auto key = prn.canonical_bytes();
  Digest mac{};
  unsigned len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), ch.bytes.data(), ch.bytes.size(), mac.data(), &len);
  for (std::uint32_t block = 1; block <= 2; ++block) {
    Bytes in(mac.begin(), mac.end());
    put_be32(in, block);
    auto d = sha256(in);
    EXPECT_TRUE(std::equal(d.begin(), d.end(), r.bytes.begin() + (block - 1) * 32));
  }
  EXPECT_EQ(r.state_index, 4u);
  EXPECT_EQ(r.chip_id, prn.chip_id);
}

TEST(Respond, DeterministicAndInputSensitive) {
  auto a = chip(1), b = chip(2);
  auto pa = extract_prn(a), pb = extract_prn(b);
  auto c1 = make_challenge(1, Issuer::management), c2 = make_challenge(2, Issuer::management);
  EXPECT_EQ(respond(pa, c1), respond(pa, c1));
  EXPECT_NE(respond(pa, c1).bytes, respond(pb, c1).bytes);
  EXPECT_NE(respond(pa, c1).bytes, respond(pa, c2).bytes);
}

TEST(Respond, AvalancheOnChallengeBits) {
  auto c = chip(8);
  auto prn = extract_prn(c);
  auto base = make_challenge(1, Issuer::management);
  const auto ref = respond(prn, base).bytes;
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    auto flipped = base;
    const auto bit = rng.below(256);
    flipped.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_NE(respond(prn, flipped).bytes, ref) << bit;
  }
}

TEST(Respond, NoCollisionsOverManyInputs) {
  std::set<std::array<std::uint8_t, 64>> seen;
  for (std::uint64_t s = 0; s < 500; ++s) {
    auto c = chip(s);
    auto prn = extract_prn(c);
    for (std::uint64_t l = 0; l < 20; ++l) ASSERT_TRUE(seen.insert(respond(prn, make_challenge(l, Issuer::management)).bytes).second);
  }
}

TEST(Primality, AgreesWithGmp) {
  for (unsigned long n = 0; n < 20000; ++n) {
    BigInt v(n);
    ASSERT_EQ(is_probable_prime(v), mpz_probab_prime_p(v.get_mpz_t(), 30) != 0) << n;
  }
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    BigInt v = from_bytes_be(rng.digest());
    ASSERT_EQ(is_probable_prime(v), mpz_probab_prime_p(v.get_mpz_t(), 30) != 0);
    BigInt p;
    mpz_nextprime(p.get_mpz_t(), v.get_mpz_t());
    ASSERT_TRUE(is_probable_prime(p));
  }
}

TEST(Primality, RejectsPseudoprimes) {
  for (const char* n : {"561", "41041", "825265", "321197185", "3215031751", "2152302898747", "3474749660383",
                        "341550071728321", "3825123056546413051"})
    EXPECT_FALSE(is_probable_prime(BigInt(n))) << n;
}

TEST(NextPrime, FindsSmallestAndHonoursLimits) {
  EXPECT_EQ(next_prime(BigInt(24), 8, 100), 29);
  EXPECT_EQ(next_prime(BigInt(29), 8, 100), 29);
  EXPECT_EQ(next_prime(BigInt(30), 5, 100), 31);
  try {
    next_prime(BigInt(32), 5, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PrimeSearchExhausted);
  }
  EXPECT_THROW(next_prime(BigInt(24), 8, 2), Error);
}

TEST(Keygen, DeterministicWellFormedKeys) {
  auto r = fake_response(1);
  auto a = derive_keypair(r, 512), b = derive_keypair(r, 512);
  EXPECT_EQ(a.public_key, b.public_key);
  EXPECT_EQ(a.secret_key.exponent, b.secret_key.exponent);
  EXPECT_EQ(bit_length(a.public_key.modulus), 512u);
  const auto& sk = a.secret_key;
  EXPECT_GT(sk.prime_p, sk.prime_q);
  EXPECT_EQ(bit_length(sk.prime_p), 256u);
  EXPECT_EQ(bit_length(sk.prime_q), 256u);
  EXPECT_NE(mpz_probab_prime_p(sk.prime_p.get_mpz_t(), 30), 0);
  EXPECT_NE(mpz_probab_prime_p(sk.prime_q.get_mpz_t(), 30), 0);
  EXPECT_EQ(sk.prime_p * sk.prime_q, a.public_key.modulus);
  BigInt phi = (sk.prime_p - 1) * (sk.prime_q - 1);
  EXPECT_EQ(BigInt(a.public_key.exponent * sk.exponent % phi), 1);
  EXPECT_GE(a.public_key.exponent, 65537);
}

TEST(Keygen, ModulusSizes) {
  auto r = fake_response(2);
  EXPECT_EQ(bit_length(derive_keypair(r, 1024).public_key.modulus), 1024u);
  EXPECT_EQ(bit_length(derive_keypair(r, 2048).public_key.modulus), 2048u);
  EXPECT_THROW(derive_keypair(r, 768u), Error);
  EXPECT_THROW(derive_keypair(r, KeygenOptions{33, 100}), Error);
  EXPECT_EQ(bit_length(derive_keypair(r, KeygenOptions{64, 1u << 16}).public_key.modulus), 64u);
}

TEST(Keygen, TinyWindowExhaustsSearch) {
  int exhausted = 0;
  for (std::uint64_t t = 0; t < 40; ++t) {
    try {
      derive_keypair(fake_response(t), KeygenOptions{64, 1});
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::PrimeSearchExhausted);
      ++exhausted;
    }
  }
  EXPECT_GT(exhausted, 0);
}

TEST(Keygen, KeyAlgebraHolds) {
  // m^(e d) == m (mod N) on random m.
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto kp = derive_keypair(fake_response(100 + s), 512);
    Rng rng(s);
    for (int i = 0; i < 20; ++i) {
      BigInt m = from_bytes_be(rng.digest()), c, back;
      mpz_powm(c.get_mpz_t(), m.get_mpz_t(), kp.public_key.exponent.get_mpz_t(), kp.public_key.modulus.get_mpz_t());
      mpz_powm(back.get_mpz_t(), c.get_mpz_t(), kp.secret_key.exponent.get_mpz_t(), kp.public_key.modulus.get_mpz_t());
      ASSERT_EQ(back, m);
    }
  }
}

TEST(Keygen, DistinctChipsDistinctKeys) {
  std::set<Bytes> seen;
  for (std::uint64_t s = 0; s < 100; ++s) ASSERT_TRUE(seen.insert(keys_of(s).public_key.serialize()).second);
}

TEST(PublicKey, SerializationRoundTrip) {
  auto kp = keys_of(4);
  auto bytes = kp.public_key.serialize();
  EXPECT_EQ(PublicKey::parse(bytes), kp.public_key);
  EXPECT_EQ(bytes.size(), 4 + 64 + 4 + 3u);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(PublicKey::parse(trailing), Error);
  EXPECT_THROW(PublicKey::parse(ByteView(bytes).first(10)), Error);
  Bytes padded;
  put_prefixed(padded, Bytes{0x00, 0x05});
  put_prefixed(padded, Bytes{0x03});
  EXPECT_THROW(PublicKey::parse(padded), Error);
}

TEST(Signature, RoundTripAndRejections) {
  auto kp = keys_of(5);
  auto other = keys_of(6);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Bytes msg(rng.below(100), 0);
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng.next());
    auto sig = sign(kp.secret_key, msg);
    ASSERT_EQ(sig.size(), 64u);
    ASSERT_TRUE(verify(kp.public_key, msg, sig));
    ASSERT_FALSE(verify(other.public_key, msg, sig));
    Bytes changed = msg;
    changed.push_back(1);
    ASSERT_FALSE(verify(kp.public_key, changed, sig));
    auto flipped = sig;
    const auto bit = rng.below(sig.size() * 8);
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_FALSE(verify_quiet(kp.public_key, msg, flipped));
  }
}

TEST(Signature, IsDeterministicPaddedDigestPower) {
  auto kp = keys_of(7);
  auto msg = bytes_of("hello");
  auto sig = sign(kp.secret_key, msg);
  EXPECT_EQ(sig, sign(kp.secret_key, msg));
  BigInt m;
  mpz_powm(m.get_mpz_t(), from_bytes_be(sig).get_mpz_t(), kp.public_key.exponent.get_mpz_t(),
           kp.public_key.modulus.get_mpz_t());
  auto em = to_bytes_be(m, 64);
  EXPECT_EQ(em[0], 0x00);
  EXPECT_EQ(em[1], 0x01);
  for (std::size_t i = 2; i < 64 - 33; ++i) EXPECT_EQ(em[i], 0xff);
  EXPECT_EQ(em[64 - 33], 0x00);
  auto d = sha256(msg);
  EXPECT_TRUE(std::equal(d.begin(), d.end(), em.end() - 32));
}

TEST(Signature, MalformedLengths) {
  auto kp = keys_of(8);
  try {
    verify(kp.public_key, Bytes{1}, Bytes(63, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SignatureMalformed);
  }
  EXPECT_FALSE(verify_quiet(kp.public_key, Bytes{1}, Bytes(65, 0)));
  EXPECT_FALSE(verify(kp.public_key, Bytes{1}, Bytes(64, 0xff)));  // s >= N
  auto tiny = derive_keypair(fake_response(9), KeygenOptions{128, 1u << 16});
  EXPECT_THROW(sign(tiny.secret_key, Bytes{1}), Error);
}

TEST(SecurityState, ObservationIsIdempotent) {
  auto c = chip(10);
  auto prn = extract_prn(c);
  auto a = observe_state(prn, 3, 512), b = observe_state(prn, 3, 512);
  EXPECT_EQ(a.challenge.bytes, b.challenge.bytes);
  EXPECT_EQ(a.response, b.response);
  EXPECT_EQ(a.keys.public_key, b.keys.public_key);
  EXPECT_EQ(a.keys.secret_key.exponent, b.keys.secret_key.exponent);
  EXPECT_NE(observe_state(prn, 4, 512).keys.public_key, a.keys.public_key);
}

TEST(Audit, Verdicts) {
  auto victim = chip(20);
  auto attacker = chip(21);
  const auto registered = observe_state(extract_prn(victim), 2, 512).keys.public_key;
  Rng rng(1);
  const auto nonce = rng.digest();
  EXPECT_EQ(crp_audit(victim, registered, {2, true}, nonce, 512), AuditVerdict::genuine);
  EXPECT_EQ(crp_audit(attacker, registered, {2, true}, nonce, 512), AuditVerdict::impostor);
  EXPECT_EQ(crp_audit(victim, registered, {1, true}, nonce, 512), AuditVerdict::impostor);
  EXPECT_EQ(crp_audit(victim, registered, {3, true}, nonce, 512), AuditVerdict::impostor);
  try {
    crp_audit(victim, registered, {2, false}, nonce, 512);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StateMismatch);
  }
}

TEST(Audit, ProofIsBoundToNonce) {
  auto c = chip(30);
  const auto pk = observe_state(extract_prn(c), 1, 512).keys.public_key;
  Rng rng(2);
  const auto n1 = rng.digest(), n2 = rng.digest();
  auto proof = prove_possession(c, 1, n1, 512);
  EXPECT_EQ(check_possession(pk, n1, proof), AuditVerdict::genuine);
  EXPECT_EQ(check_possession(pk, n2, proof), AuditVerdict::impostor);
  EXPECT_EQ(verdict_name(AuditVerdict::genuine), "Genuine");
  EXPECT_EQ(verdict_name(AuditVerdict::impostor), "Impostor");
}
