#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "chipledger/bigint.hpp"
#include "chipledger/error.hpp"

namespace chipledger {

// Exact binomial coefficient by the multiplicative formula; every partial
// product C(n - k' + i, i) is an integer, so each division is exact.
inline BigInt combinations(const BigInt& n, const BigInt& k) {
  if (n < 0 || k < 0) throw Error(ErrorCode::KExceedsN, "negative argument");
  if (k > n) throw Error(ErrorCode::KExceedsN, "k exceeds n");
  BigInt kk = k;
  if (BigInt(n - k) < kk) kk = n - k;
  if (!kk.fits_ulong_p()) throw Error(ErrorCode::KExceedsN, "min(k, n - k) too large to enumerate");
  const unsigned long steps = kk.get_ui();
  BigInt result = 1;
  BigInt factor = n - kk;
  for (unsigned long i = 1; i <= steps; ++i) {
    factor += 1;
    result *= factor;
    mpz_divexact_ui(result.get_mpz_t(), result.get_mpz_t(), i);
  }
  return result;
}

inline BigInt combinations(std::uint64_t n, std::uint64_t k) {
  BigInt bn, bk;
  mpz_import(bn.get_mpz_t(), 1, 1, sizeof(n), 0, 0, &n);
  mpz_import(bk.get_mpz_t(), 1, 1, sizeof(k), 0, 0, &k);
  return combinations(bn, bk);
}

// ln C(n, k) as a sum of logs of the multiplicative factors. Never
// materializes C, so it is usable where C would overflow a double.
inline double log_combinations(std::uint64_t n, std::uint64_t k) {
  if (k > n) throw Error(ErrorCode::KExceedsN, "k exceeds n");
  const std::uint64_t kk = std::min(k, n - k);
  long double sum = 0.0L;
  long double carry = 0.0L;  // Kahan compensation
  for (std::uint64_t i = 1; i <= kk; ++i) {
    const long double term = std::log(static_cast<long double>(n - kk + i)) - std::log(static_cast<long double>(i));
    const long double y = term - carry;
    const long double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return static_cast<double>(sum);
}

struct EntropyReport {
  std::uint64_t rows = 0;    // Y
  std::uint64_t blocks = 1;  // L
  std::uint64_t failures = 0;  // m
  BigInt combinations;       // C(L*Y, m)
  double entropy_nats = 0;   // ln C, i.e. entropy / k_B
  double entropy_bits = 0;
};

inline EntropyReport entropy_report(std::uint64_t rows, std::uint64_t blocks, std::uint64_t failures) {
  const std::uint64_t span = rows * blocks;
  EntropyReport r;
  r.rows = rows;
  r.blocks = blocks;
  r.failures = failures;
  r.combinations = combinations(span, failures);
  r.entropy_nats = log_combinations(span, failures);
  r.entropy_bits = r.entropy_nats / std::numbers::ln2;
  return r;
}

// Decimal scientific rendering of an exact rational with `digits`
// significant digits (truncated).
inline std::string to_scientific(const mpq_class& value, int digits = 13) {
  if (value == 0) return "0";
  mpq_class v = abs(value);
  // Estimate the decimal exponent, then correct it exactly.
  long exp2_num = static_cast<long>(mpz_sizeinbase(v.get_num_mpz_t(), 2));
  long exp2_den = static_cast<long>(mpz_sizeinbase(v.get_den_mpz_t(), 2));
  long e10 = static_cast<long>(std::floor((exp2_num - exp2_den) * std::numbers::log10e * std::numbers::ln2));
  auto pow10 = [](long e) {
    BigInt p;
    mpz_ui_pow_ui(p.get_mpz_t(), 10, static_cast<unsigned long>(e < 0 ? -e : e));
    return e < 0 ? mpq_class(1, p) : mpq_class(p, 1);
  };
  mpq_class scaled = v / pow10(e10);
  while (scaled >= 10) {
    ++e10;
    scaled /= 10;
  }
  while (scaled < 1) {
    --e10;
    scaled *= 10;
  }
  mpq_class shifted = scaled * pow10(digits - 1);
  BigInt mantissa = shifted.get_num() / shifted.get_den();
  std::string m = mantissa.get_str();
  std::string out = value < 0 ? "-" : "";
  out += m.substr(0, 1);
  if (m.size() > 1) out += "." + m.substr(1);
  out += "e" + std::string(e10 < 0 ? "-" : "+");
  std::string ee = std::to_string(e10 < 0 ? -e10 : e10);
  if (ee.size() < 2) ee = "0" + ee;
  return out + ee;
}

// Three readings of the chance that two devices share a fingerprint, all as
// exact rationals over C = C(L*Y, m).
struct CollisionReport {
  BigInt population;
  BigInt combinations;
  mpq_class per_pair;        // 1 / C
  mpq_class per_chip;        // (N - 1) / C
  mpq_class expected_pairs;  // N (N - 1) / (2 C)
};

inline CollisionReport collision_report(std::uint64_t rows, std::uint64_t blocks, std::uint64_t failures,
                                        const BigInt& population) {
  if (population < 2) throw Error(ErrorCode::KExceedsN, "population must be at least 2");
  CollisionReport r;
  r.population = population;
  r.combinations = combinations(rows * blocks, failures);
  r.per_pair = mpq_class(BigInt(1), r.combinations);
  r.per_chip = mpq_class(BigInt(population - 1), r.combinations);
  r.expected_pairs = mpq_class(BigInt(population * (population - 1)), BigInt(2 * r.combinations));
  r.per_pair.canonicalize();
  r.per_chip.canonicalize();
  r.expected_pairs.canonicalize();
  return r;
}

// DRAM generations from 4 Mb to 16 Gb in x4 capacity steps. Only the two
// endpoints' row counts are anchored (2 000 and 100 000); the rows between
// follow a geometric ladder, round(2000 * 50^(k/6)).
struct Generation {
  std::string_view name;
  std::uint64_t capacity_bits;
  std::uint64_t rows;
};

inline constexpr Generation kGenerations[] = {
    {"4Mb", 4ull << 20, 2000},      {"16Mb", 16ull << 20, 3839},   {"64Mb", 64ull << 20, 7368},
    {"256Mb", 256ull << 20, 14142}, {"1Gb", 1ull << 30, 27144},    {"4Gb", 4ull << 30, 52100},
    {"16Gb", 16ull << 30, 100000},
};

inline const Generation& find_generation(std::string_view name) {
  for (const auto& g : kGenerations)
    if (g.name == name) return g;
  throw Error(ErrorCode::UnknownGeneration, "unknown generation '" + std::string(name) + "'");
}

inline std::vector<std::string_view> generation_ladder() {
  std::vector<std::string_view> names;
  for (const auto& g : kGenerations) names.push_back(g.name);
  return names;
}

struct GenerationReport {
  std::string_view name;
  EntropyReport report;
};

// One L = 1 report per requested generation, ordered by capacity.
inline std::vector<GenerationReport> generation_table(std::uint64_t failures, std::span<const std::string_view> names) {
  std::vector<const Generation*> picked;
  for (auto n : names) picked.push_back(&find_generation(n));
  std::sort(picked.begin(), picked.end(),
            [](const Generation* a, const Generation* b) { return a->capacity_bits < b->capacity_bits; });
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  std::vector<GenerationReport> out;
  for (const auto* g : picked) out.push_back({g->name, entropy_report(g->rows, 1, failures)});
  return out;
}

}  // namespace chipledger
