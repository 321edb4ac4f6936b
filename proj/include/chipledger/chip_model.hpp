#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chipledger/bytes.hpp"
#include "chipledger/error.hpp"
#include "chipledger/rng.hpp"
#include "chipledger/strings.hpp"

namespace chipledger {

struct ChipId {
  std::string value;

  friend auto operator<=>(const ChipId&, const ChipId&) = default;
  friend std::ostream& operator<<(std::ostream& os, const ChipId& id) { return os << id.value; }
};

// Geometry of one memory chip. The simulator models a single block (L = 1);
// `block_count` is carried so entropy estimates can use the full L x Y span.
struct ChipGeometry {
  std::uint32_t rows_per_block = 2000;
  std::uint32_t columns = 2000;
  std::uint32_t block_count = 1;
  std::uint32_t redundancy_rows = 20;

  static ChipGeometry preset_4mb() { return {2000, 2000, 1, 20}; }
  static ChipGeometry preset_16gb() { return {100000, 100000, 1, 20}; }

  // Square layout with the default redundancy array.
  static ChipGeometry isotropic(std::uint32_t rows, std::uint32_t redundancy = 20) {
    return {rows, rows, 1, redundancy};
  }

  void validate() const {
    if (rows_per_block == 0 || columns == 0 || block_count == 0 || redundancy_rows == 0)
      throw Error(ErrorCode::GeometryInvalid, "geometry fields must be positive");
    if (redundancy_rows > rows_per_block)
      throw Error(ErrorCode::GeometryInvalid, "redundancy_rows exceeds rows_per_block");
  }

  friend bool operator==(const ChipGeometry&, const ChipGeometry&) = default;
};

// Manufacturing defect model: failure-row count is Poisson(mean), clamped to
// [1, swap capacity] unless `clip` is off (tests only; m may then be 0).
struct FailureModel {
  double mean = 10.0;
  bool clip = true;
  // Number of redundancy rows that are themselves defective. Swaps skip them.
  std::uint32_t redundancy_failures = 0;
};

enum class AccessMode { normal, special };

// The chip's failure-row fingerprint read back through the swap mechanism.
struct Prn {
  ChipId chip_id;
  std::uint32_t column = 0;
  std::uint32_t rows_per_block = 0;
  std::vector<std::uint32_t> rows;

  // be32(rows_per_block) || be32(count) || be32(row)...
  Bytes canonical_bytes() const {
    Bytes out;
    out.reserve(8 + 4 * rows.size());
    put_be32(out, rows_per_block);
    put_be32(out, static_cast<std::uint32_t>(rows.size()));
    for (auto r : rows) put_be32(out, r);
    return out;
  }
};

namespace detail {

// Floyd's sampling of `count` distinct values from [0, range); sorted.
inline std::vector<std::uint32_t> sample_distinct(Rng& rng, std::uint32_t range, std::uint32_t count) {
  std::set<std::uint32_t> picked;
  for (std::uint64_t j = range - count; j < range; ++j) {
    auto t = static_cast<std::uint32_t>(rng.below(j + 1));
    if (!picked.insert(t).second) picked.insert(static_cast<std::uint32_t>(j));
  }
  return {picked.begin(), picked.end()};
}

inline std::uint32_t sample_poisson(Rng& rng, double mean) {
  // Sequential inversion; adequate for the small means used by the model.
  double term = std::exp(-mean);
  double cdf = term;
  const double u = rng.unit();
  std::uint32_t k = 0;
  while (u > cdf && k < 100000) {
    ++k;
    term *= mean / k;
    cdf += term;
  }
  return k;
}

}  // namespace detail

class SimulatedChip {
 public:
  // new_chip: failure rows drawn from `model`, reproducible for a fixed seed.
  static SimulatedChip manufacture(ChipId id, const ChipGeometry& geometry, const FailureModel& model,
                                   std::uint64_t seed) {
    geometry.validate();
    if (!(model.mean >= 0) || model.mean * 2 > geometry.redundancy_rows || model.mean > 700)
      throw Error(ErrorCode::GeometryInvalid, "failure mean must lie in [0, redundancy_rows / 2]");
    if (model.redundancy_failures >= geometry.redundancy_rows)
      throw Error(ErrorCode::GeometryInvalid, "no healthy redundancy rows left");

    Rng rng(seed);
    const std::uint32_t capacity = geometry.redundancy_rows - model.redundancy_failures;
    std::uint32_t m = detail::sample_poisson(rng, model.mean);
    if (model.clip) m = std::clamp<std::uint32_t>(m, 1, capacity);
    if (m > capacity) throw Error(ErrorCode::CapacityExceeded, "sampled failure count exceeds swap capacity");

    auto rows = detail::sample_distinct(rng, geometry.rows_per_block, m);
    auto bad = detail::sample_distinct(rng, geometry.redundancy_rows, model.redundancy_failures);
    return SimulatedChip(std::move(id), geometry, std::move(rows), std::move(bad), seed);
  }

  static SimulatedChip from_failure_rows(ChipId id, const ChipGeometry& geometry, std::vector<std::uint32_t> rows,
                                         std::uint64_t seed = 0, std::vector<std::uint32_t> bad_redundancy = {}) {
    geometry.validate();
    std::sort(rows.begin(), rows.end());
    std::sort(bad_redundancy.begin(), bad_redundancy.end());
    if (std::adjacent_find(rows.begin(), rows.end()) != rows.end())
      throw Error(ErrorCode::GeometryInvalid, "duplicate failure row");
    if (!rows.empty() && rows.back() >= geometry.rows_per_block)
      throw Error(ErrorCode::GeometryInvalid, "failure row outside the regular array");
    if (std::adjacent_find(bad_redundancy.begin(), bad_redundancy.end()) != bad_redundancy.end() ||
        (!bad_redundancy.empty() && bad_redundancy.back() >= geometry.redundancy_rows))
      throw Error(ErrorCode::GeometryInvalid, "invalid defective redundancy row");
    if (rows.size() + bad_redundancy.size() > geometry.redundancy_rows)
      throw Error(ErrorCode::CapacityExceeded, "failure rows exceed swap capacity");
    return SimulatedChip(std::move(id), geometry, std::move(rows), std::move(bad_redundancy), seed);
  }

  const ChipId& id() const noexcept { return id_; }
  const ChipGeometry& geometry() const noexcept { return geometry_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint32_t>& failure_rows() const noexcept { return failure_rows_; }
  const std::vector<std::uint32_t>& defective_redundancy_rows() const noexcept { return bad_redundancy_; }

  // Redundancy row that replaces regular row `row`, if it is a failure row.
  std::optional<std::uint32_t> swap_target(std::uint32_t row) const {
    auto it = std::lower_bound(failure_rows_.begin(), failure_rows_.end(), row);
    if (it == failure_rows_.end() || *it != row) return std::nullopt;
    return swap_[static_cast<std::size_t>(it - failure_rows_.begin())];
  }

  // Normal mode goes through Y-decoder B: the regular array, with failure
  // rows redirected to their swapped redundancy rows. Special mode goes
  // through Y-decoder A: the redundancy array directly.
  void write_column(AccessMode mode, std::uint32_t column, bool value) {
    check_column(column);
    auto& col = column_state(column);
    const std::uint8_t bit = value ? 1 : 0;
    if (mode == AccessMode::normal) {
      std::fill(col.regular.begin(), col.regular.end(), bit);
      for (std::size_t i = 0; i < failure_rows_.size(); ++i) {
        col.regular[failure_rows_[i]] = kStuckValue;
        col.redundancy[swap_[i]] = bit;
      }
      col.normal_stamp = ++op_counter_;
    } else {
      std::fill(col.redundancy.begin(), col.redundancy.end(), bit);
      for (auto r : bad_redundancy_) col.redundancy[r] = kStuckValue;
      col.special_stamp = ++op_counter_;
    }
  }

  std::vector<std::uint8_t> read_column_normal(std::uint32_t column) const {
    check_column(column);
    auto it = columns_.find(column);
    if (it == columns_.end() || it->second.normal_stamp == 0 || it->second.special_stamp == 0)
      throw Error(ErrorCode::PreprocessMissing, "column " + std::to_string(column) + " was never preprocessed");
    const auto& col = it->second;
    std::vector<std::uint8_t> out = col.regular;
    for (std::size_t i = 0; i < failure_rows_.size(); ++i) out[failure_rows_[i]] = col.redundancy[swap_[i]];
    return out;
  }

  // True when the last special-mode write on `column` follows the last
  // normal-mode write, i.e. the preprocess order was respected.
  bool preprocess_ordered(std::uint32_t column) const {
    auto it = columns_.find(column);
    return it != columns_.end() && it->second.normal_stamp != 0 && it->second.special_stamp > it->second.normal_stamp;
  }

  // Raw cell access, for inspection in tests.
  std::uint8_t regular_bit(std::uint32_t row, std::uint32_t column) const {
    return columns_.at(column).regular.at(row);
  }
  std::uint8_t redundancy_bit(std::uint32_t row, std::uint32_t column) const {
    return columns_.at(column).redundancy.at(row);
  }

  // Text fixture: one key=value per line.
  std::string to_fixture() const {
    std::ostringstream os;
    os << "chip_id=" << id_.value << "\n"
       << "rows_Y=" << geometry_.rows_per_block << "\n"
       << "cols=" << geometry_.columns << "\n"
       << "redundancy_rows=" << geometry_.redundancy_rows << "\n"
       << "failure_rows=" << join(failure_rows_) << "\n";
    if (!bad_redundancy_.empty()) os << "defective_redundancy_rows=" << join(bad_redundancy_) << "\n";
    os << "seed=" << seed_ << "\n";
    return os.str();
  }

  static SimulatedChip from_fixture(std::string_view text) {
    std::map<std::string, std::string, std::less<>> fields;
    int line_no = 0;
    for (auto raw : text::split(text, '\n')) {
      ++line_no;
      auto line = text::trim(text::strip_comment(raw));
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw Error(ErrorCode::ConfigInvalid, "chip fixture line " + std::to_string(line_no) + ": expected key=value");
      std::string key(text::trim(line.substr(0, eq)));
      static const std::set<std::string, std::less<>> kKnown{
          "chip_id", "rows_Y", "cols", "redundancy_rows", "failure_rows", "defective_redundancy_rows", "seed"};
      if (!kKnown.contains(key))
        throw Error(ErrorCode::ConfigInvalid,
                    "chip fixture line " + std::to_string(line_no) + ": unknown field '" + key + "'");
      fields[key] = std::string(text::trim(line.substr(eq + 1)));
    }
    auto require = [&](const char* key) -> const std::string& {
      auto it = fields.find(key);
      if (it == fields.end()) throw Error(ErrorCode::ConfigInvalid, std::string("chip fixture: missing field '") + key + "'");
      return it->second;
    };
    ChipGeometry g;
    g.rows_per_block = text::parse_int<std::uint32_t>(require("rows_Y"), "rows_Y");
    g.redundancy_rows = text::parse_int<std::uint32_t>(require("redundancy_rows"), "redundancy_rows");
    g.columns = fields.contains("cols") ? text::parse_int<std::uint32_t>(fields["cols"], "cols") : g.rows_per_block;
    auto rows = parse_list(require("failure_rows"), "failure_rows");
    auto bad = fields.contains("defective_redundancy_rows")
                   ? parse_list(fields["defective_redundancy_rows"], "defective_redundancy_rows")
                   : std::vector<std::uint32_t>{};
    auto seed = text::parse_int<std::uint64_t>(require("seed"), "seed");
    return from_failure_rows(ChipId{require("chip_id")}, g, std::move(rows), seed, std::move(bad));
  }

 private:
  static constexpr std::uint8_t kStuckValue = 1;

  struct Column {
    std::vector<std::uint8_t> regular;
    std::vector<std::uint8_t> redundancy;
    std::uint64_t normal_stamp = 0;
    std::uint64_t special_stamp = 0;
  };

  SimulatedChip(ChipId id, const ChipGeometry& geometry, std::vector<std::uint32_t> rows,
                std::vector<std::uint32_t> bad_redundancy, std::uint64_t seed)
      : id_(std::move(id)),
        geometry_(geometry),
        failure_rows_(std::move(rows)),
        bad_redundancy_(std::move(bad_redundancy)),
        seed_(seed) {
    // Each failure row, in ascending order, takes the next healthy
    // redundancy row.
    std::uint32_t next = 0;
    swap_.reserve(failure_rows_.size());
    for (std::size_t i = 0; i < failure_rows_.size(); ++i) {
      while (std::binary_search(bad_redundancy_.begin(), bad_redundancy_.end(), next)) ++next;
      swap_.push_back(next++);
    }
  }

  void check_column(std::uint32_t column) const {
    if (column >= geometry_.columns)
      throw Error(ErrorCode::ColumnOutOfRange,
                  "column " + std::to_string(column) + " >= " + std::to_string(geometry_.columns));
  }

  Column& column_state(std::uint32_t column) {
    auto [it, fresh] = columns_.try_emplace(column);
    if (fresh) {
      it->second.regular.assign(geometry_.rows_per_block, 0);
      it->second.redundancy.assign(geometry_.redundancy_rows, 0);
      for (auto r : failure_rows_) it->second.regular[r] = kStuckValue;
      for (auto r : bad_redundancy_) it->second.redundancy[r] = kStuckValue;
    }
    return it->second;
  }

  static std::string join(const std::vector<std::uint32_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(values[i]);
    }
    return out;
  }

  static std::vector<std::uint32_t> parse_list(std::string_view s, std::string_view what) {
    std::vector<std::uint32_t> out;
    if (text::trim(s).empty()) return out;
    for (auto part : text::split(s, ',')) out.push_back(text::parse_int<std::uint32_t>(part, what));
    return out;
  }

  ChipId id_;
  ChipGeometry geometry_;
  std::vector<std::uint32_t> failure_rows_;  // sorted, immutable
  std::vector<std::uint32_t> swap_;          // swap_[i] replaces failure_rows_[i]
  std::vector<std::uint32_t> bad_redundancy_;
  std::uint64_t seed_ = 0;
  std::map<std::uint32_t, Column> columns_;
  std::uint64_t op_counter_ = 0;
};

inline SimulatedChip new_chip(ChipId id, const ChipGeometry& geometry, const FailureModel& model, std::uint64_t seed) {
  return SimulatedChip::manufacture(std::move(id), geometry, model, seed);
}

// Preprocess (normal-mode 0, then special-mode 1) followed by a normal-mode
// read; the 1-bits are the failure rows.
inline Prn extract_prn(SimulatedChip& chip, std::uint32_t column = 0) {
  chip.write_column(AccessMode::normal, column, false);
  chip.write_column(AccessMode::special, column, true);
  if (!chip.preprocess_ordered(column)) throw Error(ErrorCode::PreprocessMissing, "preprocess order violated");
  const auto bits = chip.read_column_normal(column);

  Prn prn{chip.id(), column, chip.geometry().rows_per_block, {}};
  prn.rows.reserve(chip.failure_rows().size());
  for (std::uint32_t r = 0; r < bits.size(); ++r)
    if (bits[r]) prn.rows.push_back(r);
  return prn;
}

}  // namespace chipledger
