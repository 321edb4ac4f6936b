#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "chipledger.hpp"

namespace chipledger::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum class OutputMode { text, records };

// One output record: a kind tag and ordered key/value fields. Text mode
// aligns the fields as "key  value" lines; records mode prints
// "kind k=v k=v" on one line.
struct Record {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;

  Record& add(std::string key, std::string value) {
    fields.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  template <typename T>
    requires std::is_arithmetic_v<T>
  Record& add(std::string key, T value) {
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>) os << std::setprecision(12);
    os << value;
    return add(std::move(key), os.str());
  }
};

class Printer {
 public:
  Printer(std::ostream& out, OutputMode mode) : out_(out), mode_(mode) {}

  void emit(const Record& r) {
    if (mode_ == OutputMode::records) {
      out_ << r.kind;
      for (const auto& [k, v] : r.fields) out_ << " " << k << "=" << v;
      out_ << "\n";
      return;
    }
    std::size_t width = 0;
    for (const auto& [k, v] : r.fields) width = std::max(width, k.size());
    for (const auto& [k, v] : r.fields) out_ << std::left << std::setw(static_cast<int>(width) + 2) << k << v << "\n";
  }

  // Rows sharing one column layout: a header line plus aligned columns in
  // text mode, one record per row otherwise.
  void table(const std::vector<Record>& rows) {
    if (mode_ == OutputMode::records || rows.empty()) {
      for (const auto& r : rows) emit(r);
      return;
    }
    const auto& head = rows.front().fields;
    std::vector<std::size_t> width(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) width[c] = head[c].first.size();
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.fields.size() && c < width.size(); ++c)
        width[c] = std::max(width[c], r.fields[c].second.size());
    auto line = [&](auto&& cell) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        out_ << (c ? "  " : "");
        if (c + 1 < width.size()) out_ << std::left << std::setw(static_cast<int>(width[c]));
        out_ << cell(c);
      }
      out_ << "\n";
    };
    line([&](std::size_t c) { return head[c].first; });
    for (const auto& r : rows) line([&](std::size_t c) { return c < r.fields.size() ? r.fields[c].second : ""; });
  }

  void raw(std::string_view line) { out_ << line << "\n"; }
  OutputMode mode() const { return mode_; }

 private:
  std::ostream& out_;
  OutputMode mode_;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string output = "text";
  unsigned modulus_bits = 1024;
  unsigned mine_threads = 1;
  std::string store = "chipledger-store";
};

// Chip fixtures and ledger state under one directory.
class Store {
 public:
  explicit Store(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path chip_path(const std::string& id) const { return dir_ / (id + ".chip"); }
  std::filesystem::path ledger_path() const { return dir_ / "ledger.state"; }
  std::filesystem::path chain_path() const { return dir_ / "chain.bin"; }

  bool has_chip(const std::string& id) const { return std::filesystem::exists(chip_path(id)); }

  SimulatedChip load_chip(const std::string& id) const {
    if (!has_chip(id)) throw Error(ErrorCode::UnknownChip, "no fixture for chip '" + id + "' in " + dir_.string());
    return SimulatedChip::from_fixture(read_text(chip_path(id)));
  }

  void save_chip(const SimulatedChip& chip) const {
    std::filesystem::create_directories(dir_);
    write_bytes(chip_path(chip.id().value), chip.to_fixture());
  }

  static std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), {}};
  }

  static void write_bytes(const std::filesystem::path& p, std::string_view data) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ConfigInvalid, "cannot write " + p.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// Persistent ledger configuration: topology positions, the chip seated at
// each position, the active state and the difficulty each block was mined at.
struct LedgerState {
  std::uint64_t state_index = 1;
  unsigned modulus_bits = 1024;
  Topology topology;
  std::map<ChipId, std::string> seats;  // position -> chip fixture id
  std::vector<unsigned> difficulties;   // per sealed block

  std::string to_text() const {
    std::ostringstream os;
    os << "l=" << state_index << "\nmodulus_bits=" << modulus_bits << "\n";
    for (auto d : difficulties) os << "difficulty=" << d << "\n";
    for (const auto& [pos, chip] : seats) os << "seat " << pos.value << "=" << chip << "\n";
    for (const auto& n : topology.nodes) os << "node " << n.value << "\n";
    for (const auto& e : topology.edges) os << e.from.value << " -> " << e.to.value << "\n";
    return os.str();
  }

  static LedgerState parse(std::string_view text) {
    LedgerState s;
    int line_no = 0;
    for (auto raw : text::split(text, '\n')) {
      ++line_no;
      auto line = text::trim(text::strip_comment(raw));
      if (line.empty()) continue;
      if (line.starts_with("l=")) {
        s.state_index = text::parse_int<std::uint64_t>(line.substr(2), "l");
      } else if (line.starts_with("modulus_bits=")) {
        s.modulus_bits = text::parse_int<unsigned>(line.substr(13), "modulus_bits");
      } else if (line.starts_with("difficulty=")) {
        s.difficulties.push_back(text::parse_int<unsigned>(line.substr(11), "difficulty"));
      } else if (line.starts_with("seat ")) {
        auto body = line.substr(5);
        auto eq = body.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigInvalid, "ledger state: bad seat line");
        s.seats[ChipId{std::string(text::trim(body.substr(0, eq)))}] = std::string(text::trim(body.substr(eq + 1)));
      } else {
        s.topology.add_line(line, line_no);
      }
    }
    return s;
  }
};

inline ChipMerkleTree rebuild_tree(const Store& store, const LedgerState& state) {
  std::map<ChipId, SimulatedChip> chips;
  for (const auto& [pos, chip_id] : state.seats) chips.emplace(pos, store.load_chip(chip_id));
  return build_tree(state.topology, chips, state.state_index, state.modulus_bits);
}

inline LedgerState load_ledger(const Store& store) {
  if (!std::filesystem::exists(store.ledger_path()))
    throw Error(ErrorCode::ConfigInvalid, "no ledger in " + store.dir().string() + "; run 'ledger build' first");
  return LedgerState::parse(Store::read_text(store.ledger_path()));
}

inline std::vector<Block> load_chain(const Store& store) {
  if (!std::filesystem::exists(store.chain_path())) return {};
  auto text = Store::read_text(store.chain_path());
  return parse_chain(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline void save_chain(const Store& store, const std::vector<Block>& chain) {
  auto bytes = serialize_chain(chain);
  Store::write_bytes(store.chain_path(), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline void save_ledger(const Store& store, const LedgerState& state) {
  std::filesystem::create_directories(store.dir());
  Store::write_bytes(store.ledger_path(), state.to_text());
}

inline std::string join_ids(const std::vector<ChipId>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id.value;
  return out;
}

inline Record block_record(const Block& b) {
  Record r{"block", {}};
  r.add("height", b.height)
      .add("nonce", b.nonce)
      .add("root_hash", to_hex(b.stamp.root_hash))
      .add("l", b.stamp.state_index)
      .add("prev_hash", to_hex(b.prev_block_hash))
      .add("block_hash", to_hex(b.block_hash))
      .add("leading_zero_bits", leading_zero_bits(b.block_hash));
  return r;
}

// Public key argument: hex of the serialized key, or a file holding it.
inline PublicKey read_public_key(const std::string& arg) {
  std::string hex = arg;
  if (std::filesystem::exists(arg)) hex = std::string(text::trim(Store::read_text(arg)));
  try {
    return PublicKey::parse(from_hex(hex));
  } catch (const Error& e) {
    throw Error(ErrorCode::Malformed, "public key: " + std::string(e.what()));
  }
}

struct SelftestCheck {
  std::string name;
  bool pass = false;
};

inline std::vector<SelftestCheck> run_selftest(std::uint64_t seed) {
  std::vector<SelftestCheck> checks;
  auto check = [&](std::string name, auto&& fn) {
    bool pass = false;
    try {
      pass = fn();
    } catch (const std::exception&) {
      pass = false;
    }
    checks.push_back({std::move(name), pass});
  };
  auto chip = new_chip(ChipId{"selftest"}, ChipGeometry::preset_4mb(), FailureModel{}, seed);
  check("chip_model.prn_matches_failure_rows", [&] { return extract_prn(chip).rows == chip.failure_rows(); });
  check("entropy.anchor_4mb", [] {
    auto r = entropy_report(2000, 1, 10);
    return r.combinations.get_str() == "275898785946005613288829800" && std::abs(r.entropy_nats - 60.88207631273) < 1e-9;
  });
  check("entropy.collision_bound", [] {
    BigInt n;
    mpz_ui_pow_ui(n.get_mpz_t(), 10, 14);
    return collision_report(2000, 1, 10, n).per_chip < mpq_class(1, BigInt("100000000000"));
  });
  check("identity.sign_verify", [&] {
    auto keys = observe_state(extract_prn(chip), 1, 512).keys;
    Bytes msg{'o', 'k'};
    auto sig = sign(keys.secret_key, msg);
    Bytes other{'n', 'o'};
    return verify(keys.public_key, msg, sig) && !verify(keys.public_key, other, sig);
  });
  check("identity.audit", [&] {
    auto keys = observe_state(extract_prn(chip), 1, 512).keys;
    auto impostor = new_chip(ChipId{"impostor"}, ChipGeometry::preset_4mb(), FailureModel{}, seed + 1);
    Rng rng(seed);
    const Digest nonce = rng.digest();
    return crp_audit(chip, keys.public_key, {1, true}, nonce, 512) == AuditVerdict::genuine &&
           crp_audit(impostor, keys.public_key, {1, true}, nonce, 512) == AuditVerdict::impostor;
  });
  check("ledger.mine_verify_roundtrip", [&] {
    std::map<ChipId, SimulatedChip> chips;
    for (const char* id : {"a", "b", "c"})
      chips.emplace(ChipId{id}, new_chip(ChipId{id}, ChipGeometry::preset_4mb(), FailureModel{}, seed + id[0]));
    Topology t;
    t.edges = {{ChipId{"b"}, ChipId{"a"}}, {ChipId{"c"}, ChipId{"a"}}};
    auto tree = build_tree(t, chips, 1, 512);
    std::vector<Block> chain{mine_block(tree.stamp(), Digest{}, 8, 0, 0)};
    chain.push_back(mine_block(tree.stamp(), chain.back().block_hash, 8, 0, 1));
    return verify_tree(tree) && verify_chain(parse_chain(serialize_chain(chain)), 8);
  });
  check("network_sim.bundled_scenario", [&] {
    auto run = run_scenario(bundled_scenario("fig10-coexistence"), seed);
    return run.summary.ok() && run.summary.chain_length == 3 && run.summary.rejections >= 1;
  });
  check("cli.output_records", [] {
    std::ostringstream os;
    Printer p(os, OutputMode::records);
    p.emit(Record{"x", {{"a", "1"}}});
    return os.str() == "x a=1\n";
  });
  return checks;
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"chipledger: chip-rooted identity, ledger and network simulation", "chipledger"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "RNG seed (default 0)");
  app.add_option("--output", g.output, "Output format")->check(CLI::IsMember({"text", "records"}));
  app.add_option("--modulus-bits", g.modulus_bits, "RSA modulus size")->check(CLI::IsMember({512, 1024, 2048}));
  app.add_option("--mine-threads", g.mine_threads, "Threads for nonce search")->check(CLI::Range(1u, 256u));
  app.add_option("--store", g.store, "Directory for chip fixtures and ledger state");

  std::function<void(Printer&)> action;
  auto bind = [&](CLI::App* cmd, std::function<void(Printer&)> fn) {
    cmd->callback([&action, fn = std::move(fn)] { action = fn; });
  };

  // chip
  auto* chip = app.add_subcommand("chip", "Chip fixtures")->require_subcommand(1);
  auto* chip_new = chip->add_subcommand("new", "Manufacture a chip and store its fixture");
  std::string chip_id;
  std::uint32_t chip_y = 2000, chip_redundancy = 20;
  double chip_lambda = 10.0;
  chip_new->add_option("--id", chip_id, "Chip id (default chip-<seed>)");
  chip_new->add_option("--y", chip_y, "Rows per block")->check(CLI::PositiveNumber);
  chip_new->add_option("--lambda", chip_lambda, "Mean failure rows");
  chip_new->add_option("--redundancy", chip_redundancy, "Redundancy rows");
  bind(chip_new, [&](Printer& p) {
    const std::string id = chip_id.empty() ? "chip-" + std::to_string(g.seed) : chip_id;
    auto c = new_chip(ChipId{id}, ChipGeometry::isotropic(chip_y, chip_redundancy), FailureModel{chip_lambda}, g.seed);
    Store store(g.store);
    store.save_chip(c);
    Record r{"chip", {}};
    r.add("chip_id", id).add("rows_Y", chip_y).add("redundancy_rows", chip_redundancy).add("seed", g.seed);
    r.add("failures", c.failure_rows().size()).add("fixture", store.chip_path(id).string());
    p.emit(r);
  });
  auto* chip_prn = chip->add_subcommand("prn", "Extract the PRN of a stored chip");
  std::uint32_t column = 0;
  chip_prn->add_option("--id", chip_id, "Chip id")->required();
  chip_prn->add_option("--column", column, "Column j");
  bind(chip_prn, [&](Printer& p) {
    auto c = Store(g.store).load_chip(chip_id);
    auto prn = extract_prn(c, column);
    std::string rows;
    for (auto row : prn.rows) rows += (rows.empty() ? "" : ",") + std::to_string(row);
    Record r{"prn", {}};
    r.add("chip_id", chip_id).add("column", column).add("rows_Y", prn.rows_per_block).add("count", prn.rows.size());
    r.add("rows", rows).add("digest", to_hex(sha256(prn.canonical_bytes())));
    p.emit(r);
  });

  // entropy
  auto* entropy = app.add_subcommand("entropy", "Combinatorial entropy of failure-row fingerprints");
  entropy->require_subcommand(0, 1);
  std::uint64_t y = 2000, l = 1, m = 10;
  entropy->add_option("--y", y, "Rows per block")->check(CLI::PositiveNumber);
  entropy->add_option("--l", l, "Blocks")->check(CLI::PositiveNumber);
  entropy->add_option("--m", m, "Failure rows");
  entropy->fallthrough();
  // The parent callback also fires after `entropy table` and friends.
  auto entropy_base = [&](Printer& p) {
    auto r = entropy_report(y, l, m);
    BigInt threshold;
    mpz_ui_pow_ui(threshold.get_mpz_t(), 10, 25);
    Record rec{"entropy", {}};
    rec.add("rows_Y", y).add("blocks_L", l).add("failures_m", m).add("combinations", r.combinations.get_str());
    rec.add("combinations_sci", to_scientific(mpq_class(r.combinations)));
    rec.add("exceeds_1e25", r.combinations > threshold ? 1 : 0);
    rec.add("entropy_nats", r.entropy_nats).add("entropy_bits", r.entropy_bits);
    p.emit(rec);
  };
  entropy->callback([&] {
    if (entropy->get_subcommands().empty()) action = entropy_base;
  });
  auto* entropy_table = entropy->add_subcommand("table", "Entropy across DRAM generations (L = 1)");
  std::vector<std::string> generations;
  entropy_table->add_option("--generations", generations, "Subset of generations (default: all)");
  bind(entropy_table, [&](Printer& p) {
    std::vector<std::string_view> names;
    if (generations.empty())
      names = generation_ladder();
    else
      names.assign(generations.begin(), generations.end());
    std::vector<Record> rows;
    for (const auto& gr : generation_table(m, names)) {
      Record r{"generation", {}};
      r.add("name", std::string(gr.name)).add("rows_Y", gr.report.rows).add("failures_m", gr.report.failures);
      r.add("combinations", to_scientific(mpq_class(gr.report.combinations), 6));
      r.add("entropy_nats", gr.report.entropy_nats).add("entropy_bits", gr.report.entropy_bits);
      rows.push_back(std::move(r));
    }
    p.table(rows);
  });
  auto* entropy_coll = entropy->add_subcommand("collisions", "Collision bounds for a chip population");
  std::string population = "100000000000000";
  entropy_coll->add_option("--n", population, "Population size N (decimal integer)");
  bind(entropy_coll, [&](Printer& p) {
    BigInt n;
    if (n.set_str(population, 10) != 0) throw Error(ErrorCode::InvalidArgument, "--n: not an integer");
    auto r = collision_report(y, l, m, n);
    const mpq_class bound(1, BigInt("100000000000"));
    Record rec{"collisions", {}};
    rec.add("rows_Y", y).add("blocks_L", l).add("failures_m", m).add("population", n.get_str());
    rec.add("per_pair", to_scientific(r.per_pair)).add("per_chip", to_scientific(r.per_chip));
    rec.add("expected_pairs", to_scientific(r.expected_pairs));
    rec.add("per_chip_below_1e-11", r.per_chip < bound ? 1 : 0);
    p.emit(rec);
  });

  // id
  auto* id = app.add_subcommand("id", "Chip-bound keys and audits")->require_subcommand(1);
  auto* id_keygen = id->add_subcommand("keygen", "Derive the keypair of a stored chip at state l");
  std::uint64_t state_l = 1;
  id_keygen->add_option("--chip", chip_id, "Chip id")->required();
  id_keygen->add_option("--l", state_l, "Security state index");
  id_keygen->add_option("--column", column, "Column j");
  bind(id_keygen, [&](Printer& p) {
    auto c = Store(g.store).load_chip(chip_id);
    auto obs = observe_state(extract_prn(c, column), state_l, g.modulus_bits);
    Record r{"keypair", {}};
    r.add("chip_id", chip_id).add("l", state_l).add("modulus_bits", g.modulus_bits);
    r.add("challenge", to_hex(obs.challenge.bytes)).add("public_key", to_hex(obs.keys.public_key.serialize()));
    r.add("fingerprint", fingerprint(obs.keys.public_key.serialize()));
    p.emit(r);
  });
  auto* id_audit = id->add_subcommand("audit", "Audit a stored chip against a registered public key");
  std::string pk_arg;
  id_audit->add_option("--chip", chip_id, "Chip id")->required();
  id_audit->add_option("--pk", pk_arg, "Public key (hex or file)")->required();
  id_audit->add_option("--l", state_l, "Security state index");
  id_audit->add_option("--column", column, "Column j");
  bind(id_audit, [&](Printer& p) {
    auto c = Store(g.store).load_chip(chip_id);
    auto pk = read_public_key(pk_arg);
    Rng rng(g.seed);
    const Digest nonce = rng.digest();
    const auto proof = prove_possession(c, state_l, nonce, static_cast<unsigned>(bit_length(pk.modulus)), column);
    const auto verdict = check_possession(pk, nonce, proof);
    Record r{"audit", {}};
    r.add("chip_id", chip_id).add("l", state_l).add("nonce", to_hex(nonce));
    r.add("verdict", std::string(verdict_name(verdict)));
    p.emit(r);
  });

  // ledger
  auto* ledger = app.add_subcommand("ledger", "Merkle tree of chips and the block chain")->require_subcommand(1);
  auto* ledger_build = ledger->add_subcommand("build", "Build the tree from a topology file");
  std::string topology_file;
  ledger_build->add_option("--topology", topology_file, "Topology file ('a -> b' lines)")->required();
  ledger_build->add_option("--l", state_l, "Security state index");
  bind(ledger_build, [&](Printer& p) {
    Store store(g.store);
    LedgerState state;
    state.state_index = state_l;
    state.modulus_bits = g.modulus_bits;
    state.topology = Topology::parse(Store::read_text(topology_file));
    std::uint64_t next_seed = g.seed;
    for (const auto& pos : state.topology.node_set()) {
      if (!store.has_chip(pos.value))
        store.save_chip(new_chip(pos, ChipGeometry::preset_4mb(), FailureModel{}, next_seed++));
      state.seats[pos] = pos.value;
    }
    auto tree = rebuild_tree(store, state);
    save_ledger(store, state);
    std::filesystem::remove(store.chain_path());
    Record r{"tree", {}};
    r.add("root", tree.root().value).add("root_hash", to_hex(tree.root_hash())).add("l", tree.state_index());
    r.add("nodes", tree.nodes().size()).add("schedule", join_ids(tree.schedule()));
    p.emit(r);
  });
  auto* ledger_mine = ledger->add_subcommand("mine", "Seal the current root stamp into the next block");
  unsigned difficulty = 12;
  std::uint64_t nonce_start = 0;
  ledger_mine->add_option("--difficulty", difficulty, "Leading zero bits")->check(CLI::Range(0u, kMaxDifficulty));
  ledger_mine->add_option("--nonce-start", nonce_start, "First nonce tried");
  bind(ledger_mine, [&](Printer& p) {
    Store store(g.store);
    auto state = load_ledger(store);
    auto chain = load_chain(store);
    auto tree = rebuild_tree(store, state);
    const Digest prev = chain.empty() ? Digest{} : chain.back().block_hash;
    auto block = mine_block_parallel(tree.stamp(), prev, difficulty, nonce_start, g.mine_threads, chain.size());
    chain.push_back(block);
    state.difficulties.push_back(difficulty);
    save_chain(store, chain);
    save_ledger(store, state);
    auto r = block_record(block);
    r.add("attempts", mining_attempts(block, nonce_start));
    p.emit(r);
  });
  auto* ledger_verify = ledger->add_subcommand("verify", "Verify the stored chain and tree");
  bool verify_ok = true;
  bind(ledger_verify, [&](Printer& p) {
    Store store(g.store);
    auto state = load_ledger(store);
    Record r{"verify", {}};
    bool chain_ok = true;
    std::size_t blocks = 0;
    try {
      auto chain = load_chain(store);
      blocks = chain.size();
      unsigned lowest = kMaxDifficulty;
      for (auto d : state.difficulties) lowest = std::min(lowest, d);
      chain_ok = chain.size() == state.difficulties.size() && verify_chain(chain, chain.empty() ? 0 : lowest);
      for (std::size_t i = 0; chain_ok && i < chain.size(); ++i)
        chain_ok = leading_zero_bits(chain[i].block_hash) >= state.difficulties[i];
    } catch (const Error&) {
      chain_ok = false;
    }
    const bool tree_ok = verify_tree(rebuild_tree(store, state));
    verify_ok = chain_ok && tree_ok;
    r.add("blocks", blocks).add("chain_valid", chain_ok ? 1 : 0).add("tree_valid", tree_ok ? 1 : 0);
    p.emit(r);
  });
  auto* ledger_replace = ledger->add_subcommand("replace", "Seat another chip at a tree position");
  std::string old_pos, new_chip_id;
  ledger_replace->add_option("--old", old_pos, "Tree position being replaced")->required();
  ledger_replace->add_option("--new", new_chip_id, "Stored chip to seat there (manufactured with --seed if absent)")
      ->required();
  bind(ledger_replace, [&](Printer& p) {
    Store store(g.store);
    auto state = load_ledger(store);
    auto tree = rebuild_tree(store, state);
    if (!store.has_chip(new_chip_id))
      store.save_chip(new_chip(ChipId{new_chip_id}, ChipGeometry::preset_4mb(), FailureModel{}, g.seed));
    const auto before = tree.root_hash();
    auto result = replace_chip(tree, ChipId{old_pos}, store.load_chip(new_chip_id), state.state_index);
    state.seats[ChipId{old_pos}] = new_chip_id;
    save_ledger(store, state);
    Record r{"replace", {}};
    r.add("position", old_pos).add("chip", new_chip_id).add("recomputed", join_ids(result.recomputed));
    r.add("root_hash_before", to_hex(before)).add("root_hash", to_hex(result.tree.root_hash()));
    p.emit(r);
  });
  auto* ledger_rotate = ledger->add_subcommand("rotate", "Move the tree to another security state");
  ledger_rotate->add_option("--l", state_l, "New security state index")->required();
  bind(ledger_rotate, [&](Printer& p) {
    Store store(g.store);
    auto state = load_ledger(store);
    auto tree = rebuild_tree(store, state);
    auto rotated = rotate_state_reproduce(tree, state_l);
    state.state_index = state_l;
    save_ledger(store, state);
    Record r{"rotate", {}};
    r.add("from", tree.state_index()).add("to", rotated.state_index());
    r.add("root_hash", to_hex(rotated.root_hash())).add("recomputed", rotated.nodes().size());
    p.emit(r);
  });

  // scenario
  auto* scenario = app.add_subcommand("scenario", "Network simulation")->require_subcommand(1);
  auto* scenario_run = scenario->add_subcommand("run", "Run a bundled scenario or a scenario file");
  std::string scenario_name;
  scenario_run->add_option("scenario", scenario_name, "Bundled name or path")->required();
  bool scenario_ok = true;
  bind(scenario_run, [&](Printer& p) {
    auto cfg = is_bundled_scenario(scenario_name) ? bundled_scenario(scenario_name)
                                                  : parse_scenario(Store::read_text(scenario_name));
    auto run = run_scenario(cfg, g.seed, g.mine_threads);
    for (const auto& e : run.log) p.raw(e.to_record());
    const auto& s = run.summary;
    if (p.mode() == OutputMode::text) {
      Record t{"summary", {}};
      t.add("scenario", s.name).add("seed", s.seed).add("chain length", s.chain_length);
      t.add("chain verifies", s.chain_valid ? "yes" : "no").add("members", s.members);
      t.add("admitted", s.admitted).add("denied", s.denied).add("spoofs rejected", s.rejections);
      t.add("evictions", s.evictions).add("final state", s.final_state);
      t.add("invariants", s.ok() ? "ok" : "VIOLATED");
      p.raw("");
      p.emit(t);
    }
    p.raw(s.to_record());
    scenario_ok = s.ok();
    if (!scenario_ok) err << "invariant violated in scenario " << s.name << "\n";
  });
  bind(scenario->add_subcommand("list", "List bundled scenarios"), [&](Printer& p) {
    for (const auto& s : kBundledScenarios) p.raw(s.name);
  });
  auto* scenario_show = scenario->add_subcommand("show", "Print a bundled scenario's text");
  scenario_show->add_option("name", scenario_name, "Bundled name")->required();
  bind(scenario_show, [&](Printer& p) { p.raw(text::trim(bundled_scenario_text(scenario_name))); });

  bind(app.add_subcommand("version", "Print the version"), [&](Printer& p) { p.raw("chipledger " + std::string(kVersion)); });

  bool selftest_ok = true;
  bind(app.add_subcommand("selftest", "Run the embedded checks"), [&](Printer& p) {
    for (const auto& c : run_selftest(g.seed)) {
      p.raw(std::string(c.pass ? "PASS " : "FAIL ") + c.name);
      selftest_ok = selftest_ok && c.pass;
    }
  });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    auto* failed = &app;
    for (auto* sub = &app; sub;) {
      auto subs = sub->get_subcommands();
      failed = sub;
      sub = subs.empty() ? nullptr : subs.front();
    }
    err << failed->help();
    return 2;
  }

  Printer printer(out, g.output == "records" ? OutputMode::records : OutputMode::text);
  try {
    action(printer);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return verify_ok && scenario_ok && selftest_ok ? 0 : 1;
}

}  // namespace chipledger::cli
