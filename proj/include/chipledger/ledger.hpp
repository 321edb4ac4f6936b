#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chipledger/bytes.hpp"
#include "chipledger/chip_model.hpp"
#include "chipledger/error.hpp"
#include "chipledger/identity.hpp"
#include "chipledger/sha256.hpp"
#include "chipledger/strings.hpp"

namespace chipledger {

// ---------------------------------------------------------------------------
// Transaction records

// One chip-to-chip transfer. The sender folds its own public key with the
// hash and signature it last received into a new hash value, then signs the
// receiver's public key together with that hash.
//
// `seq` is the record's position in the receiver's incoming list. It is
// receiver-side bookkeeping and not part of the wire form.
struct TransactionRecord {
  PublicKey sender;
  PublicKey receiver;
  Digest prev_hash{};
  Bytes prev_signature;
  Digest hash_value{};
  Signature signature;  // empty for a genesis record
  std::uint64_t seq = 0;

  bool is_genesis() const noexcept { return signature.empty(); }

  Bytes serialize() const {
    Bytes out = sender.serialize();
    append(out, receiver.serialize());
    append(out, prev_hash);
    put_prefixed(out, prev_signature);
    append(out, hash_value);
    put_prefixed(out, signature);
    return out;
  }

  static TransactionRecord parse(ByteView data) {
    ByteReader reader(data);
    TransactionRecord r;
    r.sender = PublicKey::read(reader);
    r.receiver = PublicKey::read(reader);
    r.prev_hash = reader.digest();
    r.prev_signature = reader.prefixed();
    r.hash_value = reader.digest();
    r.signature = reader.prefixed();
    reader.expect_done();
    return r;
  }
};

// H(sender_pk || prev_hash || prev_signature)
inline Digest record_hash(const PublicKey& sender, const Digest& prev_hash, ByteView prev_signature) {
  Sha256 h;
  h.update(sender.serialize()).update(prev_hash).update(prev_signature);
  return h.finish();
}

inline Bytes transfer_message(const PublicKey& receiver, const Digest& hash_value) {
  Bytes msg = receiver.serialize();
  append(msg, hash_value);
  return msg;
}

// Base case for a chip with no history: the chip is its own sender,
// previous hash is all zeros and there is no previous signature.
inline TransactionRecord genesis_record(const PublicKey& pk) {
  TransactionRecord r;
  r.sender = pk;
  r.receiver = pk;
  r.hash_value = record_hash(pk, r.prev_hash, {});
  return r;
}

inline bool verify_record(const TransactionRecord& r) {
  if (record_hash(r.sender, r.prev_hash, r.prev_signature) != r.hash_value) return false;
  if (r.is_genesis()) return r.sender == r.receiver && r.prev_hash == Digest{} && r.prev_signature.empty();
  return verify_quiet(r.sender, transfer_message(r.receiver, r.hash_value), r.signature);
}

// latest <- H(receiver_pk || latest || incoming.hash_value)
inline Digest fold_hash(const PublicKey& receiver, const Digest& latest, const Digest& incoming) {
  Sha256 h;
  h.update(receiver.serialize()).update(latest).update(incoming);
  return h.finish();
}

// ---------------------------------------------------------------------------
// Topology

struct Edge {
  ChipId from;
  ChipId to;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Directed transfers between chips, plus any isolated nodes.
struct Topology {
  std::vector<ChipId> nodes;
  std::vector<Edge> edges;

  std::set<ChipId> node_set() const {
    std::set<ChipId> out(nodes.begin(), nodes.end());
    for (const auto& e : edges) {
      out.insert(e.from);
      out.insert(e.to);
    }
    return out;
  }

  // Lines are "a -> b" or "node a"; '#' starts a comment.
  static Topology parse(std::string_view text) {
    Topology t;
    int line_no = 0;
    for (auto raw : text::split(text, '\n')) {
      ++line_no;
      auto line = text::trim(text::strip_comment(raw));
      if (line.empty()) continue;
      t.add_line(line, line_no);
    }
    return t;
  }

  void add_line(std::string_view line, int line_no) {
    auto where = [&] { return "topology line " + std::to_string(line_no) + ": "; };
    auto arrow = line.find("->");
    if (arrow != std::string_view::npos) {
      auto from = text::trim(line.substr(0, arrow));
      auto to = text::trim(line.substr(arrow + 2));
      if (from.empty() || to.empty() || text::words(from).size() != 1 || text::words(to).size() != 1)
        throw Error(ErrorCode::ConfigInvalid, where() + "expected 'from -> to'");
      edges.push_back({ChipId{std::string(from)}, ChipId{std::string(to)}});
      return;
    }
    auto w = text::words(line);
    if (w.size() == 2 && w[0] == "node") {
      nodes.push_back(ChipId{std::string(w[1])});
      return;
    }
    throw Error(ErrorCode::ConfigInvalid, where() + "expected 'from -> to' or 'node <id>'");
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& n : nodes) os << "node " << n << "\n";
    for (const auto& e : edges) os << e.from << " -> " << e.to << "\n";
    return os.str();
  }
};

// The nine-chip tree: n2,n3 -> n1; n5 -> n4; n7,n8 -> n6; n1,n4,n6 -> n0.
inline Topology sample_tree_topology() {
  Topology t;
  auto edge = [&](const char* a, const char* b) { t.edges.push_back({ChipId{a}, ChipId{b}}); };
  edge("n2", "n1");
  edge("n3", "n1");
  edge("n5", "n4");
  edge("n7", "n6");
  edge("n8", "n6");
  edge("n1", "n0");
  edge("n4", "n0");
  edge("n6", "n0");
  return t;
}

// ---------------------------------------------------------------------------
// Merkle tree of chips

struct LedgerNode {
  ChipId id;  // position in the topology; stays fixed when the chip is swapped
  SimulatedChip chip;
  ChipKeyPair keys;
  std::vector<TransactionRecord> incoming;  // incoming[0] is the genesis record
  Digest latest_hash{};
  Signature latest_signature;
};

inline ChipKeyPair derive_node_keys(SimulatedChip& chip, std::uint64_t state_index, unsigned modulus_bits) {
  return observe_state(extract_prn(chip), state_index, modulus_bits).keys;
}

// Record sent by `sender` to the holder of `receiver_pk`.
inline TransactionRecord transfer(const LedgerNode& sender, const PublicKey& receiver_pk, std::uint64_t state_index) {
  if (sender.keys.state_index != state_index)
    throw Error(ErrorCode::StateMismatch, "sender " + sender.id.value + " holds keys for state " +
                                              std::to_string(sender.keys.state_index));
  TransactionRecord r;
  r.sender = sender.keys.public_key;
  r.receiver = receiver_pk;
  r.prev_hash = sender.latest_hash;
  r.prev_signature = sender.latest_signature;
  r.hash_value = record_hash(r.sender, r.prev_hash, r.prev_signature);
  r.signature = sign(sender.keys.secret_key, transfer_message(receiver_pk, r.hash_value));
  return r;
}

inline void receive(LedgerNode& receiver, TransactionRecord record) {
  record.seq = receiver.incoming.size();
  receiver.latest_hash = fold_hash(receiver.keys.public_key, receiver.latest_hash, record.hash_value);
  receiver.latest_signature = record.signature;
  receiver.incoming.push_back(std::move(record));
}

// The stamp a miner seals into a block.
struct RootStamp {
  PublicKey root_pk;
  Digest root_hash{};
  std::uint64_t state_index = 0;

  // [len|modulus][len|exponent][root_hash 32][be64 l]
  Bytes canonical() const {
    Bytes out = root_pk.serialize();
    append(out, root_hash);
    put_be64(out, state_index);
    return out;
  }

  static RootStamp read(ByteReader& reader) {
    RootStamp s;
    s.root_pk = PublicKey::read(reader);
    s.root_hash = reader.digest();
    s.state_index = reader.be64();
    return s;
  }

  friend bool operator==(const RootStamp& a, const RootStamp& b) {
    return a.root_pk == b.root_pk && a.root_hash == b.root_hash && a.state_index == b.state_index;
  }
};

class ChipMerkleTree {
 public:
  const ChipId& root() const noexcept { return root_; }
  const Digest& root_hash() const { return nodes_.at(root_).latest_hash; }
  std::uint64_t state_index() const noexcept { return state_; }
  unsigned modulus_bits() const noexcept { return modulus_bits_; }
  const std::map<ChipId, LedgerNode>& nodes() const noexcept { return nodes_; }
  std::map<ChipId, LedgerNode>& mutable_nodes() noexcept { return nodes_; }
  const LedgerNode& node(const ChipId& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(ErrorCode::UnknownChip, "no node " + id.value);
    return it->second;
  }
  const std::vector<ChipId>& schedule() const noexcept { return schedule_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<ChipId>& successors(const ChipId& id) const { return successors_.at(id); }

  RootStamp stamp() const { return {node(root_).keys.public_key, root_hash(), state_}; }

  // Nodes whose records depend on `id`: the node itself and everything
  // downstream of it, in schedule order.
  std::vector<ChipId> downstream_of(const ChipId& id) const {
    node(id);
    std::set<ChipId> seen{id};
    std::vector<ChipId> stack{id};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto& next : successors_.at(cur))
        if (seen.insert(next).second) stack.push_back(next);
    }
    std::vector<ChipId> ordered;
    for (const auto& n : schedule_)
      if (seen.contains(n)) ordered.push_back(n);
    return ordered;
  }

 private:
  friend ChipMerkleTree build_tree(const Topology&, const std::map<ChipId, SimulatedChip>&, std::uint64_t, unsigned);
  friend struct TreeAccess;

  void reset_to_genesis(LedgerNode& n) {
    auto g = genesis_record(n.keys.public_key);
    n.latest_hash = g.hash_value;
    n.latest_signature.clear();
    n.incoming.clear();
    n.incoming.push_back(std::move(g));
  }

  // Rebuilds the records of `affected` following the schedule; records of
  // every other node are kept as they are.
  void recompute(const std::set<ChipId>& affected) {
    for (const auto& id : schedule_)
      if (affected.contains(id)) reset_to_genesis(nodes_.at(id));
    for (const auto& id : schedule_) {
      const auto& sender = nodes_.at(id);
      for (const auto& to : successors_.at(id)) {
        if (!affected.contains(to)) continue;
        auto& receiver = nodes_.at(to);
        receive(receiver, transfer(sender, receiver.keys.public_key, state_));
      }
    }
  }

  std::map<ChipId, LedgerNode> nodes_;
  std::vector<Edge> edges_;
  std::map<ChipId, std::vector<ChipId>> successors_;
  std::vector<ChipId> schedule_;
  ChipId root_;
  std::uint64_t state_ = 0;
  unsigned modulus_bits_ = 1024;
};

// Executes the transfers of `topology` in topological order (ties to the
// smallest chip id). A topology with no nodes and no edges uses every chip
// in `chips` as an isolated node.
inline ChipMerkleTree build_tree(const Topology& topology, const std::map<ChipId, SimulatedChip>& chips,
                                 std::uint64_t state_index, unsigned modulus_bits = 1024) {
  auto ids = topology.node_set();
  if (ids.empty())
    for (const auto& [id, chip] : chips) ids.insert(id);

  ChipMerkleTree tree;
  tree.state_ = state_index;
  tree.modulus_bits_ = modulus_bits;
  tree.edges_ = topology.edges;

  std::map<ChipId, int> indegree;
  for (const auto& id : ids) {
    tree.successors_[id];
    indegree[id] = 0;
  }
  std::set<Edge> unique_edges;
  for (const auto& e : topology.edges) {
    if (e.from == e.to) throw Error(ErrorCode::CycleDetected, "self-transfer at " + e.from.value);
    if (!unique_edges.insert(e).second)
      throw Error(ErrorCode::ConfigInvalid, "duplicate transfer " + e.from.value + " -> " + e.to.value);
    tree.successors_[e.from].push_back(e.to);
    ++indegree[e.to];
  }
  for (auto& [id, next] : tree.successors_) std::sort(next.begin(), next.end());

  std::priority_queue<ChipId, std::vector<ChipId>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.push(id);
  while (!ready.empty()) {
    auto id = ready.top();
    ready.pop();
    tree.schedule_.push_back(id);
    for (const auto& next : tree.successors_[id])
      if (--indegree[next] == 0) ready.push(next);
  }
  if (tree.schedule_.size() != ids.size()) throw Error(ErrorCode::CycleDetected, "transfer graph has a cycle");

  std::vector<ChipId> sinks;
  for (const auto& [id, next] : tree.successors_)
    if (next.empty()) sinks.push_back(id);
  if (sinks.size() != 1) throw Error(ErrorCode::MultipleSinks, std::to_string(sinks.size()) + " sinks in topology");
  tree.root_ = sinks.front();

  for (const auto& id : ids) {
    auto it = chips.find(id);
    if (it == chips.end()) throw Error(ErrorCode::UnknownChip, "no chip enrolled for " + id.value);
    LedgerNode node{id, it->second, {}, {}, {}, {}};
    node.keys = derive_node_keys(node.chip, state_index, modulus_bits);
    tree.nodes_.emplace(id, std::move(node));
  }
  tree.recompute(std::set<ChipId>(ids.begin(), ids.end()));
  return tree;
}

struct TreeAccess {
  static void recompute(ChipMerkleTree& t, const std::set<ChipId>& affected) { t.recompute(affected); }
  static void set_state(ChipMerkleTree& t, std::uint64_t l) { t.state_ = l; }
};

struct ReplaceResult {
  ChipMerkleTree tree;
  std::vector<ChipId> recomputed;  // schedule order
};

// Swaps the chip at position `old_id` for `new_chip` and re-derives only
// the records on the path from that position to the root.
inline ReplaceResult replace_chip(const ChipMerkleTree& tree, const ChipId& old_id, const SimulatedChip& new_chip,
                                  std::uint64_t state_index) {
  if (state_index != tree.state_index())
    throw Error(ErrorCode::StateMismatch, "tree is at state " + std::to_string(tree.state_index()));
  auto recomputed = tree.downstream_of(old_id);
  ReplaceResult out{tree, recomputed};
  auto& node = out.tree.mutable_nodes().at(old_id);
  node.chip = new_chip;
  node.keys = derive_node_keys(node.chip, state_index, tree.modulus_bits());
  TreeAccess::recompute(out.tree, std::set<ChipId>(recomputed.begin(), recomputed.end()));
  return out;
}

// Re-derives every node's keys at `new_state` and rebuilds every record.
inline ChipMerkleTree rotate_state_reproduce(const ChipMerkleTree& tree, std::uint64_t new_state) {
  if (new_state == tree.state_index())
    throw Error(ErrorCode::StateUnchanged, "tree already at state " + std::to_string(new_state));
  ChipMerkleTree out = tree;
  TreeAccess::set_state(out, new_state);
  std::set<ChipId> all;
  for (auto& [id, node] : out.mutable_nodes()) {
    node.keys = derive_node_keys(node.chip, new_state, tree.modulus_bits());
    all.insert(id);
  }
  TreeAccess::recompute(out, all);
  return out;
}

// Full re-verification: every record checks, incoming records were sent to
// the node's key by its topology predecessors, and latest_hash is the fold.
inline bool verify_tree(const ChipMerkleTree& tree) {
  std::map<ChipId, std::vector<ChipId>> senders;
  for (const auto& id : tree.schedule())
    for (const auto& to : tree.successors(id)) senders[to].push_back(id);

  for (const auto& [id, node] : tree.nodes()) {
    const auto& pk = node.keys.public_key;
    if (node.keys.state_index != tree.state_index()) return false;
    const auto& from = senders[id];
    if (node.incoming.size() != from.size() + 1) return false;
    Digest latest{};
    Signature latest_sig;
    for (std::size_t i = 0; i < node.incoming.size(); ++i) {
      const auto& r = node.incoming[i];
      if (r.seq != i || !verify_record(r) || !(r.receiver == pk)) return false;
      if (i == 0) {
        if (!r.is_genesis() || !(r.sender == pk)) return false;
        latest = r.hash_value;
        continue;
      }
      const auto& sender = tree.node(from[i - 1]);
      if (r.is_genesis() || !(r.sender == sender.keys.public_key)) return false;
      if (r.prev_hash != sender.latest_hash || r.prev_signature != sender.latest_signature) return false;
      latest = fold_hash(pk, latest, r.hash_value);
      latest_sig = r.signature;
    }
    if (latest != node.latest_hash || latest_sig != node.latest_signature) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Proof-of-work chain

struct Block {
  std::uint64_t height = 0;
  std::uint64_t nonce = 0;
  RootStamp stamp;
  Digest prev_block_hash{};
  Digest block_hash{};
  unsigned difficulty_bits = 0;  // target used when mining; not on the wire

  // be64 height || be64 nonce || stamp || prev_block_hash || block_hash
  Bytes serialize() const {
    Bytes out;
    put_be64(out, height);
    put_be64(out, nonce);
    append(out, stamp.canonical());
    append(out, prev_block_hash);
    append(out, block_hash);
    return out;
  }

  static Block parse(ByteView data) {
    ByteReader reader(data);
    Block b;
    b.height = reader.be64();
    b.nonce = reader.be64();
    b.stamp = RootStamp::read(reader);
    b.prev_block_hash = reader.digest();
    b.block_hash = reader.digest();
    reader.expect_done();
    return b;
  }
};

namespace detail {

inline Bytes block_preimage(const RootStamp& stamp, const Digest& prev) {
  Bytes msg(8, 0);
  append(msg, stamp.canonical());
  append(msg, prev);
  return msg;
}

inline void set_nonce(Bytes& preimage, std::uint64_t nonce) {
  for (int i = 0; i < 8; ++i) preimage[i] = static_cast<std::uint8_t>(nonce >> (56 - 8 * i));
}

}  // namespace detail

// H(be64 nonce || canonical(stamp) || prev_block_hash)
inline Digest block_hash(std::uint64_t nonce, const RootStamp& stamp, const Digest& prev) {
  auto msg = detail::block_preimage(stamp, prev);
  detail::set_nonce(msg, nonce);
  return sha256(msg);
}

constexpr unsigned kMaxDifficulty = 32;

// Smallest nonce >= nonce_start whose block hash has `difficulty_bits`
// leading zero bits.
inline Block mine_block(const RootStamp& stamp, const Digest& prev, unsigned difficulty_bits,
                        std::uint64_t nonce_start, std::uint64_t height = 0) {
  if (difficulty_bits > kMaxDifficulty) throw Error(ErrorCode::InvalidArgument, "difficulty above 32 bits");
  auto msg = detail::block_preimage(stamp, prev);
  Sha256 h;
  for (std::uint64_t nonce = nonce_start;; ++nonce) {
    detail::set_nonce(msg, nonce);
    auto d = h.update(msg).finish();
    if (leading_zero_bits(d) >= difficulty_bits) return {height, nonce, stamp, prev, d, difficulty_bits};
    if (nonce == UINT64_MAX) break;
  }
  throw Error(ErrorCode::NonceExhausted, "nonce space exhausted");
}

// Same result as mine_block; threads scan interleaved nonces and the
// smallest hit wins.
inline Block mine_block_parallel(const RootStamp& stamp, const Digest& prev, unsigned difficulty_bits,
                                 std::uint64_t nonce_start, unsigned threads, std::uint64_t height = 0) {
  if (threads <= 1) return mine_block(stamp, prev, difficulty_bits, nonce_start, height);
  if (difficulty_bits > kMaxDifficulty) throw Error(ErrorCode::InvalidArgument, "difficulty above 32 bits");
  const std::uint64_t span = UINT64_MAX - nonce_start;  // last valid offset
  std::atomic<std::uint64_t> best{UINT64_MAX};
  std::atomic<bool> found{false};
  const auto base = detail::block_preimage(stamp, prev);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        auto msg = base;
        Sha256 h;
        for (std::uint64_t off = t; off <= span; off += threads) {
          if (found.load(std::memory_order_relaxed) && off > best.load(std::memory_order_relaxed)) return;
          detail::set_nonce(msg, nonce_start + off);
          if (leading_zero_bits(h.update(msg).finish()) >= difficulty_bits) {
            auto cur = best.load();
            while (off < cur && !best.compare_exchange_weak(cur, off)) {
            }
            found = true;
            return;
          }
          if (span - off < threads) return;
        }
      });
    }
  }
  if (!found) throw Error(ErrorCode::NonceExhausted, "nonce space exhausted");
  const std::uint64_t nonce = nonce_start + best.load();
  return {height, nonce, stamp, prev, block_hash(nonce, stamp, prev), difficulty_bits};
}

inline std::uint64_t mining_attempts(const Block& block, std::uint64_t nonce_start) {
  return block.nonce - nonce_start + 1;
}

// Heights run 0..n-1, every hash recomputes and meets the target, and each
// block links to its predecessor (the first to 32 zero bytes).
inline bool verify_chain(std::span<const Block> blocks, unsigned difficulty_bits) {
  Digest prev{};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.height != i || b.prev_block_hash != prev) return false;
    if (block_hash(b.nonce, b.stamp, b.prev_block_hash) != b.block_hash) return false;
    if (leading_zero_bits(b.block_hash) < difficulty_bits) return false;
    prev = b.block_hash;
  }
  return true;
}

// Chain file: concatenation of [be32 length][block bytes].
inline Bytes serialize_chain(std::span<const Block> blocks) {
  Bytes out;
  for (const auto& b : blocks) put_prefixed(out, b.serialize());
  return out;
}

inline std::vector<Block> parse_chain(ByteView data) {
  ByteReader reader(data);
  std::vector<Block> blocks;
  while (!reader.done()) blocks.push_back(Block::parse(reader.prefixed()));
  return blocks;
}

}  // namespace chipledger
