#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chipledger/bytes.hpp"
#include "chipledger/chip_model.hpp"
#include "chipledger/error.hpp"
#include "chipledger/identity.hpp"
#include "chipledger/ledger.hpp"
#include "chipledger/rng.hpp"

namespace chipledger {

enum class NodeRole { device, management, security, attacker };

constexpr std::string_view role_name(NodeRole r) {
  switch (r) {
    case NodeRole::device: return "device";
    case NodeRole::management: return "management";
    case NodeRole::security: return "security";
    case NodeRole::attacker: return "attacker";
  }
  return "?";
}

enum class EventKind { Genesis, EntryRequest, Challenge, Response, Verdict, Rotate, Transfer, Mine, Evict, Fault };

constexpr std::string_view kind_name(EventKind k) {
  switch (k) {
    case EventKind::Genesis: return "Genesis";
    case EventKind::EntryRequest: return "EntryRequest";
    case EventKind::Challenge: return "Challenge";
    case EventKind::Response: return "Response";
    case EventKind::Verdict: return "Verdict";
    case EventKind::Rotate: return "Rotate";
    case EventKind::Transfer: return "Transfer";
    case EventKind::Mine: return "Mine";
    case EventKind::Evict: return "Evict";
    case EventKind::Fault: return "Fault";
  }
  return "?";
}

struct Event {
  std::uint64_t tick = 0;
  EventKind kind = EventKind::Genesis;
  std::string actor;
  std::string subject;
  std::vector<std::pair<std::string, std::string>> fields;

  std::optional<std::string> field(std::string_view key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return v;
    return std::nullopt;
  }

  // One machine-parseable record: space-separated key=value pairs.
  std::string to_record() const {
    std::string out = "t=" + std::to_string(tick) + " kind=" + std::string(kind_name(kind)) + " actor=" + actor +
                      " subject=" + subject;
    for (const auto& [k, v] : fields) out += " " + k + "=" + v;
    return out;
  }
};

// Fields whose values depend on the run seed (audit nonces, mining start
// points and everything hashed from them). All other fields are fixed by the
// scenario alone.
inline bool is_seed_dependent_field(std::string_view key) {
  return key == "nonce" || key == "sig" || key == "attempts" || key == "block_hash" || key == "prev_hash";
}

using EventLog = std::vector<Event>;

inline std::string fingerprint(ByteView data) { return to_hex(sha256(data)).substr(0, 16); }

enum class EntryVerdict { admitted, denied };
enum class SpoofOutcome { rejected, accepted };
enum class SpoofMethod { own_key, replay, stale };

// Chips admitted by the management node, with their registered keys.
struct FirewallSet {
  std::map<ChipId, PublicKey> members;
  std::uint64_t state_index = 0;

  bool contains(const ChipId& id) const { return members.contains(id); }
};

struct NodeEntry {
  std::string name;
  NodeRole role = NodeRole::device;
  std::optional<SimulatedChip> chip;
};

struct NetworkConfig {
  std::uint64_t initial_state = 1;
  unsigned modulus_bits = 512;
  unsigned difficulty_bits = 12;
  unsigned mine_threads = 1;
};

// One captured audit exchange, as seen on the wire.
struct Transcript {
  ChipId chip;
  Digest nonce{};
  PossessionProof proof;
};

// The simulated network. Management owns admission (blocklist, registry,
// audits); security owns the active state index; miners own the chain.
class Network {
 public:
  explicit Network(NetworkConfig config, std::uint64_t seed) : config_(config), rng_(seed), state_(config.initial_state) {
    firewall_.state_index = state_;
  }

  void set_tick(std::uint64_t tick) { tick_ = tick; }
  std::uint64_t tick() const { return tick_; }

  void add_node(NodeEntry node) {
    if (nodes_.contains(node.name)) throw Error(ErrorCode::ConfigInvalid, "duplicate node " + node.name);
    if (node.role == NodeRole::device && !node.chip)
      throw Error(ErrorCode::ConfigInvalid, "device " + node.name + " needs a chip");
    nodes_.emplace(node.name, std::move(node));
  }

  void blocklist(const std::string& name) { blocklist_.insert(name); }

  void log(EventKind kind, std::string actor, std::string subject,
           std::vector<std::pair<std::string, std::string>> fields = {}) {
    log_.push_back({tick_, kind, std::move(actor), std::move(subject), std::move(fields)});
  }

  // --- management -------------------------------------------------------

  // Admission: state challenge, key registration, fresh-nonce audit. A
  // blocklisted node is denied before any exchange. `claim` lets an attacker
  // present another chip's registered key.
  EntryVerdict enroll(const std::string& name, std::optional<std::string> claim = std::nullopt) {
    auto& node = find_node(name);
    const std::string chip_label = claim ? *claim : (node.chip ? node.chip->id().value : std::string("none"));
    log(EventKind::EntryRequest, name, management_name(), {{"chip", chip_label}});
    if (blocklist_.contains(name) || (node.chip && blocklist_.contains(node.chip->id().value))) {
      return deny(name, "blocklist");
    }
    if (node.role != NodeRole::device && node.role != NodeRole::attacker) return deny(name, "role");

    const auto challenge = make_challenge(state_, Issuer::management);
    log(EventKind::Challenge, management_name(), name,
        {{"l", std::to_string(state_)}, {"challenge", fingerprint(challenge.bytes)}});

    // The entrant derives (or, lacking the chip, fabricates) its key.
    PublicKey presented;
    if (claim) {
      auto it = firewall_.members.find(ChipId{*claim});
      presented = it != firewall_.members.end() ? it->second : fabricated_keys(name).public_key;
    } else if (node.chip) {
      presented = derive_node_keys(*node.chip, state_, config_.modulus_bits).public_key;
    } else {
      presented = fabricated_keys(name).public_key;
    }
    log(EventKind::Response, name, management_name(), {{"pk", fingerprint(presented.serialize())}});

    const auto nonce = rng_.digest();
    const auto proof = answer_audit(node, nonce);
    const auto verdict = check_possession(presented, nonce, proof);
    record_transcript(node, nonce, proof);
    if (verdict != AuditVerdict::genuine) return deny(name, "audit_failed");

    const ChipId chip_id = node.chip->id();
    if (node.role == NodeRole::attacker) return deny(name, "attacker");
    for (const auto& [other, pk] : firewall_.members)
      if (other != chip_id && pk == presented) return deny(name, "duplicate_key");

    firewall_.members[chip_id] = presented;
    holders_[chip_id] = name;
    ++admitted_;
    log(EventKind::Verdict, management_name(), name,
        {{"verdict", "Admitted"}, {"chip", chip_id.value}, {"pk", fingerprint(presented.serialize())}});
    return EntryVerdict::admitted;
  }

  // An attacker claims a member's identity. The audit nonce is fresh, so
  // neither its own key material nor a replayed transcript verifies.
  SpoofOutcome spoof_attempt(const std::string& attacker, const std::string& victim_node,
                             SpoofMethod method = SpoofMethod::own_key) {
    auto& node = find_node(attacker);
    const auto& victim = find_node(victim_node);
    if (!victim.chip || !firewall_.contains(victim.chip->id()))
      throw Error(ErrorCode::ConfigInvalid, "spoof target " + victim_node + " is not a member");
    const ChipId victim_chip = victim.chip->id();

    std::optional<Transcript> replayed;
    if (method != SpoofMethod::own_key) {
      for (const auto& t : transcripts_) {
        if (t.chip != victim_chip) continue;
        replayed = t;
        if (method == SpoofMethod::stale) break;  // earliest capture
      }
    }
    const PublicKey claimed = method == SpoofMethod::stale && replayed ? replayed->proof.public_key
                                                                       : firewall_.members.at(victim_chip);
    log(EventKind::EntryRequest, attacker, management_name(),
        {{"claim", victim_chip.value}, {"method", std::string(method_name(method))}, {"pk", fingerprint(claimed.serialize())}});

    const auto nonce = rng_.digest();
    log(EventKind::Challenge, management_name(), attacker, {{"l", std::to_string(state_)}, {"nonce", to_hex(nonce)}});
    PossessionProof proof;
    if (replayed) {
      proof = replayed->proof;
    } else {
      proof = answer_audit(node, nonce);
    }
    proof.public_key = claimed;
    log(EventKind::Response, attacker, management_name(), {{"sig", fingerprint(proof.signature)}});

    const bool registered = std::any_of(firewall_.members.begin(), firewall_.members.end(),
                                        [&](const auto& m) { return m.second == claimed; });
    const bool genuine = registered && check_possession(claimed, nonce, proof) == AuditVerdict::genuine;
    if (genuine) {
      // Only a holder of the victim chip itself gets here.
      ++accepted_spoofs_;
      log(EventKind::Verdict, management_name(), attacker, {{"verdict", "Accepted"}, {"physical_theft", "1"}});
      return SpoofOutcome::accepted;
    }
    ++rejections_;
    log(EventKind::Verdict, management_name(), attacker, {{"verdict", "Rejected"}, {"claim", victim_chip.value}});
    return SpoofOutcome::rejected;
  }

  // Re-audits every member with a fresh nonce at the active state and evicts
  // the ones that fail.
  std::set<ChipId> sweep_audit() {
    std::set<ChipId> evicted;
    const SecurityState active{state_, true};
    for (const auto& [chip_id, pk] : std::map<ChipId, PublicKey>(firewall_.members)) {
      const auto& holder = holders_.at(chip_id);
      auto& node = find_node(holder);
      const auto nonce = rng_.digest();
      log(EventKind::Challenge, management_name(), holder, {{"l", std::to_string(state_)}, {"nonce", to_hex(nonce)}});
      const auto proof = prove_possession(*node.chip, active.index, nonce, config_.modulus_bits);
      log(EventKind::Response, holder, management_name(), {{"sig", fingerprint(proof.signature)}});
      record_transcript(node, nonce, proof);
      const auto verdict = check_possession(pk, nonce, proof);
      log(EventKind::Verdict, management_name(), holder,
          {{"verdict", std::string(verdict_name(verdict))}, {"chip", chip_id.value}});
      if (verdict == AuditVerdict::impostor) {
        firewall_.members.erase(chip_id);
        holders_.erase(chip_id);
        evicted.insert(chip_id);
        eviction_history_.push_back(chip_id);
        log(EventKind::Evict, management_name(), holder, {{"chip", chip_id.value}});
      }
    }
    return evicted;
  }

  // --- security -------------------------------------------------------------

  // Moves every member to state `new_state`; members rebind their keys and
  // acknowledge by signing the security node's challenge. Members scripted
  // to miss the rotation keep their stale registration.
  void rotate_security_state(std::uint64_t new_state) {
    if (new_state == state_) throw Error(ErrorCode::StateUnchanged, "already at state " + std::to_string(state_));
    const auto challenge = make_challenge(new_state, Issuer::security);
    log(EventKind::Rotate, security_name(), "network",
        {{"from", std::to_string(state_)}, {"to", std::to_string(new_state)}, {"challenge", fingerprint(challenge.bytes)}});
    state_ = new_state;
    firewall_.state_index = new_state;

    for (auto& [chip_id, pk] : firewall_.members) {
      const auto& holder = holders_.at(chip_id);
      if (miss_rotation_.erase(holder)) {
        log(EventKind::Fault, holder, security_name(), {{"fault", "missed_rotation"}, {"chip", chip_id.value}});
        continue;
      }
      auto& node = find_node(holder);
      auto keys = derive_node_keys(*node.chip, new_state, config_.modulus_bits);
      auto ack = sign(keys.secret_key, challenge.bytes);
      if (!verify_quiet(keys.public_key, challenge.bytes, ack)) continue;
      pk = keys.public_key;
      log(EventKind::Response, holder, security_name(), {{"pk", fingerprint(pk.serialize())}});
    }

    if (tree_) {
      tree_ = rotate_state_reproduce(*tree_, new_state);
      log(EventKind::Rotate, security_name(), "ledger",
          {{"to", std::to_string(new_state)}, {"root", fingerprint(tree_->root_hash())}});
    }
  }

  // --- miners -----------------------------------------------------------

  // Builds the Merkle tree of member chips over `topology`, stamps its root
  // and mines the next block. Non-members are dropped first, together with
  // any node cut off from the root.
  std::optional<Block> mine(const std::string& topology_name, const Topology& topology) {
    auto members_only = member_subtopology(topology);
    if (!members_only) {
      log(EventKind::Fault, "miner", topology_name, {{"fault", "root_not_member"}});
      return std::nullopt;
    }
    std::map<ChipId, SimulatedChip> chips;
    Topology chip_topology;
    auto chip_of = [&](const ChipId& node_name) { return find_node(node_name.value).chip->id(); };
    for (const auto& n : members_only->nodes) {
      chips.emplace(chip_of(n), *find_node(n.value).chip);
      chip_topology.nodes.push_back(chip_of(n));
    }
    for (const auto& e : members_only->edges) chip_topology.edges.push_back({chip_of(e.from), chip_of(e.to)});

    tree_ = build_tree(chip_topology, chips, state_, config_.modulus_bits);
    for (const auto& id : tree_->schedule()) {
      const auto& sender = tree_->node(id);
      for (const auto& to : tree_->successors(id)) {
        const auto& rec = tree_->node(to).incoming;
        auto it = std::find_if(rec.begin(), rec.end(), [&](const auto& r) {
          return !r.is_genesis() && r.sender == sender.keys.public_key;
        });
        log(EventKind::Transfer, holders_.at(id), holders_.at(to),
            {{"hash", fingerprint(it->hash_value)}, {"record_sig", fingerprint(it->signature)}});
      }
    }

    const Digest prev = chain_.empty() ? Digest{} : chain_.back().block_hash;
    const std::uint64_t start = rng_.next() >> 32;
    auto block = mine_block_parallel(tree_->stamp(), prev, config_.difficulty_bits, start, config_.mine_threads,
                                     chain_.size());
    chain_.push_back(block);
    log(EventKind::Mine, "miner", topology_name,
        {{"height", std::to_string(block.height)},
         {"root", holders_.at(tree_->root())},
         {"root_hash", fingerprint(tree_->root_hash())},
         {"l", std::to_string(state_)},
         {"nonce", std::to_string(block.nonce)},
         {"attempts", std::to_string(mining_attempts(block, start))},
         {"block_hash", to_hex(block.block_hash)},
         {"prev_hash", to_hex(block.prev_block_hash)}});
    return block;
  }

  // --- scripted faults ------------------------------------------------------

  // Physically swaps the chip inside a device (the chip id label stays).
  void tamper_chip(const std::string& name, std::uint64_t chip_seed, const ChipGeometry& g, const FailureModel& m) {
    auto& node = find_node(name);
    if (!node.chip) throw Error(ErrorCode::ConfigInvalid, name + " holds no chip");
    node.chip = SimulatedChip::manufacture(node.chip->id(), g, m, chip_seed);
    log(EventKind::Fault, name, name, {{"fault", "chip_swapped"}, {"chip", node.chip->id().value}});
  }

  void schedule_missed_rotation(const std::string& name) {
    find_node(name);
    miss_rotation_.insert(name);
  }

  // Gives an attacker a copy of the victim's physical chip.
  void steal_chip(const std::string& attacker, const std::string& victim) {
    auto& a = find_node(attacker);
    a.chip = find_node(victim).chip;
    log(EventKind::Fault, attacker, victim, {{"fault", "physical_theft"}});
  }

  // The management node has no block-writing operation; this models an
  // out-of-band attempt to rewrite sealed block `height`. Detection is left
  // to verify_chain.
  void forge_block(std::uint64_t height) {
    if (height >= chain_.size()) throw Error(ErrorCode::ConfigInvalid, "no sealed block " + std::to_string(height));
    chain_[height].stamp.root_hash[0] ^= 0x01;
    log(EventKind::Fault, management_name(), "block:" + std::to_string(height), {{"fault", "forged_stamp"}});
  }

  // --- state ------------------------------------------------------------

  const EventLog& events() const noexcept { return log_; }
  const FirewallSet& firewall() const noexcept { return firewall_; }
  const std::vector<Block>& chain() const noexcept { return chain_; }
  const std::optional<ChipMerkleTree>& tree() const noexcept { return tree_; }
  std::uint64_t state_index() const noexcept { return state_; }
  const std::vector<ChipId>& eviction_history() const noexcept { return eviction_history_; }
  std::size_t rejections() const noexcept { return rejections_; }
  std::size_t denials() const noexcept { return denials_; }
  std::size_t admissions() const noexcept { return admitted_; }
  std::size_t accepted_spoofs() const noexcept { return accepted_spoofs_; }
  const NetworkConfig& config() const noexcept { return config_; }
  const std::map<std::string, NodeEntry>& nodes() const noexcept { return nodes_; }
  const NodeEntry& node(const std::string& name) const {
    auto it = nodes_.find(name);
    if (it == nodes_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown node " + name);
    return it->second;
  }

  // Every current member would pass a fresh audit at the active state.
  // Draws no randomness, so checking it does not perturb the run.
  bool members_audit_clean() const {
    const Digest nonce = sha256(Bytes{'f', 'i', 'n', 'a', 'l'});
    for (const auto& [chip_id, pk] : firewall_.members) {
      auto chip = *node(holders_.at(chip_id)).chip;
      if (crp_audit(chip, pk, SecurityState{state_, true}, nonce, config_.modulus_bits) != AuditVerdict::genuine)
        return false;
    }
    return true;
  }

 private:
  static constexpr std::string_view method_name(SpoofMethod m) {
    switch (m) {
      case SpoofMethod::own_key: return "own_key";
      case SpoofMethod::replay: return "replay";
      case SpoofMethod::stale: return "stale";
    }
    return "?";
  }

  NodeEntry& find_node(const std::string& name) {
    auto it = nodes_.find(name);
    if (it == nodes_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown node " + name);
    return it->second;
  }

  std::string role_holder(NodeRole role) const {
    for (const auto& [name, n] : nodes_)
      if (n.role == role) return name;
    return std::string(role_name(role));
  }
  std::string management_name() const { return role_holder(NodeRole::management); }
  std::string security_name() const { return role_holder(NodeRole::security); }

  EntryVerdict deny(const std::string& name, std::string reason) {
    ++denials_;
    log(EventKind::Verdict, management_name(), name, {{"verdict", "Denied"}, {"reason", std::move(reason)}});
    return EntryVerdict::denied;
  }

  // Key material of a node without a genuine chip, fixed by its name.
  ChipKeyPair fabricated_keys(const std::string& name) const {
    Response r{ChipId{name}, state_, {}};
    auto d = sha256(Bytes(name.begin(), name.end()));
    std::copy(d.begin(), d.end(), r.bytes.begin());
    return derive_keypair(r, config_.modulus_bits);
  }

  PossessionProof answer_audit(NodeEntry& node, const Digest& nonce) {
    if (node.chip) return prove_possession(*node.chip, state_, nonce, config_.modulus_bits);
    auto keys = fabricated_keys(node.name);
    return {keys.public_key, sign(keys.secret_key, audit_message(nonce))};
  }

  void record_transcript(const NodeEntry& node, const Digest& nonce, const PossessionProof& proof) {
    if (node.chip) transcripts_.push_back({node.chip->id(), nonce, proof});
  }

  // Topology restricted to member devices that can still reach the root.
  std::optional<Topology> member_subtopology(const Topology& topology) const {
    auto is_member = [&](const ChipId& n) {
      auto it = nodes_.find(n.value);
      return it != nodes_.end() && it->second.chip && holders_.contains(it->second.chip->id()) &&
             holders_.at(it->second.chip->id()) == n.value;
    };
    auto all = topology.node_set();
    std::set<ChipId> sinks;
    std::map<ChipId, std::vector<ChipId>> preds;
    std::set<ChipId> has_out;
    for (const auto& e : topology.edges) {
      has_out.insert(e.from);
      preds[e.to].push_back(e.from);
    }
    for (const auto& n : all)
      if (!has_out.contains(n)) sinks.insert(n);
    if (sinks.size() != 1 || !is_member(*sinks.begin())) return std::nullopt;

    std::set<ChipId> keep{*sinks.begin()};
    std::vector<ChipId> stack{*sinks.begin()};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto& p : preds[cur])
        if (is_member(p) && keep.insert(p).second) stack.push_back(p);
    }
    Topology out;
    out.nodes.assign(keep.begin(), keep.end());
    for (const auto& e : topology.edges)
      if (keep.contains(e.from) && keep.contains(e.to)) out.edges.push_back(e);
    return out;
  }

  NetworkConfig config_;
  Rng rng_;
  std::uint64_t state_;
  std::uint64_t tick_ = 0;
  std::map<std::string, NodeEntry> nodes_;
  std::set<std::string> blocklist_;
  FirewallSet firewall_;
  std::map<ChipId, std::string> holders_;  // member chip -> node name
  std::vector<Transcript> transcripts_;
  std::set<std::string> miss_rotation_;
  std::optional<ChipMerkleTree> tree_;
  std::vector<Block> chain_;
  std::vector<ChipId> eviction_history_;
  EventLog log_;
  std::size_t rejections_ = 0;
  std::size_t denials_ = 0;
  std::size_t admitted_ = 0;
  std::size_t accepted_spoofs_ = 0;
};

}  // namespace chipledger
