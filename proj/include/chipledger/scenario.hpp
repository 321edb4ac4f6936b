#pragma once

#include <cstdint>
#include <map>
#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chipledger/error.hpp"
#include "chipledger/ledger.hpp"
#include "chipledger/network_sim.hpp"
#include "chipledger/strings.hpp"

namespace chipledger {

struct ChipSpec {
  std::string id;
  ChipGeometry geometry;
  FailureModel model;
  std::uint64_t seed = 0;
};

struct NodeSpec {
  std::string name;
  NodeRole role = NodeRole::device;
  std::optional<std::string> chip;
};

struct Command {
  std::uint64_t tick = 0;
  int line = 0;
  std::vector<std::string> words;  // verb first
};

struct ScenarioConfig {
  std::string name = "unnamed";
  NetworkConfig network;
  ChipGeometry default_geometry = ChipGeometry::preset_4mb();
  FailureModel default_model;
  std::vector<ChipSpec> chips;
  std::vector<NodeSpec> nodes;
  std::vector<std::string> blocklist;
  std::map<std::string, Topology> topologies;
  std::vector<Command> schedule;
};

namespace detail {

inline Error config_error(int line, const std::string& what) {
  return Error(ErrorCode::ConfigInvalid, "line " + std::to_string(line) + ": " + what);
}

// "k1=v1 k2=v2" -> map
inline std::map<std::string, std::string, std::less<>> parse_attributes(std::span<const std::string_view> words,
                                                                        int line) {
  std::map<std::string, std::string, std::less<>> out;
  for (auto w : words) {
    auto eq = w.find('=');
    if (eq == std::string_view::npos || eq == 0) throw config_error(line, "expected key=value, got '" + std::string(w) + "'");
    out[std::string(w.substr(0, eq))] = std::string(w.substr(eq + 1));
  }
  return out;
}

template <typename Int>
Int parse_field(std::string_view value, int line, std::string_view field) {
  try {
    return text::parse_int<Int>(value, field);
  } catch (const Error& e) {
    throw config_error(line, std::string(field) + ": invalid integer '" + std::string(value) + "'");
  }
}

inline const std::map<std::string_view, std::size_t>& verb_arity() {
  // verb -> minimum word count including the verb
  static const std::map<std::string_view, std::size_t> arity{
      {"enroll", 2}, {"spoof", 3},   {"sweep", 1},  {"rotate", 2}, {"mine", 2},
      {"tamper", 3}, {"miss-rotation", 2}, {"steal", 3}, {"forge", 2},
  };
  return arity;
}

}  // namespace detail

// Sectioned text format:
//   [scenario]      key = value settings
//   [chips]         id = seed=<n> [rows=<Y>] [lambda=<mean>] [redundancy=<R>]
//   [nodes]         name = <role> [chip=<chip id>]
//   [blocklist]     one node name per line
//   [topology <t>]  "a -> b" / "node a" lines
//   [schedule]      <tick> <verb> <args...>
inline ScenarioConfig parse_scenario(std::string_view text) {
  ScenarioConfig cfg;
  std::string section;
  std::string topology_name;
  int line_no = 0;
  std::set<std::string> chip_ids;
  std::set<std::string> node_names;

  for (auto raw : text::split(text, '\n')) {
    ++line_no;
    auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw detail::config_error(line_no, "unterminated section header");
      auto header = text::words(line.substr(1, line.size() - 2));
      if (header.empty()) throw detail::config_error(line_no, "empty section header");
      section = std::string(header[0]);
      if (section == "topology") {
        if (header.size() != 2) throw detail::config_error(line_no, "expected [topology <name>]");
        topology_name = std::string(header[1]);
        if (cfg.topologies.contains(topology_name))
          throw detail::config_error(line_no, "duplicate topology '" + topology_name + "'");
        cfg.topologies[topology_name];
      } else if (header.size() != 1 ||
                 (section != "scenario" && section != "chips" && section != "nodes" && section != "blocklist" &&
                  section != "schedule")) {
        throw detail::config_error(line_no, "unknown section '" + std::string(line) + "'");
      }
      continue;
    }

    auto key_value = [&]() -> std::pair<std::string, std::string> {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw detail::config_error(line_no, "expected key = value");
      return {std::string(text::trim(line.substr(0, eq))), std::string(text::trim(line.substr(eq + 1)))};
    };

    if (section.empty()) {
      throw detail::config_error(line_no, "content before first section");
    } else if (section == "scenario") {
      auto [key, value] = key_value();
      if (key == "name") cfg.name = value;
      else if (key == "difficulty") cfg.network.difficulty_bits = detail::parse_field<unsigned>(value, line_no, key);
      else if (key == "modulus_bits") cfg.network.modulus_bits = detail::parse_field<unsigned>(value, line_no, key);
      else if (key == "initial_state") cfg.network.initial_state = detail::parse_field<std::uint64_t>(value, line_no, key);
      else if (key == "rows") cfg.default_geometry = ChipGeometry::isotropic(detail::parse_field<std::uint32_t>(value, line_no, key), cfg.default_geometry.redundancy_rows);
      else if (key == "redundancy") cfg.default_geometry.redundancy_rows = detail::parse_field<std::uint32_t>(value, line_no, key);
      else if (key == "lambda") cfg.default_model.mean = text::parse_double(value, key);
      else throw detail::config_error(line_no, "[scenario] unknown field '" + key + "'");
      if (key == "difficulty" && cfg.network.difficulty_bits > kMaxDifficulty)
        throw detail::config_error(line_no, "difficulty must be <= 32");
      if (key == "modulus_bits" && cfg.network.modulus_bits != 512 && cfg.network.modulus_bits != 1024 &&
          cfg.network.modulus_bits != 2048)
        throw detail::config_error(line_no, "modulus_bits must be 512, 1024 or 2048");
    } else if (section == "chips") {
      auto [id, value] = key_value();
      auto words = text::words(value);
      auto attrs = detail::parse_attributes(words, line_no);
      ChipSpec spec{id, cfg.default_geometry, cfg.default_model, 0};
      if (!attrs.contains("seed")) throw detail::config_error(line_no, "[chips] " + id + ": missing seed");
      for (const auto& [k, v] : attrs) {
        if (k == "seed") spec.seed = detail::parse_field<std::uint64_t>(v, line_no, "seed");
        else if (k == "rows") spec.geometry = ChipGeometry::isotropic(detail::parse_field<std::uint32_t>(v, line_no, k), spec.geometry.redundancy_rows);
        else if (k == "redundancy") spec.geometry.redundancy_rows = detail::parse_field<std::uint32_t>(v, line_no, k);
        else if (k == "lambda") spec.model.mean = text::parse_double(v, k);
        else throw detail::config_error(line_no, "[chips] " + id + ": unknown field '" + k + "'");
      }
      if (!chip_ids.insert(id).second) throw detail::config_error(line_no, "duplicate chip '" + id + "'");
      cfg.chips.push_back(spec);
    } else if (section == "nodes") {
      auto [name, value] = key_value();
      auto words = text::words(value);
      if (words.empty()) throw detail::config_error(line_no, "[nodes] " + name + ": missing role");
      NodeSpec spec{name, NodeRole::device, std::nullopt};
      if (words[0] == "device") spec.role = NodeRole::device;
      else if (words[0] == "management") spec.role = NodeRole::management;
      else if (words[0] == "security") spec.role = NodeRole::security;
      else if (words[0] == "attacker") spec.role = NodeRole::attacker;
      else throw detail::config_error(line_no, "[nodes] " + name + ": unknown role '" + std::string(words[0]) + "'");
      auto attrs = detail::parse_attributes(std::span(words).subspan(1), line_no);
      for (const auto& [k, v] : attrs) {
        if (k != "chip") throw detail::config_error(line_no, "[nodes] " + name + ": unknown field '" + k + "'");
        if (!chip_ids.contains(v)) throw detail::config_error(line_no, "[nodes] " + name + ": unknown chip '" + v + "'");
        spec.chip = v;
      }
      if (spec.role == NodeRole::device && !spec.chip)
        throw detail::config_error(line_no, "[nodes] " + name + ": device needs chip=<id>");
      if (!node_names.insert(name).second) throw detail::config_error(line_no, "duplicate node '" + name + "'");
      cfg.nodes.push_back(spec);
    } else if (section == "blocklist") {
      auto w = text::words(line);
      if (w.size() != 1) throw detail::config_error(line_no, "[blocklist] expects one node name per line");
      cfg.blocklist.emplace_back(w[0]);
    } else if (section == "topology") {
      try {
        cfg.topologies[topology_name].add_line(line, line_no);
      } catch (const Error& e) {
        throw detail::config_error(line_no, "[topology " + topology_name + "] " + e.what());
      }
    } else if (section == "schedule") {
      auto w = text::words(line);
      if (w.size() < 2) throw detail::config_error(line_no, "expected '<tick> <command> ...'");
      Command cmd;
      cmd.line = line_no;
      cmd.tick = detail::parse_field<std::uint64_t>(w[0], line_no, "tick");
      for (std::size_t i = 1; i < w.size(); ++i) cmd.words.emplace_back(w[i]);
      auto arity = detail::verb_arity().find(cmd.words[0]);
      if (arity == detail::verb_arity().end())
        throw detail::config_error(line_no, "unknown command '" + cmd.words[0] + "'");
      if (cmd.words.size() < arity->second)
        throw detail::config_error(line_no, "'" + cmd.words[0] + "' needs more arguments");
      if (!cfg.schedule.empty() && cmd.tick < cfg.schedule.back().tick)
        throw detail::config_error(line_no, "schedule ticks must be non-decreasing");
      cfg.schedule.push_back(std::move(cmd));
    }
  }

  // Cross-references.
  auto role_count = [&](NodeRole r) {
    return std::count_if(cfg.nodes.begin(), cfg.nodes.end(), [&](const NodeSpec& n) { return n.role == r; });
  };
  if (role_count(NodeRole::management) != 1) throw detail::config_error(0, "[nodes] needs exactly one management node");
  if (role_count(NodeRole::security) != 1) throw detail::config_error(0, "[nodes] needs exactly one security node");
  auto node_role = [&](const std::string& name, int line) {
    for (const auto& n : cfg.nodes)
      if (n.name == name) return n.role;
    throw detail::config_error(line, "unknown node '" + name + "'");
  };
  for (const auto& b : cfg.blocklist) node_role(b, 0);
  for (const auto& [name, topo] : cfg.topologies)
    for (const auto& n : topo.node_set())
      if (node_role(n.value, 0) != NodeRole::device)
        throw detail::config_error(0, "[topology " + name + "] " + n.value + " is not a device");
  for (const auto& cmd : cfg.schedule) {
    const auto& verb = cmd.words[0];
    if (verb == "enroll") {
      node_role(cmd.words[1], cmd.line);
      for (std::size_t i = 2; i < cmd.words.size(); ++i) {
        if (cmd.words[i].rfind("claim=", 0) != 0) throw detail::config_error(cmd.line, "enroll: unknown option '" + cmd.words[i] + "'");
      }
    } else if (verb == "spoof" || verb == "steal") {
      if (node_role(cmd.words[1], cmd.line) != NodeRole::attacker)
        throw detail::config_error(cmd.line, verb + ": " + cmd.words[1] + " is not an attacker");
      if (node_role(cmd.words[2], cmd.line) != NodeRole::device)
        throw detail::config_error(cmd.line, verb + ": " + cmd.words[2] + " is not a device");
      if (verb == "spoof" && cmd.words.size() > 3 && cmd.words[3] != "replay" && cmd.words[3] != "stale")
        throw detail::config_error(cmd.line, "spoof: method must be replay or stale");
    } else if (verb == "rotate" || verb == "forge") {
      detail::parse_field<std::uint64_t>(cmd.words[1], cmd.line, verb);
    } else if (verb == "mine") {
      if (!cfg.topologies.contains(cmd.words[1]))
        throw detail::config_error(cmd.line, "mine: unknown topology '" + cmd.words[1] + "'");
    } else if (verb == "tamper") {
      if (node_role(cmd.words[1], cmd.line) != NodeRole::device)
        throw detail::config_error(cmd.line, "tamper: " + cmd.words[1] + " is not a device");
      auto w = std::vector<std::string_view>(cmd.words.begin() + 2, cmd.words.end());
      auto attrs = detail::parse_attributes(w, cmd.line);
      if (!attrs.contains("seed")) throw detail::config_error(cmd.line, "tamper: missing seed=<n>");
      detail::parse_field<std::uint64_t>(attrs["seed"], cmd.line, "seed");
    } else if (verb == "miss-rotation") {
      if (node_role(cmd.words[1], cmd.line) != NodeRole::device)
        throw detail::config_error(cmd.line, "miss-rotation: " + cmd.words[1] + " is not a device");
    }
  }
  return cfg;
}

struct ScenarioSummary {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t chain_length = 0;
  bool chain_valid = true;
  std::size_t members = 0;
  std::size_t admitted = 0;
  std::size_t denied = 0;
  std::size_t rejections = 0;
  std::size_t evictions = 0;
  std::uint64_t final_state = 0;
  std::size_t scheduled = 0;
  std::size_t processed = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }

  std::string to_record() const {
    std::ostringstream os;
    os << "summary scenario=" << name << " seed=" << seed << " chain_length=" << chain_length
       << " chain_valid=" << (chain_valid ? 1 : 0) << " members=" << members << " admitted=" << admitted
       << " denied=" << denied << " rejections=" << rejections << " evictions=" << evictions
       << " state=" << final_state << " processed=" << processed << "/" << scheduled
       << " invariants=" << (ok() ? std::string("ok") : join_violations());
    return os.str();
  }

 private:
  std::string join_violations() const {
    std::string out;
    for (std::size_t i = 0; i < violations.size(); ++i) out += (i ? "," : "") + violations[i];
    return out;
  }
};

struct ScenarioRun {
  EventLog log;
  ScenarioSummary summary;
  std::vector<Block> chain;
  FirewallSet firewall;
  std::vector<ChipId> eviction_history;
};

// Invariants checked over a finished run; names of the violated ones.
inline std::vector<std::string> check_run_invariants(const Network& net, std::size_t scheduled, std::size_t processed,
                                                     unsigned difficulty) {
  std::vector<std::string> violations;
  const auto& log = net.events();
  std::string management, security;
  std::set<std::string> attackers;
  for (const auto& [name, n] : net.nodes()) {
    if (n.role == NodeRole::management) management = name;
    if (n.role == NodeRole::security) security = name;
    if (n.role == NodeRole::attacker) attackers.insert(name);
  }
  for (const auto& e : log) {
    if (e.kind == EventKind::Rotate && e.actor == management) {
      violations.push_back("separation_of_powers");
      break;
    }
    if (e.kind == EventKind::Verdict && e.actor == security) {
      violations.push_back("separation_of_powers");
      break;
    }
  }
  if (!verify_chain(net.chain(), difficulty)) violations.push_back("chain_integrity");
  for (const auto& [chip, pk] : net.firewall().members) {
    (void)pk;
    for (const auto& a : attackers) {
      const auto& n = net.node(a);
      if (n.chip && n.chip->id() == chip) violations.push_back("attacker_member");
    }
  }
  if (!net.members_audit_clean()) violations.push_back("stale_member");
  if (processed != scheduled) violations.push_back("liveness");
  return violations;
}

// Deterministic replay of `cfg`: identical (cfg, seed) give identical logs.
inline ScenarioRun run_scenario(const ScenarioConfig& cfg, std::uint64_t seed, unsigned mine_threads = 1) {
  NetworkConfig net_cfg = cfg.network;
  net_cfg.mine_threads = mine_threads;
  Network net(net_cfg, seed);

  std::map<std::string, SimulatedChip> chips;
  for (const auto& spec : cfg.chips) {
    try {
      chips.emplace(spec.id, SimulatedChip::manufacture(ChipId{spec.id}, spec.geometry, spec.model, spec.seed));
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, "[chips] " + spec.id + ": " + e.what());
    }
  }
  for (const auto& spec : cfg.nodes) {
    NodeEntry entry{spec.name, spec.role, std::nullopt};
    if (spec.chip) entry.chip = chips.at(*spec.chip);
    net.add_node(std::move(entry));
  }
  for (const auto& b : cfg.blocklist) net.blocklist(b);

  net.log(EventKind::Genesis, "scheduler", cfg.name,
          {{"l", std::to_string(net.state_index())}, {"difficulty", std::to_string(cfg.network.difficulty_bits)}});

  std::size_t processed = 0;
  const std::uint64_t last_tick = cfg.schedule.empty() ? 0 : cfg.schedule.back().tick;
  std::size_t next = 0;
  for (std::uint64_t tick = 1; tick <= last_tick; ++tick) {
    net.set_tick(tick);
    for (; next < cfg.schedule.size() && cfg.schedule[next].tick == tick; ++next) {
      const auto& cmd = cfg.schedule[next];
      const auto& w = cmd.words;
      try {
        if (w[0] == "enroll") {
          std::optional<std::string> claim;
          if (w.size() > 2) claim = w[2].substr(6);
          net.enroll(w[1], claim);
        } else if (w[0] == "spoof") {
          SpoofMethod method = SpoofMethod::own_key;
          if (w.size() > 3) method = w[3] == "replay" ? SpoofMethod::replay : SpoofMethod::stale;
          net.spoof_attempt(w[1], w[2], method);
        } else if (w[0] == "sweep") {
          net.sweep_audit();
        } else if (w[0] == "rotate") {
          net.rotate_security_state(text::parse_int<std::uint64_t>(w[1], "rotate"));
        } else if (w[0] == "mine") {
          net.mine(w[1], cfg.topologies.at(w[1]));
        } else if (w[0] == "tamper") {
          auto seed_attr = w[2].substr(w[2].find('=') + 1);
          net.tamper_chip(w[1], text::parse_int<std::uint64_t>(seed_attr, "seed"), cfg.default_geometry,
                          cfg.default_model);
        } else if (w[0] == "miss-rotation") {
          net.schedule_missed_rotation(w[1]);
        } else if (w[0] == "steal") {
          net.steal_chip(w[1], w[2]);
        } else if (w[0] == "forge") {
          net.forge_block(text::parse_int<std::uint64_t>(w[1], "forge"));
        }
      } catch (const Error& e) {
        throw detail::config_error(cmd.line, e.what());
      }
      ++processed;
    }
  }

  ScenarioRun run;
  auto& s = run.summary;
  s.name = cfg.name;
  s.seed = seed;
  s.chain_length = net.chain().size();
  s.chain_valid = verify_chain(net.chain(), cfg.network.difficulty_bits);
  s.members = net.firewall().members.size();
  s.admitted = net.admissions();
  s.denied = net.denials();
  s.rejections = net.rejections();
  s.evictions = net.eviction_history().size();
  s.final_state = net.state_index();
  s.scheduled = cfg.schedule.size();
  s.processed = processed;
  s.violations = check_run_invariants(net, s.scheduled, processed, cfg.network.difficulty_bits);
  run.log = net.events();
  run.chain = net.chain();
  run.firewall = net.firewall();
  run.eviction_history = net.eviction_history();
  return run;
}

}  // namespace chipledger
