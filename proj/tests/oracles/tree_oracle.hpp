#pragma once

// Recursive evaluation of a transfer tree's hashes, written against the
// record rules directly rather than the library's scheduled recompute.

#include <functional>
#include <map>
#include <set>
#include <vector>

#include "chipledger/identity.hpp"
#include "chipledger/sha256.hpp"

namespace oracle {

using namespace chipledger;

struct NodeValue {
  Digest latest{};
  Bytes signature;  // last incoming record's signature, empty if none
};

// Arrival order: repeatedly pick the smallest id whose predecessors are done.
inline std::vector<ChipId> naive_schedule(const std::set<ChipId>& ids, const std::vector<std::pair<ChipId, ChipId>>& edges) {
  std::vector<ChipId> order;
  std::set<ChipId> done;
  while (done.size() < ids.size()) {
    bool progressed = false;
    for (const auto& id : ids) {
      if (done.contains(id)) continue;
      bool ready = true;
      for (const auto& [from, to] : edges)
        if (to == id && !done.contains(from)) ready = false;
      if (ready) {
        order.push_back(id);
        done.insert(id);
        progressed = true;
        break;
      }
    }
    if (!progressed) return {};
  }
  return order;
}

inline Digest h(std::initializer_list<ByteView> parts) {
  Bytes all;
  for (auto p : parts) all.insert(all.end(), p.begin(), p.end());
  return sha256(all);
}

// latest(n) for every node, computed by recursion over predecessors.
inline std::map<ChipId, NodeValue> evaluate(const std::map<ChipId, ChipKeyPair>& keys,
                                            const std::vector<std::pair<ChipId, ChipId>>& edges) {
  std::set<ChipId> ids;
  for (const auto& [id, k] : keys) ids.insert(id);
  const auto schedule = naive_schedule(ids, edges);
  std::map<ChipId, std::size_t> position;
  for (std::size_t i = 0; i < schedule.size(); ++i) position[schedule[i]] = i;

  std::map<ChipId, NodeValue> memo;
  std::function<const NodeValue&(const ChipId&)> value = [&](const ChipId& n) -> const NodeValue& {
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    const auto pk = keys.at(n).public_key.serialize();
    const Digest zero{};
    NodeValue v;
    v.latest = h({pk, zero});  // genesis: H(pk || 0^32 || empty)
    std::vector<ChipId> senders;
    for (const auto& [from, to] : edges)
      if (to == n) senders.push_back(from);
    std::sort(senders.begin(), senders.end(), [&](const ChipId& a, const ChipId& b) { return position[a] < position[b]; });
    for (const auto& s : senders) {
      const auto& sv = value(s);
      const auto spk = keys.at(s).public_key.serialize();
      const Digest rec = h({spk, sv.latest, sv.signature});
      Bytes msg = pk;
      msg.insert(msg.end(), rec.begin(), rec.end());
      v.signature = sign(keys.at(s).secret_key, msg);
      v.latest = h({pk, v.latest, rec});
    }
    return memo.emplace(n, std::move(v)).first->second;
  };
  for (const auto& id : ids) value(id);
  return memo;
}

}  // namespace oracle
