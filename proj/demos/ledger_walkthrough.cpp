// Builds a small Merkle tree of chips, mines two blocks, swaps a leaf chip
// and shows which nodes had to be recomputed.

#include <iostream>

#include "chipledger/ledger.hpp"

int main() {
  using namespace chipledger;
  const auto topology = Topology::parse("n2 -> n1\nn3 -> n1\nn4 -> n0\nn1 -> n0\n");
  std::map<ChipId, SimulatedChip> chips;
  std::uint64_t seed = 40;
  for (const auto& id : topology.node_set()) chips.emplace(id, new_chip(id, ChipGeometry::preset_4mb(), {}, seed++));

  auto tree = build_tree(topology, chips, 1, 512);
  std::cout << "root " << tree.root() << " " << to_hex(tree.root_hash()) << "\n";

  std::vector<Block> chain;
  chain.push_back(mine_block(tree.stamp(), Digest{}, 12, 0, 0));

  auto swapped = replace_chip(tree, ChipId{"n3"}, new_chip(ChipId{"spare"}, ChipGeometry::preset_4mb(), {}, 99), 1);
  std::cout << "recomputed";
  for (const auto& id : swapped.recomputed) std::cout << " " << id;
  std::cout << "\n";
  chain.push_back(mine_block(swapped.tree.stamp(), chain.back().block_hash, 12, 0, 1));

  for (const auto& b : chain)
    std::cout << "block " << b.height << " nonce " << b.nonce << " " << to_hex(b.block_hash) << "\n";
  std::cout << "chain valid " << verify_chain(chain, 12) << "\n";
}
