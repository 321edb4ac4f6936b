// Prints fingerprint entropy across DRAM generations and the collision
// bounds for a population of 10^14 chips at the smallest one.

#include <cstdio>

#include "chipledger/entropy.hpp"

int main() {
  using namespace chipledger;
  const auto ladder = generation_ladder();
  std::printf("%-6s %8s %10s %10s\n", "gen", "rows", "ln C", "bits");
  for (const auto& g : generation_table(10, ladder))
    std::printf("%-6.*s %8llu %10.3f %10.3f\n", static_cast<int>(g.name.size()), g.name.data(),
                static_cast<unsigned long long>(g.report.rows), g.report.entropy_nats, g.report.entropy_bits);

  auto c = collision_report(2000, 1, 10, BigInt("100000000000000"));
  std::printf("\nC(2000, 10) = %s\n", c.combinations.get_str().c_str());
  std::printf("per pair        %s\n", to_scientific(c.per_pair).c_str());
  std::printf("per chip        %s\n", to_scientific(c.per_chip).c_str());
  std::printf("expected pairs  %s\n", to_scientific(c.expected_pairs).c_str());
}
