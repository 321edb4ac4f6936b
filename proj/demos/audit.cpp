// A device registers its chip-bound key, then answers audits. A laptop with
// a different chip cannot answer for it, and after a state rotation the old
// key no longer passes.

#include <iostream>

#include "chipledger/identity.hpp"

int main() {
  using namespace chipledger;
  auto device = new_chip(ChipId{"device"}, ChipGeometry::preset_4mb(), {}, 7);
  auto laptop = new_chip(ChipId{"laptop"}, ChipGeometry::preset_4mb(), {}, 8);

  const auto registered = observe_state(extract_prn(device), 1, 512).keys.public_key;
  const auto nonce = sha256(Bytes{'n', 'o', 'n', 'c', 'e'});

  auto run = [&](const char* who, SimulatedChip& chip, std::uint64_t l) {
    auto verdict = crp_audit(chip, registered, SecurityState{l, true}, nonce, 512);
    std::cout << who << " at l=" << l << ": " << verdict_name(verdict) << "\n";
  };
  run("device", device, 1);
  run("laptop", laptop, 1);
  run("device", device, 2);  // keys re-derived at l=2 differ from the registration
}
