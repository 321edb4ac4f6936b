#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chipledger/error.hpp"
#include "chipledger/scenario.hpp"

namespace chipledger {

struct BundledScenario {
  std::string_view name;
  std::string_view text;
};

inline constexpr BundledScenario kBundledScenarios[] = {
    {"fig10-coexistence", R"scn(# Nine member devices share a ledger while management keeps entry control.
# A laptop with its own unregistered chip and a chipless ghost try to pass
# as members; the security node rotates the state once.

[scenario]
name = fig10-coexistence
difficulty = 12
modulus_bits = 512
initial_state = 1

[chips]
c0 = seed=100
c1 = seed=101
c2 = seed=102
c3 = seed=103
c4 = seed=104
c5 = seed=105
c6 = seed=106
c7 = seed=107
c8 = seed=108
laptop-chip = seed=900

[nodes]
mgmt = management
sec = security
n0 = device chip=c0
n1 = device chip=c1
n2 = device chip=c2
n3 = device chip=c3
n4 = device chip=c4
n5 = device chip=c5
n6 = device chip=c6
n7 = device chip=c7
n8 = device chip=c8
laptop = attacker chip=laptop-chip
ghost = attacker

[topology tree]
n2 -> n1
n3 -> n1
n5 -> n4
n7 -> n6
n8 -> n6
n1 -> n0
n4 -> n0
n6 -> n0

[topology regrown]
n0 -> n1
n2 -> n1
n3 -> n4
n4 -> n1
n5 -> n6
n6 -> n1
n7 -> n8
n8 -> n1

[schedule]
1 enroll n0
2 enroll n1
3 enroll n2
4 enroll n3
5 enroll n4
6 enroll n5
7 enroll n6
8 enroll n7
9 enroll n8
10 spoof laptop n3
11 spoof laptop n3 replay
12 enroll ghost claim=c3
13 mine tree
14 rotate 2
15 spoof laptop n5 stale
16 sweep
17 mine regrown
18 spoof laptop n7
19 sweep
20 mine tree
)scn"},
    {"tamper-demo", R"scn(# Entry control catching misbehaving devices: a blocklisted node, a chipless
# claim, a chip swapped after admission and a device that misses rotation.

[scenario]
name = tamper-demo
difficulty = 10
modulus_bits = 512
initial_state = 5

[chips]
c0 = seed=200
c1 = seed=201
c2 = seed=202
c3 = seed=203
c4 = seed=204
rogue-chip = seed=666

[nodes]
mgmt = management
sec = security
d0 = device chip=c0
d1 = device chip=c1
d2 = device chip=c2
d3 = device chip=c3
d4 = device chip=c4
rogue = device chip=rogue-chip
ghost = attacker

[blocklist]
rogue

[topology star]
d1 -> d0
d2 -> d0
d3 -> d0
d4 -> d0

[schedule]
1 enroll d0
1 enroll d1
1 enroll d2
1 enroll d3
1 enroll d4
2 enroll rogue
3 enroll ghost claim=c1
4 mine star
5 tamper d2 seed=777
6 sweep
7 miss-rotation d3
8 rotate 6
9 sweep
10 mine star
)scn"},
    {"forge-attempt", R"scn(# Someone rewrites a sealed block out of band; the run must fail its
# chain-integrity invariant.

[scenario]
name = forge-attempt
difficulty = 8
modulus_bits = 512

[chips]
c0 = seed=300
c1 = seed=301
c2 = seed=302

[nodes]
mgmt = management
sec = security
a = device chip=c0
b = device chip=c1
c = device chip=c2

[topology line]
c -> b
b -> a

[schedule]
1 enroll a
1 enroll b
1 enroll c
2 mine line
3 mine line
4 forge 0
)scn"},
};

inline std::string_view bundled_scenario_text(std::string_view name) {
  for (const auto& s : kBundledScenarios)
    if (s.name == name) return s.text;
  throw Error(ErrorCode::ConfigInvalid, "no bundled scenario '" + std::string(name) + "'");
}

inline bool is_bundled_scenario(std::string_view name) {
  for (const auto& s : kBundledScenarios)
    if (s.name == name) return true;
  return false;
}

inline ScenarioConfig bundled_scenario(std::string_view name) { return parse_scenario(bundled_scenario_text(name)); }

}  // namespace chipledger
