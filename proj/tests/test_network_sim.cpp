#include <gtest/gtest.h>

#include <algorithm>

#include "chipledger/bundled_scenarios.hpp"
#include "chipledger/network_sim.hpp"
#include "chipledger/scenario.hpp"

using namespace chipledger;

namespace {

SimulatedChip make_chip(const std::string& id, std::uint64_t seed) {
  return SimulatedChip::manufacture(ChipId{id}, ChipGeometry::preset_4mb(), {}, seed);
}

// mgmt, sec, `devices` devices d0.. with chips c0.., a laptop attacker with its
// own chip and a chipless ghost.
Network small_network(int devices, std::uint64_t seed = 1) {
  Network net(NetworkConfig{1, 512, 8, 1}, seed);
  net.add_node({"mgmt", NodeRole::management, std::nullopt});
  net.add_node({"sec", NodeRole::security, std::nullopt});
  for (int i = 0; i < devices; ++i) {
    const auto n = std::to_string(i);
    net.add_node({"d" + n, NodeRole::device, make_chip("c" + n, 500 + i)});
  }
  net.add_node({"laptop", NodeRole::attacker, make_chip("laptop-chip", 900)});
  net.add_node({"ghost", NodeRole::attacker, std::nullopt});
  return net;
}

void enroll_all(Network& net, int devices) {
  for (int i = 0; i < devices; ++i) ASSERT_EQ(net.enroll("d" + std::to_string(i)), EntryVerdict::admitted);
}

std::vector<std::string> verdicts(const EventLog& log) {
  std::vector<std::string> out;
  for (const auto& e : log)
    if (e.kind == EventKind::Verdict) out.push_back(e.subject + ":" + e.field("verdict").value_or("?"));
  return out;
}

int error_line(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
    std::string msg = e.what();
    auto pos = msg.find("line ");
    if (pos == std::string::npos) return -1;
    return std::stoi(msg.substr(pos + 5));
  }
  ADD_FAILURE() << "parsed without error";
  return -1;
}

constexpr std::string_view kMinimal = R"(
[scenario]
name = minimal
difficulty = 4

[chips]
c0 = seed=1
c1 = seed=2

[nodes]
mgmt = management
sec = security
a = device chip=c0
b = device chip=c1

[topology pair]
b -> a

[schedule]
)";

}  // namespace

TEST(Enroll, GenuineDeviceIsAdmittedWithItsKey) {
  auto net = small_network(1);
  EXPECT_EQ(net.enroll("d0"), EntryVerdict::admitted);
  const auto& pk = net.firewall().members.at(ChipId{"c0"});
  auto chip = *net.node("d0").chip;
  EXPECT_EQ(pk, derive_node_keys(chip, 1, 512).public_key);
  EXPECT_EQ(net.admissions(), 1u);
}

TEST(Enroll, BlocklistDeniesRegardlessOfAudit) {
  auto net = small_network(2);
  net.blocklist("d1");
  EXPECT_EQ(net.enroll("d0"), EntryVerdict::admitted);
  EXPECT_EQ(net.enroll("d1"), EntryVerdict::denied);
  EXPECT_FALSE(net.firewall().contains(ChipId{"c1"}));
  // The denial happens before any challenge is issued.
  EXPECT_EQ(net.events().back().kind, EventKind::Verdict);
  EXPECT_EQ(net.events().back().field("reason"), "blocklist");
}

TEST(Enroll, ChiplessClaimOfAdmittedKeyIsDenied) {
  auto net = small_network(2);
  enroll_all(net, 2);
  EXPECT_EQ(net.enroll("ghost", "c1"), EntryVerdict::denied);
  EXPECT_EQ(net.enroll("laptop"), EntryVerdict::denied);
  EXPECT_EQ(net.firewall().members.size(), 2u);
  EXPECT_EQ(net.denials(), 2u);
}

TEST(Spoof, OwnChipAndReplayAreRejected) {
  auto net = small_network(3);
  enroll_all(net, 3);
  net.sweep_audit();  // more transcripts to replay
  EXPECT_EQ(net.spoof_attempt("laptop", "d1"), SpoofOutcome::rejected);
  EXPECT_EQ(net.spoof_attempt("laptop", "d1", SpoofMethod::replay), SpoofOutcome::rejected);
  EXPECT_EQ(net.spoof_attempt("ghost", "d2", SpoofMethod::replay), SpoofOutcome::rejected);
  EXPECT_EQ(net.rejections(), 3u);
  EXPECT_FALSE(net.firewall().contains(ChipId{"laptop-chip"}));
  EXPECT_THROW(net.spoof_attempt("laptop", "laptop"), Error);
}

TEST(Spoof, ReplayedSignatureDoesNotCoverTheFreshNonce) {
  // Transcript oracle: capture the victim's audit, replay the proof against
  // a new nonce. The captured proof verifies only for its own nonce.
  auto chip = make_chip("v", 42);
  auto keys = derive_node_keys(chip, 1, 512);
  const auto captured_nonce = sha256(Bytes{1});
  auto proof = prove_possession(chip, 1, captured_nonce, 512);
  ASSERT_EQ(check_possession(keys.public_key, captured_nonce, proof), AuditVerdict::genuine);
  EXPECT_EQ(check_possession(keys.public_key, sha256(Bytes{2}), proof), AuditVerdict::impostor);
}

TEST(Spoof, StolenChipIsAcceptedAndFlagged) {
  auto net = small_network(2);
  enroll_all(net, 2);
  net.steal_chip("ghost", "d0");
  EXPECT_EQ(net.spoof_attempt("ghost", "d0"), SpoofOutcome::accepted);
  EXPECT_EQ(net.accepted_spoofs(), 1u);
  EXPECT_EQ(net.events().back().field("physical_theft"), "1");
}

TEST(Sweep, AllGenuineEvictsNothing) {
  auto net = small_network(4);
  enroll_all(net, 4);
  EXPECT_TRUE(net.sweep_audit().empty());
  EXPECT_TRUE(net.members_audit_clean());
}

TEST(Sweep, SwappedChipIsEvicted) {
  auto net = small_network(4);
  enroll_all(net, 4);
  net.tamper_chip("d2", 4242, ChipGeometry::preset_4mb(), {});
  EXPECT_FALSE(net.members_audit_clean());
  EXPECT_EQ(net.sweep_audit(), std::set<ChipId>{ChipId{"c2"}});
  EXPECT_EQ(net.eviction_history(), std::vector<ChipId>{ChipId{"c2"}});
  EXPECT_TRUE(net.members_audit_clean());
}

TEST(Rotate, RebindsEveryMemberToFreshKeys) {
  auto net = small_network(5);
  enroll_all(net, 5);
  const auto before = net.firewall().members;
  net.rotate_security_state(2);
  EXPECT_EQ(net.state_index(), 2u);
  EXPECT_EQ(net.firewall().state_index, 2u);
  std::set<std::string> fresh;
  for (const auto& [chip, pk] : net.firewall().members) {
    EXPECT_NE(pk, before.at(chip));
    fresh.insert(to_hex(pk.serialize()));
  }
  EXPECT_EQ(fresh.size(), 5u);
  EXPECT_TRUE(net.sweep_audit().empty());
  EXPECT_THROW(net.rotate_security_state(2), Error);
}

TEST(Rotate, StaleKeyIsRejectedAndMissedRotationEvicted) {
  auto net = small_network(3);
  enroll_all(net, 3);
  net.schedule_missed_rotation("d1");
  net.rotate_security_state(7);
  EXPECT_EQ(net.spoof_attempt("laptop", "d0", SpoofMethod::stale), SpoofOutcome::rejected);
  EXPECT_EQ(net.sweep_audit(), std::set<ChipId>{ChipId{"c1"}});
}

TEST(Rotate, ReproducesTheMinedTree) {
  auto net = small_network(3);
  enroll_all(net, 3);
  Topology t;
  t.edges = {{ChipId{"d1"}, ChipId{"d0"}}, {ChipId{"d2"}, ChipId{"d0"}}};
  ASSERT_TRUE(net.mine("t", t));
  const auto root_before = net.tree()->root_hash();
  net.rotate_security_state(2);
  EXPECT_EQ(net.tree()->state_index(), 2u);
  EXPECT_NE(net.tree()->root_hash(), root_before);
  EXPECT_TRUE(verify_tree(*net.tree()));
}

TEST(Mine, NonMembersAreDroppedFromTheTree) {
  auto net = small_network(4);
  enroll_all(net, 3);
  Topology t;
  t.edges = {{ChipId{"d3"}, ChipId{"d1"}}, {ChipId{"d1"}, ChipId{"d0"}}, {ChipId{"d2"}, ChipId{"d0"}}};
  ASSERT_TRUE(net.mine("t", t));
  EXPECT_EQ(net.tree()->nodes().size(), 3u);
  EXPECT_FALSE(net.tree()->nodes().contains(ChipId{"c3"}));
  Topology rooted_outside;
  rooted_outside.edges = {{ChipId{"d0"}, ChipId{"d3"}}};
  EXPECT_FALSE(net.mine("x", rooted_outside));
  EXPECT_EQ(net.events().back().kind, EventKind::Fault);
  EXPECT_TRUE(verify_chain(net.chain(), 8));
}

TEST(Forge, SurfacesAsChainFailure) {
  auto net = small_network(2);
  enroll_all(net, 2);
  Topology t;
  t.edges = {{ChipId{"d1"}, ChipId{"d0"}}};
  net.mine("t", t);
  net.mine("t", t);
  ASSERT_TRUE(verify_chain(net.chain(), 8));
  net.forge_block(1);
  EXPECT_FALSE(verify_chain(net.chain(), 8));
  EXPECT_THROW(net.forge_block(5), Error);
}

TEST(Scenario, CoexistenceSeedOne) {
  auto run = run_scenario(bundled_scenario("fig10-coexistence"), 1);
  EXPECT_EQ(run.summary.to_record(),
            "summary scenario=fig10-coexistence seed=1 chain_length=3 chain_valid=1 members=9 admitted=9 denied=1 "
            "rejections=4 evictions=0 state=2 processed=20/20 invariants=ok");
  for (const auto& v : verdicts(run.log))
    if (v.starts_with("laptop:") || v.starts_with("ghost:")) {
      EXPECT_TRUE(v.ends_with(":Rejected") || v.ends_with(":Denied")) << v;
    }
  EXPECT_TRUE(verify_chain(run.chain, 12));
  EXPECT_EQ(run.firewall.state_index, 2u);
}

TEST(Scenario, TamperDemoEvictsSwappedAndStaleDevices) {
  auto run = run_scenario(bundled_scenario("tamper-demo"), 3);
  EXPECT_EQ(run.eviction_history, (std::vector<ChipId>{ChipId{"c2"}, ChipId{"c3"}}));
  EXPECT_EQ(run.summary.members, 3u);
  EXPECT_EQ(run.summary.denied, 2u);
  EXPECT_TRUE(run.summary.ok()) << run.summary.to_record();
}

TEST(Scenario, ForgeAttemptFailsChainIntegrity) {
  auto run = run_scenario(bundled_scenario("forge-attempt"), 1);
  EXPECT_FALSE(run.summary.chain_valid);
  EXPECT_EQ(run.summary.violations, std::vector<std::string>{"chain_integrity"});
}

TEST(Scenario, EmptyScheduleLogsOnlyGenesis) {
  auto run = run_scenario(parse_scenario(kMinimal), 9);
  ASSERT_EQ(run.log.size(), 1u);
  EXPECT_EQ(run.log[0].kind, EventKind::Genesis);
  EXPECT_TRUE(run.summary.ok());
}

TEST(Scenario, ReplayIsByteIdentical) {
  for (const auto& b : kBundledScenarios) {
    auto cfg = parse_scenario(b.text);
    auto a = run_scenario(cfg, 17), c = run_scenario(cfg, 17, 3);
    ASSERT_EQ(a.log.size(), c.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) ASSERT_EQ(a.log[i].to_record(), c.log[i].to_record());
  }
}

TEST(Scenario, SeedsDifferOnlyInSeedDependentFields) {
  auto cfg = bundled_scenario("fig10-coexistence");
  auto a = run_scenario(cfg, 1), b = run_scenario(cfg, 2);
  ASSERT_EQ(a.log.size(), b.log.size());
  bool some_difference = false;
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    const auto &x = a.log[i], &y = b.log[i];
    ASSERT_EQ(x.kind, y.kind);
    ASSERT_EQ(x.actor, y.actor);
    ASSERT_EQ(x.subject, y.subject);
    ASSERT_EQ(x.fields.size(), y.fields.size());
    for (std::size_t f = 0; f < x.fields.size(); ++f) {
      ASSERT_EQ(x.fields[f].first, y.fields[f].first);
      if (is_seed_dependent_field(x.fields[f].first))
        some_difference = some_difference || x.fields[f].second != y.fields[f].second;
      else
        ASSERT_EQ(x.fields[f].second, y.fields[f].second) << x.to_record();
    }
  }
  EXPECT_TRUE(some_difference);
  EXPECT_EQ(verdicts(a.log), verdicts(b.log));
}

TEST(Scenario, SeparationOfPowersHoldsStructurally) {
  auto run = run_scenario(bundled_scenario("fig10-coexistence"), 5);
  for (const auto& e : run.log) {
    if (e.kind == EventKind::Rotate) {
      EXPECT_EQ(e.actor, "sec");
    }
    if (e.kind == EventKind::Verdict) {
      EXPECT_EQ(e.actor, "mgmt");
    }
    if (e.kind == EventKind::Evict) {
      EXPECT_EQ(e.actor, "mgmt");
    }
  }
}

TEST(ScenarioParse, ReportsLineNumbers) {
  const std::string base(kMinimal);
  const int next = static_cast<int>(std::count(base.begin(), base.end(), '\n')) + 1;
  EXPECT_EQ(error_line(base + "1 dance a\n"), next);
  EXPECT_EQ(error_line(base + "2 enroll a\n1 enroll b\n"), next + 1);
  EXPECT_EQ(error_line(base + "1 enroll zed\n"), next);
  EXPECT_EQ(error_line(base + "1 mine nowhere\n"), next);
  EXPECT_EQ(error_line(base + "x enroll a\n"), next);
  EXPECT_EQ(error_line(base + "1 rotate\n"), next);
  EXPECT_EQ(error_line("[scenario]\ndifficulty = 99\n"), 2);
  EXPECT_EQ(error_line("[chips]\nc0 = seed=abc\n"), 2);
  EXPECT_EQ(error_line("[nodes]\nq = wizard\n"), 2);
  EXPECT_EQ(error_line("[nowhere]\n"), 1);
}

TEST(ScenarioParse, StructuralErrors) {
  auto msg = [](std::string_view text) {
    try {
      parse_scenario(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("ok");
  };
  EXPECT_NE(msg("[nodes]\nsec = security\n").find("management"), std::string::npos);
  EXPECT_NE(msg("[chips]\nc = seed=1\n[nodes]\nm = management\ns = security\nd = device chip=q\n").find("q"),
            std::string::npos);
  EXPECT_NE(msg("[nodes]\nm = management\ns = security\nd = device\n").find("chip"), std::string::npos);
  EXPECT_EQ(msg(kMinimal), "ok");
}

TEST(ScenarioRun, CommandFailuresCarryTheLine) {
  // Spoofing a victim that never entered is only detectable at run time.
  std::string text(kMinimal);
  text.replace(text.find("b = device"), 0, "x = attacker\n");
  text += "1 spoof x a\n";
  const auto line = "line " + std::to_string(std::count(text.begin(), text.end(), '\n'));
  try {
    run_scenario(parse_scenario(text), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
    EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
  }
}
