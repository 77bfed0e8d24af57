#include <doctest.h>

#include <random>

#include "flowtrace/artifacts.hpp"
#include "flowtrace/error.hpp"
#include "oracles.hpp"

using namespace flowtrace;
using fixture::addr;
using fixture::route;

namespace {

// Gives every answering hop plausible metadata: a Time Exceeded with probe
// TTL 1, response TTL 250 and an IP ID of 100 + position.
MeasuredRoute annotated(const std::string& dest, const std::string& hops, Mode tool = Mode::paris) {
  auto r = route(dest, hops, tool);
  for (std::size_t k = 0; k < r.hops.size(); ++k) {
    auto& p = r.hops[k].probes[0];
    if (p.is_star()) continue;
    p.probe_ttl = 1;
    p.response_ttl = 250;
    p.ip_id = static_cast<std::uint16_t>(100 + k);
    p.icmp_type = icmp_type::time_exceeded;
    p.icmp_code = 0;
  }
  return r;
}

void unreachable_at(MeasuredRoute& r, std::size_t k) {
  r.hops[k].probes[0].icmp_type = icmp_type::dest_unreachable;
  r.hops[k].probes[0].icmp_code = unreach_code::host;
}

const ClassifiedStructure& only(const std::vector<ClassifiedStructure>& v) {
  REQUIRE(v.size() == 1);
  return v[0];
}

Cause loop_cause(const std::vector<MeasuredRoute>& paris) {
  std::vector<MeasuredRoute> classic;
  for (const auto& r : paris) {
    auto c = r;
    c.tool = Mode::classic;
    classic.push_back(c);
  }
  return only(classify_campaign(Dataset(classic), Dataset(paris)).loops).cause;
}

}  // namespace

TEST_SUITE("artifacts") {

TEST_CASE("cause applicability") {
  CHECK(cause_applies(Cause::zero_ttl_forwarding, StructureKind::loop_instances));
  CHECK_FALSE(cause_applies(Cause::zero_ttl_forwarding, StructureKind::cycle_signatures));
  CHECK(cause_applies(Cause::routing_cycle, StructureKind::cycle_instances));
  CHECK_FALSE(cause_applies(Cause::routing_cycle, StructureKind::loop_signatures));
  CHECK_FALSE(cause_applies(Cause::fake_address, StructureKind::global_diamonds));
  CHECK(cause_applies(Cause::per_flow_load_balancing, StructureKind::one_destination_diamonds));
  for (auto k : kAllKinds) CHECK(cause_applies(Cause::unknown, k));
}

TEST_CASE("comparison counts disappeared and appeared structures") {
  const std::vector<MeasuredRoute> classic{route("d1", "x a a b y", Mode::classic), route("d1", "x r q r y", Mode::classic),
                                           route("d2", "h m t", Mode::classic), route("d2", "h n t", Mode::classic),
                                           route("d2", "z z", Mode::classic)};
  const std::vector<MeasuredRoute> paris{route("d1", "x a b y"), route("d1", "x r q r y"), route("d2", "h m t"),
                                         route("d2", "z z"), route("d2", "k k")};
  const auto rep = compare_datasets(Dataset(classic), Dataset(paris));
  const auto& ls = rep.entry(StructureKind::loop_signatures);
  CHECK(ls.classic_total == 2);
  CHECK(ls.paris_total == 2);
  CHECK(ls.disappeared == 1);
  CHECK(ls.appeared == 1);
  CHECK(ls.disappeared_fraction == doctest::Approx(0.5));
  REQUIRE(rep.disappeared_loops.size() == 1);
  CHECK(rep.disappeared_loops[0] == SignatureKey{addr("a"), addr("d1")});
  const auto& cs = rep.entry(StructureKind::cycle_signatures);
  CHECK(cs.classic_total == 1);
  CHECK(cs.disappeared == 0);
  const auto& gd = rep.entry(StructureKind::global_diamonds);
  CHECK(gd.classic_total == 1);
  CHECK(gd.paris_total == 0);
  CHECK(gd.disappeared_fraction == doctest::Approx(1.0));
  CHECK(rep.disappeared_diamonds == std::vector<SignatureKey>{{addr("h"), addr("t")}});
}

TEST_CASE("comparison needs the same destinations") {
  const std::vector<MeasuredRoute> classic{route("d1", "a b", Mode::classic)};
  const std::vector<MeasuredRoute> paris{route("d2", "a b")};
  try {
    compare_datasets(Dataset(classic), Dataset(paris));
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::destination_mismatch);
  }
  CHECK_THROWS_AS(classify_campaign(Dataset(classic), Dataset(paris)), Error);
}

TEST_CASE("loop causes follow precedence") {
  auto base = annotated("d1", "x a a b y");
  SUBCASE("nothing special") { CHECK(loop_cause({base}) == Cause::unknown); }
  SUBCASE("zero ttl") {
    base.hops[1].probes[0].probe_ttl = 0;
    CHECK(loop_cause({base}) == Cause::zero_ttl_forwarding);
  }
  SUBCASE("zero ttl beats interrupted and fake") {
    auto r = annotated("d1", "x a a");
    r.hops[1].probes[0].probe_ttl = 0;
    r.hops[2].probes[0].response_ttl = 240;
    unreachable_at(r, 2);
    CHECK(loop_cause({r}) == Cause::zero_ttl_forwarding);
  }
  SUBCASE("interrupted beats fake") {
    auto r = annotated("d1", "x a a * *");
    r.hops[2].probes[0].response_ttl = 240;
    unreachable_at(r, 2);
    CHECK(loop_cause({r}) == Cause::interrupted_route);
  }
  SUBCASE("an unreachable before the end does not interrupt") {
    unreachable_at(base, 2);
    CHECK(loop_cause({base}) == Cause::unknown);
  }
  SUBCASE("fake when every instance changes and one decreases") {
    base.hops[2].probes[0].response_ttl = 249;
    auto other = annotated("d1", "x a a b y");
    other.hops[2].probes[0].response_ttl = 251;
    CHECK(loop_cause({base, other}) == Cause::fake_address);
    other.hops[2].probes[0].response_ttl = 250;
    CHECK(loop_cause({base, other}) == Cause::unknown);
  }
}

TEST_CASE("classic-only loops are per-flow and weighted by classic instances") {
  const std::vector<MeasuredRoute> classic{route("d1", "x a a b y", Mode::classic), route("d1", "x a a b y", Mode::classic),
                                           route("d1", "x a a b y", Mode::classic)};
  const std::vector<MeasuredRoute> paris{annotated("d1", "x a b y")};
  const auto cls = classify_campaign(Dataset(classic), Dataset(paris));
  const auto& c = only(cls.loops);
  CHECK(c.cause == Cause::per_flow_load_balancing);
  CHECK(c.instances == 3);
}

TEST_CASE("classifiers report missing metadata as undecidable") {
  const Dataset ds(std::vector<MeasuredRoute>{route("d1", "x a a b")});
  const auto sigs = aggregate_loops(ds);
  REQUIRE(sigs.size() == 1);
  CHECK(classify_zero_ttl(sigs[0], ds).undecidable);
  CHECK(classify_fake(sigs[0], ds).undecidable);
  CHECK_FALSE(classify_interrupted(sigs[0], ds));
  const auto cls = classify_campaign(Dataset(std::vector<MeasuredRoute>{route("d1", "x a a b", Mode::classic)}), ds);
  CHECK(only(cls.loops).undecidable);
  CHECK(only(cls.loops).cause == Cause::unknown);
}

TEST_CASE("routing cycles need an advancing IP ID counter") {
  auto r = annotated("d1", "x r q r y");
  auto check = [&](std::uint16_t first, std::uint16_t second, CycleEvidence want) {
    r.hops[1].probes[0].ip_id = first;
    r.hops[3].probes[0].ip_id = second;
    const Dataset ds(std::vector<MeasuredRoute>{r});
    const auto sigs = aggregate_cycles(ds);
    REQUIRE(sigs.size() == 1);
    CHECK(verify_routing_cycle(sigs[0], ds) == want);
  };
  check(10, 12, CycleEvidence::confirmed);
  check(65530, 4, CycleEvidence::confirmed);  // wraps
  check(10, 10 + kIpIdWindow, CycleEvidence::confirmed);
  check(10, 11 + kIpIdWindow, CycleEvidence::refuted);
  check(12, 10, CycleEvidence::refuted);
  check(0, 0, CycleEvidence::counter_unavailable);
  check(7, 7, CycleEvidence::counter_unavailable);

  r.hops[1].probes[0].ip_id = 10;
  r.hops[3].probes[0].ip_id = 30;
  auto classic = r;
  classic.tool = Mode::classic;
  auto cause = [&](const MeasuredRoute& p, ClassifyOptions o = {}) {
    return only(classify_campaign(Dataset(std::vector<MeasuredRoute>{classic}), Dataset(std::vector<MeasuredRoute>{p}), o)
                    .cycles);
  };
  CHECK(cause(r).cause == Cause::routing_cycle);
  CHECK(cause(r).evidence == CycleEvidence::confirmed);
  ClassifyOptions narrow;
  narrow.ip_id_window = 5;
  CHECK(cause(r, narrow).cause == Cause::unknown);
  auto fake = r;
  fake.hops[3].probes[0].response_ttl = 240;
  CHECK(cause(fake).cause == Cause::fake_address);
  auto cut = r;
  cut.hops[4].probes[0] = ProbeReply{};
  unreachable_at(cut, 3);
  CHECK(cause(cut).cause == Cause::interrupted_route);
}

TEST_CASE("diamonds are per-flow only when paris lost them") {
  const std::vector<MeasuredRoute> classic{route("d1", "h m t", Mode::classic), route("d1", "h n t", Mode::classic),
                                           route("d1", "u v w", Mode::classic), route("d1", "u x w", Mode::classic)};
  const std::vector<MeasuredRoute> paris{route("d1", "h m t"), route("d1", "u v w"), route("d1", "u x w")};
  const auto cls = classify_campaign(Dataset(classic), Dataset(paris));
  REQUIRE(cls.global_diamonds.size() == 2);
  for (const auto& d : cls.global_diamonds)
    CHECK(d.cause == (d.key.first == addr("h") ? Cause::per_flow_load_balancing : Cause::unknown));
  CHECK(cls.one_destination_diamonds.size() == 2);
}

TEST_CASE("summary columns sum to one hundred") {
  std::mt19937_64 rng(41);
  static const char* names[] = {"a", "b", "c", "d", "*"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<MeasuredRoute> classic, paris;
    for (int i = 0; i < 20; ++i) {
      for (auto tool : {Mode::classic, Mode::paris}) {
        std::string hops;
        const std::size_t len = 2 + rng() % 8;
        for (std::size_t k = 0; k < len; ++k) hops += std::string(k ? " " : "") + names[rng() % 5];
        auto r = annotated(i % 2 ? "d1" : "d2", hops, tool);
        for (auto& h : r.hops) {
          auto& p = h.probes[0];
          if (p.is_star()) continue;
          p.response_ttl = static_cast<std::uint8_t>(245 + rng() % 3);
          p.ip_id = static_cast<std::uint16_t>(rng() % 3000);
          if (rng() % 10 == 0) p.probe_ttl = 0;
        }
        (tool == Mode::classic ? classic : paris).push_back(r);
      }
    }
    const auto table = summary_report(classify_campaign(Dataset(classic), Dataset(paris)));
    for (auto k : kAllKinds) {
      double sum = 0;
      for (auto c : kAllCauses) {
        const auto& cell = table.percent[size_t(c)][size_t(k)];
        CHECK(cell.has_value() == cause_applies(c, k));
        sum += cell.value_or(0.0);
      }
      if (table.totals[size_t(k)] > 0) CHECK(sum == doctest::Approx(100.0));
      else CHECK(sum == 0.0);
    }
  }
}

TEST_CASE("empty campaign renders zeros") {
  const auto table = summary_report(classify_campaign(Dataset(), Dataset()));
  for (auto t : table.totals) CHECK(t == 0);
  const auto text = render_summary_text(table);
  CHECK(text.find("Zero-TTL forwarding") != std::string::npos);
  CHECK(text.find("Total structures") != std::string::npos);
  const auto csv = render_summary_csv(table);
  CHECK(csv.rfind("cause,loop_signatures,loop_instances,cycle_signatures,cycle_instances,global_diamonds,"
                  "one_destination_diamonds\n",
                  0) == 0);
  const auto cmp = render_comparison_csv(compare_datasets(Dataset(), Dataset()));
  CHECK(cmp.rfind("kind,classic_total,paris_total,disappeared,appeared,disappeared_pct,appeared_pct\n", 0) == 0);
}

}  // TEST_SUITE
