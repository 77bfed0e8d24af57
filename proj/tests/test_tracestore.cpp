#include <doctest.h>

#include <array>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "flowtrace/error.hpp"
#include "flowtrace/tracestore.hpp"
#include "oracles.hpp"

using namespace flowtrace;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::parse_error;
}

ProbeReply answer(Ipv4Addr a, std::int64_t rtt, std::uint8_t resp_ttl, std::uint16_t ip_id) {
  ProbeReply p;
  p.addr = a;
  p.rtt_us = rtt;
  p.probe_ttl = 1;
  p.response_ttl = resp_ttl;
  p.ip_id = ip_id;
  p.icmp_type = icmp_type::time_exceeded;
  p.icmp_code = 0;
  return p;
}

MeasuredRoute random_route(std::mt19937_64& rng, std::size_t slots) {
  MeasuredRoute r;
  r.tool = rng() % 2 ? Mode::paris : Mode::classic;
  r.destination = Ipv4Addr(static_cast<std::uint32_t>(rng()));
  r.round = static_cast<int>(rng() % 100);
  r.started_at_us = static_cast<std::int64_t>(rng() % 1000000000);
  r.flow.src = Ipv4Addr(192, 168, 0, 1);
  r.flow.dst = r.destination;
  r.flow.protocol = std::array{Protocol::udp, Protocol::icmp, Protocol::tcp}[rng() % 3];
  if (r.flow.protocol == Protocol::icmp)
    r.flow.transport = IcmpFlowPart{0, static_cast<std::uint16_t>(rng())};
  else
    r.flow.transport = PortPair{static_cast<std::uint16_t>(rng()), static_cast<std::uint16_t>(rng())};
  const int first = 1 + static_cast<int>(rng() % 3);
  const int len = 1 + static_cast<int>(rng() % 12);
  for (int t = first; t < first + len; ++t) {
    HopRecord h;
    h.ttl = static_cast<std::uint8_t>(t);
    for (std::size_t s = 0; s < slots; ++s) {
      if (rng() % 4 == 0)
        h.probes.emplace_back();
      else
        h.probes.push_back(answer(Ipv4Addr(10, 0, static_cast<std::uint8_t>(t), static_cast<std::uint8_t>(rng() % 3)),
                                  static_cast<std::int64_t>(rng() % 90000), static_cast<std::uint8_t>(rng()),
                                  static_cast<std::uint16_t>(rng())));
    }
    r.hops.push_back(h);
  }
  r.stop_reason = static_cast<StopReason>(rng() % 4);
  return r;
}

}  // namespace

TEST_SUITE("tracestore") {

TEST_CASE("serialize and parse round-trip random routes") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto r = random_route(rng, 1 + rng() % 3);
    const auto line = serialize_route(r);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(deserialize_route(line) == r);
  }
}

TEST_CASE("stream round-trip keeps order and skips blank lines") {
  std::mt19937_64 rng(4);
  std::vector<MeasuredRoute> rs;
  for (int i = 0; i < 20; ++i) rs.push_back(random_route(rng, 1));
  std::stringstream ss;
  write_routes(ss, rs);
  std::string text = ss.str() + "\n   \n";
  std::istringstream in(text);
  CHECK(read_routes(in) == rs);
}

TEST_CASE("stars carry no metadata on disk") {
  auto r = fixture::route("d", "a * b");
  const auto line = serialize_route(r);
  const auto back = deserialize_route(line);
  CHECK(back.hops[1].primary().is_star());
  CHECK_FALSE(back.hops[1].primary().rtt_us.has_value());
}

TEST_CASE("unknown keys are ignored") {
  auto r = fixture::route("d", "a b");
  auto line = serialize_route(r);
  line.insert(1, "\"extra\":{\"x\":[1,2]},");
  CHECK(deserialize_route(line) == r);
}

TEST_CASE("a malformed line reports its line number") {
  auto good = serialize_route(fixture::route("d", "a b"));
  std::istringstream in(good + "\n" + good + "\n{\"tool\":\"paris\"\n");
  try {
    read_routes(in);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::malformed_line);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("invalid records are rejected") {
  auto r = fixture::route("d", "a b c");
  SUBCASE("non-contiguous TTLs") {
    r.hops[2].ttl = 5;
    CHECK(code_of([&] { validate_route(r); }) == Errc::malformed_line);
    CHECK(code_of([&] { deserialize_route(serialize_route(r)); }) == Errc::malformed_line);
  }
  SUBCASE("star with metadata") {
    r.hops[1].probes[0] = ProbeReply{};
    r.hops[1].probes[0].rtt_us = 5;
    CHECK(code_of([&] { validate_route(r); }) == Errc::malformed_line);
  }
  SUBCASE("unequal probe counts") {
    r.hops[1].probes.emplace_back();
    CHECK(code_of([&] { validate_route(r); }) == Errc::malformed_line);
  }
  SUBCASE("unknown tool") {
    auto line = serialize_route(r);
    line.replace(line.find("\"paris\""), 7, "\"bogus\"");
    CHECK(code_of([&] { deserialize_route(line); }) == Errc::malformed_line);
  }
  SUBCASE("bad address") {
    auto line = serialize_route(r);
    const auto at = line.find(fixture::addr("a").to_string());
    line.replace(at, fixture::addr("a").to_string().size(), "10.0.0.300");
    CHECK(code_of([&] { deserialize_route(line); }) == Errc::malformed_line);
  }
}

TEST_CASE("formal route pads TTLs below the first probed one") {
  auto r = fixture::route("d", "a b");
  for (auto& h : r.hops) h.ttl = static_cast<std::uint8_t>(h.ttl + 2);
  r.flow.src = Ipv4Addr(192, 168, 0, 1);
  const auto f = formal_route(r);
  REQUIRE(f.size() == 5);
  CHECK(f[0] == Ipv4Addr(192, 168, 0, 1));
  CHECK_FALSE(f[1].has_value());
  CHECK_FALSE(f[2].has_value());
  CHECK(f[3] == fixture::addr("a"));
  CHECK(f[4] == fixture::addr("b"));
  CHECK(subroute(r, 3, 1) == std::vector<Hop>{fixture::addr("a"), fixture::addr("b")});
  CHECK(subroute(r, 0, 4).size() == 5);
  CHECK(code_of([&] { subroute(r, 2, 3); }) == Errc::out_of_range);
}

TEST_CASE("multi-probe routes split into one route per slot") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto r = random_route(rng, 3);
    const auto parts = split_probe_sequences(r);
    REQUIRE(parts.size() == 3);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(parts[s].probes_per_hop() == 1);
      CHECK(address_sequence(parts[s]) == address_sequence(r, s));
      CHECK(parts[s].destination == r.destination);
    }
  }
}

TEST_CASE("dataset groups by tool and destination") {
  std::vector<MeasuredRoute> rs{fixture::route("d1", "a b"), fixture::route("d2", "a c"),
                                fixture::route("d1", "a c", Mode::classic), fixture::route("d1", "x b")};
  std::mt19937_64 rng(1);
  auto multi = random_route(rng, 3);
  multi.tool = Mode::paris;
  multi.destination = fixture::addr("d2");
  rs.push_back(multi);
  const Dataset ds(rs);
  CHECK(ds.size() == 7);
  CHECK(ds.routes_to_count(Mode::paris, fixture::addr("d1")) == 2);
  CHECK(ds.routes_to_count(Mode::paris, fixture::addr("d2")) == 4);
  CHECK(ds.routes_to_count(Mode::classic, fixture::addr("d1")) == 1);
  CHECK(ds.routes_to_count(Mode::classic, fixture::addr("d2")) == 0);
  CHECK(ds.routes_containing(Mode::paris, fixture::addr("d1"), fixture::addr("b")) == 2);
  CHECK(ds.routes_containing(Mode::paris, fixture::addr("d1"), fixture::addr("c")) == 0);
  CHECK(ds.destinations().size() == 2);
  CHECK(ds.tools().size() == 2);
  CHECK(ds.only(Mode::classic).size() == 1);
  // input order survives within a group
  CHECK(ds.routes_to(Mode::paris, fixture::addr("d1"))[1].hops[0].addr() == fixture::addr("x"));
}

TEST_CASE("trace files save atomically and load back") {
  const auto dir = std::filesystem::temp_directory_path() / "flowtrace_store_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "t.jsonl").string();
  std::mt19937_64 rng(21);
  std::vector<MeasuredRoute> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(random_route(rng, 1));
  save_trace_file(path, rs);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK(load_trace_file(path) == rs);
  append_trace_file(path, rs[0]);
  CHECK(load_trace_file(path).size() == 11);
  CHECK(code_of([&] { load_trace_file((dir / "missing.jsonl").string()); }) == Errc::parse_error);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
