#include <doctest.h>

#include <functional>
#include <map>
#include <set>

#include <json.hpp>

#include "flowtrace/error.hpp"
#include "flowtrace/simnet.hpp"
#include "flowtrace/wire.hpp"
#include "oracles.hpp"

using namespace flowtrace;
using namespace flowtrace::simnet;
using nlohmann::json;

namespace {

json iface(const std::string& name, const std::string& addr) { return {{"name", name}, {"address", addr}}; }

// S -> L -> {A | B} -> E -> hosts 10.9.0.1 .. 10.9.0.n, L balancing with `policy`.
json diamond(const std::string& policy, int hosts = 1) {
  json j;
  j["seed"] = 3;
  j["source"] = {{"address", "192.168.0.1"}, {"gateway", "L.0"}};
  json host_list = json::array();
  json e_routes = json::array();
  json links = json::array({json::array({"L.1", "A.0"}), json::array({"L.2", "B.0"}), json::array({"A.1", "E.0"}),
                            json::array({"B.1", "E.1"})});
  for (int h = 1; h <= hosts; ++h) {
    const std::string id = "h" + std::to_string(h);
    const std::string a = "10.9.0." + std::to_string(h);
    host_list.push_back({{"id", id}, {"address", a}});
    e_routes.push_back({{"prefix", a + "/32"}, {"next_hops", {id}}});
    links.push_back(json::array({"E.2", id}));
  }
  j["routers"] = json::array({
      {{"id", "L"},
       {"interfaces", {iface("L.0", "10.0.0.1"), iface("L.1", "10.0.0.2"), iface("L.2", "10.0.0.3")}},
       {"routes", {{{"prefix", "default"}, {"next_hops", {"A.0", "B.0"}}, {"policy", policy}}}}},
      {{"id", "A"},
       {"interfaces", {iface("A.0", "10.0.1.1"), iface("A.1", "10.0.1.2")}},
       {"routes", {{{"prefix", "default"}, {"next_hops", {"E.0"}}}}}},
      {{"id", "B"},
       {"interfaces", {iface("B.0", "10.0.2.1"), iface("B.1", "10.0.2.2")}},
       {"routes", {{{"prefix", "default"}, {"next_hops", {"E.1"}}}}}},
      {{"id", "E"},
       {"interfaces", {iface("E.0", "10.0.3.1"), iface("E.1", "10.0.3.2"), iface("E.2", "10.0.3.3")}},
       {"routes", e_routes}},
  });
  j["hosts"] = host_list;
  j["links"] = links;
  return j;
}

Session sess(std::uint16_t id, std::uint64_t seed = 1, const char* dst = "10.9.0.1") {
  return make_session(Ipv4Addr(192, 168, 0, 1), *Ipv4Addr::parse(dst), Protocol::udp, id, seed);
}

// Address that answers a TTL-2 probe: the branch taken after L.
std::string branch(Simulator& sim, const ProbePacket& p) {
  auto r = sim.inject(p.octets);
  REQUIRE(r.response);
  return parse_response(*r.response, Mode::paris).responder.to_string();
}

Errc load_error(const json& j) {
  try {
    load_topology(j.dump());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("topology accepted");
  return Errc::parse_error;
}

}  // namespace

TEST_SUITE("simnet") {

TEST_CASE("bundled topologies load") {
  for (const char* name : {"linear", "false_link", "merge_loop", "zero_ttl", "nat", "cycle", "unreachable", "mixed"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_topology_file(fixture::topology_path(name)));
  }
}

TEST_CASE("invalid topologies are rejected") {
  CHECK(load_error(json("not an object")) == Errc::parse_error);
  CHECK_THROWS_AS(load_topology("{"), Error);
  auto j = diamond("per_flow");
  SUBCASE("duplicate router id") {
    j["routers"][1]["id"] = "L";
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("duplicate address") {
    j["routers"][1]["interfaces"][0]["address"] = "10.0.0.1";
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("unknown next hop") {
    j["routers"][0]["routes"][0]["next_hops"] = {"Z.0"};
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("next hop without a link") {
    j["routers"][0]["routes"][0]["next_hops"] = {"E.0"};
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("gateway is not a router interface") {
    j["source"]["gateway"] = "h1";
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("probability out of range") {
    j["routers"][1]["unreachable"] = {{"probability", 1.5}, {"code", 1}};
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("unknown policy") {
    j["routers"][0]["routes"][0]["policy"] = "random";
    CHECK(load_error(j) == Errc::parse_error);
  }
  SUBCASE("bad address text") {
    j["hosts"][0]["address"] = "10.9.0";
    CHECK(load_error(j) == Errc::parse_error);
  }
  SUBCASE("a reachable router has no route for a host") {
    j["routers"][3]["routes"][0]["prefix"] = "10.8.0.0/16";
    CHECK(load_error(j) == Errc::validation_error);
  }
  SUBCASE("overlapping forwarding changes") {
    json route = {{"prefix", "default"}, {"next_hops", {"E.0"}}};
    j["changes"] = {{{"at_packet", 5}, {"until_packet", 20}, {"routes", {{"B", {route}}}}},
                    {{"at_packet", 10}, {"until_packet", 30}, {"routes", {{"B", {route}}}}}};
    CHECK(load_error(j) == Errc::validation_error);
  }
}

TEST_CASE("per-flow balancing follows the flow") {
  const auto topo = load_topology(diamond("per_flow").dump());
  Simulator sim(topo, 9);
  std::set<std::string> seen;
  for (std::uint16_t id = 1; id <= 64; ++id) {
    const auto s = sess(id, id);
    const auto first = branch(sim, craft_udp_probe(Mode::paris, s, 0, 2));
    for (std::uint32_t k = 1; k < 6; ++k) CHECK(branch(sim, craft_udp_probe(Mode::paris, s, k, 2)) == first);
    seen.insert(first);
  }
  CHECK(seen == std::set<std::string>{"10.0.1.1", "10.0.2.1"});
}

TEST_CASE("classic probes spread over per-flow branches") {
  const auto topo = load_topology(diamond("per_flow").dump());
  Simulator sim(topo, 9);
  const auto s = sess(5);
  std::map<std::string, int> count;
  for (std::uint32_t k = 0; k < 400; ++k) ++count[branch(sim, craft_udp_probe(Mode::classic, s, k, 2))];
  REQUIRE(count.size() == 2);
  CHECK(count["10.0.1.1"] > 150);
  CHECK(count["10.0.2.1"] > 150);
}

TEST_CASE("per-packet balancing alternates regardless of flow") {
  const auto topo = load_topology(diamond("per_packet").dump());
  Simulator sim(topo, 9);
  const auto s = sess(5);
  std::vector<std::string> got;
  for (std::uint32_t k = 0; k < 6; ++k) got.push_back(branch(sim, craft_udp_probe(Mode::paris, s, k, 2)));
  for (std::size_t k = 2; k < got.size(); ++k) CHECK(got[k] == got[k - 2]);
  CHECK(got[0] != got[1]);
}

TEST_CASE("per-destination balancing ignores ports") {
  const auto topo = load_topology(diamond("per_destination", 12).dump());
  Simulator sim(topo, 9);
  std::set<std::string> over_dests;
  for (int h = 1; h <= 12; ++h) {
    const std::string d = "10.9.0." + std::to_string(h);
    std::set<std::string> per_dest;
    for (std::uint16_t id = 1; id < 20; ++id)
      per_dest.insert(branch(sim, craft_udp_probe(Mode::classic, sess(id, id, d.c_str()), id, 2)));
    CHECK(per_dest.size() == 1);
    over_dests.insert(*per_dest.begin());
  }
  CHECK(over_dests.size() == 2);
}

TEST_CASE("responses are well formed and quote the probe") {
  const auto topo = load_topology(diamond("per_flow").dump());
  Simulator sim(topo, 9);
  const auto s = sess(44);
  for (std::uint8_t ttl = 1; ttl <= 4; ++ttl) {
    const auto p = craft_udp_probe(Mode::paris, s, ttl, ttl);
    const auto r = sim.inject(p.octets);
    REQUIRE(r.response);
    CHECK(oracle::verify_packet(*r.response) == "");
    const auto info = parse_response(*r.response, Mode::paris);
    CHECK(info.quoted_probe_id == p.probe_id);
    CHECK(info.quoted_session_id == 44);
    CHECK(info.quoted_probe_ttl == 1);
    CHECK(info.icmp_type == (ttl < 4 ? icmp_type::time_exceeded : icmp_type::dest_unreachable));
    CHECK(r.round_trip == 2 * ttl * kLinkLatency);
    // return distance: L is next to the source; the host sits behind E
    CHECK(int{info.response_ttl} == (ttl < 4 ? 255 : 64) - (ttl - 1));
  }
}

TEST_CASE("black holes, silent hosts and non-destination hosts answer nothing") {
  auto j = diamond("per_flow");
  j["routers"][1]["routes"][0]["next_hops"] = json::array();
  j["routers"][2]["routes"][0]["next_hops"] = json::array();
  Simulator sim(load_topology(j.dump()), 1);
  CHECK_FALSE(sim.inject(craft_udp_probe(Mode::paris, sess(1), 0, 9).octets).response);
  CHECK(sim.injected() == 1);

  auto k = diamond("per_flow");
  k["hosts"][0]["responds"] = false;
  Simulator sim2(load_topology(k.dump()), 1);
  CHECK_FALSE(sim2.inject(craft_udp_probe(Mode::paris, sess(1), 0, 9).octets).response);
  CHECK(sim2.inject(craft_udp_probe(Mode::paris, sess(1), 1, 3).octets).response);
}

TEST_CASE("unreachable probability is honoured") {
  auto j = diamond("per_flow");
  j["routers"][0]["unreachable"] = {{"probability", 0.2}, {"code", 1}};
  Simulator sim(load_topology(j.dump()), 5);
  const auto s = sess(3);
  int unreach = 0;
  const int n = 5000;
  for (int k = 0; k < n; ++k) {
    auto r = sim.inject(craft_udp_probe(Mode::paris, s, static_cast<std::uint32_t>(k), 9).octets);
    REQUIRE(r.response);
    const auto info = parse_response(*r.response, Mode::paris);
    if (info.responder == Ipv4Addr(10, 0, 0, 1)) {
      CHECK(info.icmp_type == icmp_type::dest_unreachable);
      CHECK(info.icmp_code == unreach_code::host);
      ++unreach;
    }
  }
  CHECK(static_cast<double>(unreach) / n == doctest::Approx(0.2).epsilon(0.15));
}

TEST_CASE("ip id counters and constant zero") {
  auto j = diamond("per_flow");
  j["routers"][0]["ip_id"] = {{"mode", "counter"}, {"start", 65534}};
  j["routers"][3]["ip_id"] = "constant_zero";
  Simulator sim(load_topology(j.dump()), 1);
  const auto s = sess(3);
  std::vector<std::uint16_t> l_ids, e_ids;
  for (std::uint32_t k = 0; k < 4; ++k) {
    l_ids.push_back(parse_response(*sim.inject(craft_udp_probe(Mode::paris, s, 2 * k, 1).octets).response, Mode::paris).ip_id);
    e_ids.push_back(parse_response(*sim.inject(craft_udp_probe(Mode::paris, s, 2 * k + 1, 3).octets).response, Mode::paris).ip_id);
  }
  CHECK(l_ids == std::vector<std::uint16_t>{65534, 65535, 0, 1});
  CHECK(e_ids == std::vector<std::uint16_t>{0, 0, 0, 0});
}

TEST_CASE("masquerading routers answer with the borrowed address") {
  const auto topo = load_topology_file(fixture::topology_path("nat"));
  Simulator sim(topo, 1);
  const auto s = make_session(topo.source, Ipv4Addr(10, 5, 0, 1), Protocol::udp, 9, 9);
  std::vector<std::string> seen;
  for (std::uint8_t ttl = 4; ttl <= 6; ++ttl)
    seen.push_back(parse_response(*sim.inject(craft_udp_probe(Mode::paris, s, ttl, ttl).octets).response, Mode::paris)
                       .responder.to_string());
  CHECK(seen == std::vector<std::string>{"10.5.4.1", "10.5.4.1", "10.5.4.1"});
}

TEST_CASE("forwarding changes apply inside their packet window") {
  const auto topo = load_topology_file(fixture::topology_path("cycle"));
  REQUIRE(topo.changes.size() == 1);
  Simulator sim(topo, 1);
  const auto s = make_session(topo.source, Ipv4Addr(10, 6, 0, 1), Protocol::udp, 9, 9);
  auto answer = [&](std::uint8_t ttl) {
    const auto r = sim.inject(craft_udp_probe(Mode::paris, s, sim.injected(), ttl).octets);
    return r.response ? parse_response(*r.response, Mode::paris).responder.to_string() : std::string("*");
  };
  while (sim.injected() < topo.changes[0].at_packet) CHECK(answer(4) == "10.0.4.1");
  // R3 now sends the packet back to R2
  CHECK(answer(4) == "10.0.2.3");
  while (sim.injected() < *topo.changes[0].until_packet) answer(4);
  CHECK(answer(4) == "10.0.4.1");
}

TEST_CASE("schedule rejects bad windows") {
  const auto topo = load_topology(diamond("per_flow").dump());
  Simulator sim(topo, 1);
  ForwardingChange c;
  c.at_packet = 10;
  c.until_packet = 10;
  c.routes["A"] = topo.routers[1].routes;
  CHECK_THROWS_AS(sim.schedule_forwarding_change(c), Error);
  c.until_packet = 20;
  CHECK_NOTHROW(sim.schedule_forwarding_change(c));
  c.at_packet = 15;
  c.until_packet = 25;
  CHECK_THROWS_AS(sim.schedule_forwarding_change(c), Error);
  c.at_packet = 20;
  CHECK_NOTHROW(sim.schedule_forwarding_change(c));
  ForwardingChange unknown;
  unknown.at_packet = 100;
  unknown.routes["nobody"] = {};
  CHECK_THROWS_AS(sim.schedule_forwarding_change(unknown), Error);
}

TEST_CASE("has_link follows configured next hops") {
  const auto topo = load_topology_file(fixture::topology_path("linear"));
  CHECK(topo.has_link(Ipv4Addr(10, 0, 1, 1), Ipv4Addr(10, 0, 2, 1)));
  CHECK(topo.has_link(Ipv4Addr(10, 0, 4, 1), Ipv4Addr(10, 9, 0, 1)));
  CHECK_FALSE(topo.has_link(Ipv4Addr(10, 0, 1, 1), Ipv4Addr(10, 0, 3, 1)));
  CHECK_FALSE(topo.has_link(Ipv4Addr(10, 0, 2, 1), Ipv4Addr(10, 0, 1, 1)));
  CHECK(topo.router("R2") != nullptr);
  CHECK(topo.router("R9") == nullptr);
}

TEST_CASE("same seed, same run") {
  const auto topo = load_topology_file(fixture::topology_path("mixed"));
  Simulator a(topo, 77), b(topo, 77);
  const auto s = make_session(topo.source, Ipv4Addr(10, 1, 0, 1), Protocol::udp, 9, 9);
  for (std::uint32_t k = 0; k < 200; ++k) {
    const auto p = craft_udp_probe(Mode::classic, s, k, static_cast<std::uint8_t>(1 + k % 12));
    const auto ra = a.inject(p.octets), rb = b.inject(p.octets);
    CHECK(ra.response == rb.response);
  }
  CHECK(mix64(1) != mix64(2));
}

TEST_CASE("short packets are refused") {
  Simulator sim(load_topology(diamond("per_flow").dump()), 1);
  const std::vector<std::uint8_t> tiny(10, 0);
  CHECK_THROWS_AS(sim.inject(tiny), Error);
}

}  // TEST_SUITE
