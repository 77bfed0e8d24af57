#include "flowtrace/simnet.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "flowtrace/checksum.hpp"
#include "flowtrace/error.hpp"

namespace flowtrace::simnet {

using nlohmann::json;

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* policy_name(BalancePolicy p) {
  switch (p) {
    case BalancePolicy::per_flow: return "per_flow";
    case BalancePolicy::per_packet: return "per_packet";
    case BalancePolicy::per_destination: return "per_destination";
  }
  return "?";
}

const char* field_name(FlowField f) {
  switch (f) {
    case FlowField::src: return "src";
    case FlowField::dst: return "dst";
    case FlowField::protocol: return "protocol";
    case FlowField::tos: return "tos";
    case FlowField::src_port: return "src_port";
    case FlowField::dst_port: return "dst_port";
    case FlowField::icmp_code: return "icmp_code";
    case FlowField::icmp_checksum: return "icmp_checksum";
  }
  return "?";
}

std::vector<FlowField> default_flow_fields() {
  return {FlowField::src,      FlowField::dst,       FlowField::protocol,  FlowField::tos,
          FlowField::src_port, FlowField::dst_port, FlowField::icmp_code, FlowField::icmp_checksum};
}

const Router* Topology::router(std::string_view id) const {
  for (const auto& r : routers)
    if (r.id == id) return &r;
  return nullptr;
}

bool Topology::has_link(Ipv4Addr from, Ipv4Addr to) const {
  for (const auto& r : routers) {
    const bool owns = std::any_of(r.interfaces.begin(), r.interfaces.end(),
                                  [&](const Interface& i) { return i.address == from; });
    if (!owns) continue;
    for (const auto& route : r.routes) {
      for (const auto& nh : route.next_hops) {
        for (const auto& other : routers)
          for (const auto& i : other.interfaces)
            if (i.name == nh && i.address == to) return true;
        for (const auto& h : hosts)
          if (h.id == nh && h.address == to) return true;
      }
    }
  }
  return false;
}

// ---- loading ---------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& what) { throw Error(Errc::parse_error, what); }
[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::validation_error, what); }

Ipv4Addr parse_addr(const json& j, const std::string& where) {
  if (!j.is_string()) parse_fail(fmt::format("{}: address must be a string", where));
  auto a = Ipv4Addr::parse(j.get<std::string>());
  if (!a) parse_fail(fmt::format("{}: bad address '{}'", where, j.get<std::string>()));
  return *a;
}

std::string parse_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) parse_fail(fmt::format("{}: missing string '{}'", where, key));
  return j[key].get<std::string>();
}

template <typename T>
T parse_uint(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_unsigned()) parse_fail(fmt::format("{}: '{}' must be a non-negative integer", where, key));
  const auto v = j[key].get<std::uint64_t>();
  if (v > std::numeric_limits<T>::max()) parse_fail(fmt::format("{}: '{}' out of range", where, key));
  return static_cast<T>(v);
}

bool parse_bool(const json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) parse_fail(fmt::format("{}: '{}' must be a boolean", where, key));
  return j[key].get<bool>();
}

std::vector<RouteEntry> parse_routes(const json& j, const std::string& where) {
  std::vector<RouteEntry> routes;
  if (!j.is_array()) parse_fail(fmt::format("{}: routes must be an array", where));
  for (const auto& rj : j) {
    RouteEntry e;
    const auto prefix = parse_string(rj, "prefix", where);
    auto p = Ipv4Prefix::parse(prefix);
    if (!p) parse_fail(fmt::format("{}: bad prefix '{}'", where, prefix));
    e.prefix = *p;
    if (!rj.contains("next_hops") || !rj["next_hops"].is_array())
      parse_fail(fmt::format("{}: route {} needs a next_hops array", where, prefix));
    for (const auto& nh : rj["next_hops"]) {
      if (!nh.is_string()) parse_fail(fmt::format("{}: next hop must be an interface name", where));
      e.next_hops.push_back(nh.get<std::string>());
    }
    const std::string policy = rj.value("policy", "per_flow");
    if (policy == "per_flow") e.policy = BalancePolicy::per_flow;
    else if (policy == "per_packet") e.policy = BalancePolicy::per_packet;
    else if (policy == "per_destination") e.policy = BalancePolicy::per_destination;
    else parse_fail(fmt::format("{}: unknown policy '{}'", where, policy));
    if (rj.contains("fields")) {
      if (!rj["fields"].is_array()) parse_fail(fmt::format("{}: fields must be an array", where));
      for (const auto& f : rj["fields"]) {
        const auto name = f.is_string() ? f.get<std::string>() : std::string{};
        auto all = default_flow_fields();
        auto it = std::find_if(all.begin(), all.end(), [&](FlowField x) { return name == field_name(x); });
        if (it == all.end()) parse_fail(fmt::format("{}: unknown flow field '{}'", where, name));
        e.fields.push_back(*it);
      }
    } else {
      e.fields = default_flow_fields();
    }
    routes.push_back(std::move(e));
  }
  return routes;
}

Router parse_router(const json& j) {
  if (!j.is_object()) parse_fail("router entry must be an object");
  Router r;
  r.id = parse_string(j, "id", "router");
  const std::string where = "router " + r.id;
  if (!j.contains("interfaces") || !j["interfaces"].is_array()) parse_fail(where + ": missing interfaces");
  for (const auto& ij : j["interfaces"]) {
    Interface i;
    i.name = parse_string(ij, "name", where);
    if (!ij.contains("address")) parse_fail(fmt::format("{}: interface {} has no address", where, i.name));
    i.address = parse_addr(ij["address"], where);
    r.interfaces.push_back(std::move(i));
  }
  if (j.contains("routes")) r.routes = parse_routes(j["routes"], where);
  r.zero_ttl_bug = parse_bool(j, "zero_ttl_bug", false, where);
  r.responds = parse_bool(j, "responds", true, where);
  r.initial_ttl = parse_uint<std::uint8_t>(j, "initial_ttl", 255, where);
  if (j.contains("masquerade_as") && !j["masquerade_as"].is_null()) r.masquerade_as = parse_addr(j["masquerade_as"], where);
  if (j.contains("unreachable") && !j["unreachable"].is_null()) {
    const auto& uj = j["unreachable"];
    UnreachableBehavior u;
    if (!uj.contains("probability") || !uj["probability"].is_number())
      parse_fail(where + ": unreachable needs a probability");
    u.probability = uj["probability"].get<double>();
    u.type = parse_uint<std::uint8_t>(uj, "type", icmp_type::dest_unreachable, where);
    u.code = parse_uint<std::uint8_t>(uj, "code", unreach_code::host, where);
    r.unreachable = u;
  }
  if (j.contains("ip_id")) {
    const auto& idj = j["ip_id"];
    std::string mode;
    if (idj.is_string()) {
      mode = idj.get<std::string>();
    } else if (idj.is_object()) {
      mode = idj.value("mode", "counter");
      if (idj.contains("start")) r.ip_id_start = parse_uint<std::uint16_t>(idj, "start", 0, where);
    } else {
      parse_fail(where + ": ip_id must be a string or object");
    }
    if (mode == "counter") r.ip_id_mode = IpIdMode::counter;
    else if (mode == "constant_zero") r.ip_id_mode = IpIdMode::constant_zero;
    else parse_fail(fmt::format("{}: unknown ip_id mode '{}'", where, mode));
  }
  return r;
}

bool router_linked_to(const Topology& t, const Router& r, const std::string& iface) {
  for (const auto& [a, b] : t.links) {
    for (const auto& own : r.interfaces) {
      if ((a == own.name && b == iface) || (b == own.name && a == iface)) return true;
    }
  }
  return false;
}

void validate_routes(const Topology& t, const Router& r, const std::vector<RouteEntry>& routes,
                     const std::set<std::string>& names) {
  for (const auto& e : routes) {
    for (const auto& nh : e.next_hops) {
      if (!names.count(nh)) invalid(fmt::format("router {}: next hop '{}' does not exist", r.id, nh));
      if (!router_linked_to(t, r, nh))
        invalid(fmt::format("router {}: next hop '{}' is not linked to any of its interfaces", r.id, nh));
    }
    if (e.policy == BalancePolicy::per_flow && e.fields.empty() && e.next_hops.size() > 1)
      invalid(fmt::format("router {}: per_flow route without flow fields", r.id));
  }
}

const RouteEntry* lookup(const std::vector<RouteEntry>& routes, Ipv4Addr dst, std::size_t* index = nullptr) {
  const RouteEntry* best = nullptr;
  for (std::size_t i = 0; i < routes.size(); ++i) {
    const auto& e = routes[i];
    if (e.prefix.contains(dst) && (!best || e.prefix.length > best->prefix.length)) {
      best = &e;
      if (index) *index = i;
    }
  }
  return best;
}

}  // namespace

void validate_topology(const Topology& t) {
  std::set<std::string> ids;
  std::set<std::string> names;
  std::set<Ipv4Addr> addrs{t.source};
  for (const auto& r : t.routers) {
    if (!ids.insert(r.id).second) invalid(fmt::format("duplicate node id '{}'", r.id));
    if (r.interfaces.empty()) invalid(fmt::format("router {} has no interfaces", r.id));
    for (const auto& i : r.interfaces) {
      if (!names.insert(i.name).second) invalid(fmt::format("duplicate interface name '{}'", i.name));
      if (!addrs.insert(i.address).second) invalid(fmt::format("duplicate address {} on {}", i.address.to_string(), i.name));
    }
    if (r.unreachable && (r.unreachable->probability < 0.0 || r.unreachable->probability > 1.0))
      invalid(fmt::format("router {}: unreachable probability outside [0, 1]", r.id));
  }
  for (const auto& h : t.hosts) {
    if (!ids.insert(h.id).second) invalid(fmt::format("duplicate node id '{}'", h.id));
    if (!names.insert(h.id).second) invalid(fmt::format("duplicate interface name '{}'", h.id));
    if (!addrs.insert(h.address).second) invalid(fmt::format("duplicate address {} on host {}", h.address.to_string(), h.id));
  }
  for (const auto& [a, b] : t.links) {
    if (!names.count(a)) invalid(fmt::format("link endpoint '{}' does not exist", a));
    if (!names.count(b)) invalid(fmt::format("link endpoint '{}' does not exist", b));
  }
  if (!names.count(t.source_gateway)) invalid(fmt::format("source gateway '{}' does not exist", t.source_gateway));
  bool gateway_is_router = false;
  for (const auto& r : t.routers) {
    validate_routes(t, r, r.routes, names);
    for (const auto& i : r.interfaces) gateway_is_router |= i.name == t.source_gateway;
  }
  if (!gateway_is_router) invalid("source gateway must be a router interface");

  // Every host must be reachable along at least one forwarding choice or end
  // in an explicit black hole; a router with no matching route is an error.
  auto owner = [&](const std::string& iface) -> const Router* {
    for (const auto& r : t.routers)
      for (const auto& i : r.interfaces)
        if (i.name == iface) return &r;
    return nullptr;
  };
  for (const auto& h : t.hosts) {
    std::set<const Router*> seen;
    std::vector<const Router*> todo{owner(t.source_gateway)};
    while (!todo.empty()) {
      const Router* r = todo.back();
      todo.pop_back();
      if (!r || !seen.insert(r).second) continue;
      const RouteEntry* e = lookup(r->routes, h.address);
      if (!e) invalid(fmt::format("router {} has no route towards host {}", r->id, h.id));
      for (const auto& nh : e->next_hops) todo.push_back(owner(nh));
    }
  }
}

Topology load_topology(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(e.what());
  }
  if (!j.is_object()) parse_fail("topology must be a JSON object");
  Topology t;
  t.seed = parse_uint<std::uint64_t>(j, "seed", 0, "topology");
  if (!j.contains("source") || !j["source"].is_object()) parse_fail("topology: missing source");
  if (!j["source"].contains("address")) parse_fail("source: missing address");
  t.source = parse_addr(j["source"]["address"], "source");
  t.source_gateway = parse_string(j["source"], "gateway", "source");
  if (!j.contains("routers") || !j["routers"].is_array()) parse_fail("topology: missing routers array");
  for (const auto& rj : j["routers"]) t.routers.push_back(parse_router(rj));
  if (j.contains("hosts")) {
    if (!j["hosts"].is_array()) parse_fail("topology: hosts must be an array");
    for (const auto& hj : j["hosts"]) {
      Host h;
      h.id = parse_string(hj, "id", "host");
      if (!hj.contains("address")) parse_fail(fmt::format("host {}: missing address", h.id));
      h.address = parse_addr(hj["address"], "host " + h.id);
      h.responds = parse_bool(hj, "responds", true, "host " + h.id);
      h.initial_ttl = parse_uint<std::uint8_t>(hj, "initial_ttl", 64, "host " + h.id);
      t.hosts.push_back(std::move(h));
    }
  }
  if (j.contains("links")) {
    if (!j["links"].is_array()) parse_fail("topology: links must be an array");
    for (const auto& lj : j["links"]) {
      if (!lj.is_array() || lj.size() != 2 || !lj[0].is_string() || !lj[1].is_string())
        parse_fail("topology: each link is a pair of interface names");
      t.links.emplace_back(lj[0].get<std::string>(), lj[1].get<std::string>());
    }
  }
  validate_topology(t);
  if (j.contains("changes")) {
    if (!j["changes"].is_array()) parse_fail("topology: changes must be an array");
    for (const auto& cj : j["changes"]) {
      ForwardingChange c;
      c.at_packet = parse_uint<std::uint64_t>(cj, "at_packet", 0, "change");
      if (cj.contains("until_packet") && !cj["until_packet"].is_null())
        c.until_packet = parse_uint<std::uint64_t>(cj, "until_packet", 0, "change");
      if (!cj.contains("routes") || !cj["routes"].is_object()) parse_fail("change: missing routes object");
      for (const auto& [id, rj] : cj["routes"].items()) c.routes[id] = parse_routes(rj, "change for " + id);
      t.changes.push_back(std::move(c));
    }
    // Validates the windows and replacement routes.
    Simulator probe(t);
  }
  return t;
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) parse_fail(fmt::format("cannot open topology file {}", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return load_topology(buf.str());
}

// ---- simulation ------------------------------------------------------------

Simulator::Simulator(Topology topo, std::uint64_t run_seed) : topo_(std::move(topo)), run_seed_(run_seed) {
  for (std::size_t r = 0; r < topo_.routers.size(); ++r) {
    const auto& router = topo_.routers[r];
    for (std::size_t i = 0; i < router.interfaces.size(); ++i) by_iface_[router.interfaces[i].name] = Node{false, r, i};
    router_ip_id_.push_back(router.ip_id_start.value_or(
        static_cast<std::uint16_t>(mix64(topo_.seed ^ mix64(0x1d00 + r)) & 0xFFFF)));
  }
  for (std::size_t h = 0; h < topo_.hosts.size(); ++h) {
    by_iface_[topo_.hosts[h].id] = Node{true, h, 0};
    host_ip_id_.push_back(static_cast<std::uint16_t>(mix64(topo_.seed ^ mix64(0x4057 + h)) & 0xFFFF));
  }
  draws_.assign(topo_.routers.size(), 0);
  compute_return_distances();
  auto scheduled = std::move(topo_.changes);
  topo_.changes.clear();
  for (auto& c : scheduled) schedule_forwarding_change(c);
}

void Simulator::compute_return_distances() {
  // Responses travel the shortest path back over the links, whatever way the
  // probe came; hosts count one more than their nearest router.
  const std::size_t nr = topo_.routers.size();
  std::vector<std::vector<std::size_t>> adj(nr);
  for (const auto& [a, b] : topo_.links) {
    const auto ia = by_iface_.find(a), ib = by_iface_.find(b);
    if (ia == by_iface_.end() || ib == by_iface_.end()) continue;
    if (ia->second.is_host || ib->second.is_host) continue;
    adj[ia->second.index].push_back(ib->second.index);
    adj[ib->second.index].push_back(ia->second.index);
  }
  router_return_.assign(nr, -1);
  const std::size_t gw = by_iface_.at(topo_.source_gateway).index;
  std::vector<std::size_t> queue{gw};
  router_return_[gw] = 0;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    for (auto n : adj[queue[q]]) {
      if (router_return_[n] >= 0) continue;
      router_return_[n] = router_return_[queue[q]] + 1;
      queue.push_back(n);
    }
  }
  for (auto& d : router_return_)
    if (d < 0) d = 0;
  host_return_.assign(topo_.hosts.size(), 0);
  for (std::size_t h = 0; h < topo_.hosts.size(); ++h) {
    int best = -1;
    for (const auto& [a, b] : topo_.links) {
      const std::string* other = a == topo_.hosts[h].id ? &b : b == topo_.hosts[h].id ? &a : nullptr;
      if (!other) continue;
      auto it = by_iface_.find(*other);
      if (it == by_iface_.end() || it->second.is_host) continue;
      const int d = router_return_[it->second.index] + 1;
      if (best < 0 || d < best) best = d;
    }
    host_return_[h] = std::max(best, 0);
  }
}

void Simulator::schedule_forwarding_change(ForwardingChange change) {
  if (change.until_packet && *change.until_packet <= change.at_packet)
    invalid("forwarding change window is empty");
  std::set<std::string> names;
  for (const auto& r : topo_.routers)
    for (const auto& i : r.interfaces) names.insert(i.name);
  for (const auto& h : topo_.hosts) names.insert(h.id);
  for (const auto& [id, routes] : change.routes) {
    const Router* r = topo_.router(id);
    if (!r) invalid(fmt::format("forwarding change names unknown router '{}'", id));
    validate_routes(topo_, *r, routes, names);
  }
  const auto end_of = [](const ForwardingChange& c) { return c.until_packet.value_or(UINT64_MAX); };
  for (const auto& existing : changes_) {
    if (change.at_packet < end_of(existing) && existing.at_packet < end_of(change))
      invalid(fmt::format("forwarding change at packet {} overlaps the one at packet {}", change.at_packet,
                          existing.at_packet));
  }
  changes_.push_back(change);
  topo_.changes.push_back(std::move(change));
}

const std::vector<RouteEntry>& Simulator::routes_for(std::size_t router) const {
  const auto& id = topo_.routers[router].id;
  for (const auto& c : changes_) {
    if (injected_ < c.at_packet || (c.until_packet && injected_ >= *c.until_packet)) continue;
    auto it = c.routes.find(id);
    if (it != c.routes.end()) return it->second;
  }
  return topo_.routers[router].routes;
}

std::size_t Simulator::choose(std::size_t router, std::size_t route, const RouteEntry& entry,
                              std::span<const std::uint8_t> packet) {
  const std::size_t n = entry.next_hops.size();
  if (n == 1) return 0;
  const std::uint64_t base = mix64(topo_.seed ^ mix64(router + 1));
  switch (entry.policy) {
    case BalancePolicy::per_packet: return round_robin_[{router, route}]++ % n;
    case BalancePolicy::per_destination: {
      const std::uint32_t dst = (std::uint32_t{packet[16]} << 24) | (std::uint32_t{packet[17]} << 16) |
                                (std::uint32_t{packet[18]} << 8) | packet[19];
      return mix64(base ^ dst) % n;
    }
    case BalancePolicy::per_flow: break;
  }
  std::uint64_t h = base;
  auto feed = [&](FlowField f, std::uint64_t v) { h = mix64(h ^ (static_cast<std::uint64_t>(f) << 48) ^ v); };
  try {
    const FlowKey key = extract_flow_key(packet);
    const auto* ports = std::get_if<PortPair>(&key.transport);
    const auto* icmp = std::get_if<IcmpFlowPart>(&key.transport);
    for (FlowField f : entry.fields) {
      switch (f) {
        case FlowField::src: feed(f, key.src.value); break;
        case FlowField::dst: feed(f, key.dst.value); break;
        case FlowField::protocol: feed(f, static_cast<std::uint8_t>(key.protocol)); break;
        case FlowField::tos: feed(f, key.tos); break;
        case FlowField::src_port: if (ports) feed(f, ports->src_port); break;
        case FlowField::dst_port: if (ports) feed(f, ports->dst_port); break;
        case FlowField::icmp_code: if (icmp) feed(f, icmp->icmp_code); break;
        case FlowField::icmp_checksum: if (icmp) feed(f, icmp->icmp_checksum); break;
      }
    }
  } catch (const Error&) {
    // Unknown transport: hash what the IP header offers.
  }
  return h % n;
}

std::uint16_t Simulator::next_ip_id(std::size_t router) {
  if (topo_.routers[router].ip_id_mode == IpIdMode::constant_zero) return 0;
  return router_ip_id_[router]++;
}

double Simulator::uniform(std::size_t router) {
  const auto x = mix64(topo_.seed ^ mix64(run_seed_ ^ 0x5eed) ^ (static_cast<std::uint64_t>(router) << 40) ^
                       draws_[router]++);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

InjectResult Simulator::inject(std::span<const std::uint8_t> packet) {
  if (packet.size() < kIpHeaderLen) throw Error(Errc::truncated_header, "injected packet shorter than an IP header");
  std::vector<std::uint8_t> pkt(packet.begin(), packet.end());
  const Ipv4Addr dst{(std::uint32_t{pkt[16]} << 24) | (std::uint32_t{pkt[17]} << 16) | (std::uint32_t{pkt[18]} << 8) |
                     pkt[19]};
  const Ipv4Addr src{(std::uint32_t{pkt[12]} << 24) | (std::uint32_t{pkt[13]} << 16) | (std::uint32_t{pkt[14]} << 8) |
                     pkt[15]};

  InjectResult result;
  auto finish = [&](int traversed, std::optional<std::vector<std::uint8_t>> response) {
    ++injected_;
    result.routers_traversed = traversed;
    result.round_trip = 2 * (traversed + 1) * kLinkLatency;
    result.response = std::move(response);
    return result;
  };
  auto reply_ttl = [](std::uint8_t initial, int hops_back) {
    return static_cast<std::uint8_t>(std::max(1, int{initial} - hops_back));
  };

  auto it = by_iface_.find(topo_.source_gateway);
  Node node = it->second;
  int traversed = 0;
  for (int step = 0; step < 1024; ++step) {
    if (node.is_host) {
      const auto& host = topo_.hosts[node.index];
      if (host.address != dst || !host.responds) return finish(traversed, std::nullopt);
      const auto ttl = reply_ttl(host.initial_ttl, host_return_[node.index]);
      const auto ip_id = host_ip_id_[node.index]++;
      if (pkt[9] == static_cast<std::uint8_t>(Protocol::icmp) && pkt.size() > kIpHeaderLen &&
          pkt[kIpHeaderLen] == icmp_type::echo_request)
        return finish(traversed, build_echo_reply(pkt, ttl, ip_id));
      return finish(traversed, build_icmp_error(host.address, src, icmp_type::dest_unreachable, unreach_code::port,
                                                ttl, ip_id, pkt));
    }

    const auto& router = topo_.routers[node.index];
    const Ipv4Addr in_addr = router.interfaces[node.iface].address;
    const Ipv4Addr reply_from = router.masquerade_as.value_or(in_addr);
    const std::uint8_t ttl = pkt[8];
    if (ttl == 0 || (ttl == 1 && !router.zero_ttl_bug)) {
      if (!router.responds) return finish(traversed, std::nullopt);
      return finish(traversed, build_icmp_error(reply_from, src, icmp_type::time_exceeded, 0,
                                                reply_ttl(router.initial_ttl, router_return_[node.index]), next_ip_id(node.index), pkt));
    }

    const auto& routes = routes_for(node.index);
    std::size_t route_index = 0;
    const RouteEntry* entry = lookup(routes, dst, &route_index);
    if (!entry || entry->next_hops.empty()) return finish(traversed, std::nullopt);
    const std::size_t choice = choose(node.index, route_index, *entry, pkt);

    if (router.unreachable && uniform(node.index) < router.unreachable->probability) {
      if (!router.responds) return finish(traversed, std::nullopt);
      return finish(traversed, build_icmp_error(reply_from, src, router.unreachable->type, router.unreachable->code,
                                                reply_ttl(router.initial_ttl, router_return_[node.index]), next_ip_id(node.index), pkt));
    }

    pkt[8] = static_cast<std::uint8_t>(ttl - 1);
    pkt[10] = pkt[11] = 0;
    const auto sum = internet_checksum(std::span(pkt).first(kIpHeaderLen));
    pkt[10] = static_cast<std::uint8_t>(sum >> 8);
    pkt[11] = static_cast<std::uint8_t>(sum);
    ++traversed;
    node = by_iface_.at(entry->next_hops[choice]);
  }
  // Forwarding loop outlived any TTL; nothing comes back.
  return finish(traversed, std::nullopt);
}

// ---- transport -------------------------------------------------------------

void SimTransport::send(const ProbePacket& probe) {
  auto r = sim_.inject(probe.octets);
  if (r.response) queue_.push(Pending{clock_ + r.round_trip, seq_++, std::move(*r.response)});
  if (keep_sent_) sent_.push_back(probe);
  clock_ += kPerPacketClock;
}

std::optional<Received> SimTransport::receive(Micros deadline) {
  if (!queue_.empty() && queue_.top().at <= deadline) {
    Pending p = queue_.top();
    queue_.pop();
    clock_ = std::max(clock_, p.at);
    return Received{std::move(p.octets), p.at};
  }
  clock_ = std::max(clock_, deadline);
  return std::nullopt;
}

}  // namespace flowtrace::simnet
