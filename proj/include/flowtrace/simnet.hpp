#pragma once

// Deterministic IPv4 network simulator: TTL forwarding through routers with
// per-flow, per-packet or per-destination load balancing, plus the router
// misbehaviours that produce traceroute artifacts (zero-TTL forwarding,
// source address masquerading, spurious unreachables, IP ID modes).
//
// Topology documents are JSON:
//
//   {
//     "seed": 7,
//     "source": {"address": "192.168.0.1", "gateway": "R1.0"},
//     "routers": [
//       {"id": "R1",
//        "interfaces": [{"name": "R1.0", "address": "10.0.1.1"}],
//        "routes": [{"prefix": "default", "next_hops": ["R2.0", "R3.0"],
//                    "policy": "per_flow", "fields": ["src", "dst", ...]}],
//        "zero_ttl_bug": false, "masquerade_as": "10.0.0.1",
//        "unreachable": {"probability": 0.2, "code": 1},
//        "ip_id": {"mode": "counter", "start": 100}, "initial_ttl": 255,
//        "responds": true}
//     ],
//     "hosts": [{"id": "D", "address": "10.9.9.9", "responds": true}],
//     "links": [["R1.1", "R2.0"]],
//     "changes": [{"at_packet": 100, "until_packet": 140,
//                  "routes": {"R2": [{"prefix": "default", "next_hops": ["R3.0"]}]}}]
//   }
//
// A next hop names the interface the packet arrives on; a host id as next hop
// delivers to that host. An empty next-hop list is an explicit black hole.

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrace/probing.hpp"
#include "flowtrace/wire.hpp"

namespace flowtrace::simnet {

enum class BalancePolicy { per_flow, per_packet, per_destination };
enum class FlowField { src, dst, protocol, tos, src_port, dst_port, icmp_code, icmp_checksum };
enum class IpIdMode { counter, constant_zero };

const char* policy_name(BalancePolicy p);
const char* field_name(FlowField f);

struct Interface {
  std::string name;
  Ipv4Addr address;
};

struct RouteEntry {
  Ipv4Prefix prefix;
  std::vector<std::string> next_hops;
  BalancePolicy policy = BalancePolicy::per_flow;
  std::vector<FlowField> fields;
};

struct UnreachableBehavior {
  double probability = 0.0;
  std::uint8_t type = icmp_type::dest_unreachable;
  std::uint8_t code = unreach_code::host;
};

struct Router {
  std::string id;
  std::vector<Interface> interfaces;
  std::vector<RouteEntry> routes;
  bool zero_ttl_bug = false;
  std::optional<Ipv4Addr> masquerade_as;
  std::optional<UnreachableBehavior> unreachable;
  IpIdMode ip_id_mode = IpIdMode::counter;
  std::optional<std::uint16_t> ip_id_start;
  std::uint8_t initial_ttl = 255;
  bool responds = true;
};

struct Host {
  std::string id;
  Ipv4Addr address;
  bool responds = true;
  std::uint8_t initial_ttl = 64;
};

// Replacement routes for some routers, active for injected-packet counts in
// [at_packet, until_packet).
struct ForwardingChange {
  std::uint64_t at_packet = 0;
  std::optional<std::uint64_t> until_packet;
  std::map<std::string, std::vector<RouteEntry>> routes;
};

struct Topology {
  std::uint64_t seed = 0;
  Ipv4Addr source;
  std::string source_gateway;
  std::vector<Router> routers;
  std::vector<Host> hosts;
  std::vector<std::pair<std::string, std::string>> links;
  // Scheduled on every simulator built from this topology.
  std::vector<ForwardingChange> changes;

  const Router* router(std::string_view id) const;
  // True when some router owning `from` forwards to the interface `to`.
  bool has_link(Ipv4Addr from, Ipv4Addr to) const;
};

std::vector<FlowField> default_flow_fields();

Topology load_topology(std::string_view text);
Topology load_topology_file(const std::string& path);
void validate_topology(const Topology& topo);

struct InjectResult {
  std::optional<std::vector<std::uint8_t>> response;
  Micros round_trip{0};
  // Routers the probe crossed before being answered or dropped.
  int routers_traversed = 0;
};

class Simulator {
 public:
  explicit Simulator(Topology topo, std::uint64_t run_seed = 0);

  InjectResult inject(std::span<const std::uint8_t> packet);
  void schedule_forwarding_change(ForwardingChange change);

  const Topology& topology() const { return topo_; }
  std::uint64_t injected() const { return injected_; }

 private:
  struct Node {
    bool is_host = false;
    std::size_t index = 0;
    std::size_t iface = 0;
  };

  const std::vector<RouteEntry>& routes_for(std::size_t router) const;
  std::size_t choose(std::size_t router, std::size_t route, const RouteEntry& entry,
                     std::span<const std::uint8_t> packet);
  std::uint16_t next_ip_id(std::size_t router);
  double uniform(std::size_t router);
  void compute_return_distances();

  Topology topo_;
  std::uint64_t run_seed_;
  std::map<std::string, Node, std::less<>> by_iface_;
  std::vector<std::uint16_t> router_ip_id_;
  std::vector<std::uint16_t> host_ip_id_;
  std::vector<std::uint64_t> draws_;
  std::vector<int> router_return_;
  std::vector<int> host_return_;
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> round_robin_;
  std::vector<ForwardingChange> changes_;
  std::uint64_t injected_ = 0;
};

// The probing transport over a simulator. The virtual clock advances 10 ms
// per injected packet; responses arrive one simulated millisecond per link
// each way.
class SimTransport : public Transport {
 public:
  explicit SimTransport(Simulator& sim) : sim_(sim) {}

  Ipv4Addr source_address() const override { return sim_.topology().source; }
  Micros now() override { return clock_; }
  void send(const ProbePacket& probe) override;
  std::optional<Received> receive(Micros deadline) override;

  const std::vector<ProbePacket>& sent() const { return sent_; }
  void keep_sent(bool keep) { keep_sent_ = keep; }

 private:
  struct Pending {
    Micros at;
    std::uint64_t seq;
    std::vector<std::uint8_t> octets;
    bool operator>(const Pending& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  Simulator& sim_;
  Micros clock_{0};
  std::uint64_t seq_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::vector<ProbePacket> sent_;
  bool keep_sent_ = false;
};

inline constexpr Micros kPerPacketClock = std::chrono::milliseconds(10);
inline constexpr Micros kLinkLatency = std::chrono::milliseconds(1);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace flowtrace::simnet
