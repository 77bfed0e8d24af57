#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowtrace/probing.hpp"
#include "flowtrace/simnet.hpp"
#include "flowtrace/tracestore.hpp"

namespace flowtrace {

inline constexpr std::size_t kDefaultParallel = 32;
// Classic traces stop this many hops past the last paris hop that answered.
inline constexpr int kClassicTtlMargin = 3;

struct CampaignConfig {
  std::vector<Ipv4Addr> destinations;
  int rounds = 1;
  std::size_t parallel = kDefaultParallel;
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::udp;
  // Timeouts, TTL bounds and star gap come from here; probes per hop and
  // strategy are fixed at one probe, packet by packet.
  TraceConfig trace;
};

struct CampaignResult {
  std::vector<MeasuredRoute> paris;
  std::vector<MeasuredRoute> classic;
};

// For every round and destination: a paris trace, then a classic one. Each
// shard of destinations runs on its own simulator clone.
CampaignResult run_campaign(const simnet::Topology& topology, const CampaignConfig& config);

// Session identifiers and port seeds are functions of (seed, round, dest).
std::uint16_t campaign_session_id(std::uint64_t seed, int round, std::size_t dest_index, Mode mode);

// traceroute-style listing: one line per hop, RTTs with three decimals.
std::string format_route(const MeasuredRoute& route);

}  // namespace flowtrace
