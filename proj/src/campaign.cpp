#include "flowtrace/campaign.hpp"

#include <algorithm>
#include <future>

#include <fmt/format.h>

namespace flowtrace {

std::uint16_t campaign_session_id(std::uint64_t seed, int round, std::size_t dest_index, Mode mode) {
  const auto h = simnet::mix64(seed ^ simnet::mix64((static_cast<std::uint64_t>(round) << 32) ^ dest_index) ^
                               (mode == Mode::classic ? 0xc1a5ULL : 0x9a21ULL));
  return static_cast<std::uint16_t>(1 + h % 0xFFFE);
}

namespace {

struct Tagged {
  int round;
  std::size_t dest;
  MeasuredRoute paris;
  MeasuredRoute classic;
};

std::vector<Tagged> run_shard(const simnet::Topology& topo, const CampaignConfig& cfg, std::size_t shard,
                              std::size_t shards) {
  simnet::Simulator sim(topo, simnet::mix64(cfg.seed) + shard);
  simnet::SimTransport tx(sim);
  std::vector<Tagged> out;
  for (int round = 0; round < cfg.rounds; ++round) {
    for (std::size_t d = shard; d < cfg.destinations.size(); d += shards) {
      TraceConfig tc = cfg.trace;
      tc.protocol = cfg.protocol;
      tc.probes_per_hop = 1;
      tc.strategy = Strategy::packet_by_packet;
      tc.round = round;

      tc.mode = Mode::paris;
      tc.session_id = campaign_session_id(cfg.seed, round, d, Mode::paris);
      tc.seed = simnet::mix64(cfg.seed ^ tc.session_id ^ (static_cast<std::uint64_t>(d) << 20));
      MeasuredRoute paris = run_trace(cfg.destinations[d], tc, tx);

      int last = tc.min_ttl;
      for (const auto& h : paris.hops)
        if (!h.all_star()) last = h.ttl;
      tc.mode = Mode::classic;
      tc.max_ttl = std::max(tc.min_ttl, std::min(cfg.trace.max_ttl, last + kClassicTtlMargin));
      tc.session_id = campaign_session_id(cfg.seed, round, d, Mode::classic);
      MeasuredRoute classic = run_trace(cfg.destinations[d], tc, tx);
      out.push_back({round, d, std::move(paris), std::move(classic)});
    }
  }
  return out;
}

}  // namespace

CampaignResult run_campaign(const simnet::Topology& topology, const CampaignConfig& config) {
  CampaignResult result;
  if (config.rounds <= 0 || config.destinations.empty()) return result;
  const std::size_t shards = std::max<std::size_t>(1, std::min(config.parallel, config.destinations.size()));
  std::vector<std::future<std::vector<Tagged>>> jobs;
  for (std::size_t s = 0; s < shards; ++s)
    jobs.push_back(std::async(std::launch::async, run_shard, std::cref(topology), std::cref(config), s, shards));
  std::vector<Tagged> all;
  for (auto& j : jobs) {
    auto part = j.get();
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return std::tie(a.round, a.dest) < std::tie(b.round, b.dest); });
  for (auto& t : all) {
    result.paris.push_back(std::move(t.paris));
    result.classic.push_back(std::move(t.classic));
  }
  return result;
}

namespace {

std::string flag_for(const ProbeReply& p, Ipv4Addr destination) {
  std::string f;
  if (p.probe_ttl && *p.probe_ttl != 1) f += fmt::format(" !T{}", *p.probe_ttl);
  if (!p.icmp_type) return f;
  if (*p.icmp_type == icmp_type::source_quench) return f + " !Q";
  if (*p.icmp_type != icmp_type::dest_unreachable) return f;
  switch (p.icmp_code.value_or(0)) {
    case unreach_code::net: return f + " !N";
    case unreach_code::host: return f + " !H";
    case unreach_code::protocol: return f + " !P";
    case unreach_code::port:
      if (p.addr == destination) return f;
      return f + " !p";
    default: return f + fmt::format(" !<{}>", *p.icmp_code);
  }
}

}  // namespace

std::string format_route(const MeasuredRoute& route) {
  std::string out;
  for (const auto& hop : route.hops) {
    std::string line = fmt::format("{:2d}", hop.ttl);
    Hop shown;
    for (const auto& p : hop.probes) {
      if (p.is_star()) {
        line += "  *";
        continue;
      }
      if (p.addr != shown) {
        line += fmt::format("  {}", p.addr->to_string());
        shown = p.addr;
      }
      line += fmt::format("  {:.3f} ms", static_cast<double>(p.rtt_us.value_or(0)) / 1000.0);
      line += flag_for(p, route.destination);
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace flowtrace
