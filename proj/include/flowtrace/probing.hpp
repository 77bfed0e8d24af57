#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string_view>
#include <utility>
#include <vector>

#include "flowtrace/tracestore.hpp"
#include "flowtrace/wire.hpp"

namespace flowtrace {

using Micros = std::chrono::microseconds;

struct Received {
  std::vector<std::uint8_t> octets;
  Micros at{0};
};

// Where probes go and responses come from. Responses may arrive in any order
// or not at all.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual Ipv4Addr source_address() const = 0;
  virtual Micros now() = 0;
  virtual void send(const ProbePacket& probe) = 0;
  // Returns the next response arriving no later than `deadline`, or nullopt
  // once the deadline has passed without one.
  virtual std::optional<Received> receive(Micros deadline) = 0;
};

enum class Strategy { packet_by_packet, hop_by_hop, concurrent, scout };

const char* strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct TraceConfig {
  Protocol protocol = Protocol::udp;
  Mode mode = Mode::paris;
  int probes_per_hop = 3;
  int min_ttl = 1;
  int max_ttl = 36;
  Micros timeout = std::chrono::seconds(2);
  Micros inter_probe_delay = std::chrono::milliseconds(50);
  int star_gap_stop = 8;
  Strategy strategy = Strategy::hop_by_hop;

  std::uint16_t session_id = 1;
  // Seeds the port draw of the session.
  std::uint64_t seed = 0;
  std::uint8_t tos = 0;
  std::size_t payload_len = 2;
  int round = 0;

  void validate() const;
};

inline constexpr std::size_t kConcurrentWindow = 64;
inline constexpr int kScoutTtl = 64;
inline constexpr int kScoutMargin = 2;

struct OutstandingProbe {
  std::uint16_t session_id = 0;
  std::uint16_t probe_id = 0;
  std::uint8_t ttl = 0;
  std::size_t slot = 0;
  Micros sent_at{0};
  // Identifier the destination echoes back (ICMP probes only).
  std::optional<std::uint16_t> echo_identifier;
};

enum class MatchOutcome { matched, duplicate, unmatched };

struct MatchResult {
  MatchOutcome outcome = MatchOutcome::unmatched;
  std::optional<OutstandingProbe> probe;
};

// In-flight probes keyed by (session id, probe id). Safe to insert from a
// sending thread while a receiving thread matches.
class MatchTable {
 public:
  void insert(const OutstandingProbe& probe);
  // Quoted responses match on the quoted identifiers. Echo Replies carry no
  // quote and match on (responder, identifier, sequence).
  MatchResult match(const ResponseInfo& info, Ipv4Addr traced_destination);
  // Retires every probe sent at or before `cutoff`; those are stars.
  std::vector<OutstandingProbe> expire(Micros cutoff);

  std::size_t outstanding() const;
  std::optional<Micros> oldest_sent_at() const;
  std::size_t unmatched_count() const;
  std::size_t duplicate_count() const;

 private:
  using Key = std::pair<std::uint16_t, std::uint16_t>;

  mutable std::mutex mu_;
  std::map<Key, OutstandingProbe> pending_;
  std::map<Key, Key> echo_index_;  // (identifier, sequence) -> pending key
  std::set<Key> completed_;
  std::size_t unmatched_ = 0;
  std::size_t duplicates_ = 0;
};

MeasuredRoute run_trace(Ipv4Addr destination, const TraceConfig& config, Transport& transport);

// One probe at TTL 64; estimates the hop distance of the destination from
// the response TTL of its reply, assuming an initial TTL of 64, 128 or 255.
std::optional<int> scout_probe(Ipv4Addr destination, const TraceConfig& config, Transport& transport);

// Path length implied by a destination reply's TTL.
int estimate_distance(std::uint8_t reply_ttl);

// True when a probe TTL other than one came back (a zero-TTL forwarder or
// similar upstream).
inline bool probe_ttl_anomalous(const ProbeReply& reply) {
  return reply.probe_ttl.has_value() && *reply.probe_ttl != 1;
}

}  // namespace flowtrace
