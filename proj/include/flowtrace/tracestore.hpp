#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrace/ipv4.hpp"
#include "flowtrace/wire.hpp"

namespace flowtrace {

enum class StopReason { destination, other_icmp, max_ttl, star_gap };

const char* stop_reason_name(StopReason r);
std::optional<StopReason> parse_stop_reason(std::string_view name);

// What came back for one probe. A star has no address and no metadata.
struct ProbeReply {
  Hop addr;
  std::optional<std::int64_t> rtt_us;
  std::optional<std::uint8_t> probe_ttl;
  std::optional<std::uint8_t> response_ttl;
  std::optional<std::uint16_t> ip_id;
  std::optional<std::uint8_t> icmp_type;
  std::optional<std::uint8_t> icmp_code;

  bool is_star() const { return !addr.has_value(); }
  friend bool operator==(const ProbeReply&, const ProbeReply&) = default;
};

// One TTL of a trace. `probes` holds one slot per probe sent at this TTL, in
// send order; slot 0 is the one the analysis routes use by default.
struct HopRecord {
  std::uint8_t ttl = 0;
  std::vector<ProbeReply> probes;

  const ProbeReply& primary() const { return probes.front(); }
  Hop addr(std::size_t slot = 0) const { return probes.at(slot).addr; }
  bool all_star() const;
  friend bool operator==(const HopRecord&, const HopRecord&) = default;
};

struct MeasuredRoute {
  Mode tool = Mode::paris;
  Ipv4Addr destination;
  int round = 0;
  std::int64_t started_at_us = 0;
  FlowKey flow;
  std::vector<HopRecord> hops;
  StopReason stop_reason = StopReason::max_ttl;

  std::size_t probes_per_hop() const { return hops.empty() ? 1 : hops.front().probes.size(); }
  friend bool operator==(const MeasuredRoute&, const MeasuredRoute&) = default;
};

// Responder sequence seen by probe slot `slot`, one element per hop.
std::vector<Hop> address_sequence(const MeasuredRoute& route, std::size_t slot = 0);

// The formal route (r0, ..., rl): r0 is the source, ri the responder for TTL i
// (a star for TTLs below the first probed one).
std::vector<Hop> formal_route(const MeasuredRoute& route);

// (r_i, ..., r_{i+k}) of the formal route.
std::vector<Hop> subroute(const MeasuredRoute& route, std::size_t i, std::size_t k);

// When more than one probe was sent per hop, each slot is a measured route of
// its own. Returns one single-probe route per slot.
std::vector<MeasuredRoute> split_probe_sequences(const MeasuredRoute& route);

void validate_route(const MeasuredRoute& route);

std::string serialize_route(const MeasuredRoute& route);
MeasuredRoute deserialize_route(std::string_view line, std::size_t line_number = 0);

std::vector<MeasuredRoute> read_routes(std::istream& in);
void write_routes(std::ostream& out, const std::vector<MeasuredRoute>& routes);
std::vector<MeasuredRoute> load_trace_file(const std::string& path);
// Writes to a temporary sibling and renames it into place.
void save_trace_file(const std::string& path, const std::vector<MeasuredRoute>& routes);
void append_trace_file(const std::string& path, const MeasuredRoute& route);

struct GroupKey {
  Mode tool = Mode::paris;
  Ipv4Addr destination;
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

// Routes indexed by (tool, destination); each group keeps input order.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<MeasuredRoute> routes);

  const std::map<GroupKey, std::vector<MeasuredRoute>>& groups() const { return groups_; }
  std::size_t size() const { return total_; }
  bool empty() const { return total_ == 0; }

  const std::vector<MeasuredRoute>& routes_to(Mode tool, Ipv4Addr destination) const;
  std::size_t routes_to_count(Mode tool, Ipv4Addr destination) const;
  std::size_t routes_containing(Mode tool, Ipv4Addr destination, Ipv4Addr addr) const;
  std::vector<Ipv4Addr> destinations() const;
  std::vector<Mode> tools() const;
  // The subset collected by one tool.
  Dataset only(Mode tool) const;

 private:
  std::map<GroupKey, std::vector<MeasuredRoute>> groups_;
  std::size_t total_ = 0;
};

Dataset group_dataset(std::vector<MeasuredRoute> routes);

}  // namespace flowtrace
