#pragma once

// Probe construction and response parsing for IPv4 UDP, ICMP Echo and TCP
// probes. Every multi-octet field is big-endian on the wire.
//
// Identifier placement:
//
//   mode     proto  session id            probe id
//   -------  -----  --------------------  ------------------------------
//   paris    UDP    IP Identification     UDP Checksum (payload solved)
//   paris    ICMP   IP Identification     Sequence Number (Identifier
//                                         offsets it, checksum constant)
//   both     TCP    Seq Number high half  Seq Number low half
//   classic  UDP    Source Port - 32768   Destination Port - 33435
//   classic  ICMP   Identifier            Sequence Number
//
// Only the first 28 octets of a probe (IP header plus eight transport octets)
// are needed to recover both identifiers, since that is all a Time Exceeded
// message is guaranteed to quote.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowtrace/ipv4.hpp"

namespace flowtrace {

enum class Protocol : std::uint8_t { icmp = 1, tcp = 6, udp = 17 };
enum class Mode { classic, paris };

const char* protocol_name(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view name);
const char* mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view name);

inline constexpr std::size_t kIpHeaderLen = 20;
inline constexpr std::size_t kQuoteLen = 28;
inline constexpr std::uint16_t kClassicBaseDstPort = 33435;
inline constexpr std::uint16_t kClassicSrcPortOffset = 32768;
inline constexpr std::uint16_t kTcpDefaultDstPort = 80;

namespace icmp_type {
inline constexpr std::uint8_t echo_reply = 0;
inline constexpr std::uint8_t dest_unreachable = 3;
inline constexpr std::uint8_t source_quench = 4;
inline constexpr std::uint8_t echo_request = 8;
inline constexpr std::uint8_t time_exceeded = 11;
}  // namespace icmp_type

namespace unreach_code {
inline constexpr std::uint8_t net = 0;
inline constexpr std::uint8_t host = 1;
inline constexpr std::uint8_t protocol = 2;
inline constexpr std::uint8_t port = 3;
}  // namespace unreach_code

struct PortPair {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  friend bool operator==(const PortPair&, const PortPair&) = default;
};

struct IcmpFlowPart {
  std::uint8_t icmp_code = 0;
  std::uint16_t icmp_checksum = 0;
  friend bool operator==(const IcmpFlowPart&, const IcmpFlowPart&) = default;
};

// The header fields a per-flow load balancer may hash. ICMP Type is not part
// of it: balancer behaviour for non-Echo types is unknown.
struct FlowKey {
  Ipv4Addr src;
  Ipv4Addr dst;
  Protocol protocol = Protocol::udp;
  std::uint8_t tos = 0;
  std::variant<PortPair, IcmpFlowPart> transport;

  friend bool operator==(const FlowKey&, const FlowKey&) = default;
};

struct ProbePacket {
  std::vector<std::uint8_t> octets;
  std::uint8_t ttl = 0;
  std::uint16_t probe_id = 0;
  std::uint16_t session_id = 0;
  FlowKey flow;
};

// Per-trace constants shared by every probe of one session.
struct Session {
  Ipv4Addr src;
  Ipv4Addr dst;
  Protocol protocol = Protocol::udp;
  std::uint16_t session_id = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tos = 0;
  std::size_t payload_len = 2;
  // ICMP Identifier: the constant in classic mode, the value at Sequence 0 in
  // paris mode.
  std::uint16_t echo_identifier = 0;
};

// Draws UDP ports uniformly from [10000, 60000]; TCP uses destination port 80.
Session make_session(Ipv4Addr src, Ipv4Addr dst, Protocol protocol, std::uint16_t session_id,
                     std::uint64_t seed);

std::uint16_t probe_id_for(Protocol protocol, Mode mode, std::uint32_t probe_index);

ProbePacket craft_udp_probe(Mode mode, const Session& session, std::uint32_t probe_index, std::uint8_t ttl);
// Paris UDP probe carrying an explicit identifier in [1, 0xFFFE].
ProbePacket craft_paris_udp_probe(const Session& session, std::uint16_t probe_id, std::uint8_t ttl);
ProbePacket craft_icmp_probe(Mode mode, const Session& session, std::uint32_t probe_index, std::uint8_t ttl);
ProbePacket craft_tcp_probe(const Session& session, std::uint32_t probe_index, std::uint8_t ttl);
ProbePacket craft_probe(Mode mode, const Session& session, std::uint32_t probe_index, std::uint8_t ttl);

// The constant ICMP checksum a paris Echo session keeps on every probe.
std::uint16_t icmp_checksum_target(const Session& session);
// Identifier a paris Echo probe must carry so its checksum stays constant.
std::uint16_t paris_echo_identifier(const Session& session, std::uint16_t sequence);

FlowKey extract_flow_key(std::span<const std::uint8_t> octets);

struct ResponseInfo {
  Ipv4Addr responder;
  Ipv4Addr destination;
  std::uint8_t icmp_type = 0;
  std::uint8_t icmp_code = 0;
  std::uint8_t response_ttl = 0;
  std::uint16_t ip_id = 0;

  // Present when the message quotes at least 28 octets of the probe.
  std::optional<std::uint8_t> quoted_probe_ttl;
  std::optional<std::uint16_t> quoted_probe_id;
  std::optional<std::uint16_t> quoted_session_id;
  std::optional<FlowKey> quoted_flow;
  std::optional<Ipv4Addr> quoted_dst;
  bool quote_truncated = false;

  // Echo Reply only.
  std::optional<std::uint16_t> echo_identifier;
  std::optional<std::uint16_t> echo_sequence;

  bool has_quote() const { return quoted_probe_id.has_value(); }
};

bool carries_quote(std::uint8_t icmp_type);
bool is_unreachable_class(std::uint8_t icmp_type);

// Parses an ICMP response datagram. Identifiers inside the quote are decoded
// with the field conventions of `decode`.
ResponseInfo parse_response(std::span<const std::uint8_t> octets, Mode decode = Mode::paris);

// Builds an ICMP error (Time Exceeded, Unreachable, Source Quench) that quotes
// the first 28 octets of `offending`.
std::vector<std::uint8_t> build_icmp_error(Ipv4Addr from, Ipv4Addr to, std::uint8_t type, std::uint8_t code,
                                           std::uint8_t ttl, std::uint16_t ip_id,
                                           std::span<const std::uint8_t> offending);
// Builds the Echo Reply answering an Echo Request datagram.
std::vector<std::uint8_t> build_echo_reply(std::span<const std::uint8_t> request, std::uint8_t ttl,
                                           std::uint16_t ip_id);

std::string flow_key_to_string(const FlowKey& key);

}  // namespace flowtrace
