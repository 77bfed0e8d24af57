#include "flowtrace/wire.hpp"

#include <random>

#include <fmt/format.h>

#include "flowtrace/checksum.hpp"
#include "flowtrace/error.hpp"

namespace flowtrace {

namespace {

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         b[off + 3];
}

void put16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v);
}

void put32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  put16(b, off, static_cast<std::uint16_t>(v >> 16));
  put16(b, off + 2, static_cast<std::uint16_t>(v));
}

std::vector<std::uint8_t> ip_header(Ipv4Addr src, Ipv4Addr dst, Protocol proto, std::uint8_t tos,
                                    std::uint16_t ip_id, std::uint8_t ttl, std::size_t payload_len) {
  std::vector<std::uint8_t> out(kIpHeaderLen + payload_len, 0);
  out[0] = 0x45;
  out[1] = tos;
  put16(out, 2, static_cast<std::uint16_t>(kIpHeaderLen + payload_len));
  put16(out, 4, ip_id);
  out[8] = ttl;
  out[9] = static_cast<std::uint8_t>(proto);
  put32(out, 12, src.value);
  put32(out, 16, dst.value);
  return out;
}

void finish_ip_checksum(std::vector<std::uint8_t>& pkt) {
  put16(pkt, 10, 0);
  put16(pkt, 10, internet_checksum(std::span(pkt).first(kIpHeaderLen)));
}

std::uint16_t transport_checksum(const std::vector<std::uint8_t>& pkt, Protocol proto) {
  const auto segment = std::span(pkt).subspan(kIpHeaderLen);
  const Ipv4Addr src{get32(pkt, 12)};
  const Ipv4Addr dst{get32(pkt, 16)};
  auto sum = pseudo_header_sum(src, dst, static_cast<std::uint8_t>(proto), static_cast<std::uint16_t>(segment.size()));
  return static_cast<std::uint16_t>(~checksum_fold(checksum_accumulate(segment, sum)));
}

FlowKey flow_of(const Session& s, std::uint16_t src_port, std::uint16_t dst_port) {
  return FlowKey{s.src, s.dst, s.protocol, s.tos, PortPair{src_port, dst_port}};
}

std::vector<std::uint8_t> echo_request(const Session& s, std::uint16_t ident, std::uint16_t seq, std::uint8_t ttl) {
  auto pkt = ip_header(s.src, s.dst, Protocol::icmp, s.tos, s.session_id, ttl, 8 + s.payload_len);
  const std::size_t o = kIpHeaderLen;
  pkt[o] = icmp_type::echo_request;
  pkt[o + 1] = 0;
  put16(pkt, o + 4, ident);
  put16(pkt, o + 6, seq);
  put16(pkt, o + 2, internet_checksum(std::span(pkt).subspan(o)));
  finish_ip_checksum(pkt);
  return pkt;
}

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::udp: return "udp";
    case Protocol::tcp: return "tcp";
    case Protocol::icmp: return "icmp";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view name) {
  if (name == "udp") return Protocol::udp;
  if (name == "tcp") return Protocol::tcp;
  if (name == "icmp") return Protocol::icmp;
  return std::nullopt;
}

const char* mode_name(Mode m) { return m == Mode::paris ? "paris" : "classic"; }

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "paris") return Mode::paris;
  if (name == "classic") return Mode::classic;
  return std::nullopt;
}

Session make_session(Ipv4Addr src, Ipv4Addr dst, Protocol protocol, std::uint16_t session_id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ports(10000, 60000);
  Session s;
  s.src = src;
  s.dst = dst;
  s.protocol = protocol;
  s.session_id = session_id;
  s.src_port = static_cast<std::uint16_t>(ports(rng));
  s.dst_port = protocol == Protocol::tcp ? kTcpDefaultDstPort : static_cast<std::uint16_t>(ports(rng));
  s.echo_identifier = session_id;
  return s;
}

std::uint16_t probe_id_for(Protocol protocol, Mode mode, std::uint32_t probe_index) {
  if (protocol == Protocol::udp && mode == Mode::paris) {
    // 0x0000 means "no checksum" and 0xFFFF is how a computed zero is sent.
    return static_cast<std::uint16_t>(1 + probe_index % 0xFFFE);
  }
  return static_cast<std::uint16_t>(probe_index);
}

ProbePacket craft_paris_udp_probe(const Session& s, std::uint16_t probe_id, std::uint8_t ttl) {
  if (probe_id == 0x0000 || probe_id == 0xFFFF)
    throw Error(Errc::probe_id_zero, fmt::format("UDP identifier {:#06x} cannot be a checksum", probe_id));
  if (s.payload_len < 2)
    throw Error(Errc::payload_too_short, fmt::format("payload of {} octets has no room for the solve slot", s.payload_len));

  auto pkt = ip_header(s.src, s.dst, Protocol::udp, s.tos, s.session_id, ttl, 8 + s.payload_len);
  const std::size_t o = kIpHeaderLen;
  put16(pkt, o, s.src_port);
  put16(pkt, o + 2, s.dst_port);
  put16(pkt, o + 4, static_cast<std::uint16_t>(8 + s.payload_len));

  // With checksum and slot zeroed, the folded sum is `partial`. The wire
  // checksum is ~fold(partial + slot), so the slot must make the fold ~id.
  const auto segment = std::span(pkt).subspan(o);
  const auto partial = checksum_fold(checksum_accumulate(
      segment, pseudo_header_sum(s.src, s.dst, 17, static_cast<std::uint16_t>(segment.size()))));
  const std::uint16_t want = static_cast<std::uint16_t>(~probe_id);
  put16(pkt, o + 8, ones_sub(want, partial));
  put16(pkt, o + 6, probe_id);
  finish_ip_checksum(pkt);

  return ProbePacket{std::move(pkt), ttl, probe_id, s.session_id, flow_of(s, s.src_port, s.dst_port)};
}

ProbePacket craft_udp_probe(Mode mode, const Session& s, std::uint32_t probe_index, std::uint8_t ttl) {
  if (mode == Mode::paris) return craft_paris_udp_probe(s, probe_id_for(Protocol::udp, mode, probe_index), ttl);

  const auto src_port = static_cast<std::uint16_t>(s.session_id + kClassicSrcPortOffset);
  const auto dst_port = static_cast<std::uint16_t>(kClassicBaseDstPort + probe_index);
  auto pkt = ip_header(s.src, s.dst, Protocol::udp, s.tos, s.session_id, ttl, 8 + s.payload_len);
  const std::size_t o = kIpHeaderLen;
  put16(pkt, o, src_port);
  put16(pkt, o + 2, dst_port);
  put16(pkt, o + 4, static_cast<std::uint16_t>(8 + s.payload_len));
  auto sum = transport_checksum(pkt, Protocol::udp);
  put16(pkt, o + 6, sum == 0 ? 0xFFFF : sum);
  finish_ip_checksum(pkt);
  return ProbePacket{std::move(pkt), ttl, probe_id_for(Protocol::udp, mode, probe_index), s.session_id,
                     flow_of(s, src_port, dst_port)};
}

std::uint16_t icmp_checksum_target(const Session& s) {
  auto pkt = echo_request(s, s.echo_identifier, 0, 1);
  return get16(pkt, kIpHeaderLen + 2);
}

std::uint16_t paris_echo_identifier(const Session& s, std::uint16_t sequence) {
  // Identifier + Sequence must keep the one's-complement sum it had at
  // Sequence 0.
  return ones_sub(s.echo_identifier, sequence);
}

ProbePacket craft_icmp_probe(Mode mode, const Session& s, std::uint32_t probe_index, std::uint8_t ttl) {
  // Sequence numbers wrap at 16 bits.
  const auto seq = static_cast<std::uint16_t>(probe_index);
  const auto ident = mode == Mode::paris ? paris_echo_identifier(s, seq) : s.echo_identifier;
  auto pkt = echo_request(s, ident, seq, ttl);
  FlowKey flow{s.src, s.dst, Protocol::icmp, s.tos, IcmpFlowPart{0, get16(pkt, kIpHeaderLen + 2)}};
  return ProbePacket{std::move(pkt), ttl, seq, s.session_id, flow};
}

ProbePacket craft_tcp_probe(const Session& s, std::uint32_t probe_index, std::uint8_t ttl) {
  const auto probe_id = static_cast<std::uint16_t>(probe_index);
  auto pkt = ip_header(s.src, s.dst, Protocol::tcp, s.tos, s.session_id, ttl, 20);
  const std::size_t o = kIpHeaderLen;
  put16(pkt, o, s.src_port);
  put16(pkt, o + 2, s.dst_port);
  put32(pkt, o + 4, (std::uint32_t{s.session_id} << 16) | probe_id);
  pkt[o + 12] = 5 << 4;
  pkt[o + 13] = 0x02;  // SYN
  put16(pkt, o + 14, 5840);
  put16(pkt, o + 16, transport_checksum(pkt, Protocol::tcp));
  finish_ip_checksum(pkt);
  return ProbePacket{std::move(pkt), ttl, probe_id, s.session_id, flow_of(s, s.src_port, s.dst_port)};
}

ProbePacket craft_probe(Mode mode, const Session& s, std::uint32_t probe_index, std::uint8_t ttl) {
  switch (s.protocol) {
    case Protocol::udp: return craft_udp_probe(mode, s, probe_index, ttl);
    case Protocol::icmp: return craft_icmp_probe(mode, s, probe_index, ttl);
    case Protocol::tcp: return craft_tcp_probe(s, probe_index, ttl);
  }
  throw Error(Errc::unsupported_protocol, "unknown protocol");
}

namespace {

// Reads the flow fields from an IP header plus at least eight transport octets.
FlowKey flow_from_prefix(std::span<const std::uint8_t> b) {
  if (b.size() < kIpHeaderLen) throw Error(Errc::truncated_header, "shorter than an IPv4 header");
  if ((b[0] >> 4) != 4) throw Error(Errc::truncated_header, "not an IPv4 header");
  const std::size_t ihl = std::size_t{b[0] & 0x0Fu} * 4;
  if (ihl < kIpHeaderLen || b.size() < ihl + 8)
    throw Error(Errc::truncated_header, fmt::format("{} octets cannot hold the transport prefix", b.size()));
  FlowKey key;
  key.src = Ipv4Addr{get32(b, 12)};
  key.dst = Ipv4Addr{get32(b, 16)};
  key.tos = b[1];
  const auto t = b.subspan(ihl);
  switch (b[9]) {
    case 17:
    case 6:
      key.protocol = b[9] == 17 ? Protocol::udp : Protocol::tcp;
      key.transport = PortPair{get16(t, 0), get16(t, 2)};
      break;
    case 1:
      key.protocol = Protocol::icmp;
      key.transport = IcmpFlowPart{t[1], get16(t, 2)};
      break;
    default:
      throw Error(Errc::unsupported_protocol, fmt::format("IP protocol {}", b[9]));
  }
  return key;
}

void decode_quote(ResponseInfo& info, std::span<const std::uint8_t> q, Mode decode) {
  const std::size_t ihl = std::size_t{q[0] & 0x0Fu} * 4;
  const auto flow = flow_from_prefix(q);
  const auto t = q.subspan(ihl);
  const std::uint16_t ip_id = get16(q, 4);
  std::uint16_t session = 0;
  std::uint16_t probe = 0;
  switch (flow.protocol) {
    case Protocol::udp:
      if (decode == Mode::paris) {
        session = ip_id;
        probe = get16(t, 6);
      } else {
        session = static_cast<std::uint16_t>(get16(t, 0) - kClassicSrcPortOffset);
        probe = static_cast<std::uint16_t>(get16(t, 2) - kClassicBaseDstPort);
      }
      break;
    case Protocol::icmp:
      session = decode == Mode::paris ? ip_id : get16(t, 4);
      probe = get16(t, 6);
      break;
    case Protocol::tcp: {
      const auto seq = get32(t, 4);
      session = static_cast<std::uint16_t>(seq >> 16);
      probe = static_cast<std::uint16_t>(seq);
      break;
    }
  }
  info.quoted_probe_ttl = q[8];
  info.quoted_probe_id = probe;
  info.quoted_session_id = session;
  info.quoted_flow = flow;
  info.quoted_dst = flow.dst;
}

}  // namespace

FlowKey extract_flow_key(std::span<const std::uint8_t> octets) { return flow_from_prefix(octets); }

bool carries_quote(std::uint8_t type) {
  return type == icmp_type::time_exceeded || type == icmp_type::dest_unreachable ||
         type == icmp_type::source_quench;
}

bool is_unreachable_class(std::uint8_t type) {
  return type == icmp_type::dest_unreachable || type == icmp_type::source_quench;
}

ResponseInfo parse_response(std::span<const std::uint8_t> b, Mode decode) {
  if (b.size() < kIpHeaderLen || (b[0] >> 4) != 4) throw Error(Errc::truncated_header, "not an IPv4 datagram");
  if (b[9] != 1) throw Error(Errc::not_icmp, fmt::format("IP protocol {}", b[9]));
  const std::size_t ihl = std::size_t{b[0] & 0x0Fu} * 4;
  if (b.size() < ihl + 8) throw Error(Errc::truncated_header, "ICMP header incomplete");

  ResponseInfo info;
  info.responder = Ipv4Addr{get32(b, 12)};
  info.destination = Ipv4Addr{get32(b, 16)};
  info.response_ttl = b[8];
  info.ip_id = get16(b, 4);
  const auto icmp = b.subspan(ihl);
  info.icmp_type = icmp[0];
  info.icmp_code = icmp[1];

  if (info.icmp_type == icmp_type::echo_reply) {
    info.echo_identifier = get16(icmp, 4);
    info.echo_sequence = get16(icmp, 6);
    return info;
  }
  if (!carries_quote(info.icmp_type)) return info;

  const auto quote = icmp.subspan(8);
  if (quote.size() < kQuoteLen || (quote[0] >> 4) != 4 || (quote[0] & 0x0F) != 5) {
    info.quote_truncated = true;
    return info;
  }
  try {
    decode_quote(info, quote.first(kQuoteLen), decode);
  } catch (const Error&) {
    info.quote_truncated = true;
  }
  return info;
}

std::vector<std::uint8_t> build_icmp_error(Ipv4Addr from, Ipv4Addr to, std::uint8_t type, std::uint8_t code,
                                           std::uint8_t ttl, std::uint16_t ip_id,
                                           std::span<const std::uint8_t> offending) {
  const auto quoted = offending.first(std::min(offending.size(), kQuoteLen));
  auto pkt = ip_header(from, to, Protocol::icmp, 0, ip_id, ttl, 8 + quoted.size());
  const std::size_t o = kIpHeaderLen;
  pkt[o] = type;
  pkt[o + 1] = code;
  std::copy(quoted.begin(), quoted.end(), pkt.begin() + static_cast<std::ptrdiff_t>(o + 8));
  put16(pkt, o + 2, internet_checksum(std::span(pkt).subspan(o)));
  finish_ip_checksum(pkt);
  return pkt;
}

std::vector<std::uint8_t> build_echo_reply(std::span<const std::uint8_t> request, std::uint8_t ttl,
                                           std::uint16_t ip_id) {
  const std::size_t ihl = std::size_t{request[0] & 0x0Fu} * 4;
  const auto body = request.subspan(ihl);
  auto pkt = ip_header(Ipv4Addr{get32(request, 16)}, Ipv4Addr{get32(request, 12)}, Protocol::icmp, request[1], ip_id,
                       ttl, body.size());
  std::copy(body.begin(), body.end(), pkt.begin() + kIpHeaderLen);
  pkt[kIpHeaderLen] = icmp_type::echo_reply;
  put16(pkt, kIpHeaderLen + 2, 0);
  put16(pkt, kIpHeaderLen + 2, internet_checksum(std::span(pkt).subspan(kIpHeaderLen)));
  finish_ip_checksum(pkt);
  return pkt;
}

std::string flow_key_to_string(const FlowKey& k) {
  if (const auto* ports = std::get_if<PortPair>(&k.transport)) {
    return fmt::format("{} {}:{} > {}:{} tos {}", protocol_name(k.protocol), k.src.to_string(), ports->src_port,
                       k.dst.to_string(), ports->dst_port, k.tos);
  }
  const auto& icmp = std::get<IcmpFlowPart>(k.transport);
  return fmt::format("icmp {} > {} tos {} code {} cksum {:#06x}", k.src.to_string(), k.dst.to_string(), k.tos,
                     icmp.icmp_code, icmp.icmp_checksum);
}

}  // namespace flowtrace
