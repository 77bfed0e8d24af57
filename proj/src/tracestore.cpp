#include "flowtrace/tracestore.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "flowtrace/error.hpp"

namespace flowtrace {

using ojson = nlohmann::ordered_json;

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::destination: return "destination";
    case StopReason::other_icmp: return "other_icmp";
    case StopReason::max_ttl: return "max_ttl";
    case StopReason::star_gap: return "star_gap";
  }
  return "?";
}

std::optional<StopReason> parse_stop_reason(std::string_view name) {
  for (auto r : {StopReason::destination, StopReason::other_icmp, StopReason::max_ttl, StopReason::star_gap})
    if (name == stop_reason_name(r)) return r;
  return std::nullopt;
}

bool HopRecord::all_star() const {
  return std::all_of(probes.begin(), probes.end(), [](const ProbeReply& p) { return p.is_star(); });
}

std::vector<Hop> address_sequence(const MeasuredRoute& route, std::size_t slot) {
  std::vector<Hop> seq;
  seq.reserve(route.hops.size());
  for (const auto& h : route.hops) seq.push_back(slot < h.probes.size() ? h.probes[slot].addr : Hop{});
  return seq;
}

std::vector<Hop> formal_route(const MeasuredRoute& route) {
  std::vector<Hop> r{route.flow.src};
  if (!route.hops.empty())
    for (int ttl = 1; ttl < route.hops.front().ttl; ++ttl) r.emplace_back();
  for (const auto& h : route.hops) r.push_back(h.addr());
  return r;
}

std::vector<Hop> subroute(const MeasuredRoute& route, std::size_t i, std::size_t k) {
  auto r = formal_route(route);
  const std::size_t length = r.size() - 1;
  if (i + k > length)
    throw Error(Errc::out_of_range, fmt::format("subroute ({}, {}) exceeds route length {}", i, k, length));
  return {r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + k + 1)};
}

std::vector<MeasuredRoute> split_probe_sequences(const MeasuredRoute& route) {
  const std::size_t n = route.probes_per_hop();
  std::vector<MeasuredRoute> out;
  for (std::size_t slot = 0; slot < n; ++slot) {
    MeasuredRoute r = route;
    for (auto& h : r.hops) h.probes = {slot < h.probes.size() ? h.probes[slot] : ProbeReply{}};
    out.push_back(std::move(r));
  }
  return out;
}

void validate_route(const MeasuredRoute& route) {
  for (std::size_t i = 0; i < route.hops.size(); ++i) {
    const auto& h = route.hops[i];
    if (h.ttl != route.hops.front().ttl + i)
      throw Error(Errc::malformed_line, fmt::format("hop {} has ttl {}, hops are not contiguous", i, h.ttl));
    if (h.probes.empty()) throw Error(Errc::malformed_line, fmt::format("hop ttl {} has no probe slots", h.ttl));
    if (h.probes.size() != route.hops.front().probes.size())
      throw Error(Errc::malformed_line, fmt::format("hop ttl {} has a different probe count", h.ttl));
    for (const auto& p : h.probes) {
      if (p.is_star() && (p.rtt_us || p.probe_ttl || p.response_ttl || p.ip_id || p.icmp_type || p.icmp_code))
        throw Error(Errc::malformed_line, fmt::format("star at ttl {} carries response metadata", h.ttl));
    }
  }
}

namespace {

template <typename T>
ojson opt(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson reply_fields(const ProbeReply& p) {
  ojson j;
  j["addr"] = p.addr ? ojson(p.addr->to_string()) : ojson(nullptr);
  j["rtt"] = opt(p.rtt_us);
  j["probe_ttl"] = opt(p.probe_ttl);
  j["response_ttl"] = opt(p.response_ttl);
  j["ip_id"] = opt(p.ip_id);
  j["icmp_type"] = opt(p.icmp_type);
  j["icmp_code"] = opt(p.icmp_code);
  return j;
}

ojson flow_json(const FlowKey& k) {
  ojson j;
  j["src"] = k.src.to_string();
  j["dst"] = k.dst.to_string();
  j["protocol"] = protocol_name(k.protocol);
  j["tos"] = k.tos;
  if (const auto* ports = std::get_if<PortPair>(&k.transport)) {
    j["src_port"] = ports->src_port;
    j["dst_port"] = ports->dst_port;
  } else {
    const auto& icmp = std::get<IcmpFlowPart>(k.transport);
    j["icmp_code"] = icmp.icmp_code;
    j["icmp_checksum"] = icmp.icmp_checksum;
  }
  return j;
}

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw Error(Errc::malformed_line, fmt::format("line {}: {}", line, why));
}

Ipv4Addr addr_field(const ojson& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_string()) malformed(line, fmt::format("missing address '{}'", key));
  auto a = Ipv4Addr::parse(j[key].get<std::string>());
  if (!a) malformed(line, fmt::format("bad address in '{}'", key));
  return *a;
}

template <typename T>
std::optional<T> opt_field(const ojson& j, const char* key, std::size_t line) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number_integer()) malformed(line, fmt::format("'{}' is not an integer", key));
  const auto v = j[key].get<std::int64_t>();
  if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
      v > static_cast<std::int64_t>(std::numeric_limits<T>::max()))
    malformed(line, fmt::format("'{}' out of range", key));
  return static_cast<T>(v);
}

ProbeReply reply_from(const ojson& j, std::size_t line) {
  ProbeReply p;
  if (j.contains("addr") && !j["addr"].is_null()) p.addr = addr_field(j, "addr", line);
  p.rtt_us = opt_field<std::int64_t>(j, "rtt", line);
  p.probe_ttl = opt_field<std::uint8_t>(j, "probe_ttl", line);
  p.response_ttl = opt_field<std::uint8_t>(j, "response_ttl", line);
  p.ip_id = opt_field<std::uint16_t>(j, "ip_id", line);
  p.icmp_type = opt_field<std::uint8_t>(j, "icmp_type", line);
  p.icmp_code = opt_field<std::uint8_t>(j, "icmp_code", line);
  return p;
}

FlowKey flow_from(const ojson& j, std::size_t line) {
  if (!j.is_object()) malformed(line, "flow is not an object");
  FlowKey k;
  k.src = addr_field(j, "src", line);
  k.dst = addr_field(j, "dst", line);
  if (!j.contains("protocol") || !j["protocol"].is_string()) malformed(line, "flow protocol missing");
  auto proto = parse_protocol(j["protocol"].get<std::string>());
  if (!proto) malformed(line, "unknown flow protocol");
  k.protocol = *proto;
  k.tos = opt_field<std::uint8_t>(j, "tos", line).value_or(0);
  if (k.protocol == Protocol::icmp) {
    k.transport = IcmpFlowPart{opt_field<std::uint8_t>(j, "icmp_code", line).value_or(0),
                               opt_field<std::uint16_t>(j, "icmp_checksum", line).value_or(0)};
  } else {
    k.transport = PortPair{opt_field<std::uint16_t>(j, "src_port", line).value_or(0),
                           opt_field<std::uint16_t>(j, "dst_port", line).value_or(0)};
  }
  return k;
}

}  // namespace

std::string serialize_route(const MeasuredRoute& route) {
  ojson j;
  j["tool"] = mode_name(route.tool);
  j["destination"] = route.destination.to_string();
  j["round"] = route.round;
  j["started_at"] = route.started_at_us;
  j["flow"] = flow_json(route.flow);
  auto hops = ojson::array();
  for (const auto& h : route.hops) {
    ojson hj;
    hj["ttl"] = h.ttl;
    const auto primary = reply_fields(h.primary());
    for (auto it = primary.begin(); it != primary.end(); ++it) hj[it.key()] = it.value();
    if (h.probes.size() > 1) {
      auto more = ojson::array();
      for (std::size_t i = 1; i < h.probes.size(); ++i) more.push_back(reply_fields(h.probes[i]));
      hj["probes"] = std::move(more);
    }
    hops.push_back(std::move(hj));
  }
  j["hops"] = std::move(hops);
  j["stop_reason"] = stop_reason_name(route.stop_reason);
  return j.dump();
}

MeasuredRoute deserialize_route(std::string_view line, std::size_t line_number) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    malformed(line_number, e.what());
  }
  if (!j.is_object()) malformed(line_number, "record is not an object");

  MeasuredRoute r;
  if (!j.contains("tool") || !j["tool"].is_string()) malformed(line_number, "missing tool");
  auto tool = parse_mode(j["tool"].get<std::string>());
  if (!tool) malformed(line_number, "unknown tool");
  r.tool = *tool;
  r.destination = addr_field(j, "destination", line_number);
  r.round = opt_field<int>(j, "round", line_number).value_or(0);
  r.started_at_us = opt_field<std::int64_t>(j, "started_at", line_number).value_or(0);
  if (!j.contains("flow")) malformed(line_number, "missing flow");
  r.flow = flow_from(j["flow"], line_number);
  if (!j.contains("hops") || !j["hops"].is_array()) malformed(line_number, "missing hops");
  for (const auto& hj : j["hops"]) {
    if (!hj.is_object()) malformed(line_number, "hop is not an object");
    HopRecord h;
    auto ttl = opt_field<std::uint8_t>(hj, "ttl", line_number);
    if (!ttl) malformed(line_number, "hop without ttl");
    h.ttl = *ttl;
    h.probes.push_back(reply_from(hj, line_number));
    if (hj.contains("probes")) {
      if (!hj["probes"].is_array()) malformed(line_number, "probes is not an array");
      for (const auto& pj : hj["probes"]) h.probes.push_back(reply_from(pj, line_number));
    }
    r.hops.push_back(std::move(h));
  }
  if (!j.contains("stop_reason") || !j["stop_reason"].is_string()) malformed(line_number, "missing stop_reason");
  auto stop = parse_stop_reason(j["stop_reason"].get<std::string>());
  if (!stop) malformed(line_number, "unknown stop_reason");
  r.stop_reason = *stop;

  try {
    validate_route(r);
  } catch (const Error& e) {
    malformed(line_number, e.what());
  }
  return r;
}

std::vector<MeasuredRoute> read_routes(std::istream& in) {
  std::vector<MeasuredRoute> routes;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    routes.push_back(deserialize_route(line, n));
  }
  return routes;
}

void write_routes(std::ostream& out, const std::vector<MeasuredRoute>& routes) {
  for (const auto& r : routes) out << serialize_route(r) << '\n';
}

std::vector<MeasuredRoute> load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::parse_error, fmt::format("cannot open {}", path));
  return read_routes(in);
}

void save_trace_file(const std::string& path, const std::vector<MeasuredRoute>& routes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::parse_error, fmt::format("cannot write {}", tmp));
    write_routes(out, routes);
    if (!out) throw Error(Errc::parse_error, fmt::format("short write on {}", tmp));
  }
  std::filesystem::rename(tmp, path);
}

void append_trace_file(const std::string& path, const MeasuredRoute& route) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::parse_error, fmt::format("cannot append to {}", path));
  out << serialize_route(route) << '\n';
}

Dataset::Dataset(std::vector<MeasuredRoute> routes) {
  for (auto& r : routes) {
    auto& group = groups_[GroupKey{r.tool, r.destination}];
    if (r.probes_per_hop() > 1) {
      for (auto& s : split_probe_sequences(r)) group.push_back(std::move(s));
      total_ += r.probes_per_hop();
    } else {
      group.push_back(std::move(r));
      ++total_;
    }
  }
}

const std::vector<MeasuredRoute>& Dataset::routes_to(Mode tool, Ipv4Addr destination) const {
  static const std::vector<MeasuredRoute> none;
  auto it = groups_.find(GroupKey{tool, destination});
  return it == groups_.end() ? none : it->second;
}

std::size_t Dataset::routes_to_count(Mode tool, Ipv4Addr destination) const {
  return routes_to(tool, destination).size();
}

std::size_t Dataset::routes_containing(Mode tool, Ipv4Addr destination, Ipv4Addr addr) const {
  const auto& rs = routes_to(tool, destination);
  return static_cast<std::size_t>(std::count_if(rs.begin(), rs.end(), [&](const MeasuredRoute& r) {
    return std::any_of(r.hops.begin(), r.hops.end(), [&](const HopRecord& h) { return h.addr() == addr; });
  }));
}

std::vector<Ipv4Addr> Dataset::destinations() const {
  std::set<Ipv4Addr> ds;
  for (const auto& [k, _] : groups_) ds.insert(k.destination);
  return {ds.begin(), ds.end()};
}

std::vector<Mode> Dataset::tools() const {
  std::set<Mode> ts;
  for (const auto& [k, _] : groups_) ts.insert(k.tool);
  return {ts.begin(), ts.end()};
}

Dataset Dataset::only(Mode tool) const {
  Dataset d;
  for (const auto& [k, rs] : groups_) {
    if (k.tool != tool) continue;
    d.groups_[k] = rs;
    d.total_ += rs.size();
  }
  return d;
}

Dataset group_dataset(std::vector<MeasuredRoute> routes) { return Dataset(std::move(routes)); }

}  // namespace flowtrace
