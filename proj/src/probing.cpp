#include "flowtrace/probing.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "flowtrace/error.hpp"

namespace flowtrace {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::packet_by_packet: return "packet-by-packet";
    case Strategy::hop_by_hop: return "hop-by-hop";
    case Strategy::concurrent: return "concurrent";
    case Strategy::scout: return "scout";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto s : {Strategy::packet_by_packet, Strategy::hop_by_hop, Strategy::concurrent, Strategy::scout})
    if (name == strategy_name(s)) return s;
  return std::nullopt;
}

void TraceConfig::validate() const {
  if (min_ttl < 1 || min_ttl > max_ttl || max_ttl > 255)
    throw Error(Errc::config_invalid, fmt::format("need 1 <= min_ttl ({}) <= max_ttl ({}) <= 255", min_ttl, max_ttl));
  if (probes_per_hop < 1) throw Error(Errc::config_invalid, "probes per hop must be at least 1");
  if (star_gap_stop < 1) throw Error(Errc::config_invalid, "star gap must be at least 1");
  if (timeout.count() <= 0) throw Error(Errc::config_invalid, "timeout must be positive");
  if (inter_probe_delay.count() < 0) throw Error(Errc::config_invalid, "negative inter-probe delay");
  if (mode == Mode::classic && protocol == Protocol::tcp)
    throw Error(Errc::config_invalid, "TCP probes always keep a constant flow; use paris mode");
}

// ---- MatchTable ------------------------------------------------------------

void MatchTable::insert(const OutstandingProbe& probe) {
  std::lock_guard lock(mu_);
  const Key key{probe.session_id, probe.probe_id};
  pending_[key] = probe;
  completed_.erase(key);
  if (probe.echo_identifier) echo_index_[{*probe.echo_identifier, probe.probe_id}] = key;
}

MatchResult MatchTable::match(const ResponseInfo& info, Ipv4Addr traced_destination) {
  std::lock_guard lock(mu_);
  Key key;
  if (info.has_quote()) {
    if (info.quoted_dst && *info.quoted_dst != traced_destination) {
      ++unmatched_;
      return {};
    }
    key = {*info.quoted_session_id, *info.quoted_probe_id};
  } else if (info.icmp_type == icmp_type::echo_reply && info.echo_identifier && info.echo_sequence &&
             info.responder == traced_destination) {
    const Key echo{*info.echo_identifier, *info.echo_sequence};
    auto it = echo_index_.find(echo);
    if (it == echo_index_.end()) {
      ++unmatched_;
      return {};
    }
    key = it->second;
  } else {
    ++unmatched_;
    return {};
  }

  auto it = pending_.find(key);
  if (it == pending_.end()) {
    if (completed_.count(key)) {
      ++duplicates_;
      return {MatchOutcome::duplicate, std::nullopt};
    }
    ++unmatched_;
    return {};
  }
  MatchResult result{MatchOutcome::matched, it->second};
  if (it->second.echo_identifier) echo_index_.erase({*it->second.echo_identifier, it->second.probe_id});
  pending_.erase(it);
  completed_.insert(key);
  return result;
}

std::vector<OutstandingProbe> MatchTable::expire(Micros cutoff) {
  std::lock_guard lock(mu_);
  std::vector<OutstandingProbe> gone;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->second.sent_at <= cutoff) {
      gone.push_back(it->second);
      if (it->second.echo_identifier) echo_index_.erase({*it->second.echo_identifier, it->second.probe_id});
      completed_.insert(it->first);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  return gone;
}

std::size_t MatchTable::outstanding() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

std::optional<Micros> MatchTable::oldest_sent_at() const {
  std::lock_guard lock(mu_);
  std::optional<Micros> oldest;
  for (const auto& [_, p] : pending_)
    if (!oldest || p.sent_at < *oldest) oldest = p.sent_at;
  return oldest;
}

std::size_t MatchTable::unmatched_count() const {
  std::lock_guard lock(mu_);
  return unmatched_;
}

std::size_t MatchTable::duplicate_count() const {
  std::lock_guard lock(mu_);
  return duplicates_;
}

// ---- trace engine ----------------------------------------------------------

int estimate_distance(std::uint8_t reply_ttl) {
  int ceiling = 255;
  for (int c : {64, 128, 255}) {
    if (reply_ttl <= c) {
      ceiling = c;
      break;
    }
  }
  return ceiling - reply_ttl + 1;
}

namespace {

struct SlotState {
  ProbeReply reply;
  bool sent = false;
  bool resolved = false;
  bool reached_destination = false;
  bool other_icmp = false;
};

class TraceRun {
 public:
  TraceRun(Ipv4Addr destination, const TraceConfig& config, Transport& transport)
      : dst_(destination), cfg_(config), tx_(transport) {
    cfg_.validate();
    session_ = make_session(tx_.source_address(), dst_, cfg_.protocol, cfg_.session_id, cfg_.seed);
    session_.tos = cfg_.tos;
    session_.payload_len = cfg_.payload_len;
  }

  MeasuredRoute run() {
    route_.tool = cfg_.mode;
    route_.destination = dst_;
    route_.round = cfg_.round;
    route_.started_at_us = tx_.now().count();

    switch (cfg_.strategy) {
      case Strategy::packet_by_packet: run_sequential(false); break;
      case Strategy::hop_by_hop: run_sequential(true); break;
      case Strategy::concurrent: run_concurrent(cfg_.max_ttl); break;
      case Strategy::scout:
        if (auto distance = scout()) {
          run_concurrent(std::min(cfg_.max_ttl, std::max(cfg_.min_ttl, *distance + kScoutMargin)));
        } else {
          run_sequential(true);
        }
        break;
    }
    return finish();
  }

  std::optional<int> scout() {
    const auto ttl = static_cast<std::uint8_t>(kScoutTtl);
    const auto index = next_index_++;
    auto probe = craft_probe(cfg_.mode, session_, index, ttl);
    if (!first_flow_) first_flow_ = probe.flow;
    const auto sent_at = tx_.now();
    send(probe, ttl, scout_slot_);
    const auto deadline = sent_at + cfg_.timeout;
    std::optional<int> distance;
    while (!distance) {
      auto r = tx_.receive(deadline);
      if (!r) break;
      auto info = decode(*r);
      if (!info) continue;
      auto m = table_.match(*info, dst_);
      if (m.outcome != MatchOutcome::matched) continue;
      if (m.probe->slot != scout_slot_) {
        record(*m.probe, *info, r->at);
        continue;
      }
      if (!is_destination_reply(*info)) break;
      distance = estimate_distance(info->response_ttl);
    }
    table_.expire(deadline);
    return distance;
  }

 private:
  bool is_destination_reply(const ResponseInfo& info) const {
    if (info.responder != dst_) return false;
    if (info.icmp_type == icmp_type::echo_reply) return true;
    return info.icmp_type == icmp_type::dest_unreachable && info.icmp_code == unreach_code::port;
  }

  std::optional<ResponseInfo> decode(const Received& r) {
    try {
      return parse_response(r.octets, cfg_.mode);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  std::vector<SlotState>& hop(int ttl) {
    auto& slots = hops_[ttl];
    if (slots.empty()) slots.resize(static_cast<std::size_t>(cfg_.probes_per_hop));
    return slots;
  }

  void send(const ProbePacket& probe, std::uint8_t ttl, std::size_t slot) {
    OutstandingProbe o{probe.session_id, probe.probe_id, ttl, slot, tx_.now(), std::nullopt};
    if (cfg_.protocol == Protocol::icmp)
      o.echo_identifier = cfg_.mode == Mode::paris ? paris_echo_identifier(session_, probe.probe_id)
                                                   : session_.echo_identifier;
    table_.insert(o);
    try {
      tx_.send(probe);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(Errc::transport_failure, e.what());
    }
  }

  void send_probe(int ttl, std::size_t slot) {
    const auto t = static_cast<std::uint8_t>(ttl);
    auto probe = craft_probe(cfg_.mode, session_, next_index_++, t);
    if (!first_flow_) first_flow_ = probe.flow;
    hop(ttl)[slot].sent = true;
    send(probe, t, slot);
    highest_sent_ = std::max(highest_sent_, ttl);
  }

  void record(const OutstandingProbe& p, const ResponseInfo& info, Micros at) {
    if (p.slot == scout_slot_) return;
    auto& s = hop(p.ttl)[p.slot];
    if (s.resolved) return;
    s.resolved = true;
    s.reply.addr = info.responder;
    s.reply.rtt_us = (at - p.sent_at).count();
    s.reply.probe_ttl = info.quoted_probe_ttl;
    s.reply.response_ttl = info.response_ttl;
    s.reply.ip_id = info.ip_id;
    s.reply.icmp_type = info.icmp_type;
    s.reply.icmp_code = info.icmp_code;
    s.reached_destination = is_destination_reply(info);
    s.other_icmp = !s.reached_destination && info.icmp_type != icmp_type::time_exceeded;
    if (s.reached_destination || s.other_icmp) stop_trigger_ = std::min(stop_trigger_.value_or(p.ttl), int{p.ttl});
  }

  void handle(const Received& r) {
    auto info = decode(r);
    if (!info) return;
    auto m = table_.match(*info, dst_);
    if (m.outcome == MatchOutcome::matched) record(*m.probe, *info, r.at);
  }

  void expire_due() {
    for (const auto& p : table_.expire(tx_.now() - cfg_.timeout)) {
      if (p.slot == scout_slot_) continue;
      hop(p.ttl)[p.slot].resolved = true;
    }
  }

  // Drains responses until `done` holds or the deadline passes.
  template <typename Pred>
  void pump(Micros deadline, Pred done) {
    while (!done()) {
      auto r = tx_.receive(deadline);
      if (!r) break;
      handle(*r);
    }
  }

  void pump(Micros deadline) {
    pump(deadline, [] { return false; });
  }

  bool hop_resolved(int ttl) {
    auto& slots = hop(ttl);
    return std::all_of(slots.begin(), slots.end(), [](const SlotState& s) { return s.resolved; });
  }

  // Walks resolved hops from min_ttl and returns the hop where the trace ends,
  // if it is already decided.
  std::optional<std::pair<int, StopReason>> evaluate_stop() {
    int stars = 0;
    for (int ttl = cfg_.min_ttl; ttl <= cfg_.max_ttl; ++ttl) {
      auto it = hops_.find(ttl);
      if (it == hops_.end() || !hop_resolved(ttl)) return std::nullopt;
      const auto& slots = it->second;
      const bool reached = std::any_of(slots.begin(), slots.end(), [](const SlotState& s) { return s.reached_destination; });
      const bool other = std::any_of(slots.begin(), slots.end(), [](const SlotState& s) { return s.other_icmp; });
      const bool all_star = std::all_of(slots.begin(), slots.end(), [](const SlotState& s) { return !s.reply.addr; });
      stars = all_star ? stars + 1 : 0;
      if (reached) return std::pair{ttl, StopReason::destination};
      if (other) return std::pair{ttl, StopReason::other_icmp};
      if (stars >= cfg_.star_gap_stop) return std::pair{ttl, StopReason::star_gap};
      if (ttl == cfg_.max_ttl) return std::pair{ttl, StopReason::max_ttl};
    }
    return std::nullopt;
  }

  void run_sequential(bool batch_hop) {
    const auto n = static_cast<std::size_t>(cfg_.probes_per_hop);
    for (int ttl = cfg_.min_ttl; ttl <= cfg_.max_ttl; ++ttl) {
      Micros last_sent{0};
      for (std::size_t slot = 0; slot < n; ++slot) {
        last_sent = tx_.now();
        send_probe(ttl, slot);
        if (!batch_hop) {
          pump(last_sent + cfg_.timeout, [&] { return hop(ttl)[slot].resolved; });
          table_.expire(last_sent);
          hop(ttl)[slot].resolved = true;
        } else if (slot + 1 < n) {
          pump(tx_.now() + cfg_.inter_probe_delay);
        }
      }
      if (batch_hop) {
        pump(last_sent + cfg_.timeout, [&] { return hop_resolved(ttl); });
        table_.expire(last_sent);
        for (auto& s : hop(ttl)) s.resolved = true;
      }
      if (auto stop = evaluate_stop()) {
        stop_ = stop;
        return;
      }
    }
  }

  void run_concurrent(int max_ttl) {
    const auto n = static_cast<std::size_t>(cfg_.probes_per_hop);
    int ttl = cfg_.min_ttl;
    std::size_t slot = 0;
    auto may_send = [&] {
      if (ttl > max_ttl) return false;
      if (stop_trigger_ && ttl > *stop_trigger_) return false;
      return table_.outstanding() < kConcurrentWindow;
    };
    for (;;) {
      expire_due();
      if (auto stop = evaluate_stop()) stop_trigger_ = std::min(stop_trigger_.value_or(stop->first), stop->first);
      if (may_send()) {
        send_probe(ttl, slot);
        if (++slot == n) {
          slot = 0;
          ++ttl;
        }
        pump(tx_.now() + cfg_.inter_probe_delay);
        continue;
      }
      const auto oldest = table_.oldest_sent_at();
      if (!oldest) break;
      pump(*oldest + cfg_.timeout);
    }
    stop_ = evaluate_stop();
    if (!stop_) {
      // Scout capped max_ttl below the configured one and nothing stopped the
      // trace earlier.
      stop_ = std::pair{std::min(max_ttl, highest_sent_), StopReason::max_ttl};
    }
  }

  MeasuredRoute finish() {
    const int last = stop_ ? stop_->first : highest_sent_;
    route_.stop_reason = stop_ ? stop_->second : StopReason::max_ttl;
    for (int ttl = cfg_.min_ttl; ttl <= last; ++ttl) {
      HopRecord h;
      h.ttl = static_cast<std::uint8_t>(ttl);
      for (auto& s : hop(ttl)) h.probes.push_back(s.reply);
      route_.hops.push_back(std::move(h));
    }
    route_.flow = first_flow_.value_or(FlowKey{session_.src, session_.dst, session_.protocol, session_.tos, PortPair{}});
    return std::move(route_);
  }

  Ipv4Addr dst_;
  TraceConfig cfg_;
  Transport& tx_;
  Session session_;
  MatchTable table_;
  MeasuredRoute route_;
  std::map<int, std::vector<SlotState>> hops_;
  std::uint32_t next_index_ = 0;
  int highest_sent_ = 0;
  std::optional<int> stop_trigger_;
  std::optional<std::pair<int, StopReason>> stop_;
  std::optional<FlowKey> first_flow_;
  static constexpr std::size_t scout_slot_ = static_cast<std::size_t>(-1);
};

}  // namespace

MeasuredRoute run_trace(Ipv4Addr destination, const TraceConfig& config, Transport& transport) {
  return TraceRun(destination, config, transport).run();
}

std::optional<int> scout_probe(Ipv4Addr destination, const TraceConfig& config, Transport& transport) {
  return TraceRun(destination, config, transport).scout();
}

}  // namespace flowtrace
