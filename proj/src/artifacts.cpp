#include "flowtrace/artifacts.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "flowtrace/error.hpp"

namespace flowtrace {

const char* cause_name(Cause c) {
  switch (c) {
    case Cause::per_flow_load_balancing: return "per_flow_load_balancing";
    case Cause::zero_ttl_forwarding: return "zero_ttl_forwarding";
    case Cause::routing_cycle: return "routing_cycle";
    case Cause::interrupted_route: return "interrupted_route";
    case Cause::fake_address: return "fake_address";
    case Cause::unknown: return "unknown";
  }
  return "?";
}

const char* kind_name(StructureKind k) {
  switch (k) {
    case StructureKind::loop_signatures: return "loop_signatures";
    case StructureKind::loop_instances: return "loop_instances";
    case StructureKind::cycle_signatures: return "cycle_signatures";
    case StructureKind::cycle_instances: return "cycle_instances";
    case StructureKind::global_diamonds: return "global_diamonds";
    case StructureKind::one_destination_diamonds: return "one_destination_diamonds";
  }
  return "?";
}

const char* evidence_name(CycleEvidence e) {
  switch (e) {
    case CycleEvidence::confirmed: return "confirmed";
    case CycleEvidence::counter_unavailable: return "counter_unavailable";
    case CycleEvidence::refuted: return "refuted";
  }
  return "?";
}

bool cause_applies(Cause c, StructureKind k) {
  const bool loop = k == StructureKind::loop_signatures || k == StructureKind::loop_instances;
  const bool cycle = k == StructureKind::cycle_signatures || k == StructureKind::cycle_instances;
  switch (c) {
    case Cause::per_flow_load_balancing:
    case Cause::unknown: return true;
    case Cause::zero_ttl_forwarding: return loop;
    case Cause::routing_cycle: return cycle;
    case Cause::interrupted_route:
    case Cause::fake_address: return loop || cycle;
  }
  return false;
}

namespace {

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

template <typename Sig>
std::map<SignatureKey, std::size_t> by_key(const std::vector<Sig>& sigs) {
  std::map<SignatureKey, std::size_t> m;
  for (const auto& s : sigs) m[{s.addr, s.destination}] += s.instance_count;
  return m;
}

std::map<SignatureKey, std::size_t> diamonds_by_key(const DiamondReport& r, bool one_destination) {
  std::map<SignatureKey, std::size_t> m;
  for (const auto& d : r.diamonds)
    if (!one_destination || d.is_one_destination) m[{d.head, d.tail}] = 1;
  return m;
}

// Fills signature and instance entries; returns the disappeared keys.
std::vector<SignatureKey> diff(const std::map<SignatureKey, std::size_t>& classic,
                               const std::map<SignatureKey, std::size_t>& paris, ComparisonEntry& sig,
                               ComparisonEntry* inst) {
  std::vector<SignatureKey> gone;
  std::size_t classic_inst = 0, paris_inst = 0, gone_inst = 0, new_inst = 0;
  for (const auto& [k, n] : classic) {
    classic_inst += n;
    if (!paris.count(k)) {
      gone.push_back(k);
      gone_inst += n;
    }
  }
  std::size_t appeared = 0;
  for (const auto& [k, n] : paris) {
    paris_inst += n;
    if (!classic.count(k)) {
      ++appeared;
      new_inst += n;
    }
  }
  sig.classic_total = classic.size();
  sig.paris_total = paris.size();
  sig.disappeared = gone.size();
  sig.appeared = appeared;
  sig.disappeared_fraction = ratio(sig.disappeared, sig.classic_total);
  sig.appeared_fraction = ratio(sig.appeared, sig.classic_total);
  if (inst) {
    inst->classic_total = classic_inst;
    inst->paris_total = paris_inst;
    inst->disappeared = gone_inst;
    inst->appeared = new_inst;
    inst->disappeared_fraction = ratio(gone_inst, classic_inst);
    inst->appeared_fraction = ratio(new_inst, classic_inst);
  }
  return gone;
}

void check_destinations(const Dataset& classic, const Dataset& paris) {
  const auto a = classic.destinations();
  const auto b = paris.destinations();
  if (a != b)
    throw Error(Errc::destination_mismatch,
                fmt::format("classic data covers {} destinations, paris data {}; the lists differ", a.size(),
                            b.size()));
}

const ProbeReply& reply_at(const MeasuredRoute& r, std::size_t pos) { return r.hops.at(pos).primary(); }

// Position of the last hop that answered, if any.
std::optional<std::size_t> final_response(const MeasuredRoute& r) {
  for (std::size_t k = r.hops.size(); k-- > 0;)
    if (!r.hops[k].primary().is_star()) return k;
  return std::nullopt;
}

bool interrupted_at(const MeasuredRoute& r, std::size_t later) {
  const auto last = final_response(r);
  if (!last || *last != later) return false;
  const auto& rep = reply_at(r, later);
  return rep.icmp_type && is_unreachable_class(*rep.icmp_type);
}

// Response TTLs of the given positions in probe order; nullopt if any is absent.
std::optional<std::vector<int>> response_ttls(const MeasuredRoute& r, const std::vector<std::size_t>& positions) {
  std::vector<int> out;
  for (auto p : positions) {
    const auto& rep = reply_at(r, p);
    if (!rep.response_ttl) return std::nullopt;
    out.push_back(*rep.response_ttl);
  }
  return out;
}

Decision fake_rule(const std::vector<std::vector<int>>& per_instance, bool missing) {
  if (missing) return {false, true};
  if (per_instance.empty()) return {};
  bool all_differ = true, some_decreasing = false;
  for (const auto& ttls : per_instance) {
    const bool equal = std::all_of(ttls.begin(), ttls.end(), [&](int v) { return v == ttls.front(); });
    all_differ &= !equal;
    bool dec = ttls.size() >= 2;
    for (std::size_t k = 1; k < ttls.size(); ++k) dec &= ttls[k] < ttls[k - 1];
    some_decreasing |= dec;
  }
  return {all_differ && some_decreasing, false};
}

}  // namespace

ComparisonReport compare_datasets(const Dataset& classic_in, const Dataset& paris_in) {
  const Dataset classic = classic_in.only(Mode::classic);
  const Dataset paris = paris_in.only(Mode::paris);
  check_destinations(classic, paris);

  ComparisonReport rep;
  for (std::size_t k = 0; k < rep.entries.size(); ++k) rep.entries[k].kind = kAllKinds[k];
  auto& e = rep.entries;
  rep.disappeared_loops = diff(by_key(aggregate_loops(classic)), by_key(aggregate_loops(paris)),
                               e[size_t(StructureKind::loop_signatures)], &e[size_t(StructureKind::loop_instances)]);
  rep.disappeared_cycles =
      diff(by_key(aggregate_cycles(classic)), by_key(aggregate_cycles(paris)),
           e[size_t(StructureKind::cycle_signatures)], &e[size_t(StructureKind::cycle_instances)]);
  const auto dc = find_diamonds(classic);
  const auto dp = find_diamonds(paris);
  rep.disappeared_diamonds =
      diff(diamonds_by_key(dc, false), diamonds_by_key(dp, false), e[size_t(StructureKind::global_diamonds)], nullptr);
  diff(diamonds_by_key(dc, true), diamonds_by_key(dp, true), e[size_t(StructureKind::one_destination_diamonds)],
       nullptr);
  return rep;
}

Decision classify_zero_ttl(const LoopSignature& sig, const Dataset& dataset) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  bool any_known = false;
  for (const auto& inst : sig.instances) {
    const auto& r = routes.at(inst.route);
    const auto& first = reply_at(r, inst.start);
    const auto& next = reply_at(r, inst.start + 1);
    if (!first.probe_ttl || !next.probe_ttl) continue;
    any_known = true;
    if (*first.probe_ttl == 0 && *next.probe_ttl == 1) return {true, false};
  }
  return {false, !any_known && !sig.instances.empty()};
}

bool classify_interrupted(const LoopSignature& sig, const Dataset& dataset) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  return std::any_of(sig.instances.begin(), sig.instances.end(), [&](const LoopOccurrence& inst) {
    return interrupted_at(routes.at(inst.route), inst.start + static_cast<std::size_t>(inst.n));
  });
}

bool classify_interrupted(const CycleSignature& sig, const Dataset& dataset) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  for (const auto& inst : sig.instances)
    for (const auto& [i, j] : inst.pairs)
      if (interrupted_at(routes.at(inst.route), j)) return true;
  return false;
}

Decision classify_fake(const LoopSignature& sig, const Dataset& dataset) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  std::vector<std::vector<int>> ttls;
  for (const auto& inst : sig.instances) {
    std::vector<std::size_t> pos;
    for (int k = 0; k <= inst.n; ++k) pos.push_back(inst.start + static_cast<std::size_t>(k));
    auto t = response_ttls(routes.at(inst.route), pos);
    if (!t) return fake_rule({}, true);
    ttls.push_back(std::move(*t));
  }
  return fake_rule(ttls, false);
}

Decision classify_fake(const CycleSignature& sig, const Dataset& dataset) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  std::vector<std::vector<int>> ttls;
  for (const auto& inst : sig.instances) {
    std::set<std::size_t> pos;
    for (const auto& [i, j] : inst.pairs) {
      pos.insert(i);
      pos.insert(j);
    }
    auto t = response_ttls(routes.at(inst.route), {pos.begin(), pos.end()});
    if (!t) return fake_rule({}, true);
    ttls.push_back(std::move(*t));
  }
  return fake_rule(ttls, false);
}

CycleEvidence verify_routing_cycle(const CycleSignature& sig, const Dataset& dataset, std::uint16_t window) {
  const auto& routes = dataset.routes_to(sig.tool, sig.destination);
  bool confirmed = false;
  for (const auto& inst : sig.instances) {
    const auto& r = routes.at(inst.route);
    std::vector<std::uint16_t> ids;
    bool missing = false;
    for (const auto& h : r.hops) {
      const auto& p = h.primary();
      if (p.addr != sig.addr) continue;
      if (!p.ip_id) missing = true;
      else ids.push_back(*p.ip_id);
    }
    if (missing || ids.empty()) continue;
    const bool constant = std::all_of(ids.begin(), ids.end(), [&](auto v) { return v == ids.front(); });
    if (constant) continue;  // covers all-zero too
    for (const auto& [i, j] : inst.pairs) {
      const auto a = reply_at(r, i).ip_id;
      const auto b = reply_at(r, j).ip_id;
      const auto delta = static_cast<std::uint16_t>(*b - *a);
      if (delta >= 1 && delta <= window) confirmed = true;
      else return CycleEvidence::refuted;
    }
  }
  return confirmed ? CycleEvidence::confirmed : CycleEvidence::counter_unavailable;
}

Classification classify_campaign(const Dataset& classic_in, const Dataset& paris_in, const ClassifyOptions& options) {
  const Dataset classic = classic_in.only(Mode::classic);
  const Dataset paris = paris_in.only(Mode::paris);
  check_destinations(classic, paris);

  Classification out;

  {
    const auto cl = aggregate_loops(classic);
    const auto pl = aggregate_loops(paris);
    std::map<SignatureKey, const LoopSignature*> pm;
    for (const auto& s : pl) pm[{s.addr, s.destination}] = &s;
    std::map<SignatureKey, ClassifiedStructure> all;
    for (const auto& s : cl) {
      const SignatureKey k{s.addr, s.destination};
      if (!pm.count(k)) all[k] = {k, Cause::per_flow_load_balancing, s.instance_count, false, std::nullopt};
    }
    for (const auto& s : pl) {
      ClassifiedStructure c{{s.addr, s.destination}, Cause::unknown, s.instance_count, false, std::nullopt};
      const auto z = classify_zero_ttl(s, paris);
      const auto f = classify_fake(s, paris);
      c.undecidable = z.undecidable || f.undecidable;
      if (z.value) c.cause = Cause::zero_ttl_forwarding;
      else if (classify_interrupted(s, paris)) c.cause = Cause::interrupted_route;
      else if (f.value) c.cause = Cause::fake_address;
      all[c.key] = c;
    }
    for (auto& [k, c] : all) out.loops.push_back(c);
  }

  {
    const auto cc = aggregate_cycles(classic);
    const auto pc = aggregate_cycles(paris);
    std::map<SignatureKey, const CycleSignature*> pm;
    for (const auto& s : pc) pm[{s.addr, s.destination}] = &s;
    std::map<SignatureKey, ClassifiedStructure> all;
    for (const auto& s : cc) {
      const SignatureKey k{s.addr, s.destination};
      if (!pm.count(k)) all[k] = {k, Cause::per_flow_load_balancing, s.instance_count, false, std::nullopt};
    }
    for (const auto& s : pc) {
      ClassifiedStructure c{{s.addr, s.destination}, Cause::unknown, s.instance_count, false, std::nullopt};
      const auto f = classify_fake(s, paris);
      c.undecidable = f.undecidable;
      c.evidence = verify_routing_cycle(s, paris, options.ip_id_window);
      if (classify_interrupted(s, paris)) c.cause = Cause::interrupted_route;
      else if (f.value) c.cause = Cause::fake_address;
      else if (*c.evidence == CycleEvidence::confirmed) c.cause = Cause::routing_cycle;
      all[c.key] = c;
    }
    for (auto& [k, c] : all) out.cycles.push_back(c);
  }

  const auto dc = find_diamonds(classic);
  const auto dp = find_diamonds(paris);
  for (bool one : {false, true}) {
    const auto ck = diamonds_by_key(dc, one);
    const auto pk = diamonds_by_key(dp, one);
    std::set<SignatureKey> keys;
    for (const auto& [k, n] : ck) keys.insert(k);
    for (const auto& [k, n] : pk) keys.insert(k);
    auto& dst = one ? out.one_destination_diamonds : out.global_diamonds;
    for (const auto& k : keys)
      dst.push_back({k, pk.count(k) ? Cause::unknown : Cause::per_flow_load_balancing, 1, false, std::nullopt});
  }
  return out;
}

SummaryTable summary_report(const Classification& cls) {
  SummaryTable t;
  std::array<std::array<std::size_t, 6>, 6> counts{};
  auto tally = [&](const std::vector<ClassifiedStructure>& v, StructureKind sig, std::optional<StructureKind> inst) {
    for (const auto& c : v) {
      ++counts[size_t(c.cause)][size_t(sig)];
      ++t.totals[size_t(sig)];
      if (inst) {
        counts[size_t(c.cause)][size_t(*inst)] += c.instances;
        t.totals[size_t(*inst)] += c.instances;
      }
    }
  };
  tally(cls.loops, StructureKind::loop_signatures, StructureKind::loop_instances);
  tally(cls.cycles, StructureKind::cycle_signatures, StructureKind::cycle_instances);
  tally(cls.global_diamonds, StructureKind::global_diamonds, std::nullopt);
  tally(cls.one_destination_diamonds, StructureKind::one_destination_diamonds, std::nullopt);
  for (auto c : kAllCauses) {
    for (auto k : kAllKinds) {
      if (!cause_applies(c, k)) continue;
      t.percent[size_t(c)][size_t(k)] = 100.0 * ratio(counts[size_t(c)][size_t(k)], t.totals[size_t(k)]);
    }
  }
  return t;
}

namespace {

const char* cause_label(Cause c) {
  switch (c) {
    case Cause::per_flow_load_balancing: return "Per-flow load balancing";
    case Cause::zero_ttl_forwarding: return "Zero-TTL forwarding";
    case Cause::routing_cycle: return "Routing cycles";
    case Cause::interrupted_route: return "Interrupted routes";
    case Cause::fake_address: return "Fake addresses";
    case Cause::unknown: return "Unknown";
  }
  return "?";
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("-"); }

}  // namespace

std::string render_summary_text(const SummaryTable& t) {
  std::string out;
  out += fmt::format("{:<26}{:>18}{:>18}{:>20}\n", "", "Loops", "Cycles", "Diamonds");
  out += fmt::format("{:<26}{:>9}{:>9}{:>9}{:>9}{:>10}{:>10}\n", "Cause", "sign.", "inst.", "sign.", "inst.",
                     "global", "one-dest");
  for (auto c : kAllCauses) {
    const auto& row = t.percent[size_t(c)];
    out += fmt::format("{:<26}{:>9}{:>9}{:>9}{:>9}{:>10}{:>10}\n", cause_label(c), cell(row[0]), cell(row[1]),
                       cell(row[2]), cell(row[3]), cell(row[4]), cell(row[5]));
  }
  out += fmt::format("{:<26}{:>9}{:>9}{:>9}{:>9}{:>10}{:>10}\n", "Total structures", t.totals[0], t.totals[1],
                     t.totals[2], t.totals[3], t.totals[4], t.totals[5]);
  return out;
}

std::string render_summary_csv(const SummaryTable& t) {
  std::string out = "cause";
  for (auto k : kAllKinds) out += fmt::format(",{}", kind_name(k));
  out += "\n";
  for (auto c : kAllCauses) {
    out += cause_name(c);
    for (auto k : kAllKinds) out += "," + cell(t.percent[size_t(c)][size_t(k)]);
    out += "\n";
  }
  out += "total";
  for (auto n : t.totals) out += fmt::format(",{}", n);
  out += "\n";
  return out;
}

std::string render_comparison_text(const ComparisonReport& r) {
  std::string out = fmt::format("{:<26}{:>9}{:>9}{:>13}{:>11}\n", "Structure", "classic", "paris", "disappeared",
                                "appeared");
  for (const auto& e : r.entries)
    out += fmt::format("{:<26}{:>9}{:>9}{:>12.2f}%{:>10.2f}%\n", kind_name(e.kind), e.classic_total, e.paris_total,
                       100.0 * e.disappeared_fraction, 100.0 * e.appeared_fraction);
  return out;
}

std::string render_comparison_csv(const ComparisonReport& r) {
  std::string out = "kind,classic_total,paris_total,disappeared,appeared,disappeared_pct,appeared_pct\n";
  for (const auto& e : r.entries)
    out += fmt::format("{},{},{},{},{},{:.2f},{:.2f}\n", kind_name(e.kind), e.classic_total, e.paris_total,
                       e.disappeared, e.appeared, 100.0 * e.disappeared_fraction, 100.0 * e.appeared_fraction);
  return out;
}

}  // namespace flowtrace
