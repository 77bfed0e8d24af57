#include "flowtrace/structures.hpp"

#include <algorithm>
#include <stdexcept>

#include "flowtrace/error.hpp"

namespace flowtrace {

namespace {

bool contains_addr(const std::vector<Hop>& route, Ipv4Addr a) {
  return std::any_of(route.begin(), route.end(), [&](const Hop& h) { return h == a; });
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

const char* loop_class_name(LoopClass c) {
  switch (c) {
    case LoopClass::persistent: return "persistent";
    case LoopClass::systematic: return "systematic";
    case LoopClass::occasional: return "occasional";
    case LoopClass::other: return "other";
  }
  return "?";
}

std::vector<LoopInstance> find_loop_instances(const std::vector<Hop>& route) {
  std::vector<LoopInstance> out;
  std::size_t i = 0;
  while (i < route.size()) {
    if (!route[i]) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < route.size() && route[j] == route[i]) ++j;
    if (j - i >= 2) out.push_back({*route[i], i, static_cast<int>(j - i - 1)});
    i = j;
  }
  return out;
}

LoopClass classify_loop(double appearance, double conditional) {
  if (appearance >= kPersistenceThreshold) return LoopClass::persistent;
  if (conditional >= 1.0) return LoopClass::systematic;
  if (appearance < 0.5) return LoopClass::occasional;
  return LoopClass::other;
}

std::vector<LoopSignature> aggregate_loops(const Dataset& dataset) {
  std::vector<LoopSignature> out;
  for (const auto& [key, routes] : dataset.groups()) {
    std::map<Ipv4Addr, LoopSignature> sigs;
    std::vector<std::vector<Hop>> seqs;
    for (const auto& r : routes) seqs.push_back(address_sequence(r));
    for (std::size_t ri = 0; ri < seqs.size(); ++ri) {
      std::set<Ipv4Addr> looped;
      for (const auto& inst : find_loop_instances(seqs[ri])) {
        auto& s = sigs[inst.addr];
        s.instances.push_back({ri, inst.start, inst.n});
        s.max_length = std::max(s.max_length, inst.n);
        looped.insert(inst.addr);
      }
      for (auto a : looped) ++sigs[a].routes_containing_loop;
    }
    for (auto& [addr, s] : sigs) {
      s.tool = key.tool;
      s.addr = addr;
      s.destination = key.destination;
      s.instance_count = s.instances.size();
      s.routes_to_d = routes.size();
      for (const auto& seq : seqs) s.routes_containing_r += contains_addr(seq, addr);
      s.appearance_frequency = ratio(s.routes_containing_loop, s.routes_to_d);
      s.conditional_appearance_frequency = ratio(s.routes_containing_loop, s.routes_containing_r);
      s.cls = classify_loop(s.appearance_frequency, s.conditional_appearance_frequency);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<CyclePair> find_cycle_pairs(const std::vector<Hop>& route) {
  // nonstar[k] = non-star positions before k; same[a][k] likewise for address a.
  const std::size_t len = route.size();
  std::vector<std::size_t> nonstar(len + 1, 0);
  for (std::size_t k = 0; k < len; ++k) nonstar[k + 1] = nonstar[k] + (route[k] ? 1 : 0);
  std::map<Ipv4Addr, std::vector<std::size_t>> positions;
  for (std::size_t k = 0; k < len; ++k)
    if (route[k]) positions[*route[k]].push_back(k);

  std::vector<CyclePair> out;
  for (const auto& [addr, pos] : positions) {
    for (std::size_t x = 0; x < pos.size(); ++x) {
      for (std::size_t y = x + 1; y < pos.size(); ++y) {
        const std::size_t i = pos[x], j = pos[y];
        if (j <= i + 1) continue;
        // Non-star positions strictly inside, minus the copies of addr there.
        const std::size_t inside = nonstar[j] - nonstar[i + 1];
        const std::size_t self = y - x - 1;
        if (inside > self) out.push_back({addr, i, j});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const CyclePair& a, const CyclePair& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  return out;
}

std::vector<PeriodicCycle> find_periodic_cycles(const std::vector<Hop>& route) {
  const std::size_t len = route.size();
  std::vector<PeriodicCycle> out;
  auto match = [&](std::size_t t, std::size_t p) { return route[t] && route[t + p] && route[t] == route[t + p]; };
  for (std::size_t p = 2; 2 * p <= len; ++p) {
    std::size_t t = 0;
    while (t + p < len) {
      if (!match(t, p)) {
        ++t;
        continue;
      }
      std::size_t u = t;
      while (u + p < len && match(u, p)) ++u;
      // Matches at t..u-1 cover positions t..u-1+p.
      const std::size_t run = u - t;
      if (run >= p) {
        const std::size_t a = t, length = run + p;
        bool smaller = false;
        for (std::size_t q = 1; q < p && !smaller; ++q) {
          bool all = true;
          for (std::size_t s = a; s + q < a + length && all; ++s) all = route[s] == route[s + q];
          smaller = all;
        }
        if (!smaller) {
          PeriodicCycle c;
          for (std::size_t s = a; s < a + p; ++s) c.block.push_back(*route[s]);
          c.start = a;
          c.length = length;
          c.repeats = static_cast<int>(length / p);
          out.push_back(std::move(c));
        }
      }
      t = u;
    }
  }
  std::sort(out.begin(), out.end(), [](const PeriodicCycle& x, const PeriodicCycle& y) {
    return std::make_pair(x.start, x.period()) < std::make_pair(y.start, y.period());
  });
  return out;
}

std::vector<CycleSignature> aggregate_cycles(const Dataset& dataset) {
  std::vector<CycleSignature> out;
  for (const auto& [key, routes] : dataset.groups()) {
    std::map<Ipv4Addr, CycleSignature> sigs;
    std::vector<std::vector<Hop>> seqs;
    for (const auto& r : routes) seqs.push_back(address_sequence(r));
    for (std::size_t ri = 0; ri < seqs.size(); ++ri) {
      std::map<Ipv4Addr, CycleOccurrence> here;
      for (const auto& p : find_cycle_pairs(seqs[ri])) {
        auto& occ = here[p.addr];
        occ.route = ri;
        occ.pairs.emplace_back(p.i, p.j);
        auto& s = sigs[p.addr];
        const std::size_t sep = p.j - p.i;
        s.length = s.length == 0 ? sep : std::min(s.length, sep);
        s.span = std::max(s.span, sep);
      }
      if (here.empty()) continue;
      const auto periodic = find_periodic_cycles(seqs[ri]);
      for (auto& [addr, occ] : here) {
        auto& s = sigs[addr];
        s.instances.push_back(std::move(occ));
        for (const auto& pc : periodic) {
          if (std::find(pc.block.begin(), pc.block.end(), addr) == pc.block.end()) continue;
          if (!s.periodic || pc.repeats > s.periodic->max_repeats ||
              (pc.repeats == s.periodic->max_repeats && pc.period() < s.periodic->period))
            s.periodic = PeriodicInfo{pc.period(), pc.block, pc.repeats};
        }
      }
    }
    for (auto& [addr, s] : sigs) {
      s.tool = key.tool;
      s.addr = addr;
      s.destination = key.destination;
      s.instance_count = s.instances.size();
      s.routes_to_d = routes.size();
      for (const auto& seq : seqs) s.routes_containing_r += contains_addr(seq, addr);
      s.appearance_frequency = ratio(s.instance_count, s.routes_to_d);
      s.conditional_appearance_frequency = ratio(s.instance_count, s.routes_containing_r);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::size_t DiamondReport::one_destination_count() const {
  return static_cast<std::size_t>(
      std::count_if(diamonds.begin(), diamonds.end(), [](const DiamondRecord& d) { return d.is_one_destination; }));
}

DiamondReport find_diamonds(const Dataset& dataset) {
  std::map<std::pair<Ipv4Addr, Ipv4Addr>, DiamondRecord> all;
  std::set<Ipv4Addr> observed;
  for (const auto& [key, routes] : dataset.groups()) {
    for (const auto& r : routes) {
      const auto seq = address_sequence(r);
      for (const auto& h : seq)
        if (h) observed.insert(*h);
      for (std::size_t i = 0; i + 2 < seq.size(); ++i) {
        if (!seq[i] || !seq[i + 1] || !seq[i + 2]) continue;
        auto& rec = all[{*seq[i], *seq[i + 2]}];
        rec.per_destination_cores[key.destination].insert(*seq[i + 1]);
        rec.global_core.insert(*seq[i + 1]);
      }
    }
  }
  DiamondReport report;
  std::set<Ipv4Addr> heads, cores, tails;
  for (auto& [ht, rec] : all) {
    if (rec.global_core.size() < 2) continue;
    rec.head = ht.first;
    rec.tail = ht.second;
    rec.is_global = true;
    for (const auto& [d, core] : rec.per_destination_cores) {
      if (core.size() < 2) continue;
      rec.d_diamond_sizes[d] = core.size();
      rec.one_destination_size = std::max(rec.one_destination_size, core.size());
      rec.is_one_destination = true;
    }
    heads.insert(rec.head);
    tails.insert(rec.tail);
    cores.insert(rec.global_core.begin(), rec.global_core.end());
    report.diamonds.push_back(std::move(rec));
  }
  std::set<Ipv4Addr> any = heads;
  any.insert(cores.begin(), cores.end());
  any.insert(tails.begin(), tails.end());
  auto& m = report.membership;
  m.addresses = observed.size();
  m.head = ratio(heads.size(), observed.size());
  m.core = ratio(cores.size(), observed.size());
  m.tail = ratio(tails.size(), observed.size());
  m.any = ratio(any.size(), observed.size());
  return report;
}

// ---- probabilities ---------------------------------------------------------

namespace {

using boost::multiprecision::cpp_int;

cpp_int power(unsigned base, unsigned exp) {
  cpp_int r = 1;
  for (unsigned i = 0; i < exp; ++i) r *= base;
  return r;
}

cpp_int binomial(unsigned n, unsigned k) {
  cpp_int r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Probability make(Rational q) {
  return Probability{q, static_cast<double>(q)};
}

}  // namespace

std::string Probability::to_string() const {
  return boost::multiprecision::numerator(exact).str() + "/" + boost::multiprecision::denominator(exact).str();
}

Probability missing_router_probability(unsigned k, unsigned n) {
  if (k == 0 || n == 0) throw Error(Errc::out_of_range, "k and n must be at least 1");
  // Surjections of n probes onto k routers, by inclusion-exclusion.
  cpp_int onto = 0;
  for (unsigned i = 0; i <= k; ++i) {
    const cpp_int term = binomial(k, i) * power(k - i, n);
    if (i % 2 == 0) onto += term;
    else onto -= term;
  }
  return make(Rational(1) - Rational(onto, power(k, n)));
}

Probability identical_path_probability(unsigned b, unsigned m) {
  if (b == 0 || m == 0) throw Error(Errc::out_of_range, "b and m must be at least 1");
  return make(Rational(cpp_int(b), power(b, m)));
}

// ---- distributions ---------------------------------------------------------

Histogram loop_length_histogram(const std::vector<LoopSignature>& loops) {
  Histogram h;
  for (const auto& s : loops)
    for (const auto& inst : s.instances) ++h[static_cast<std::size_t>(inst.n)];
  return h;
}

Histogram cycle_length_histogram(const std::vector<CycleSignature>& cycles) {
  Histogram h;
  for (const auto& s : cycles) ++h[s.length];
  return h;
}

Histogram cycle_span_histogram(const std::vector<CycleSignature>& cycles) {
  Histogram h;
  for (const auto& s : cycles) ++h[s.span];
  return h;
}

Histogram diamond_size_histogram(const DiamondReport& report, bool one_destination) {
  Histogram h;
  for (const auto& d : report.diamonds) {
    if (one_destination) {
      if (d.is_one_destination) ++h[d.one_destination_size];
    } else {
      ++h[d.global_size()];
    }
  }
  return h;
}

}  // namespace flowtrace
