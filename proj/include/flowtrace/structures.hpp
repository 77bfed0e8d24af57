#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "flowtrace/tracestore.hpp"

namespace flowtrace {

// ---- loops -----------------------------------------------------------------

struct LoopInstance {
  Ipv4Addr addr;
  std::size_t start = 0;  // position of the first element of the run
  int n = 0;              // run length minus one
  friend bool operator==(const LoopInstance&, const LoopInstance&) = default;
};

std::vector<LoopInstance> find_loop_instances(const std::vector<Hop>& route);

enum class LoopClass { persistent, systematic, occasional, other };
const char* loop_class_name(LoopClass c);

inline constexpr double kPersistenceThreshold = 0.95;

// Where an instance sits: index into dataset.routes_to(tool, destination).
struct LoopOccurrence {
  std::size_t route = 0;
  std::size_t start = 0;
  int n = 0;
};

struct LoopSignature {
  Mode tool = Mode::paris;
  Ipv4Addr addr;
  Ipv4Addr destination;
  std::size_t instance_count = 0;
  int max_length = 0;
  std::size_t routes_to_d = 0;
  std::size_t routes_containing_r = 0;
  std::size_t routes_containing_loop = 0;
  double appearance_frequency = 0.0;
  double conditional_appearance_frequency = 0.0;
  LoopClass cls = LoopClass::other;
  std::vector<LoopOccurrence> instances;
};

LoopClass classify_loop(double appearance, double conditional);

// One signature per (tool, r, d), ordered by (tool, d, r).
std::vector<LoopSignature> aggregate_loops(const Dataset& dataset);

// ---- cycles ----------------------------------------------------------------

struct CyclePair {
  Ipv4Addr addr;
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const CyclePair&, const CyclePair&) = default;
  friend auto operator<=>(const CyclePair&, const CyclePair&) = default;
};

// Every qualifying occurrence pair, ordered by (i, j).
std::vector<CyclePair> find_cycle_pairs(const std::vector<Hop>& route);

struct PeriodicCycle {
  std::vector<Ipv4Addr> block;  // minimal period, as first seen
  std::size_t start = 0;
  std::size_t length = 0;  // positions covered by the maximal repetition
  int repeats = 0;         // whole blocks inside it
  std::size_t period() const { return block.size(); }
  friend bool operator==(const PeriodicCycle&, const PeriodicCycle&) = default;
};

// Maximal star-free stretches whose minimal period k is at least 2 and which
// hold the block at least twice. Ordered by (start, period).
std::vector<PeriodicCycle> find_periodic_cycles(const std::vector<Hop>& route);

struct CycleOccurrence {
  std::size_t route = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct PeriodicInfo {
  std::size_t period = 0;
  std::vector<Ipv4Addr> block;
  int max_repeats = 0;
};

struct CycleSignature {
  Mode tool = Mode::paris;
  Ipv4Addr addr;
  Ipv4Addr destination;
  std::size_t instance_count = 0;  // r-cyclic routes
  std::size_t length = 0;
  std::size_t span = 0;
  std::size_t routes_to_d = 0;
  std::size_t routes_containing_r = 0;
  double appearance_frequency = 0.0;
  double conditional_appearance_frequency = 0.0;
  std::optional<PeriodicInfo> periodic;
  std::vector<CycleOccurrence> instances;
};

std::vector<CycleSignature> aggregate_cycles(const Dataset& dataset);

// ---- diamonds --------------------------------------------------------------

struct DiamondRecord {
  Ipv4Addr head;
  Ipv4Addr tail;
  std::map<Ipv4Addr, std::set<Ipv4Addr>> per_destination_cores;
  std::set<Ipv4Addr> global_core;
  std::map<Ipv4Addr, std::size_t> d_diamond_sizes;
  std::size_t one_destination_size = 0;
  bool is_global = false;
  bool is_one_destination = false;
  std::size_t global_size() const { return global_core.size(); }
};

struct DiamondMembership {
  std::size_t addresses = 0;
  double head = 0.0;
  double core = 0.0;
  double tail = 0.0;
  double any = 0.0;
};

struct DiamondReport {
  std::vector<DiamondRecord> diamonds;  // global diamonds, ordered by (h, t)
  DiamondMembership membership;

  std::size_t one_destination_count() const;
};

DiamondReport find_diamonds(const Dataset& dataset);

// ---- probabilities ---------------------------------------------------------

using Rational = boost::multiprecision::cpp_rational;

struct Probability {
  Rational exact;
  double value = 0.0;
  std::string to_string() const;  // "p/q"
};

// Chance that n probes, each uniform over k routers, miss at least one.
Probability missing_router_probability(unsigned k, unsigned n);
// Chance that m probes, each uniform over b branches, all take the same one.
Probability identical_path_probability(unsigned b, unsigned m);

// ---- distributions ---------------------------------------------------------

// Unit-width histogram: value -> count.
using Histogram = std::map<std::size_t, std::size_t>;

Histogram loop_length_histogram(const std::vector<LoopSignature>& loops);
Histogram cycle_length_histogram(const std::vector<CycleSignature>& cycles);
Histogram cycle_span_histogram(const std::vector<CycleSignature>& cycles);
Histogram diamond_size_histogram(const DiamondReport& report, bool one_destination);

}  // namespace flowtrace
