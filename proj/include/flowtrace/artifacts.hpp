#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowtrace/structures.hpp"
#include "flowtrace/tracestore.hpp"

namespace flowtrace {

enum class Cause {
  per_flow_load_balancing,
  zero_ttl_forwarding,
  routing_cycle,
  interrupted_route,
  fake_address,
  unknown,
};
inline constexpr std::array<Cause, 6> kAllCauses = {
    Cause::per_flow_load_balancing, Cause::zero_ttl_forwarding, Cause::routing_cycle,
    Cause::interrupted_route,       Cause::fake_address,        Cause::unknown};
const char* cause_name(Cause c);

enum class StructureKind {
  loop_signatures,
  loop_instances,
  cycle_signatures,
  cycle_instances,
  global_diamonds,
  one_destination_diamonds,
};
inline constexpr std::array<StructureKind, 6> kAllKinds = {
    StructureKind::loop_signatures,  StructureKind::loop_instances,  StructureKind::cycle_signatures,
    StructureKind::cycle_instances,  StructureKind::global_diamonds, StructureKind::one_destination_diamonds};
const char* kind_name(StructureKind k);

// Zero-TTL applies to loops only, routing cycles to cycles only, interrupted
// and fake to both; diamonds are either per-flow or unknown.
bool cause_applies(Cause c, StructureKind k);

// ---- differential ----------------------------------------------------------

// (r, d) for loops and cycles, (h, t) for diamonds.
using SignatureKey = std::pair<Ipv4Addr, Ipv4Addr>;

struct ComparisonEntry {
  StructureKind kind = StructureKind::loop_signatures;
  std::size_t classic_total = 0;
  std::size_t paris_total = 0;
  std::size_t disappeared = 0;
  std::size_t appeared = 0;
  double disappeared_fraction = 0.0;
  double appeared_fraction = 0.0;
};

struct ComparisonReport {
  std::array<ComparisonEntry, 6> entries;
  std::vector<SignatureKey> disappeared_loops;
  std::vector<SignatureKey> disappeared_cycles;
  std::vector<SignatureKey> disappeared_diamonds;

  const ComparisonEntry& entry(StructureKind k) const { return entries[static_cast<std::size_t>(k)]; }
};

// Both arguments may hold either tool's routes; only the classic routes of
// the first and the paris routes of the second are used.
ComparisonReport compare_datasets(const Dataset& classic, const Dataset& paris);

// ---- classifiers -----------------------------------------------------------

struct Decision {
  bool value = false;
  bool undecidable = false;  // the metadata needed was absent
};

Decision classify_zero_ttl(const LoopSignature& sig, const Dataset& dataset);
bool classify_interrupted(const LoopSignature& sig, const Dataset& dataset);
bool classify_interrupted(const CycleSignature& sig, const Dataset& dataset);
Decision classify_fake(const LoopSignature& sig, const Dataset& dataset);
Decision classify_fake(const CycleSignature& sig, const Dataset& dataset);

enum class CycleEvidence { confirmed, counter_unavailable, refuted };
const char* evidence_name(CycleEvidence e);

inline constexpr std::uint16_t kIpIdWindow = 1024;

CycleEvidence verify_routing_cycle(const CycleSignature& sig, const Dataset& dataset,
                                   std::uint16_t window = kIpIdWindow);

// ---- campaign classification -----------------------------------------------

struct ClassifiedStructure {
  SignatureKey key;
  Cause cause = Cause::unknown;
  std::size_t instances = 0;
  bool undecidable = false;
  std::optional<CycleEvidence> evidence;
};

struct Classification {
  std::vector<ClassifiedStructure> loops;
  std::vector<ClassifiedStructure> cycles;
  std::vector<ClassifiedStructure> global_diamonds;
  std::vector<ClassifiedStructure> one_destination_diamonds;
};

struct ClassifyOptions {
  std::uint16_t ip_id_window = kIpIdWindow;
};

// Structures seen only under classic are per-flow artifacts; every other
// structure is classified from the paris routes' metadata.
Classification classify_campaign(const Dataset& classic, const Dataset& paris, const ClassifyOptions& options = {});

// ---- reports ---------------------------------------------------------------

struct SummaryTable {
  // percent[cause][kind]; nullopt where the cause does not apply.
  std::array<std::array<std::optional<double>, 6>, 6> percent{};
  std::array<std::size_t, 6> totals{};
};

SummaryTable summary_report(const Classification& classification);

std::string render_summary_text(const SummaryTable& table);
std::string render_summary_csv(const SummaryTable& table);
std::string render_comparison_text(const ComparisonReport& report);
std::string render_comparison_csv(const ComparisonReport& report);

}  // namespace flowtrace
