#include "flowtrace/analysis.hpp"

#include <fmt/format.h>

#include "flowtrace/structures.hpp"

namespace flowtrace {

namespace {

std::string block_list(const std::vector<Ipv4Addr>& block) {
  std::string s;
  for (const auto& a : block) s += (s.empty() ? "" : " ") + a.to_string();
  return s;
}

void histogram_rows(std::string& out, const char* name, const Histogram& h, bool csv) {
  if (csv) {
    for (const auto& [v, n] : h) out += fmt::format("{},{},{}\n", name, v, n);
    return;
  }
  out += fmt::format("  {}:", name);
  if (h.empty()) out += " none";
  for (const auto& [v, n] : h) out += fmt::format(" {}:{}", v, n);
  out += "\n";
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

std::string render_analysis(const Dataset& dataset, const AnalyzeOptions& opt) {
  std::string out;
  const bool csv = opt.csv;
  std::vector<LoopSignature> loops;
  std::vector<CycleSignature> cycles;
  DiamondReport diamonds;
  if (opt.loops) loops = aggregate_loops(dataset);
  if (opt.cycles) cycles = aggregate_cycles(dataset);
  if (opt.diamonds) diamonds = find_diamonds(dataset);

  std::size_t with_loop = 0, with_cycle = 0;
  for (const auto& [key, routes] : dataset.groups()) {
    for (const auto& r : routes) {
      const auto seq = address_sequence(r);
      with_loop += !find_loop_instances(seq).empty();
      with_cycle += !find_cycle_pairs(seq).empty();
    }
  }

  if (csv) out += "summary,key,value\n";
  else out += "Summary\n";
  auto summary = [&](const std::string& key, const std::string& value) {
    out += csv ? fmt::format("summary,{},{}\n", key, value) : fmt::format("  {:<34}{}\n", key, value);
  };
  summary("routes", std::to_string(dataset.size()));
  summary("destinations", std::to_string(dataset.destinations().size()));
  if (opt.loops) {
    std::size_t inst = 0;
    for (const auto& s : loops) inst += s.instance_count;
    summary("loop_signatures", std::to_string(loops.size()));
    summary("loop_instances", std::to_string(inst));
    summary("routes_with_loop_fraction", fmt::format("{:.4f}", ratio(with_loop, dataset.size())));
  }
  if (opt.cycles) {
    std::size_t inst = 0;
    for (const auto& s : cycles) inst += s.instance_count;
    summary("cycle_signatures", std::to_string(cycles.size()));
    summary("cycle_instances", std::to_string(inst));
    summary("routes_with_cycle_fraction", fmt::format("{:.4f}", ratio(with_cycle, dataset.size())));
  }
  if (opt.diamonds) {
    summary("global_diamonds", std::to_string(diamonds.diamonds.size()));
    summary("one_destination_diamonds", std::to_string(diamonds.one_destination_count()));
    summary("diamond_head_address_fraction", fmt::format("{:.4f}", diamonds.membership.head));
    summary("diamond_core_address_fraction", fmt::format("{:.4f}", diamonds.membership.core));
    summary("diamond_tail_address_fraction", fmt::format("{:.4f}", diamonds.membership.tail));
    summary("diamond_any_address_fraction", fmt::format("{:.4f}", diamonds.membership.any));
  }

  if (opt.loops) {
    if (csv) {
      out += "\nloop,tool,addr,destination,instances,max_n,routes_to_d,routes_with_r,routes_with_loop,appearance,"
             "conditional,class\n";
    } else {
      out += fmt::format("\nLoops\n  {:<8}{:<17}{:<17}{:>6}{:>6}{:>8}{:>8}{:>8}{:>8}{:>8}  {}\n", "tool", "addr",
                         "destination", "inst", "max_n", "routes", "with_r", "looped", "app", "cond", "class");
    }
    for (const auto& s : loops) {
      const auto line = csv ? fmt::format("loop,{},{},{},{},{},{},{},{},{:.4f},{:.4f},{}\n", mode_name(s.tool),
                                          s.addr.to_string(), s.destination.to_string(), s.instance_count,
                                          s.max_length, s.routes_to_d, s.routes_containing_r, s.routes_containing_loop,
                                          s.appearance_frequency, s.conditional_appearance_frequency,
                                          loop_class_name(s.cls))
                            : fmt::format("  {:<8}{:<17}{:<17}{:>6}{:>6}{:>8}{:>8}{:>8}{:>8.4f}{:>8.4f}  {}\n",
                                          mode_name(s.tool), s.addr.to_string(), s.destination.to_string(),
                                          s.instance_count, s.max_length, s.routes_to_d, s.routes_containing_r,
                                          s.routes_containing_loop, s.appearance_frequency,
                                          s.conditional_appearance_frequency, loop_class_name(s.cls));
      out += line;
    }
  }

  if (opt.cycles) {
    if (csv) {
      out += "\ncycle,tool,addr,destination,instances,length,span,routes_to_d,routes_with_r,appearance,conditional,"
             "period,block,max_repeats\n";
    } else {
      out += fmt::format("\nCycles\n  {:<8}{:<17}{:<17}{:>6}{:>7}{:>6}{:>8}{:>8}  {}\n", "tool", "addr",
                         "destination", "inst", "length", "span", "app", "cond", "periodic");
    }
    for (const auto& s : cycles) {
      const std::string per = s.periodic ? fmt::format("{}", s.periodic->period) : "";
      const std::string blk = s.periodic ? block_list(s.periodic->block) : "";
      const std::string rep = s.periodic ? fmt::format("{}", s.periodic->max_repeats) : "";
      if (csv) {
        out += fmt::format("cycle,{},{},{},{},{},{},{},{},{:.4f},{:.4f},{},{},{}\n", mode_name(s.tool),
                           s.addr.to_string(), s.destination.to_string(), s.instance_count, s.length, s.span,
                           s.routes_to_d, s.routes_containing_r, s.appearance_frequency,
                           s.conditional_appearance_frequency, per, blk, rep);
      } else {
        out += fmt::format("  {:<8}{:<17}{:<17}{:>6}{:>7}{:>6}{:>8.4f}{:>8.4f}  {}\n", mode_name(s.tool),
                           s.addr.to_string(), s.destination.to_string(), s.instance_count, s.length, s.span,
                           s.appearance_frequency, s.conditional_appearance_frequency,
                           s.periodic ? fmt::format("period {} ({}) x{}", per, blk, rep) : "-");
      }
    }
  }

  if (opt.diamonds) {
    if (csv) out += "\ndiamond,head,tail,global_size,one_destination_size,d_sizes\n";
    else
      out += fmt::format("\nDiamonds\n  {:<17}{:<17}{:>8}{:>10}  {}\n", "head", "tail", "global", "one-dest",
                         "per-destination sizes");
    for (const auto& d : diamonds.diamonds) {
      std::string sizes;
      for (const auto& [dst, n] : d.d_diamond_sizes)
        sizes += fmt::format("{}{}={}", sizes.empty() ? "" : " ", dst.to_string(), n);
      if (csv)
        out += fmt::format("diamond,{},{},{},{},{}\n", d.head.to_string(), d.tail.to_string(), d.global_size(),
                           d.one_destination_size, sizes);
      else
        out += fmt::format("  {:<17}{:<17}{:>8}{:>10}  {}\n", d.head.to_string(), d.tail.to_string(),
                           d.global_size(), d.is_one_destination ? std::to_string(d.one_destination_size) : "-",
                           sizes.empty() ? "-" : sizes);
    }
  }

  out += csv ? "\ndistribution,value,count\n" : "\nDistributions\n";
  if (opt.loops) histogram_rows(out, "loop_n", loop_length_histogram(loops), csv);
  if (opt.cycles) {
    histogram_rows(out, "cycle_length", cycle_length_histogram(cycles), csv);
    histogram_rows(out, "cycle_span", cycle_span_histogram(cycles), csv);
  }
  if (opt.diamonds) {
    histogram_rows(out, "global_diamond_size", diamond_size_histogram(diamonds, false), csv);
    histogram_rows(out, "one_destination_diamond_size", diamond_size_histogram(diamonds, true), csv);
  }
  return out;
}

}  // namespace flowtrace
