#include "cli.hpp"

#include <cstdlib>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "flowtrace/analysis.hpp"
#include "flowtrace/artifacts.hpp"
#include "flowtrace/campaign.hpp"
#include "flowtrace/error.hpp"
#include "flowtrace/probing.hpp"
#include "flowtrace/simnet.hpp"
#include "flowtrace/tracestore.hpp"

#ifdef FLOWTRACE_LIVE
#include "live_transport.hpp"
#endif

namespace flowtrace {

namespace {

std::uint64_t default_seed() {
  if (const char* s = std::getenv("FLOWTRACE_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(s, &end, 10);
    if (end && *end == '\0') return v;
  }
  return 0;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Ipv4Addr need_addr(const std::string& s) {
  auto a = Ipv4Addr::parse(s);
  if (!a) throw UsageError(fmt::format("not an IPv4 address: {}", s));
  return *a;
}

// Topology problems are reported apart from everything else.
struct TopologyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TraceArgs {
  std::string dest;
  std::string mode = "paris";
  std::string proto = "udp";
  int queries = 3;
  int first = 1;
  int max = 36;
  double wait = 2.0;
  double delay_ms = 50.0;
  std::string strategy = "hop-by-hop";
  int star_gap = 8;
  std::string sim;
  std::uint64_t seed = 0;
  int session = 1;
  std::string output;
};

struct SimRunArgs {
  std::string topology;
  std::vector<std::string> dests;
  int rounds = 1;
  std::size_t parallel = kDefaultParallel;
  std::uint64_t seed = 0;
  std::string proto = "udp";
  int max = 36;
  std::string classic_out = "classic.jsonl";
  std::string paris_out = "paris.jsonl";
};

struct AnalyzeArgs {
  std::string file;
  std::string kinds = "loops,cycles,diamonds";
  std::string format = "text";
  std::string tool = "all";
};

struct PairArgs {
  std::string classic;
  std::string paris;
  std::string format = "text";
  int window = kIpIdWindow;
};

int do_trace(const TraceArgs& a, std::ostream& out) {
  TraceConfig cfg;
  const auto mode = parse_mode(a.mode);
  const auto proto = parse_protocol(a.proto);
  const auto strategy = parse_strategy(a.strategy);
  if (!mode) throw UsageError("--mode must be classic or paris");
  if (!proto) throw UsageError("--proto must be udp, icmp or tcp");
  if (!strategy) throw UsageError("unknown --strategy");
  cfg.mode = *mode;
  cfg.protocol = *proto;
  cfg.strategy = *strategy;
  cfg.probes_per_hop = a.queries;
  cfg.min_ttl = a.first;
  cfg.max_ttl = a.max;
  cfg.timeout = Micros(static_cast<std::int64_t>(a.wait * 1e6));
  cfg.inter_probe_delay = Micros(static_cast<std::int64_t>(a.delay_ms * 1e3));
  cfg.star_gap_stop = a.star_gap;
  cfg.seed = a.seed;
  if (a.session < 0 || a.session > 0xFFFF) throw UsageError("--session must fit in 16 bits");
  cfg.session_id = static_cast<std::uint16_t>(a.session);
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Ipv4Addr dst = need_addr(a.dest);

  MeasuredRoute route;
  if (!a.sim.empty()) {
    simnet::Topology topo;
    try {
      topo = simnet::load_topology_file(a.sim);
    } catch (const Error& e) {
      throw TopologyError(e.what());
    }
    simnet::Simulator sim(std::move(topo), a.seed);
    simnet::SimTransport tx(sim);
    route = run_trace(dst, cfg, tx);
  } else {
#ifdef FLOWTRACE_LIVE
    RawSocketTransport tx(dst);
    route = run_trace(dst, cfg, tx);
#else
    throw Error(Errc::transport_failure, "live probing is not built in; use --sim");
#endif
  }
  out << fmt::format("traceroute to {} ({} {}), {} hops max\n", dst.to_string(), mode_name(cfg.mode),
                     protocol_name(cfg.protocol), cfg.max_ttl);
  out << format_route(route);
  if (!a.output.empty()) append_trace_file(a.output, route);
  return exit_code::ok;
}

int do_sim_run(const SimRunArgs& a, std::ostream& out) {
  simnet::Topology topo;
  try {
    topo = simnet::load_topology_file(a.topology);
  } catch (const Error& e) {
    throw TopologyError(e.what());
  }
  CampaignConfig cfg;
  if (a.rounds < 0) throw UsageError("--rounds must be non-negative");
  if (a.parallel == 0) throw UsageError("--parallel must be positive");
  cfg.rounds = a.rounds;
  cfg.parallel = a.parallel;
  cfg.seed = a.seed;
  const auto proto = parse_protocol(a.proto);
  if (!proto) throw UsageError("--proto must be udp, icmp or tcp");
  cfg.protocol = *proto;
  cfg.trace.max_ttl = a.max;
  if (a.dests.empty()) {
    for (const auto& h : topo.hosts) cfg.destinations.push_back(h.address);
  } else {
    for (const auto& d : a.dests) cfg.destinations.push_back(need_addr(d));
  }
  const auto result = run_campaign(topo, cfg);
  save_trace_file(a.paris_out, result.paris);
  save_trace_file(a.classic_out, result.classic);
  out << fmt::format("{} rounds x {} destinations: {} paris routes -> {}, {} classic routes -> {}\n", cfg.rounds,
                     cfg.destinations.size(), result.paris.size(), a.paris_out, result.classic.size(), a.classic_out);
  return exit_code::ok;
}

int do_analyze(const AnalyzeArgs& a, std::ostream& out) {
  AnalyzeOptions opt;
  opt.loops = opt.cycles = opt.diamonds = false;
  std::stringstream kinds(a.kinds);
  for (std::string k; std::getline(kinds, k, ',');) {
    if (k == "loops") opt.loops = true;
    else if (k == "cycles") opt.cycles = true;
    else if (k == "diamonds") opt.diamonds = true;
    else throw UsageError(fmt::format("unknown kind '{}'", k));
  }
  if (a.format != "text" && a.format != "csv") throw UsageError("--format must be text or csv");
  opt.csv = a.format == "csv";
  Dataset ds(load_trace_file(a.file));
  if (a.tool != "all") {
    const auto m = parse_mode(a.tool);
    if (!m) throw UsageError("--tool must be classic, paris or all");
    ds = ds.only(*m);
  }
  out << render_analysis(ds, opt);
  return exit_code::ok;
}

int do_compare(const PairArgs& a, std::ostream& out, bool report) {
  if (a.format != "text" && a.format != "csv") throw UsageError("--format must be text or csv");
  if (a.window < 1 || a.window > 0xFFFF) throw UsageError("--window must be in [1, 65535]");
  const Dataset classic(load_trace_file(a.classic));
  const Dataset paris(load_trace_file(a.paris));
  const bool csv = a.format == "csv";
  if (!report) {
    const auto rep = compare_datasets(classic, paris);
    out << (csv ? render_comparison_csv(rep) : render_comparison_text(rep));
    return exit_code::ok;
  }
  ClassifyOptions opt;
  opt.ip_id_window = static_cast<std::uint16_t>(a.window);
  const auto table = summary_report(classify_campaign(classic, paris, opt));
  out << (csv ? render_summary_csv(table) : render_summary_text(table));
  return exit_code::ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-constant traceroute, network simulator and artifact analysis"};
  app.name("flowtrace");
  app.require_subcommand(1, 1);

  TraceArgs ta;
  ta.seed = default_seed();
  auto* trace = app.add_subcommand("trace", "Trace the route to a destination");
  trace->add_option("destination", ta.dest, "Destination IPv4 address")->required();
  trace->add_option("--mode", ta.mode, "classic or paris")->capture_default_str();
  trace->add_option("--proto", ta.proto, "udp, icmp or tcp")->capture_default_str();
  trace->add_option("-q,--queries", ta.queries, "Probes per hop")->capture_default_str();
  trace->add_option("-f,--first", ta.first, "First TTL")->capture_default_str();
  trace->add_option("-m,--max", ta.max, "Maximum TTL")->capture_default_str();
  trace->add_option("-w,--wait", ta.wait, "Timeout in seconds")->capture_default_str();
  trace->add_option("--delay", ta.delay_ms, "Inter-probe delay in ms")->capture_default_str();
  trace->add_option("--strategy", ta.strategy, "packet-by-packet, hop-by-hop, concurrent or scout")
      ->capture_default_str();
  trace->add_option("--star-gap", ta.star_gap, "Stop after this many silent hops")->capture_default_str();
  trace->add_option("--sim", ta.sim, "Topology file to simulate instead of the live network");
  trace->add_option("--seed", ta.seed, "Seed (default from FLOWTRACE_SEED)")->capture_default_str();
  trace->add_option("--session", ta.session, "Session identifier")->capture_default_str();
  trace->add_option("-o,--output", ta.output, "Append the route to this trace file");

  SimRunArgs sa;
  sa.seed = default_seed();
  auto* simrun = app.add_subcommand("sim-run", "Run a paris + classic campaign on a simulated topology");
  simrun->add_option("--topology", sa.topology, "Topology file")->required();
  simrun->add_option("--dest", sa.dests, "Destination (repeatable; default every host)");
  simrun->add_option("--rounds", sa.rounds, "Rounds")->capture_default_str();
  simrun->add_option("--parallel", sa.parallel, "Concurrent sessions over destination shards")->capture_default_str();
  simrun->add_option("--seed", sa.seed, "Seed (default from FLOWTRACE_SEED)")->capture_default_str();
  simrun->add_option("--proto", sa.proto, "udp, icmp or tcp")->capture_default_str();
  simrun->add_option("-m,--max", sa.max, "Maximum TTL")->capture_default_str();
  simrun->add_option("--classic-out", sa.classic_out, "Classic trace file")->capture_default_str();
  simrun->add_option("--paris-out", sa.paris_out, "Paris trace file")->capture_default_str();

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Detect loops, cycles and diamonds in a trace file");
  analyze->add_option("file", aa.file, "Trace file")->required();
  analyze->add_option("--kinds", aa.kinds, "Any of loops,cycles,diamonds")->capture_default_str();
  analyze->add_option("--format", aa.format, "text or csv")->capture_default_str();
  analyze->add_option("--tool", aa.tool, "classic, paris or all")->capture_default_str();

  PairArgs ca;
  auto* compare = app.add_subcommand("compare", "Structures that disappear or appear between classic and paris");
  compare->add_option("classic", ca.classic, "Classic trace file")->required();
  compare->add_option("paris", ca.paris, "Paris trace file")->required();
  compare->add_option("--format", ca.format, "text or csv")->capture_default_str();

  PairArgs ra;
  auto* report = app.add_subcommand("report", "Attribute each structure to a cause");
  report->add_option("classic", ra.classic, "Classic trace file")->required();
  report->add_option("paris", ra.paris, "Paris trace file")->required();
  report->add_option("--format", ra.format, "text or csv")->capture_default_str();
  report->add_option("--window", ra.window, "IP ID proximity window")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (*trace) return do_trace(ta, out);
    if (*simrun) return do_sim_run(sa, out);
    if (*analyze) return do_analyze(aa, out);
    if (*compare) return do_compare(ca, out, false);
    if (*report) return do_compare(ra, out, true);
  } catch (const UsageError& e) {
    err << "flowtrace: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const TopologyError& e) {
    err << "flowtrace: topology error: " << e.what() << "\n";
    return exit_code::topology;
  } catch (const Error& e) {
    err << "flowtrace: " << e.what() << "\n";
    switch (e.code()) {
      case Errc::malformed_line:
      case Errc::parse_error: return exit_code::malformed;
      case Errc::destination_mismatch: return exit_code::destination_mismatch;
      case Errc::transport_failure: return exit_code::transport;
      default: return exit_code::usage;
    }
  } catch (const std::exception& e) {
    err << "flowtrace: " << e.what() << "\n";
    return exit_code::transport;
  }
  return exit_code::usage;
}

}  // namespace flowtrace
