#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

using namespace flowtrace;
namespace fs = std::filesystem;

namespace {

struct Run {
  int rc;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).rc == exit_code::usage);
  CHECK(cli({"bogus"}).rc == exit_code::usage);
  CHECK(cli({"trace"}).rc == exit_code::usage);
  CHECK(cli({"trace", "10.9.0.1", "--mode", "sideways", "--sim", fixture::topology_path("linear")}).rc ==
        exit_code::usage);
  CHECK(cli({"trace", "not-an-address", "--sim", fixture::topology_path("linear")}).rc == exit_code::usage);
  CHECK(cli({"trace", "10.9.0.1", "-m", "0", "--sim", fixture::topology_path("linear")}).rc == exit_code::usage);
  CHECK(cli({"analyze", "x.jsonl", "--kinds", "spirals"}).rc == exit_code::usage);
  CHECK(cli({"--help"}).rc == exit_code::ok);
}

TEST_CASE("simulated trace prints one line per hop") {
  const auto r = cli({"trace", "10.9.0.1", "--sim", fixture::topology_path("linear"), "-q", "1", "-w", "0.5"});
  REQUIRE(r.rc == exit_code::ok);
  CHECK(r.out ==
        "traceroute to 10.9.0.1 (paris udp), 36 hops max\n"
        " 1  10.0.1.1  2.000 ms\n"
        " 2  10.0.2.1  4.000 ms\n"
        " 3  10.0.3.1  6.000 ms\n"
        " 4  10.0.4.1  8.000 ms\n"
        " 5  10.9.0.1  10.000 ms\n");
}

TEST_CASE("topology errors exit 3") {
  TempDir dir("flowtrace_cli_topo");
  std::ofstream(dir / "bad.json") << "{\"routers\": 5}";
  CHECK(cli({"trace", "10.9.0.1", "--sim", dir / "bad.json"}).rc == exit_code::topology);
  CHECK(cli({"sim-run", "--topology", dir / "missing.json"}).rc == exit_code::topology);
}

TEST_CASE("malformed trace files exit 4 and name the line") {
  TempDir dir("flowtrace_cli_bad");
  std::ofstream(dir / "bad.jsonl") << "\n{\"tool\": \"paris\"}\n";
  const auto r = cli({"analyze", dir / "bad.jsonl"});
  CHECK(r.rc == exit_code::malformed);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("campaign, analysis and reports") {
  TempDir dir("flowtrace_cli_run");
  const auto c = dir / "c.jsonl", p = dir / "p.jsonl";
  auto r = cli({"sim-run", "--topology", fixture::topology_path("mixed"), "--rounds", "6", "--seed", "5",
                "--classic-out", c, "--paris-out", p});
  REQUIRE(r.rc == exit_code::ok);
  CHECK(fs::exists(c));
  CHECK(fs::exists(p));
  CHECK_FALSE(fs::exists(c + ".tmp"));

  r = cli({"analyze", c, "--format", "csv"});
  CHECK(r.rc == exit_code::ok);
  CHECK(r.out.rfind("summary,key,value\n", 0) == 0);
  r = cli({"compare", c, p, "--format", "csv"});
  CHECK(r.rc == exit_code::ok);
  CHECK(r.out.rfind("kind,classic_total", 0) == 0);
  r = cli({"report", c, p, "--format", "csv"});
  CHECK(r.rc == exit_code::ok);
  CHECK(r.out.rfind("cause,", 0) == 0);
  CHECK(cli({"report", c, p, "--window", "0"}).rc == exit_code::usage);

  // paris data for a single destination does not line up with the classic file
  const auto p1 = dir / "p1.jsonl", c1 = dir / "c1.jsonl";
  REQUIRE(cli({"sim-run", "--topology", fixture::topology_path("mixed"), "--dest", "10.1.0.1", "--classic-out", c1,
               "--paris-out", p1})
              .rc == exit_code::ok);
  CHECK(cli({"compare", c, p1}).rc == exit_code::destination_mismatch);
  CHECK(cli({"report", c, p1}).rc == exit_code::destination_mismatch);
}

TEST_CASE("same seed, same bytes; the environment supplies the default seed") {
  TempDir dir("flowtrace_cli_det");
  auto run = [&](const std::string& tag, std::vector<std::string> extra) {
    std::vector<std::string> args{"sim-run",       "--topology",  fixture::topology_path("mixed"),
                                  "--rounds",      "4",           "--classic-out",
                                  dir / (tag + "c"), "--paris-out", dir / (tag + "p")};
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(cli(args).rc == exit_code::ok);
    return slurp(dir / (tag + "c")) + slurp(dir / (tag + "p"));
  };
  const auto a = run("a", {"--seed", "11"});
  const auto b = run("b", {"--seed", "11"});
  const auto other = run("o", {"--seed", "12"});
  CHECK(a == b);
  CHECK(a != other);
  CHECK(cli({"report", dir / "ac", dir / "ap", "--format", "csv"}).out ==
        cli({"report", dir / "bc", dir / "bp", "--format", "csv"}).out);

  ::setenv("FLOWTRACE_SEED", "11", 1);
  const auto env = run("e", {});
  ::unsetenv("FLOWTRACE_SEED");
  CHECK(env == a);
}

}  // TEST_SUITE
