#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "agentjoule/cli.hpp"
#include "agentjoule/energy.hpp"
#include "agentjoule/report.hpp"
#include "agentjoule/trajectory.hpp"

using namespace agentjoule;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = AGENTJOULE_SOURCE_DIR;

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) {
    static int counter = 0;
    dir = fs::temp_directory_path() /
          ("agentjoule_cli_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = agentjoule::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_episode(const fs::path& p, const Episode& ep) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << serialize_episode(ep);
}

// An episode of navigator views, each output scaled by factor.
Episode read_episode(const std::string& task, const std::string& method, double factor) {
  Episode ep;
  ep.episode_id = task + "-" + method;
  ep.method = method;
  ep.metadata["task_id"] = task;
  for (std::uint64_t i = 0; i < 6; ++i) {
    TurnRecord t;
    t.episode_id = ep.episode_id;
    t.turn_index = i;
    t.role = RoleId(i % 2 ? "navigator" : "planner");
    t.invocation_id = t.role.name() + "#0";
    const std::uint64_t out = static_cast<std::uint64_t>((i % 2 ? 200 : 40) * factor);
    t.tokens = {1000, 500, out};
    t.action = {"str_replace_editor", {{"command", "view"}, {"path", "f" + std::to_string(i) + ".py"}}};
    ep.turns.push_back(t);
  }
  return ep;
}

}  // namespace

TEST_CASE("synth then attribute writes the fit tables") {
  Scratch tmp("attr");
  const auto logs = tmp.dir / "logs";
  const auto s = run_cli({"synth", "-o", logs.string(), "--n", "400", "--seed", "3"});
  REQUIRE(s.code == agentjoule::cli::kExitOk);
  const auto a = run_cli({"attribute", logs.string(), "-o", (tmp.dir / "fit").string()});
  REQUIRE(a.code == agentjoule::cli::kExitOk);
  for (const char* f : {"fit.txt", "fit.csv", "residuals.csv", "methods.txt", "methods.csv"})
    CHECK(fs::exists(tmp.dir / "fit" / f));
  CHECK(a.out == slurp(tmp.dir / "fit" / "fit.txt"));
  CHECK(a.out.find("VIF") != std::string::npos);
}

TEST_CASE("attribute rejects a log too small to fit") {
  Scratch tmp("small");
  Episode ep = synthesize_turns({.n = 1});
  write_episode(tmp.dir / "one.jsonl", ep);
  const auto r = run_cli({"attribute", (tmp.dir / "one.jsonl").string(), "-o", (tmp.dir / "o").string()});
  CHECK(r.code == agentjoule::cli::kExitAnalysis);
  CHECK(r.err.find("error:") == 0);
}

TEST_CASE("attribute output does not depend on how the inputs are listed") {
  Scratch tmp("order");
  for (std::uint64_t seed : {1, 2}) {
    SynthesisParams p;
    p.n = 150;
    p.seed = seed;
    p.episode_id = "synthetic-" + std::to_string(seed);
    write_episode(tmp.dir / ("d" + std::to_string(seed)) / (p.episode_id + ".jsonl"), synthesize_turns(p));
  }
  const auto a = run_cli({"attribute", (tmp.dir / "d1").string(), (tmp.dir / "d2").string(), "-o", (tmp.dir / "a").string()});
  const auto b = run_cli({"attribute", (tmp.dir / "d2/synthetic-2.jsonl").string(), (tmp.dir / "d1/synthetic-1.jsonl").string(),
                      "-o", (tmp.dir / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  for (const char* f : {"fit.txt", "fit.csv", "residuals.csv", "methods.csv"})
    CHECK(slurp(tmp.dir / "a" / f) == slurp(tmp.dir / "b" / f));
}

TEST_CASE("dup-report on the planted fixture") {
  Scratch tmp("dup");
  const auto r = run_cli({"dup-report", (kSource / "fixtures/logs/planted_three_roles.jsonl").string(), "-o", tmp.dir.string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(tmp.dir / "duplication_planted.csv");
  CHECK(csv ==
        "current,across_executor,across_navigator,across_planner,within\n"
        "executor,13.04,52.17,0.00,0.00\n"
        "navigator,0.00,9.09,0.00,18.18\n"
        "planner,66.67,0.00,0.00,33.33\n");
  CHECK(r.out == slurp(tmp.dir / "duplication.txt"));
}

TEST_CASE("dup-report is invariant to the order of episode files") {
  Scratch tmp("dupord");
  std::vector<std::string> names;
  for (int i = 0; i < 3; ++i) {
    SynthesisParams p;
    p.n = 30;
    p.seed = static_cast<std::uint64_t>(i);
    p.episode_id = "e" + std::to_string(i);
    Episode ep = synthesize_turns(p);
    for (auto& t : ep.turns) {
      t.role = RoleId(t.turn_index % 2 ? "navigator" : "executor");
      t.invocation_id = t.role.name() + "#" + std::to_string(t.turn_index / 10);
      t.action = {"str_replace_editor",
                  {{"command", "view"}, {"path", "f.py"}, {"view_range", {1 + t.turn_index % 4, 8 + t.turn_index % 5}}}};
    }
    const auto path = tmp.dir / "logs" / (p.episode_id + ".jsonl");
    write_episode(path, ep);
    names.push_back(path.string());
  }
  const auto a = run_cli({"dup-report", names[0], names[1], names[2], "-o", (tmp.dir / "a").string()});
  const auto b = run_cli({"dup-report", names[2], names[0], names[1], "-o", (tmp.dir / "b").string()});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(tmp.dir / "a/duplication.txt") == slurp(tmp.dir / "b/duplication.txt"));
}

TEST_CASE("dup-report with no reads gives an empty matrix") {
  Scratch tmp("noreads");
  SynthesisParams p;
  p.n = 10;
  write_episode(tmp.dir / "s.jsonl", synthesize_turns(p));
  const auto r = run_cli({"dup-report", (tmp.dir / "s.jsonl").string(), "-o", (tmp.dir / "o").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(tmp.dir / "o/duplication_synthetic.csv"));
  CHECK(slurp(tmp.dir / "o/duplication_synthetic.csv") == "current,within\n");
}

TEST_CASE("simulate writes a deterministic log") {
  Scratch tmp("sim");
  const auto config = (kSource / "fixtures/configs/hyperagent.json").string();
  const auto script = (kSource / "fixtures/scripts/hyperagent_division.json").string();
  const auto a = run_cli({"simulate", config, script, "-o", (tmp.dir / "a").string(), "--seed", "7"});
  const auto b = run_cli({"simulate", config, script, "-o", (tmp.dir / "b").string(), "--seed", "7"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(tmp.dir / "a")) logs.push_back(e.path());
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].extension() == ".jsonl");
  const std::string text = slurp(logs[0]);
  CHECK(text == slurp(tmp.dir / "b" / logs[0].filename()));
  std::istringstream in(text);
  const Episode ep = parse_episode_log(in);
  CHECK(ep.method == "hyperagent");
  CHECK(ep.metadata.at("seed") == "7");
  CHECK(ep.metadata.at("complete") == "true");
  CHECK(aggregate_episode(ep).energy_j().has_value());
}

TEST_CASE("simulate with the Librarian on a config without a navigator is an input error") {
  Scratch tmp("nonav");
  const auto r = run_cli({"simulate", (kSource / "fixtures/configs/no_navigator.json").string(),
                      (kSource / "fixtures/scripts/hyperagent_division.json").string(), "--librarian", "-o",
                      tmp.dir.string()});
  CHECK(r.code == agentjoule::cli::kExitInput);
  CHECK(r.err.find("navigation role") != std::string::npos);
}

TEST_CASE("simulate reports an incomplete episode") {
  Scratch tmp("incomplete");
  const auto script = tmp.dir / "short.json";
  std::ofstream(script) << R"({"task": {"task_id": "short", "query": "q"}, "tracks": {"planner": []}})";
  const auto r = run_cli({"simulate", (kSource / "fixtures/configs/hyperagent.json").string(), script.string(), "--fixture",
                      (kSource / "fixtures/synthetic_repo").string(), "-o", (tmp.dir / "o").string()});
  CHECK(r.code == agentjoule::cli::kExitIncomplete);
  CHECK(fs::exists(tmp.dir / "o/short.jsonl"));
}

TEST_CASE("compare halves output when the variant halves read-turn output") {
  Scratch tmp("cmp");
  for (const char* task : {"t1", "t2", "t3"}) {
    write_episode(tmp.dir / "base" / (std::string(task) + ".jsonl"), read_episode(task, "baseline", 1.0));
    write_episode(tmp.dir / "var" / (std::string(task) + ".jsonl"), read_episode(task, "variant", 0.5));
  }
  const auto r = run_cli({"compare", "--baseline", (tmp.dir / "base").string(), "--variant", (tmp.dir / "var").string(), "-o",
                      (tmp.dir / "o").string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  for (const char* f : {"methods.csv", "comparison.csv", "roles.csv", "comparison.txt"}) CHECK(fs::exists(tmp.dir / "o" / f));

  const auto rep = compare_corpora(load_episodes({tmp.dir / "base"}), load_episodes({tmp.dir / "var"}));
  CHECK(rep.baseline_output == doctest::Approx(720.0));
  const double delta_pct = 100.0 * (rep.variant_output / rep.baseline_output - 1.0);
  CHECK(std::abs(delta_pct + 50.0) <= 0.1);
  const std::string roles = slurp(tmp.dir / "o/roles.csv");
  CHECK(roles.find("navigator,600,300,-50") != std::string::npos);
  CHECK(roles.find("planner,120,60,-50") != std::string::npos);
}

TEST_CASE("compare of identical inputs reports zero change") {
  Scratch tmp("same");
  write_episode(tmp.dir / "base/t1.jsonl", read_episode("t1", "m", 1.0));
  const auto r = run_cli({"compare", "--baseline", (tmp.dir / "base").string(), "--variant", (tmp.dir / "base").string(), "-o",
                      (tmp.dir / "o").string()});
  REQUIRE(r.code == 0);
  const auto rep = compare_corpora(load_episodes({tmp.dir / "base"}), load_episodes({tmp.dir / "base"}));
  CHECK(rep.baseline_output == rep.variant_output);
  CHECK(slurp(tmp.dir / "o/roles.csv").find("navigator,600,600,0") != std::string::npos);
}

TEST_CASE("compare warns on asymmetric task sets and fails on an empty intersection") {
  Scratch tmp("asym");
  write_episode(tmp.dir / "base/t1.jsonl", read_episode("t1", "b", 1.0));
  write_episode(tmp.dir / "base/t2.jsonl", read_episode("t2", "b", 1.0));
  write_episode(tmp.dir / "var/t1.jsonl", read_episode("t1", "v", 0.5));
  write_episode(tmp.dir / "other/t9.jsonl", read_episode("t9", "v", 0.5));
  const auto r = run_cli({"compare", "--baseline", (tmp.dir / "base").string(), "--variant", (tmp.dir / "var").string(), "-o",
                      (tmp.dir / "o").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("baseline only: t2") != std::string::npos);
  const auto none = run_cli({"compare", "--baseline", (tmp.dir / "base").string(), "--variant", (tmp.dir / "other").string(),
                         "-o", (tmp.dir / "o2").string()});
  CHECK(none.code == agentjoule::cli::kExitAnalysis);
}

TEST_CASE("bad input is reported with the input exit code") {
  Scratch tmp("bad");
  std::ofstream(tmp.dir / "bad.jsonl") << "{not json\n";
  CHECK(run_cli({"attribute", (tmp.dir / "bad.jsonl").string(), "-o", (tmp.dir / "o").string()}).code == agentjoule::cli::kExitInput);
  CHECK(run_cli({"attribute", (tmp.dir / "missing.jsonl").string(), "-o", (tmp.dir / "o").string()}).code == agentjoule::cli::kExitInput);
  CHECK(run_cli({"frobnicate"}).code == agentjoule::cli::kExitInput);
  CHECK(run_cli({"synth", "-o", (tmp.dir / "s").string(), "--n", "0"}).code == agentjoule::cli::kExitInput);
  CHECK(run_cli({"compare", "--baseline", "x", "--variant", "y", "-o", (tmp.dir / "c").string(), "--edges", "5,3"}).code ==
        agentjoule::cli::kExitInput);
}
