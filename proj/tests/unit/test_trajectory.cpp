#include <doctest.h>

#include <sstream>

#include "agentjoule/energy.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/rng.hpp"
#include "agentjoule/trajectory.hpp"

using namespace agentjoule;
using nlohmann::json;

namespace {

std::string turn_line(std::uint64_t idx, long long u, long long c, long long o) {
  json j = {{"episode_id", "e1"},
            {"turn_index", idx},
            {"role", "planner"},
            {"invocation_id", "planner#0"},
            {"tokens", {{"uncached", u}, {"cached", c}, {"output", o}}},
            {"action", {{"tool", "bash"}, {"args", {{"command", "ls"}}}}},
            {"observation_chars", 12}};
  return j.dump() + "\n";
}

TurnRecord turn(std::uint64_t idx, std::uint64_t u, std::uint64_t c, std::uint64_t o) {
  TurnRecord t;
  t.episode_id = "e";
  t.turn_index = idx;
  t.role = RoleId("r");
  t.invocation_id = "r#0";
  t.tokens = {u, c, o};
  return t;
}

}  // namespace

TEST_CASE("three well-formed lines parse into three turns") {
  std::istringstream in(turn_line(0, 10, 0, 5) + turn_line(1, 3, 7, 2) + turn_line(2, 0, 0, 1));
  const Episode ep = parse_episode_log(in);
  CHECK(ep.episode_id == "e1");
  REQUIRE(ep.turns.size() == 3);
  CHECK(ep.turns[1].tokens == TokenCounts{3, 7, 2});
  CHECK(ep.turns[0].action.args.at("command") == "ls");
  CHECK_FALSE(ep.turns[0].energy.has_value());
}

TEST_CASE("a negative token count is a parse error naming its line") {
  std::istringstream in(turn_line(0, 10, 0, 5) + turn_line(1, -3, 0, 1));
  try {
    parse_episode_log(in);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("malformed json and non-monotone indices are rejected") {
  std::istringstream bad("{\"episode_id\": \n");
  CHECK_THROWS_AS(parse_episode_log(bad), ParseError);
  std::istringstream order(turn_line(3, 1, 1, 1) + turn_line(2, 1, 1, 1));
  CHECK_THROWS_AS(parse_episode_log(order), StructuralError);
}

TEST_CASE("unknown fields survive in extra and metadata") {
  std::string header = R"({"record":"episode","episode_id":"e1","method":"m","metadata":{"task_id":"t"},"note":"x"})";
  json j = json::parse(turn_line(0, 1, 2, 3));
  j["custom"] = {{"k", 1}};
  std::istringstream in(header + "\n" + j.dump() + "\n");
  const Episode ep = parse_episode_log(in);
  CHECK(ep.method == "m");
  CHECK(ep.metadata.at("task_id") == "t");
  CHECK(ep.metadata.at("note") == "x");
  CHECK(ep.turns[0].extra.at("custom").at("k") == 1);
}

TEST_CASE("serialize then parse is the identity") {
  SynthesisParams p;
  p.n = 40;
  p.seed = 11;
  Episode ep = synthesize_turns(p);
  ep.turns[3].extra["read_range"] = {4, 9};
  ep.turns[5].energy.reset();
  ep.turns[6].action = {"bash", {{"command", "cat a.py"}}};
  std::istringstream in(serialize_episode(ep));
  CHECK(parse_episode_log(in) == ep);
}

TEST_CASE("aggregate_episode sums categories") {
  Episode empty;
  const auto z = aggregate_episode(empty);
  CHECK(z.total() == 0);
  CHECK(z.output() == 0);

  Episode ep;
  ep.turns = {turn(0, 10, 20, 5), turn(1, 0, 30, 7)};
  const auto t = aggregate_episode(ep);
  CHECK(t.uncached() == 10);
  CHECK(t.cached() == 50);
  CHECK(t.output() == 12);
  CHECK(t.total() == 72);
  CHECK_FALSE(t.energy_j().has_value());
  CHECK_FALSE(t.energy_partial());
}

TEST_CASE("aggregate_episode matches a fold over raw log lines") {
  SynthesisParams p;
  p.n = 100;
  p.seed = 5;
  const Episode ep = synthesize_turns(p);
  std::istringstream in(serialize_episode(ep));
  std::string line;
  std::uint64_t u = 0, c = 0, o = 0;
  double mj = 0;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    if (j.contains("record")) continue;
    u += j["tokens"]["uncached"].get<std::uint64_t>();
    c += j["tokens"]["cached"].get<std::uint64_t>();
    o += j["tokens"]["output"].get<std::uint64_t>();
    const auto& e = j["energy"];
    mj += e["counter_end"].get<double>() - e["counter_start"].get<double>() -
          e["idle_power_mw"].get<double>() * e["duration_ms"].get<double>() / 1000.0;
  }
  const auto t = aggregate_episode(ep);
  CHECK(t.uncached() == u);
  CHECK(t.cached() == c);
  CHECK(t.output() == o);
  CHECK(t.total() == u + c + o);
  REQUIRE(t.energy_j().has_value());
  CHECK(*t.energy_j() == doctest::Approx(mj / 1000.0).epsilon(1e-12));
}

TEST_CASE("partial energy is flagged and not reported") {
  SynthesisParams p;
  p.n = 3;
  Episode ep = synthesize_turns(p);
  ep.turns[1].energy.reset();
  const auto t = aggregate_episode(ep);
  CHECK_FALSE(t.energy_j().has_value());
  CHECK(t.energy_partial());
}

TEST_CASE("aggregation is permutation invariant and additive under concatenation") {
  StableRng rng(3);
  Episode a, b, ab;
  for (std::uint64_t i = 0; i < 30; ++i) {
    a.turns.push_back(turn(i, rng.uniform_int(0, 99), rng.uniform_int(0, 99), rng.uniform_int(0, 99)));
    b.turns.push_back(turn(i, rng.uniform_int(0, 99), rng.uniform_int(0, 99), rng.uniform_int(0, 99)));
  }
  ab.turns = a.turns;
  ab.turns.insert(ab.turns.end(), b.turns.begin(), b.turns.end());
  Episode shuffled = ab;
  std::reverse(shuffled.turns.begin(), shuffled.turns.end());
  const auto t = aggregate_episode(ab);
  const auto s = aggregate_episode(shuffled);
  CHECK(t.total() == s.total());
  CHECK(t.output() == s.output());
  CHECK(t.total() == aggregate_episode(a).total() + aggregate_episode(b).total());
  CHECK(t.cached() == aggregate_episode(a).cached() + aggregate_episode(b).cached());
}

TEST_CASE("aggregate_corpus groups by method with per-group means") {
  auto ep = [](std::string id, std::string method, double energy_mj) {
    Episode e;
    e.episode_id = std::move(id);
    e.method = std::move(method);
    TurnRecord t = turn(0, 1, 2, 3);
    t.energy = EnergyReading{0, energy_mj, 0, 1};
    e.turns = {t};
    return e;
  };
  const auto one = aggregate_corpus({ep("x", "m", 4000)}, "method");
  REQUIRE(one.size() == 1);
  CHECK(one[0].total == 6.0);
  CHECK(*one[0].energy_j == doctest::Approx(4.0));

  const auto two = aggregate_corpus({ep("a", "m", 10000), ep("b", "m", 20000)}, "method");
  CHECK(*two[0].energy_j == doctest::Approx(15.0));

  std::vector<Episode> eps;
  std::map<std::string, std::pair<double, int>> expect;
  StableRng rng(9);
  const char* methods[] = {"boad", "hyperagent", "librarian"};
  for (int i = 0; i < 50; ++i) {
    const std::string m = methods[rng.uniform_int(0, 2)];
    const double e = static_cast<double>(rng.uniform_int(1, 100000));
    eps.push_back(ep("ep" + std::to_string(i), m, e));
    expect[m].first += e / 1000.0;
    expect[m].second += 1;
  }
  const auto groups = aggregate_corpus(eps, "method");
  REQUIRE(groups.size() == expect.size());
  std::size_t i = 0;
  for (const auto& [m, acc] : expect) {
    CHECK(groups[i].group == m);
    CHECK(groups[i].episodes == static_cast<std::size_t>(acc.second));
    CHECK(*groups[i].energy_j == doctest::Approx(acc.first / acc.second).epsilon(1e-12));
    ++i;
  }
}

TEST_CASE("a missing group key names the episode") {
  Episode e;
  e.episode_id = "lonely";
  try {
    aggregate_corpus({e}, "dataset");
    FAIL("expected an error");
  } catch (const StructuralError& err) {
    CHECK(std::string(err.what()).find("lonely") != std::string::npos);
  }
}
