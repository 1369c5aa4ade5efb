#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "agentjoule/bm25.hpp"
#include "agentjoule/diff.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/librarian.hpp"
#include "agentjoule/rng.hpp"
#include "agentjoule/subprocess.hpp"
#include "oracles/oracles.hpp"

using namespace agentjoule;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ReadEvent ev(std::string file, std::uint64_t a, std::uint64_t b, std::uint64_t turn = 0) {
  ReadEvent e;
  e.file = std::move(file);
  e.range = {a, b};
  e.turn_index = turn;
  e.role = RoleId("librarian");
  e.invocation_id = "librarian#0";
  return e;
}

// One file section with hunks given as (old_start, old_count, new_start, new_count).
std::string diff_section(const std::string& path, const std::vector<std::array<int, 4>>& hunks, const std::string& tag = "") {
  std::string s = "diff --git a/" + path + " b/" + path + "\nindex 1111111..2222222 100644\n--- a/" + path +
                  "\n+++ b/" + path + "\n";
  for (const auto& h : hunks) {
    s += "@@ -" + std::to_string(h[0]) + "," + std::to_string(h[1]) + " +" + std::to_string(h[2]) + "," +
         std::to_string(h[3]) + " @@\n";
    for (int i = 0; i < h[1]; ++i) s += "-old " + std::to_string(i) + "\n";
    for (int i = 0; i < h[3]; ++i) s += "+new " + tag + std::to_string(i) + "\n";
  }
  return s;
}

std::string observation(std::size_t chars) { return std::string(chars, 'x'); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("agentjoule_lib_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("novelty scales observation size by the unseen line fraction") {
  LibrarianSession s;
  CHECK(s.novelty_chars(ev("a", 1, 10), observation(1000)) == 1000);
  CHECK(s.novelty_chars(ev("a", 1, 10), observation(1000)) == 0);
  CHECK(s.novelty_chars(ev("a", 4, 13), observation(1000)) == 300);
  CHECK(s.novelty_chars(ev("b", 4, 13), observation(50)) == 50);
}

TEST_CASE("novelty matches a per-line seen-flag oracle") {
  StableRng rng(2);
  LibrarianSession s;
  oracle::SeenLines seen;
  for (int i = 0; i < 2000; ++i) {
    const std::string f = i % 3 == 0 ? "x.py" : "y.py";
    const std::uint64_t a = rng.uniform_int(1, 300);
    const std::uint64_t b = a + rng.uniform_int(0, 40);
    const std::size_t chars = rng.uniform_int(0, 5000);
    CHECK(s.novelty_chars(ev(f, a, b), observation(chars)) == seen.novelty(f, a, b, chars));
  }
}

TEST_CASE("close_invocation keeps or prunes on the threshold") {
  LibrarianSession s;
  s.begin_invocation();
  InvocationTranscript t;
  t.novelty_chars = s.novelty_chars(ev("a", 1, 20), observation(2000));
  CHECK(s.close_invocation(t) == LibrarianSession::CloseOutcome::kept);
  CHECK(s.kept_invocations().size() == 1);

  const json before = s.to_json();
  s.begin_invocation();
  CHECK(s.close_invocation(InvocationTranscript{}) == LibrarianSession::CloseOutcome::pruned);
  CHECK(s.to_json() == before);
}

TEST_CASE("a pruned invocation rolls back its viewed lines") {
  LibrarianSession s;
  s.begin_invocation();
  InvocationTranscript t;
  t.novelty_chars += s.novelty_chars(ev("a", 1, 10), observation(150));
  t.novelty_chars += s.novelty_chars(ev("b", 1, 10), observation(150));
  CHECK(t.novelty_chars == 300);
  CHECK(s.close_invocation(t) == LibrarianSession::CloseOutcome::pruned);
  CHECK(s.viewed_lines().empty());
  oracle::SeenLines fresh;
  CHECK(s.novelty_chars(ev("a", 1, 10), observation(150)) == fresh.novelty("a", 1, 10, 150));
}

TEST_CASE("the threshold flips exactly at 500 characters") {
  for (std::uint64_t n : {499u, 500u}) {
    LibrarianSession s;
    s.begin_invocation();
    InvocationTranscript t;
    t.novelty_chars = s.novelty_chars(ev("a", 1, 5), observation(n));
    CHECK(s.close_invocation(t) ==
          (n < 500 ? LibrarianSession::CloseOutcome::pruned : LibrarianSession::CloseOutcome::kept));
  }
}

TEST_CASE("zero-context hunk headers map to post-image ranges") {
  auto single = [](std::vector<std::array<int, 4>> h) { return parse_unified_diff(diff_section("f.py", h)); };
  CHECK(single({{12, 0, 13, 4}}).at("f.py") == std::vector<LineRange>{{13, 16}});
  CHECK(single({{5, 2, 5, 0}}).at("f.py") == std::vector<LineRange>{{5, 5}});
  CHECK(single({{1, 3, 0, 0}}).at("f.py") == std::vector<LineRange>{{1, 1}});
  CHECK(single({{3, 1, 3, 1}, {4, 1, 4, 2}}).at("f.py") == std::vector<LineRange>{{3, 5}});
  CHECK(parse_unified_diff("").empty());
  CHECK_THROWS_AS(parse_unified_diff("@@ -1 +1 @@\n"), ParseError);
}

TEST_CASE("a malformed hunk header names the offending line") {
  const std::string bad = "diff --git a/f b/f\n--- a/f\n+++ b/f\n@@ -x,1 +1,1 @@\n";
  try {
    parse_unified_diff(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("@@ -x,1") != std::string::npos);
  }
}

TEST_CASE("hunk headers with omitted counts") {
  const std::string d = "--- a/g\n+++ b/g\n@@ -7 +7 @@\n-a\n+b\n";
  CHECK(parse_unified_diff(d).at("g") == std::vector<LineRange>{{7, 7}});
}

TEST_CASE("freshness report lists changed files with their ranges") {
  LibrarianSession s;
  s.mark_viewed("sliced_wcs.py", {1, 100});
  s.mark_viewed("other.py", {1, 5});
  const std::string d = diff_section("sliced_wcs.py", {{10, 6, 10, 6}, {40, 1, 40, 1}});
  const auto r = s.build_freshness_report(d);
  CHECK_FALSE(r.none_changed);
  REQUIRE(r.changed.size() == 1);
  CHECK(r.changed[0].first == "sliced_wcs.py");
  CHECK(r.changed[0].second == std::vector<LineRange>{{10, 15}, {40, 40}});
  CHECK(r.rendered.find("sliced_wcs.py: lines [10–15, 40]") != std::string::npos);
  CHECK_FALSE(s.viewed_lines().contains("sliced_wcs.py"));
  CHECK(s.viewed_lines().contains("other.py"));

  const auto again = s.build_freshness_report(d);
  CHECK(again.none_changed);
  CHECK(again.rendered.find("No file has changed") != std::string::npos);
}

TEST_CASE("a file edited then reverted is reported as reverted") {
  LibrarianSession s;
  s.build_freshness_report(diff_section("a.py", {{3, 1, 3, 1}}));
  s.mark_viewed("a.py", {1, 50});
  const auto r = s.build_freshness_report("");
  REQUIRE(r.reverted.size() == 1);
  CHECK(r.reverted[0] == "a.py");
  CHECK(r.changed.empty());
  CHECK_FALSE(s.viewed_lines().contains("a.py"));
  CHECK(s.diff_hashes().empty());
  CHECK(r.rendered.find("reverted") != std::string::npos);
}

TEST_CASE("freshness bookkeeping replays scripted diff sequences") {
  StableRng rng(8);
  const std::vector<std::string> files{"a.py", "b.py", "c.py"};
  for (int trial = 0; trial < 100; ++trial) {
    LibrarianSession s;
    std::map<std::string, std::string> hashes;  // independent bookkeeping
    for (int step = 0; step < 8; ++step) {
      std::string diff;
      std::map<std::string, std::string> now;
      for (const auto& f : files) {
        if (rng.uniform() < 0.5) continue;
        const int at = static_cast<int>(rng.uniform_int(1, 3));
        const std::string sec = diff_section(f, {{at, 1, at, 1}}, std::to_string(rng.uniform_int(0, 1)));
        diff += sec;
        now[f] = sha256_hex(sec);
      }
      for (const auto& f : files) s.mark_viewed(f, {1, 10});
      const auto r = s.build_freshness_report(diff);
      std::set<std::string> want_changed, want_reverted, got_changed(r.reverted.begin(), r.reverted.end());
      for (const auto& [f, h] : now)
        if (!hashes.contains(f) || hashes[f] != h) want_changed.insert(f);
      for (const auto& [f, _] : hashes)
        if (!now.contains(f)) want_reverted.insert(f);
      std::set<std::string> changed;
      for (const auto& [f, _] : r.changed) changed.insert(f);
      CHECK(changed == want_changed);
      CHECK(got_changed == want_reverted);
      CHECK(r.none_changed == (want_changed.empty() && want_reverted.empty()));
      for (const auto& f : want_changed) CHECK_FALSE(s.viewed_lines().contains(f));
      for (const auto& f : want_reverted) CHECK_FALSE(s.viewed_lines().contains(f));
      CHECK(s.diff_hashes() == now);
      hashes = now;
    }
  }
}

TEST_CASE("render_line_ranges uses an en dash for spans") {
  CHECK(render_line_ranges({{10, 15}, {40, 40}}) == "[10–15, 40]");
  CHECK(render_line_ranges({}) == "[]");
}

TEST_CASE("context assembly in persistent mode") {
  LibrarianSession empty;
  const auto msgs = assemble_context(empty, "where is term?", PersistentContext{}, "SYS", nullptr);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0].role == Message::Role::system);
  CHECK(msgs[1].content == "where is term?");
  CHECK_THROWS_AS(assemble_context(empty, "", PersistentContext{}, "SYS", nullptr), ConfigError);

  LibrarianSession s;
  s.begin_invocation();
  InvocationTranscript t;
  t.invocation_id = "librarian#0";
  t.query = "first";
  TranscriptTurn turn;
  turn.model_message = "looking";
  turn.action = {"c0", "str_replace_editor", {{"command", "view"}, {"path", "a.py"}}};
  turn.observation = observation(600);
  turn.read = ev("a.py", 1, 30);
  t.novelty_chars = s.novelty_chars(*turn.read, turn.observation);
  t.turns.push_back(turn);
  s.close_invocation(t);
  FreshnessReport fr = s.build_freshness_report("");
  const auto ctx = assemble_context(s, "second", PersistentContext{}, "SYS", &fr);
  REQUIRE(ctx.size() == 6);
  CHECK(ctx[1].content == "first");
  CHECK(ctx[2].tool_call->name == "str_replace_editor");
  CHECK(ctx[3].role == Message::Role::tool);
  CHECK(ctx[4].content == fr.rendered);
  CHECK(ctx[5].content == "second");
}

TEST_CASE("context assembly in sparse mode retrieves by BM25") {
  LibrarianSession s;
  s.begin_invocation();
  InvocationTranscript t;
  t.invocation_id = "librarian#0";
  t.query = "q";
  for (int i = 0; i < 20; ++i) {
    TranscriptTurn turn;
    turn.action = {"c" + std::to_string(i), "str_replace_editor",
                   {{"command", "view"}, {"path", "file" + std::to_string(i) + ".py"}}};
    turn.observation = (i == 3 || i == 11 || i == 17) ? "def tokenizer_state(): pass" : "plain filler text " + std::to_string(i);
    turn.read = ev("file" + std::to_string(i) + ".py", 1, 1000);
    t.novelty_chars += s.novelty_chars(*turn.read, std::string(100, 'y'));
    t.turns.push_back(turn);
  }
  s.close_invocation(t);
  const auto ctx = assemble_context(s, "tokenizer_state", SparseRetrievalContext{3, {}}, "SYS", nullptr);
  REQUIRE(ctx.size() == 5);
  CHECK(ctx[1].content.find("file3.py") != std::string::npos);
  CHECK(ctx[2].content.find("file11.py") != std::string::npos);
  CHECK(ctx[3].content.find("file17.py") != std::string::npos);
  const auto hits = bm25_rank(read_store(s), "tokenizer_state", 20);
  for (std::size_t i = 3; i < hits.size(); ++i) CHECK(hits[i].score < hits[2].score);
  CHECK_THROWS_AS(assemble_context(s, "x", SparseRetrievalContext{0, {}}, "SYS", nullptr), ConfigError);

  LibrarianSession one;
  one.begin_invocation();
  InvocationTranscript t1 = t;
  t1.turns.resize(1);
  one.close_invocation(t1);
  const auto c1 = assemble_context(one, "anything", SparseRetrievalContext{1, {}}, "SYS", nullptr);
  REQUIRE(c1.size() == 3);
  CHECK(c1[1].content.find("Retrieved prior file read") == 0);
}

TEST_CASE("bm25 basics") {
  CHECK(bm25_rank({}, "x", 3).empty());
  const std::vector<std::pair<std::string, std::string>> store{{"cat a", "alpha beta"}, {"cat b", "gamma unique"}, {"cat c", "beta"}};
  const auto hits = bm25_rank(store, "unique", 3);
  CHECK(hits[0].index == 1);
  CHECK(hits.size() == 3);
  CHECK(bm25_rank(store, "zzz", 3)[0].index == 0);
  CHECK_THROWS_AS(bm25_rank(store, "x", 0), ConfigError);
  CHECK(bm25_tokenize("Foo_bar.baz(9)") == std::vector<std::string>{"foo", "bar", "baz", "9"});
}

TEST_CASE("bm25 ordering equals the textbook formula") {
  StableRng rng(17);
  const std::vector<std::string> vocab{"parse", "token", "eval", "term", "factor", "number", "error", "division",
                                       "calc", "test", "read", "line", "value", "rhs", "lhs", "expr"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<std::string, std::string>> store;
    for (int d = 0; d < 50; ++d) {
      std::string obs;
      const auto len = rng.uniform_int(1, 40);
      for (std::uint64_t w = 0; w < len; ++w) obs += vocab[rng.uniform_int(0, vocab.size() - 1)] + (w % 3 ? " " : ".");
      store.emplace_back("view f" + std::to_string(d % 7), obs);
    }
    std::string q = vocab[rng.uniform_int(0, vocab.size() - 1)] + " " + vocab[rng.uniform_int(0, vocab.size() - 1)];
    const auto got = bm25_rank(store, q, 50);
    const auto want = oracle::bm25(store, q, 50);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].score == doctest::Approx(want[i].second).epsilon(1e-12));
      if (i + 1 < got.size() && want[i].second - want[i + 1].second > 1e-9) CHECK(got[i].index == want[i].first);
    }
  }
}

TEST_CASE("submissions are pointer-only") {
  const auto s = parse_submission({{"result", "term() divides"}, {"view_commands", {{"calc/evaluator.py", 37, 46}}}});
  CHECK(s.result == "term() divides");
  REQUIRE(s.view_commands.size() == 1);
  CHECK(s.view_commands[0].end == 46);
  CHECK_THROWS_AS(parse_submission({{"result", "x"}, {"excerpt", "code"}}), SubmissionError);
  CHECK_THROWS_AS(parse_submission({{"result", ""}}), SubmissionError);
  CHECK_THROWS_AS(parse_submission({{"result", "x"}, {"view_commands", {{"a", 5, 2}}}}), SubmissionError);
  CHECK_THROWS_AS(parse_submission({{"result", "x"}, {"view_commands", {{"a", 0, 2}}}}), SubmissionError);
}

TEST_CASE("expand_submission renders cat -n excerpts") {
  const fs::path root = scratch("expand");
  std::ofstream(root / "f") << "a\nb\nc";
  CHECK(render_numbered(split_lines("a\nb\nc"), 1, 2) == "     1\ta\n     2\tb\n");
  CHECK(render_numbered(split_lines("a\nb\nc"), 2, 2) == "     2\tb\n");
  Submission sub{"done", {{"f", 1, 2}}};
  CHECK(expand_submission(sub, root, "delegate_to_librarian") ==
        "[delegate_to_librarian]\nFile: f (lines 1-2)\n     1\ta\n     2\tb\n\ndone");

  Submission missing{"x", {{"nope.py", 1, 1}}};
  try {
    expand_submission(missing, root, "t");
    FAIL("expected an error");
  } catch (const SubmissionError& e) {
    CHECK(std::string(e.what()).find("[nope.py, 1, 1]") != std::string::npos);
  }
  CHECK_THROWS_AS(expand_submission(Submission{"x", {{"f", 2, 9}}}, root, "t"), SubmissionError);
  fs::remove_all(root);
}

TEST_CASE("expanded excerpts equal the system line-numbering utility") {
  const fs::path root = scratch("catn");
  std::string one, two;
  for (int i = 1; i <= 30; ++i) one += "first " + std::to_string(i) + "\n";
  for (int i = 1; i <= 12; ++i) two += "\tsecond " + std::to_string(i) + "\n";
  fs::create_directories(root / "pkg");
  std::ofstream(root / "one.py") << one;
  std::ofstream(root / "pkg/two.py") << two;
  Submission sub{"answer", {{"one.py", 3, 9}, {"pkg/two.py", 1, 12}, {"one.py", 30, 30}}};
  std::string want = "[tool]\n";
  for (const auto& vc : sub.view_commands) {
    const auto r = run_shell("cat -n " + vc.path + " | sed -n '" + std::to_string(vc.start) + "," +
                                 std::to_string(vc.end) + "p'",
                             root, std::chrono::seconds(10));
    REQUIRE(r.exit_code == 0);
    want += "File: " + vc.path + " (lines " + std::to_string(vc.start) + "-" + std::to_string(vc.end) + ")\n" + r.output + "\n";
  }
  want += "answer";
  const std::string got = expand_submission(sub, root, "tool");
  CHECK(got == want);
  CHECK(got.size() >= sub.result.size());
  fs::remove_all(root);
}

TEST_CASE("session persistence and replay reproduce the state") {
  LibrarianSession s("ep");
  for (int inv = 0; inv < 4; ++inv) {
    s.begin_invocation();
    InvocationTranscript t;
    t.invocation_id = "librarian#" + std::to_string(inv);
    t.query = "q";
    t.diff_text = inv >= 2 ? diff_section("a.py", {{5, 1, 5, 1}}, std::to_string(inv)) : "";
    s.build_freshness_report(t.diff_text);
    for (int k = 0; k < 2; ++k) {
      TranscriptTurn turn;
      turn.action = {"c", "str_replace_editor", {{"command", "view"}}};
      turn.observation = observation(400);
      turn.read = ev(k ? "a.py" : "b.py", 1 + 10 * inv, 20 + 10 * inv);
      t.novelty_chars += s.novelty_chars(*turn.read, turn.observation);
      t.reads.push_back(*turn.read);
      t.turns.push_back(turn);
    }
    s.close_invocation(t);
  }
  const auto back = LibrarianSession::from_json(s.to_json());
  CHECK(back.same_state(s));
  const auto replayed = LibrarianSession::replay("ep", s.kept_invocations());
  CHECK(replayed.viewed_lines() == s.viewed_lines());
  CHECK(replayed.diff_hashes() == s.diff_hashes());
}
