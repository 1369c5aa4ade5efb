#include "agentjoule/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "agentjoule/energy.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/gateway.hpp"
#include "agentjoule/read_ledger.hpp"
#include "agentjoule/report.hpp"
#include "agentjoule/runtime.hpp"
#include "agentjoule/trajectory.hpp"
#include "agentjoule/workspace.hpp"

namespace agentjoule::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Episode finished but incomplete; the log was still written.
class IncompleteEpisode : public Error {
 public:
  using Error::Error;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << text;
}

fs::path prepare_output(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--output is required");
  fs::create_directories(dir);
  return dir;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out.empty() ? "unnamed" : out;
}

std::vector<std::uint64_t> parse_edges(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad --edges value '" + item + "'");
    }
    if (used != item.size()) throw ConfigError("bad --edges value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--edges needs at least one value");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i] <= out[i - 1]) throw ConfigError("--edges must be strictly increasing");
  return out;
}

void cmd_attribute(const std::vector<std::string>& inputs, const std::string& output, std::ostream& out) {
  const auto dir = prepare_output(output);
  const auto episodes = load_episodes(to_paths(inputs));
  std::vector<TurnRecord> turns;
  for (const auto& ep : episodes) turns.insert(turns.end(), ep.turns.begin(), ep.turns.end());
  const auto sample = energy_sample(turns);
  if (sample.tokens.empty()) throw AnalysisError("no meterable turns: no turn carries an energy reading");
  const auto fit = fit_energy_model(sample);
  const auto diag = diagnose_fit(sample, fit);
  const std::string text = render_fit_text(fit, diag);
  write_text(dir / "fit.txt", text);
  write_text(dir / "fit.csv", render_fit_csv(fit, diag));
  write_text(dir / "residuals.csv", residual_table(episodes, fit).to_csv());
  const auto methods = method_totals_table(aggregate_corpus(episodes, "method"));
  write_text(dir / "methods.txt", methods.to_text());
  write_text(dir / "methods.csv", methods.to_csv());
  out << text;
}

void cmd_dup_report(const std::vector<std::string>& inputs, const std::string& output, std::ostream& out) {
  const auto dir = prepare_output(output);
  const auto episodes = load_episodes(to_paths(inputs));
  std::map<std::string, DuplicationCounts> by_method;
  for (const auto& ep : episodes) by_method[ep.method].merge(duplication_counts(ep));
  std::string all;
  for (const auto& [method, counts] : by_method) {
    const auto m = duplication_matrix(counts);
    const std::string text = render_duplication_text(m, method);
    all += text + "\n";
    write_text(dir / ("duplication_" + file_safe(method) + ".csv"), render_duplication_csv(m));
  }
  if (by_method.empty()) all = "no episodes\n";
  write_text(dir / "duplication.txt", all);
  out << all;
}

struct SimulateOptions {
  std::string config;
  std::string script;
  std::string output;
  std::string fixture;
  std::string mode = "persistent";
  bool librarian = false;
  bool caveman = false;
  std::uint64_t seed = 0;
};

fs::path make_temp_dir() {
  std::string tmpl = (fs::temp_directory_path() / "agentjoule-ws-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw Error("cannot create a temporary workspace");
  return tmpl;
}

void cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const auto dir = prepare_output(o.output);
  MasConfig mas = MasConfig::from_file(o.config);
  if (o.librarian) {
    mas = integrate_librarian(mas);
    mas.method += "+librarian";
  }
  mas = apply_context_mode(mas, o.mode);
  if (o.mode != "persistent") mas.method += "+" + o.mode;
  if (o.caveman) {
    mas.caveman = true;
    mas.method += "+caveman";
  }

  std::ifstream in(o.script);
  if (!in) throw ConfigError("cannot open script '" + o.script + "'");
  json script = json::parse(in, nullptr, false);
  if (script.is_discarded()) throw ParseError("script '" + o.script + "' is not valid JSON");
  if (!script.contains("task") || !script.at("task").is_object()) throw ConfigError("script has no 'task' object");
  Task task;
  task.task_id = script.at("task").value("task_id", std::string{});
  task.query = script.at("task").value("query", std::string{});
  task.episode_id = task.task_id;
  fs::path fixture = o.fixture;
  if (fixture.empty()) {
    if (!script.contains("fixture")) throw ConfigError("no fixture given (--fixture or script 'fixture')");
    fixture = fs::path(o.script).parent_path() / script.at("fixture").get<std::string>();
  }

  auto backend = std::make_shared<ScriptedBackend>(script);
  auto meter = std::make_shared<MockLinearMeter>();
  auto clock = std::make_shared<SimulatedClock>();
  Gateway gateway(backend, meter, clock);

  const fs::path tmp = make_temp_dir();
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{tmp};
  Workspace ws = Workspace::create_from_fixture(fixture, tmp / "repo");
  Episode ep = run_episode(mas, task, gateway, ws);
  ep.metadata["seed"] = std::to_string(o.seed);

  const fs::path log = dir / (file_safe(ep.episode_id) + ".jsonl");
  write_text(log, serialize_episode(ep));
  const auto totals = aggregate_episode(ep);
  out << "episode " << ep.episode_id << " (" << ep.method << "): " << ep.turns.size() << " turns, " << totals.output()
      << " output tokens";
  if (totals.energy_j()) out << ", " << format_number(*totals.energy_j()) << " J";
  out << "\nlog: " << log.string() << "\n";
  if (ep.metadata["complete"] != "true") {
    throw IncompleteEpisode("episode incomplete: " + ep.metadata["error"]);
  }
}

void cmd_compare(const std::vector<std::string>& base, const std::vector<std::string>& variant,
                 const std::string& output, const std::string& reference, const std::string& edges, std::ostream& out,
                 std::ostream& err) {
  const auto dir = prepare_output(output);
  const auto a = load_episodes(to_paths(base));
  const auto b = load_episodes(to_paths(variant));
  std::optional<std::map<std::string, std::uint64_t>> ref;
  if (!reference.empty()) {
    std::ifstream in(reference);
    if (!in) throw ConfigError("cannot open reference '" + reference + "'");
    ref = parse_reference_csv(in);
  }
  const auto rep = compare_corpora(a, b, ref ? &*ref : nullptr, parse_edges(edges));
  std::string text;
  if (!rep.only_baseline.empty() || !rep.only_variant.empty()) {
    std::string w = "warning: task ids not present on both sides; comparing over the intersection\n";
    for (const auto& t : rep.only_baseline) w += "  baseline only: " + t + "\n";
    for (const auto& t : rep.only_variant) w += "  variant only: " + t + "\n";
    err << w;
    text += w + "\n";
  }
  text += rep.methods.to_text() + "\n" + rep.deltas.to_text() + "\n" + rep.roles.to_text();
  write_text(dir / "methods.csv", rep.methods.to_csv());
  write_text(dir / "comparison.csv", rep.deltas.to_csv());
  write_text(dir / "roles.csv", rep.roles.to_csv());
  if (rep.difficulty) {
    text += "\n" + rep.difficulty->to_text();
    write_text(dir / "difficulty.csv", rep.difficulty->to_csv());
  }
  for (const auto& [name, svg] : rep.charts) write_text(dir / name, svg);
  write_text(dir / "comparison.txt", text);
  out << text;
}

void cmd_synth(const std::string& output, std::size_t n, std::uint64_t seed, double noise, std::ostream& out) {
  const auto dir = prepare_output(output);
  SynthesisParams p;
  p.n = n;
  p.seed = seed;
  p.noise_scale = noise;
  const Episode ep = synthesize_turns(p);
  const fs::path log = dir / (file_safe(ep.episode_id) + ".jsonl");
  write_text(log, serialize_episode(ep));
  out << "wrote " << ep.turns.size() << " synthetic turns to " << log.string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory energy attribution and Librarian simulation toolkit", "agentjoule"};
  app.require_subcommand(1);

  std::string output;
  std::vector<std::string> inputs;

  auto* attribute = app.add_subcommand("attribute", "Fit the per-token energy regression over episode logs");
  attribute->add_option("logs", inputs, "Log files or directories")->required();
  attribute->add_option("--output,-o", output, "Output directory")->required();

  auto* dup = app.add_subcommand("dup-report", "Per-method output duplication matrices");
  dup->add_option("logs", inputs, "Log files or directories")->required();
  dup->add_option("--output,-o", output, "Output directory")->required();

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run a scripted episode with the mock linear meter");
  simulate->add_option("config", sim.config, "MAS config file")->required();
  simulate->add_option("script", sim.script, "Scripted model file")->required();
  simulate->add_option("--output,-o", sim.output, "Output directory")->required();
  simulate->add_option("--fixture", sim.fixture, "Repository fixture (default: the script's 'fixture')");
  simulate->add_option("--mode", sim.mode, "Context mode: persistent|sparse|last-n")
      ->check(CLI::IsMember({"persistent", "sparse", "last-n"}));
  simulate->add_flag("--librarian", sim.librarian, "Integrate the Librarian first");
  simulate->add_flag("--caveman", sim.caveman, "Append the terse style directive to every role");
  simulate->add_option("--seed", sim.seed, "Seed recorded in the episode metadata");

  std::vector<std::string> base, variant;
  std::string reference, edges = "32768,65536,98304";
  auto* compare = app.add_subcommand("compare", "Compare baseline and variant episode logs");
  compare->add_option("--baseline", base, "Baseline logs")->required();
  compare->add_option("--variant", variant, "Variant logs")->required();
  compare->add_option("--output,-o", output, "Output directory")->required();
  compare->add_option("--reference", reference, "CSV of task id, reference max-input tokens");
  compare->add_option("--edges", edges, "Difficulty bin edges");

  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double noise = 0.05;
  auto* synth = app.add_subcommand("synth", "Write a synthetic metered log");
  synth->add_option("--output,-o", output, "Output directory")->required();
  synth->add_option("--n", n, "Number of turns")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--noise", noise, "Noise sd as a fraction of mean energy")->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*attribute) cmd_attribute(inputs, output, out);
    else if (*dup) cmd_dup_report(inputs, output, out);
    else if (*simulate) cmd_simulate(sim, out);
    else if (*compare) cmd_compare(base, variant, output, reference, edges, out, err);
    else if (*synth) cmd_synth(output, n, seed, noise, out);
  } catch (const IncompleteEpisode& e) {
    err << "error: " << e.what() << "\n";
    return kExitIncomplete;
  } catch (const AnalysisError& e) {
    err << "error: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace agentjoule::cli
