#include "agentjoule/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <set>
#include <sstream>

#include "agentjoule/error.hpp"

namespace agentjoule {

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  if (!title.empty()) os << title << "\n";
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      const std::string pad(width[c] - cell.size(), ' ');
      if (c) os << "  ";
      os << (c == 0 ? cell + pad : pad + cell);
    }
    os << "\n";
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << "\n";
  for (const auto& r : rows) emit(r);
  return os.str();
}

std::string Table::to_csv() const {
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) os << (c ? "," : "") << csv_escape(cells[c]);
    os << "\n";
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return os.str();
}

std::string format_percent(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

double percent_delta(double baseline, double variant) noexcept {
  if (baseline == 0.0) return variant == 0.0 ? 0.0 : std::nan("");
  return (variant - baseline) / baseline * 100.0;
}

std::string task_id_of(const Episode& ep) {
  auto it = ep.metadata.find("task_id");
  return it == ep.metadata.end() || it->second.empty() ? ep.episode_id : it->second;
}

namespace {

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : "-"; }

struct SideMeans {
  double uncached = 0, cached = 0, output = 0, total = 0;
  std::optional<double> energy_j;
  std::map<std::string, double> role_output;
  std::map<std::string, double> role_energy_j;
  bool role_energy_complete = true;
};

SideMeans side_means(const std::vector<const Episode*>& eps) {
  SideMeans m;
  double energy = 0;
  std::size_t with_energy = 0;
  for (const Episode* ep : eps) {
    const auto t = aggregate_episode(*ep);
    m.uncached += static_cast<double>(t.uncached());
    m.cached += static_cast<double>(t.cached());
    m.output += static_cast<double>(t.output());
    m.total += static_cast<double>(t.total());
    if (t.energy_j()) {
      energy += *t.energy_j();
      ++with_energy;
    }
    for (const auto& turn : ep->turns) {
      m.role_output[turn.role.name()] += static_cast<double>(turn.tokens.output);
      if (turn.energy) m.role_energy_j[turn.role.name()] += net_energy(*turn.energy) / 1000.0;
      else m.role_energy_complete = false;
    }
  }
  const double n = static_cast<double>(eps.size());
  m.uncached /= n;
  m.cached /= n;
  m.output /= n;
  m.total /= n;
  if (with_energy > 0) m.energy_j = energy / static_cast<double>(with_energy);
  for (auto& [_, v] : m.role_output) v /= n;
  for (auto& [_, v] : m.role_energy_j) v /= n;
  return m;
}

void add_method_rows(Table& t, const std::string& side, const std::vector<GroupMean>& groups) {
  for (const auto& g : groups) {
    t.rows.push_back({side, g.group, std::to_string(g.episodes), format_number(g.uncached), format_number(g.cached),
                      format_number(g.output), format_number(g.total), opt_number(g.energy_j)});
  }
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

struct Frame {
  double width = 720, height = 420, left = 80, right = 160, top = 50, bottom = 70;
  double plot_w() const { return width - left - right; }
  double plot_h() const { return height - top - bottom; }
};

double nice_max(double v) {
  if (!(v > 0) || !std::isfinite(v)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (v <= m * mag) return m * mag;
  return 10.0 * mag;
}

std::string chart_frame(const Frame& f, const std::string& title, const std::string& y_label, double ymax,
                        const std::vector<ChartSeries>& series) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(f.width) << "\" height=\"" << fmt2(f.height)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fmt2(f.width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << svg_escape(title)
     << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ymax * i / 5.0;
    const double y = f.top + f.plot_h() - f.plot_h() * i / 5.0;
    os << "<line x1=\"" << fmt2(f.left) << "\" y1=\"" << fmt2(y) << "\" x2=\"" << fmt2(f.left + f.plot_w()) << "\" y2=\""
       << fmt2(y) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << fmt2(f.left - 6) << "\" y=\"" << fmt2(y + 4) << "\" text-anchor=\"end\">"
       << svg_escape(format_number(v)) << "</text>\n";
  }
  os << "<text transform=\"translate(18," << fmt2(f.top + f.plot_h() / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << svg_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = f.top + 10 + 20.0 * static_cast<double>(s);
    const double x = f.left + f.plot_w() + 16;
    os << "<rect x=\"" << fmt2(x) << "\" y=\"" << fmt2(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
       << kPalette[s % 6] << "\"/>\n";
    os << "<text x=\"" << fmt2(x + 18) << "\" y=\"" << fmt2(y + 1) << "\">" << svg_escape(series[s].name)
       << "</text>\n";
  }
  return os.str();
}

double series_max(const std::vector<ChartSeries>& series) {
  double m = 0;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) m = std::max(m, v);
  return nice_max(m);
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories, const std::vector<ChartSeries>& series) {
  Frame f;
  const double ymax = series_max(series);
  std::ostringstream os;
  os << chart_frame(f, title, y_label, ymax, series);
  const double group_w = f.plot_w() / static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = f.left + group_w * static_cast<double>(c);
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() && std::isfinite(series[s].values[c]) ? series[s].values[c] : 0.0;
      const double h = f.plot_h() * v / ymax;
      os << "<rect x=\"" << fmt2(gx + group_w * 0.1 + bar_w * static_cast<double>(s)) << "\" y=\""
         << fmt2(f.top + f.plot_h() - h) << "\" width=\"" << fmt2(bar_w) << "\" height=\"" << fmt2(h) << "\" fill=\""
         << kPalette[s % 6] << "\"><title>" << svg_escape(series[s].name + " " + categories[c] + ": " + format_number(v))
         << "</title></rect>\n";
    }
    os << "<text x=\"" << fmt2(gx + group_w / 2) << "\" y=\"" << fmt2(f.top + f.plot_h() + 18)
       << "\" text-anchor=\"middle\">" << svg_escape(categories[c]) << "</text>\n";
  }
  os << "<line x1=\"" << fmt2(f.left) << "\" y1=\"" << fmt2(f.top + f.plot_h()) << "\" x2=\""
     << fmt2(f.left + f.plot_w()) << "\" y2=\"" << fmt2(f.top + f.plot_h()) << "\" stroke=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string line_chart_svg(const std::string& title, const std::string& y_label,
                           const std::vector<std::string>& categories, const std::vector<ChartSeries>& series) {
  Frame f;
  const double ymax = series_max(series);
  std::ostringstream os;
  os << chart_frame(f, title, y_label, ymax, series);
  const double n = static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  auto x_at = [&](std::size_t c) { return f.left + f.plot_w() * (static_cast<double>(c) + 0.5) / n; };
  for (std::size_t c = 0; c < categories.size(); ++c) {
    os << "<text x=\"" << fmt2(x_at(c)) << "\" y=\"" << fmt2(f.top + f.plot_h() + 18) << "\" text-anchor=\"middle\">"
       << svg_escape(categories[c]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string points;
    for (std::size_t c = 0; c < categories.size() && c < series[s].values.size(); ++c) {
      const double v = series[s].values[c];
      if (!std::isfinite(v)) continue;
      const double y = f.top + f.plot_h() - f.plot_h() * v / ymax;
      if (!points.empty()) points += ' ';
      points += fmt2(x_at(c)) + "," + fmt2(y);
      os << "<circle cx=\"" << fmt2(x_at(c)) << "\" cy=\"" << fmt2(y) << "\" r=\"3.5\" fill=\"" << kPalette[s % 6]
         << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6] << "\" stroke-width=\"2\" points=\"" << points
       << "\"/>\n";
  }
  os << "<line x1=\"" << fmt2(f.left) << "\" y1=\"" << fmt2(f.top + f.plot_h()) << "\" x2=\""
     << fmt2(f.left + f.plot_w()) << "\" y2=\"" << fmt2(f.top + f.plot_h()) << "\" stroke=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

Table method_totals_table(const std::vector<GroupMean>& groups) {
  Table t{"Per-episode means by method", {"method", "episodes", "uncached", "cached", "output", "total", "energy_j"}, {}};
  for (const auto& g : groups) {
    t.rows.push_back({g.group, std::to_string(g.episodes), format_number(g.uncached), format_number(g.cached),
                      format_number(g.output), format_number(g.total), opt_number(g.energy_j)});
  }
  return t;
}

Table residual_table(const std::vector<Episode>& episodes, const RegressionFit& fit) {
  Table t{"Residuals",
          {"episode_id", "turn_index", "role", "uncached", "cached", "output", "energy_mj", "fitted_mj", "residual_mj"},
          {}};
  std::size_t i = 0;
  for (const auto& ep : episodes) {
    for (const auto& turn : ep.turns) {
      if (!turn.energy) continue;
      if (i >= fit.residuals.size()) throw StructuralError("residual count does not match the metered turns");
      const double e = net_energy(*turn.energy);
      const double r = fit.residuals[i++];
      t.rows.push_back({ep.episode_id, std::to_string(turn.turn_index), turn.role.name(),
                        std::to_string(turn.tokens.uncached), std::to_string(turn.tokens.cached),
                        std::to_string(turn.tokens.output), format_number(e), format_number(e - r), format_number(r)});
    }
  }
  return t;
}

namespace {

std::string bin_label(const DifficultyBin& b) {
  return b.upper ? "[" + std::to_string(b.lower) + ", " + std::to_string(*b.upper) + ")"
                 : ">= " + std::to_string(b.lower);
}

}  // namespace

Table difficulty_table(const DifficultyBinning& binning) {
  Table t{"Energy by difficulty (reference max-input tokens)",
          {"bin", "episodes", "mean_output_tokens", "mean_total_tokens", "mean_energy_j"},
          {}};
  for (const auto& b : binning.bins) {
    t.rows.push_back({bin_label(b), std::to_string(b.episode_ids.size()), format_number(b.mean_output_tokens),
                      format_number(b.mean_total_tokens),
                      b.episodes_with_energy ? format_number(b.mean_energy_j) : std::string("-")});
  }
  return t;
}

ComparisonReport compare_corpora(const std::vector<Episode>& baseline, const std::vector<Episode>& variant,
                                 const std::map<std::string, std::uint64_t>* reference,
                                 const std::vector<std::uint64_t>& edges) {
  if (baseline.empty() || variant.empty()) throw StructuralError("both sides of a comparison need episodes");
  std::set<std::string> a, b;
  for (const auto& e : baseline) a.insert(task_id_of(e));
  for (const auto& e : variant) b.insert(task_id_of(e));
  ComparisonReport rep;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(rep.common_tasks));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(rep.only_baseline));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(rep.only_variant));
  if (rep.common_tasks.empty()) throw AnalysisError("baseline and variant share no task ids");

  const std::set<std::string> common(rep.common_tasks.begin(), rep.common_tasks.end());
  std::vector<const Episode*> pa, pb;
  std::vector<Episode> ea, eb;
  for (const auto& e : baseline)
    if (common.contains(task_id_of(e))) {
      pa.push_back(&e);
      ea.push_back(e);
    }
  for (const auto& e : variant)
    if (common.contains(task_id_of(e))) {
      pb.push_back(&e);
      eb.push_back(e);
    }

  rep.methods = {"Per-episode means by method",
                 {"side", "method", "episodes", "uncached", "cached", "output", "total", "energy_j"},
                 {}};
  add_method_rows(rep.methods, "baseline", aggregate_corpus(ea, "method"));
  add_method_rows(rep.methods, "variant", aggregate_corpus(eb, "method"));

  const SideMeans ma = side_means(pa);
  const SideMeans mb = side_means(pb);
  rep.baseline_output = ma.output;
  rep.variant_output = mb.output;
  rep.baseline_energy_j = ma.energy_j;
  rep.variant_energy_j = mb.energy_j;

  rep.deltas = {"Per-episode means over " + std::to_string(rep.common_tasks.size()) + " common task(s)",
                {"metric", "baseline", "variant", "delta_pct"},
                {}};
  auto add = [&](const std::string& name, double x, double y) {
    rep.deltas.rows.push_back({name, format_number(x), format_number(y), format_percent(percent_delta(x, y))});
  };
  add("uncached_tokens", ma.uncached, mb.uncached);
  add("cached_tokens", ma.cached, mb.cached);
  add("output_tokens", ma.output, mb.output);
  add("total_tokens", ma.total, mb.total);
  if (ma.energy_j && mb.energy_j) add("energy_j", *ma.energy_j, *mb.energy_j);

  const bool role_energy = ma.role_energy_complete && mb.role_energy_complete;
  std::set<std::string> roles;
  for (const auto& [r, _] : ma.role_output) roles.insert(r);
  for (const auto& [r, _] : mb.role_output) roles.insert(r);
  rep.roles = {"Per-role per-episode means", {"role", "baseline_output", "variant_output", "output_delta_pct"}, {}};
  if (role_energy) {
    for (const char* h : {"baseline_energy_j", "variant_energy_j", "energy_delta_pct"}) rep.roles.header.push_back(h);
  }
  std::vector<std::string> role_names(roles.begin(), roles.end());
  ChartSeries so{"baseline", {}}, vo{"variant", {}}, se{"baseline", {}}, ve{"variant", {}};
  for (const auto& r : role_names) {
    const double xo = ma.role_output.contains(r) ? ma.role_output.at(r) : 0.0;
    const double yo = mb.role_output.contains(r) ? mb.role_output.at(r) : 0.0;
    std::vector<std::string> row = {r, format_number(xo), format_number(yo), format_percent(percent_delta(xo, yo))};
    so.values.push_back(xo);
    vo.values.push_back(yo);
    if (role_energy) {
      const double xe = ma.role_energy_j.contains(r) ? ma.role_energy_j.at(r) : 0.0;
      const double ye = mb.role_energy_j.contains(r) ? mb.role_energy_j.at(r) : 0.0;
      row.push_back(format_number(xe));
      row.push_back(format_number(ye));
      row.push_back(format_percent(percent_delta(xe, ye)));
      se.values.push_back(xe);
      ve.values.push_back(ye);
    }
    rep.roles.rows.push_back(std::move(row));
  }
  rep.charts["output_by_role.svg"] =
      bar_chart_svg("Mean output tokens per episode by role", "output tokens", role_names, {so, vo});
  if (role_energy) {
    rep.charts["energy_by_role.svg"] =
        bar_chart_svg("Mean net energy per episode by role", "energy (J)", role_names, {se, ve});
  }
  {
    std::vector<std::string> cats = {"output tokens"};
    ChartSeries x{"baseline", {ma.output}}, y{"variant", {mb.output}};
    if (ma.energy_j && mb.energy_j) {
      cats.push_back("energy (J)");
      x.values.push_back(*ma.energy_j);
      y.values.push_back(*mb.energy_j);
    }
    rep.charts["means.svg"] = bar_chart_svg("Per-episode means", "value", cats, {x, y});
  }

  if (reference) {
    const auto ba = bin_by_difficulty(ea, *reference, edges);
    const auto bb = bin_by_difficulty(eb, *reference, edges);
    Table t{"Energy by difficulty (reference max-input tokens)",
            {"bin", "baseline_episodes", "variant_episodes", "baseline_output", "variant_output", "baseline_energy_j",
             "variant_energy_j", "energy_delta_pct"},
            {}};
    std::vector<std::string> cats;
    ChartSeries la{"baseline", {}}, lb{"variant", {}};
    for (std::size_t i = 0; i < ba.bins.size(); ++i) {
      const auto& x = ba.bins[i];
      const auto& y = bb.bins[i];
      const bool ex = x.episodes_with_energy > 0, ey = y.episodes_with_energy > 0;
      t.rows.push_back({bin_label(x), std::to_string(x.episode_ids.size()), std::to_string(y.episode_ids.size()),
                        format_number(x.mean_output_tokens), format_number(y.mean_output_tokens),
                        ex ? format_number(x.mean_energy_j) : "-", ey ? format_number(y.mean_energy_j) : "-",
                        ex && ey ? format_percent(percent_delta(x.mean_energy_j, y.mean_energy_j)) : "-"});
      cats.push_back(bin_label(x));
      la.values.push_back(ex ? x.mean_energy_j : std::nan(""));
      lb.values.push_back(ey ? y.mean_energy_j : std::nan(""));
    }
    rep.difficulty = std::move(t);
    rep.charts["energy_by_difficulty.svg"] =
        line_chart_svg("Mean net energy by difficulty bin", "energy (J)", cats, {la, lb});
  }
  return rep;
}

std::map<std::string, std::uint64_t> parse_reference_csv(std::istream& in) {
  std::map<std::string, std::uint64_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected 'task_id,max_input_tokens'", lineno);
    const std::string id = line.substr(0, comma);
    const std::string num = line.substr(comma + 1);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(num, &used);
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header
      throw ParseError("bad token count '" + num + "'", lineno);
    }
    if (used != num.size()) throw ParseError("bad token count '" + num + "'", lineno);
    if (!out.emplace(id, v).second) throw ParseError("duplicate task id '" + id + "'", lineno);
  }
  return out;
}

}  // namespace agentjoule
