#include "agentjoule/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "agentjoule/error.hpp"
#include "agentjoule/kernels.hpp"
#include "agentjoule/linalg.hpp"
#include "agentjoule/rng.hpp"

namespace agentjoule {

double net_energy(const EnergyReading& r) noexcept {
  // mW * ms = uJ; divide by 1000 for mJ.
  return (r.counter_end - r.counter_start) - r.idle_power_mw * r.duration_ms / 1000.0;
}

EnergySample energy_sample(std::span<const TurnRecord> turns) {
  EnergySample s;
  for (const auto& t : turns) {
    if (!t.energy) continue;
    s.tokens.push_back(t.tokens);
    s.energy_mj.push_back(net_energy(*t.energy));
  }
  return s;
}

namespace {

constexpr std::array<const char*, 4> kColumnNames{"intercept", "uncached", "cached", "output"};

linalg::Matrix design_matrix(const EnergySample& s) {
  const std::size_t n = s.tokens.size();
  linalg::Matrix x(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = static_cast<double>(s.tokens[i].uncached);
    x(i, 2) = static_cast<double>(s.tokens[i].cached);
    x(i, 3) = static_cast<double>(s.tokens[i].output);
  }
  return x;
}

std::vector<double> centered(std::span<const double> v) {
  const double mean = kernels::sum(v) / static_cast<double>(v.size());
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x -= mean;
  return out;
}

}  // namespace

RegressionFit fit_energy_model(std::span<const TurnRecord> turns) { return fit_energy_model(energy_sample(turns)); }

RegressionFit fit_energy_model(const EnergySample& s) {
  const std::size_t n = s.tokens.size();
  if (n < kMinFitSamples) {
    throw SampleSizeError("energy fit needs at least " + std::to_string(kMinFitSamples) +
                          " metered turns, got " + std::to_string(n));
  }
  const linalg::Matrix x = design_matrix(s);
  const linalg::LeastSquares ls = linalg::solve_least_squares(x, s.energy_mj);
  if (!ls.dependent.empty()) {
    std::string cols;
    for (std::size_t c : ls.dependent) cols += (cols.empty() ? "" : ", ") + std::string(kColumnNames[c]);
    throw SingularDesignError("design matrix is rank-deficient; dependent column(s): " + cols);
  }

  RegressionFit fit;
  fit.alpha = ls.coefficients[0];
  fit.beta_uncached = ls.coefficients[1];
  fit.beta_cached = ls.coefficients[2];
  fit.beta_output = ls.coefficients[3];
  fit.residuals = ls.residuals;
  fit.rss = ls.rss;
  fit.sample_size = n;
  fit.negative_energy_turns =
      static_cast<std::size_t>(std::count_if(s.energy_mj.begin(), s.energy_mj.end(), [](double e) { return e < 0; }));

  const std::vector<double> yc = centered(s.energy_mj);
  const double tss = kernels::dot(yc, yc);
  if (tss > 0) {
    fit.r_squared = 1.0 - ls.rss / tss;
  } else {
    fit.r_squared = ls.rss == 0.0 ? 1.0 : 0.0;
  }

  const double dof = static_cast<double>(n) - 4.0;
  const double sigma2 = dof > 0 ? ls.rss / dof : 0.0;
  const std::vector<double> gdiag = linalg::inverse_gram_diagonal(ls);
  for (std::size_t i = 0; i < 4; ++i) fit.std_errors[ls.independent[i]] = std::sqrt(sigma2 * gdiag[i]);
  return fit;
}

namespace {

// VIF_j from regressing the centered column j on the other two centered
// columns (centering stands in for the intercept).
std::array<double, 3> variance_inflation(const EnergySample& s) {
  const linalg::Matrix x = design_matrix(s);
  const std::size_t n = s.tokens.size();
  linalg::Matrix c(n, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    auto col = centered(x.column(j + 1));
    std::copy(col.begin(), col.end(), c.column(j).begin());
  }
  std::array<double, 3> vif{};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto target = c.column(j);
    const double tss = kernels::dot(target, target);
    if (tss == 0.0) {
      vif[j] = kInfiniteVif;
      continue;
    }
    const linalg::LeastSquares aux = linalg::solve_least_squares(c.without_column(j), target);
    const double one_minus_r2 = aux.rss / tss;
    vif[j] = one_minus_r2 <= 1e-12 ? kInfiniteVif : 1.0 / one_minus_r2;
  }
  return vif;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const auto ac = centered(a);
  const auto bc = centered(b);
  const double den = std::sqrt(kernels::dot(ac, ac) * kernels::dot(bc, bc));
  return den > 0 ? kernels::dot(ac, bc) / den : 0.0;
}

}  // namespace

FitDiagnostics diagnose_fit(std::span<const TurnRecord> turns, const RegressionFit& fit) {
  return diagnose_fit(energy_sample(turns), fit);
}

FitDiagnostics diagnose_fit(const EnergySample& s, const RegressionFit& fit) {
  if (s.tokens.size() != fit.sample_size) {
    throw AnalysisError("diagnose_fit: sample size " + std::to_string(s.tokens.size()) +
                        " differs from fitted sample size " + std::to_string(fit.sample_size));
  }
  FitDiagnostics d;
  d.sample_size = fit.sample_size;
  d.vif = variance_inflation(s);

  // partial R^2_j = t_j^2 / (t_j^2 + dof): algebraically the squared
  // correlation of the residualized response and residualized regressor.
  const double dof = static_cast<double>(fit.sample_size) - 4.0;
  const auto betas = fit.betas();
  for (std::size_t j = 0; j < 3; ++j) {
    const double se = fit.std_errors[j + 1];
    if (se == 0.0) {
      d.partial_r2[j] = betas[j] != 0.0 && fit.rss == 0.0 ? 1.0 : 0.0;
    } else if (!std::isfinite(se) || dof <= 0) {
      d.partial_r2[j] = 0.0;
    } else {
      const double t = betas[j] / se;
      d.partial_r2[j] = t * t / (t * t + dof);
    }
  }

  const linalg::Matrix x = design_matrix(s);
  for (std::size_t j = 0; j < 3; ++j) d.pearson_r[j] = pearson(x.column(j + 1), s.energy_mj);
  return d;
}

Episode synthesize_turns(const SynthesisParams& p) {
  StableRng rng(p.seed);
  Episode ep;
  ep.episode_id = p.episode_id;
  ep.method = "synthetic";
  ep.metadata["seed"] = std::to_string(p.seed);
  ep.metadata["generator"] = "synthesize_turns";
  ep.metadata["noise_scale"] = format_number(p.noise_scale);
  ep.metadata["coefficients_mj_per_token"] = format_number(p.coefficients[0]) + "," +
                                            format_number(p.coefficients[1]) + "," +
                                            format_number(p.coefficients[2]);
  ep.metadata["task_id"] = p.episode_id;

  const double mean_energy = p.intercept +
                             p.coefficients[0] * 0.5 * static_cast<double>(p.uncached.lo + p.uncached.hi) +
                             p.coefficients[1] * 0.5 * static_cast<double>(p.cached.lo + p.cached.hi) +
                             p.coefficients[2] * 0.5 * static_cast<double>(p.output.lo + p.output.hi);
  const double noise_sd = p.noise_scale * mean_energy;

  double counter = 0.0;
  ep.turns.reserve(p.n);
  const RoleId role(p.role);
  for (std::size_t i = 0; i < p.n; ++i) {
    TurnRecord t;
    t.episode_id = p.episode_id;
    t.turn_index = i;
    t.role = role;
    t.invocation_id = p.role + "#0";
    t.tokens.uncached = rng.uniform_int(p.uncached.lo, p.uncached.hi);
    t.tokens.cached = rng.uniform_int(p.cached.lo, p.cached.hi);
    t.tokens.output = rng.uniform_int(p.output.lo, p.output.hi);
    const double noise = rng.normal();
    const double net = p.intercept + p.coefficients[0] * static_cast<double>(t.tokens.uncached) +
                       p.coefficients[1] * static_cast<double>(t.tokens.cached) +
                       p.coefficients[2] * static_cast<double>(t.tokens.output) + noise_sd * noise;
    EnergyReading r;
    r.duration_ms = 1000.0 + p.ms_per_output_token * static_cast<double>(t.tokens.output) +
                    p.ms_per_input_token * static_cast<double>(t.tokens.input());
    r.idle_power_mw = p.idle_power_mw;
    // The counter cannot run backwards: when the drawn net energy is more
    // negative than the idle term, raise this turn's idle reading instead.
    if (net + r.idle_power_mw * r.duration_ms / 1000.0 < 0.0) {
      r.idle_power_mw = std::ceil(-net * 1000.0 / r.duration_ms);
    }
    r.counter_start = counter;
    counter += net + r.idle_power_mw * r.duration_ms / 1000.0;
    r.counter_end = counter;
    t.energy = r;
    t.action = {"synthetic", nlohmann::json::object()};
    ep.turns.push_back(std::move(t));
  }
  return ep;
}

DifficultyBinning bin_by_difficulty(const std::vector<Episode>& episodes,
                                    const std::map<std::string, std::uint64_t>& reference,
                                    const std::vector<std::uint64_t>& edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw ConfigError("difficulty edges must be strictly increasing");
  }
  DifficultyBinning out;
  out.edges = edges;
  out.bins.resize(edges.size() + 1);
  for (std::size_t b = 0; b < out.bins.size(); ++b) {
    out.bins[b].lower = b == 0 ? 0 : edges[b - 1];
    if (b < edges.size()) out.bins[b].upper = edges[b];
  }
  struct Acc {
    double e = 0, o = 0, t = 0;
  };
  std::vector<Acc> acc(out.bins.size());
  for (const auto& ep : episodes) {
    auto tid = ep.metadata.find("task_id");
    const std::string task = tid == ep.metadata.end() ? ep.episode_id : tid->second;
    auto ref = reference.find(task);
    if (ref == reference.end()) throw StructuralError("task id '" + task + "' missing from difficulty reference");
    const std::size_t b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), ref->second) - edges.begin());
    const EpisodeTotals tot = aggregate_episode(ep);
    out.bins[b].episode_ids.push_back(ep.episode_id);
    acc[b].o += static_cast<double>(tot.output());
    acc[b].t += static_cast<double>(tot.total());
    if (tot.energy_j()) {
      acc[b].e += *tot.energy_j();
      ++out.bins[b].episodes_with_energy;
    }
  }
  for (std::size_t b = 0; b < out.bins.size(); ++b) {
    auto& bin = out.bins[b];
    const double n = static_cast<double>(bin.episode_ids.size());
    if (n > 0) {
      bin.mean_output_tokens = acc[b].o / n;
      bin.mean_total_tokens = acc[b].t / n;
    }
    if (bin.episodes_with_energy > 0) bin.mean_energy_j = acc[b].e / static_cast<double>(bin.episodes_with_energy);
  }
  return out;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

struct FitRow {
  std::string term, estimate, std_error, pearson, vif, partial;
};

std::vector<FitRow> fit_rows(const RegressionFit& fit, const FitDiagnostics& d) {
  std::vector<FitRow> rows;
  rows.push_back({"alpha", format_number(fit.alpha), format_number(fit.std_errors[0]), "", "", ""});
  const auto betas = fit.betas();
  for (std::size_t j = 0; j < 3; ++j) {
    rows.push_back({std::string("beta_") + kRegressorNames[j], format_number(betas[j]),
                    format_number(fit.std_errors[j + 1]), format_number(d.pearson_r[j]), format_number(d.vif[j]),
                    format_number(d.partial_r2[j])});
  }
  return rows;
}

}  // namespace

std::string render_fit_text(const RegressionFit& fit, const FitDiagnostics& d) {
  std::ostringstream os;
  os << "Per-token energy regression (mJ/token)\n";
  os << "n = " << fit.sample_size << "   alpha = " << format_number(fit.alpha) << " mJ   R^2 = "
     << format_number(fit.r_squared) << "\n";
  if (fit.negative_energy_turns > 0) {
    os << "note: " << fit.negative_energy_turns << " turn(s) with negative net energy kept as-is\n";
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %14s %12s %10s %10s %12s\n", "coefficient", "estimate", "std_error",
                "pearson_r", "VIF", "partial_R2");
  os << line;
  for (const auto& r : fit_rows(fit, d)) {
    std::snprintf(line, sizeof line, "%-16s %14s %12s %10s %10s %12s\n", r.term.c_str(), r.estimate.c_str(),
                  r.std_error.c_str(), r.pearson.c_str(), r.vif.c_str(), r.partial.c_str());
    os << line;
  }
  return os.str();
}

std::string render_fit_csv(const RegressionFit& fit, const FitDiagnostics& d) {
  std::ostringstream os;
  os << "term,estimate,std_error,pearson_r,vif,partial_r2\n";
  for (const auto& r : fit_rows(fit, d)) {
    os << r.term << ',' << r.estimate << ',' << r.std_error << ',' << r.pearson << ',' << r.vif << ',' << r.partial
       << '\n';
  }
  os << "r_squared," << format_number(fit.r_squared) << ",,,,\n";
  os << "n," << fit.sample_size << ",,,,\n";
  return os.str();
}

}  // namespace agentjoule
