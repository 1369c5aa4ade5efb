#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "agentjoule/energy.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/rng.hpp"
#include "oracles/oracles.hpp"

using namespace agentjoule;

namespace {

double rel(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

EnergySample sample_of(const Episode& ep) { return energy_sample(ep.turns); }

std::vector<oracle::Column> columns(const EnergySample& s) {
  std::vector<oracle::Column> xs(3);
  for (const auto& t : s.tokens) {
    xs[0].push_back(static_cast<double>(t.uncached));
    xs[1].push_back(static_cast<double>(t.cached));
    xs[2].push_back(static_cast<double>(t.output));
  }
  return xs;
}

Episode synth(std::size_t n, std::uint64_t seed, double noise) {
  SynthesisParams p;
  p.n = n;
  p.seed = seed;
  p.noise_scale = noise;
  return synthesize_turns(p);
}

}  // namespace

TEST_CASE("net energy subtracts idle power over the call duration") {
  CHECK(net_energy({0, 100000, 50000, 1000}) == doctest::Approx(50000));
  CHECK(net_energy({5, 5 + 1234.5, 0, 777}) == doctest::Approx(1234.5));
  StableRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double s = rng.uniform() * 1e9;
    const double d = rng.uniform() * 1e6;
    const double p = rng.uniform() * 4e5;
    const double ms = rng.uniform() * 6e4;
    CHECK(net_energy({s, s + d, p, ms}) == doctest::Approx((s + d - s) - p * ms / 1000.0).epsilon(1e-12));
  }
}

TEST_CASE("net energy may be negative and is kept") {
  CHECK(net_energy({0, 10, 1000, 1000}) == doctest::Approx(-990));
}

TEST_CASE("exact linear data interpolates with zero residuals") {
  const Episode ep = synth(200, 4, 0.0);
  const auto fit = fit_energy_model(ep.turns);
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  const double scale = 967.0 * 1000;
  for (double r : fit.residuals) CHECK(std::fabs(r) <= 1e-9 * scale);
  CHECK(rel(fit.beta_uncached, 30.50) < 1e-9);
  CHECK(rel(fit.beta_cached, 1.36) < 1e-9);
  CHECK(rel(fit.beta_output, 967.0) < 1e-9);
  CHECK(std::fabs(fit.alpha) < 1e-3);
}

TEST_CASE("all-zero token counts are a singular design") {
  EnergySample s;
  for (int i = 0; i < 10; ++i) {
    s.tokens.push_back({0, 0, 0});
    s.energy_mj.push_back(i);
  }
  try {
    fit_energy_model(s);
    FAIL("expected a singularity error");
  } catch (const SingularDesignError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("uncached") != std::string::npos);
    CHECK(msg.find("output") != std::string::npos);
  }
}

TEST_CASE("too few rows is a sample-size error") {
  const Episode ep = synth(4, 1, 0.05);
  CHECK_THROWS_AS(fit_energy_model(ep.turns), SampleSizeError);
}

TEST_CASE("fit agrees with an independent normal-equation solve") {
  const Episode ep = synth(500, 21, 0.05);
  const auto s = sample_of(ep);
  const auto fit = fit_energy_model(s);
  const auto ref = oracle::ols(columns(s), s.energy_mj);
  CHECK(rel(fit.beta_uncached, ref.slopes[0]) < 1e-9);
  CHECK(rel(fit.beta_cached, ref.slopes[1]) < 1e-9);
  CHECK(rel(fit.beta_output, ref.slopes[2]) < 1e-9);
  CHECK(fit.alpha == doctest::Approx(ref.intercept).epsilon(1e-6));
  CHECK(fit.r_squared == doctest::Approx(ref.r_squared).epsilon(1e-12));
  for (std::size_t i = 0; i < s.tokens.size(); i += 37) {
    CHECK(fit.residuals[i] == doctest::Approx(ref.residuals[i]).epsilon(1e-6));
  }
}

TEST_CASE("residuals are orthogonal to every design column") {
  const Episode ep = synth(1000, 8, 0.1);
  const auto s = sample_of(ep);
  const auto fit = fit_energy_model(s);
  const auto xs = columns(s);
  double en = 0;
  for (double r : fit.residuals) en += r * r;
  en = std::sqrt(en);
  auto check = [&](const std::vector<double>& col) {
    double dot = 0, nn = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      dot += col[i] * fit.residuals[i];
      nn += col[i] * col[i];
    }
    CHECK(std::fabs(dot) <= 1e-6 * std::sqrt(nn) * en);
  };
  check(std::vector<double>(s.tokens.size(), 1.0));
  for (const auto& c : xs) check(c);
}

TEST_CASE("fit is invariant to row permutation") {
  const Episode ep = synth(300, 2, 0.05);
  auto s = sample_of(ep);
  const auto a = fit_energy_model(s);
  StableRng rng(99);
  for (std::size_t i = s.tokens.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(0, i - 1);
    std::swap(s.tokens[i - 1], s.tokens[j]);
    std::swap(s.energy_mj[i - 1], s.energy_mj[j]);
  }
  const auto b = fit_energy_model(s);
  CHECK(rel(a.beta_uncached, b.beta_uncached) < 1e-10);
  CHECK(rel(a.beta_cached, b.beta_cached) < 1e-10);
  CHECK(rel(a.beta_output, b.beta_output) < 1e-10);
  CHECK(a.r_squared == doctest::Approx(b.r_squared).epsilon(1e-12));
}

TEST_CASE("scaling energies scales coefficients and leaves diagnostics alone") {
  const Episode ep = synth(400, 13, 0.05);
  auto s = sample_of(ep);
  const auto a = fit_energy_model(s);
  const auto da = diagnose_fit(s, a);
  const double k = 3.75;
  for (auto& e : s.energy_mj) e *= k;
  const auto b = fit_energy_model(s);
  const auto db = diagnose_fit(s, b);
  CHECK(rel(b.beta_uncached, k * a.beta_uncached) < 1e-10);
  CHECK(rel(b.beta_cached, k * a.beta_cached) < 1e-10);
  CHECK(rel(b.beta_output, k * a.beta_output) < 1e-10);
  CHECK(b.alpha == doctest::Approx(k * a.alpha).epsilon(1e-6));
  for (std::size_t i = 0; i < s.tokens.size(); i += 41) CHECK(b.residuals[i] == doctest::Approx(k * a.residuals[i]).epsilon(1e-6));
  CHECK(b.r_squared == doctest::Approx(a.r_squared).epsilon(1e-12));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(db.vif[j] == doctest::Approx(da.vif[j]).epsilon(1e-12));
    CHECK(db.partial_r2[j] == doctest::Approx(da.partial_r2[j]).epsilon(1e-10));
  }
}

TEST_CASE("orthogonal mean-zero regressors have unit VIF") {
  // Columns built from a 2^3 factorial design are exactly orthogonal once centered.
  EnergySample s;
  for (int rep = 0; rep < 3; ++rep)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          s.tokens.push_back({static_cast<std::uint64_t>(10 + 10 * a), static_cast<std::uint64_t>(100 + 100 * b),
                              static_cast<std::uint64_t>(5 + 5 * c)});
          s.energy_mj.push_back(30.5 * (10 + 10 * a) + 1.36 * (100 + 100 * b) + 967 * (5 + 5 * c) + rep);
        }
  const auto fit = fit_energy_model(s);
  const auto d = diagnose_fit(s, fit);
  for (double v : d.vif) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a duplicated column yields infinite VIF sentinels") {
  EnergySample s;
  StableRng rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::uint64_t u = rng.uniform_int(0, 1000);
    s.tokens.push_back({u, u, rng.uniform_int(0, 100)});
    s.energy_mj.push_back(rng.uniform() * 1e5);
  }
  CHECK_THROWS_AS(fit_energy_model(s), SingularDesignError);
  RegressionFit placeholder;
  placeholder.sample_size = s.tokens.size();
  const auto d = diagnose_fit(s, placeholder);
  CHECK(d.vif[0] == kInfiniteVif);
  CHECK(d.vif[1] == kInfiniteVif);
  CHECK(std::isfinite(d.vif[2]));
}

TEST_CASE("partial R squared and VIF match two-stage refits") {
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    const Episode ep = synth(200, seed, 0.2);
    const auto s = sample_of(ep);
    const auto fit = fit_energy_model(s);
    const auto d = diagnose_fit(s, fit);
    const auto xs = columns(s);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(std::fabs(d.partial_r2[j] - oracle::fwl_partial_r2(xs, s.energy_mj, j)) <= 1e-9);
      CHECK(std::fabs(d.vif[j] - oracle::vif_refit(xs, j)) <= 1e-9);
      CHECK(d.vif[j] >= 1.0 - 1e-9);
      CHECK(d.partial_r2[j] >= 0.0);
      CHECK(d.partial_r2[j] <= 1.0);
      CHECK(std::fabs(d.pearson_r[j]) <= 1.0);
    }
  }
}

TEST_CASE("standard errors are the classical estimator") {
  const Episode ep = synth(300, 31, 0.1);
  const auto s = sample_of(ep);
  const auto fit = fit_energy_model(s);
  const auto xs = columns(s);
  // se_j^2 = sigma^2 / (SST_j (1 - R_j^2)) for slopes.
  const double sigma2 = fit.rss / (static_cast<double>(s.tokens.size()) - 4.0);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, sst = 0;
    for (double v : xs[j]) m += v;
    m /= static_cast<double>(xs[j].size());
    for (double v : xs[j]) sst += (v - m) * (v - m);
    const double want = std::sqrt(sigma2 * oracle::vif_refit(xs, j) / sst);
    CHECK(fit.std_errors[j + 1] == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("synthesis is deterministic and records its seed") {
  const Episode a = synth(50, 77, 0.05);
  const Episode b = synth(50, 77, 0.05);
  CHECK(serialize_episode(a) == serialize_episode(b));
  CHECK(a.metadata.at("seed") == "77");
  CHECK(serialize_episode(a) != serialize_episode(synth(50, 78, 0.05)));
  for (const auto& t : a.turns) {
    CHECK(t.tokens.uncached <= 32000);
    CHECK(t.tokens.cached <= 720000);
    CHECK(t.tokens.output <= 1000);
    CHECK(t.energy->counter_end >= t.energy->counter_start);
  }
}

TEST_CASE("recovery error shrinks with sample size") {
  auto worst = [](std::size_t n) {
    double w = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto fit = fit_energy_model(synth(n, 500 + seed, 0.05).turns);
      w = std::max({w, rel(fit.beta_uncached, 30.50), rel(fit.beta_cached, 1.36), rel(fit.beta_output, 967.0)});
    }
    return w;
  };
  CHECK(worst(10000) < worst(100));
}

TEST_CASE("recovered coefficients keep the output > uncached > cached ordering") {
  const auto fit = fit_energy_model(synth(2000, 3, 0.05).turns);
  CHECK(fit.beta_output > fit.beta_uncached);
  CHECK(fit.beta_uncached > fit.beta_cached);
  CHECK(fit.beta_cached >= 0.0);
}

TEST_CASE("difficulty bins are lower-inclusive") {
  auto ep = [](std::string task) {
    Episode e;
    e.episode_id = task;
    e.metadata["task_id"] = task;
    return e;
  };
  const auto b = bin_by_difficulty({ep("a"), ep("z")}, {{"a", 32768}, {"z", 0}});
  REQUIRE(b.bins.size() == 4);
  CHECK(b.bins[1].episode_ids == std::vector<std::string>{"a"});
  CHECK(b.bins[0].episode_ids == std::vector<std::string>{"z"});
  CHECK_FALSE(b.bins[3].upper.has_value());

  try {
    bin_by_difficulty({ep("missing")}, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
  CHECK_THROWS_AS(bin_by_difficulty({}, {}, {10, 10}), ConfigError);
}

TEST_CASE("difficulty binning partitions like brute force") {
  StableRng rng(12);
  std::vector<Episode> eps;
  std::map<std::string, std::uint64_t> ref;
  std::vector<std::vector<std::string>> want(4);
  for (int i = 0; i < 500; ++i) {
    Episode e;
    e.episode_id = "t" + std::to_string(i);
    e.metadata["task_id"] = e.episode_id;
    const std::uint64_t v = rng.uniform_int(0, 131072);
    ref[e.episode_id] = v;
    std::size_t bin = 0;
    for (std::uint64_t edge : kDefaultDifficultyEdges)
      if (v >= edge) ++bin;
    want[bin].push_back(e.episode_id);
    eps.push_back(std::move(e));
  }
  const auto b = bin_by_difficulty(eps, ref);
  for (std::size_t i = 0; i < 4; ++i) CHECK(b.bins[i].episode_ids == want[i]);
}

TEST_CASE("fit report text and csv carry the same values") {
  const Episode ep = synth(100, 1, 0.05);
  const auto fit = fit_energy_model(ep.turns);
  const auto d = diagnose_fit(ep.turns, fit);
  const std::string text = render_fit_text(fit, d);
  const std::string csv = render_fit_csv(fit, d);
  CHECK(text.find(format_number(fit.beta_output)) != std::string::npos);
  CHECK(csv.find(format_number(fit.beta_output)) != std::string::npos);
  CHECK(csv.find(format_number(d.vif[1])) != std::string::npos);
  CHECK(text.find(format_number(d.vif[1])) != std::string::npos);
}
