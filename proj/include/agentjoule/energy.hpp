#pragma once

// Idle-subtracted turn energy and the per-token-category energy regression
//
//   E_net = alpha + beta_u * uncached + beta_c * cached + beta_o * output + eps
//
// fitted by ordinary least squares (Householder QR, no centering, scaling or
// regularization), plus the coefficient reliability diagnostics.

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentjoule/trajectory.hpp"

namespace agentjoule {

// (counter_end - counter_start) - idle_power * duration, in mJ. May be
// negative when the counter jitters; callers flag, never clamp.
double net_energy(const EnergyReading& reading) noexcept;

inline constexpr std::array<const char*, 3> kRegressorNames{"uncached", "cached", "output"};
inline constexpr double kInfiniteVif = std::numeric_limits<double>::infinity();

struct RegressionFit {
  double alpha = 0.0;
  double beta_uncached = 0.0;
  double beta_cached = 0.0;
  double beta_output = 0.0;
  // Classical OLS standard errors: alpha, uncached, cached, output.
  std::array<double, 4> std_errors{};
  std::vector<double> residuals;  // observed - fitted, in sample order
  double r_squared = 0.0;
  double rss = 0.0;
  std::size_t sample_size = 0;
  std::size_t negative_energy_turns = 0;

  std::array<double, 3> betas() const { return {beta_uncached, beta_cached, beta_output}; }
};

struct FitDiagnostics {
  std::array<double, 3> vif{};         // kInfiniteVif under perfect collinearity
  std::array<double, 3> partial_r2{};
  std::array<double, 3> pearson_r{};
  std::size_t sample_size = 0;
};

// Regression sample drawn from turns that carry an energy reading.
struct EnergySample {
  std::vector<TokenCounts> tokens;
  std::vector<double> energy_mj;
};
EnergySample energy_sample(std::span<const TurnRecord> turns);

inline constexpr std::size_t kMinFitSamples = 5;

// Throws SampleSizeError with fewer than kMinFitSamples metered turns and
// SingularDesignError (naming the dependent columns) on a rank-deficient
// design.
RegressionFit fit_energy_model(std::span<const TurnRecord> turns);
RegressionFit fit_energy_model(const EnergySample& sample);

FitDiagnostics diagnose_fit(std::span<const TurnRecord> turns, const RegressionFit& fit);
FitDiagnostics diagnose_fit(const EnergySample& sample, const RegressionFit& fit);

struct TokenRange {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

struct SynthesisParams {
  double intercept = 0.0;
  std::array<double, 3> coefficients{30.50, 1.36, 967.0};  // mJ/token: uncached, cached, output
  // Noise standard deviation as a fraction of the expected noiseless energy.
  double noise_scale = 0.05;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  // Draw ranges sized so each category contributes a comparable share of
  // energy variance under the default coefficients, which keeps every
  // coefficient identifiable at desk-scale sample sizes.
  TokenRange uncached{0, 32000};
  TokenRange cached{0, 720000};
  TokenRange output{0, 1000};
  double idle_power_mw = 60000.0;
  double ms_per_output_token = 12.0;
  double ms_per_input_token = 0.02;
  std::string episode_id = "synthetic";
  std::string role = "synthetic";
};

// Deterministic given seed (StableRng). Counters are cumulative across turns.
Episode synthesize_turns(const SynthesisParams& params);

struct DifficultyBin {
  std::uint64_t lower = 0;
  std::optional<std::uint64_t> upper;  // exclusive; absent for the last bin
  std::vector<std::string> episode_ids;
  double mean_energy_j = 0.0;          // over episodes with complete energy
  std::size_t episodes_with_energy = 0;
  double mean_output_tokens = 0.0;
  double mean_total_tokens = 0.0;
};

struct DifficultyBinning {
  std::vector<std::uint64_t> edges;
  std::vector<DifficultyBin> bins;  // edges.size() + 1 bins
};

inline const std::vector<std::uint64_t> kDefaultDifficultyEdges{32768, 65536, 98304};

// Each episode's metadata["task_id"] is looked up in the reference map
// (reference max-input tokens); bins are lower-inclusive.
DifficultyBinning bin_by_difficulty(const std::vector<Episode>& episodes,
                                    const std::map<std::string, std::uint64_t>& reference_max_input,
                                    const std::vector<std::uint64_t>& edges = kDefaultDifficultyEdges);

std::string format_number(double v);
std::string render_fit_text(const RegressionFit& fit, const FitDiagnostics& diag);
std::string render_fit_csv(const RegressionFit& fit, const FitDiagnostics& diag);

}  // namespace agentjoule
