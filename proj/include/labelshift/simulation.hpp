#pragma once

#include "labelshift/calibration.hpp"
#include "labelshift/diagnostics.hpp"
#include "labelshift/estimators.hpp"
#include "labelshift/predictors.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace labelshift {

struct GmmPoint {
  double x;
  std::size_t label;
};

/// Labels from `marginal`, then x ~ N(+mu, 1) for class 0 and N(-mu, 1) for class 1.
std::vector<GmmPoint> sample_gmm(const GmmSpec& spec, const ProbVector& marginal, std::size_t n, std::uint64_t seed);

/// Symmetric Dirichlet(α, ..., α) draw via normalized Gamma variates.
ProbVector sample_dirichlet_shift(double alpha, std::size_t k, std::uint64_t seed);

/// Two-stage target sampling: y ~ target_marginal, then a uniformly chosen pool
/// member with label y (with replacement). Returns pool indices. Throws
/// InvalidInput when a class with positive target mass has no pool members.
std::vector<std::size_t> resample_indices_by_marginal(std::span<const std::size_t> pool_labels,
                                                      const ProbVector& target_marginal, std::size_t n,
                                                      std::uint64_t seed);

std::vector<LabeledSample> resample_by_marginal(std::span<const LabeledSample> pool, const ProbVector& target_marginal,
                                                std::size_t n, std::uint64_t seed);

struct DirichletShift {
  double alpha;
};
struct ExplicitShift {
  ProbVector target_marginal;
};
using ShiftSpec = std::variant<DirichletShift, ExplicitShift>;

/// Stable text label for CSV output, e.g. "dirichlet:0.1" or "explicit:0.99;0.01".
std::string shift_label(const ShiftSpec& shift);

/// Predictor applied to GMM inputs before estimation.
struct PredictorSpec {
  enum class Kind {
    oracle,    ///< true posterior p_s(y | x)
    tempered,  ///< oracle passed through BCTS with fixed temperature, zero biases
    binned,    ///< oracle aggregated over equal-width bins, bin value = label mean
  };
  Kind kind = Kind::oracle;
  double temperature = 1.0;
  std::size_t bins = 10;
};

struct BenchmarkConfig {
  GmmSpec gmm;
  /// Labeled source (validation) sample size: confusion matrices, binning and
  /// BCTS are fitted on it.
  std::size_t n_source = 10'000;
  std::vector<ShiftSpec> shifts;
  std::vector<Method> methods;
  std::vector<std::size_t> m_values;
  std::size_t n_trials = 100;
  std::uint64_t base_seed = 0;
  PredictorSpec predictor;
  /// Fit BCTS on the source sample and apply it before the MLLS methods.
  bool bcts_calibrate = false;
  CalibrationLoss calibration_loss = CalibrationLoss::nll;
  EstimatorConfig estimator;
  /// w* from realized target label frequencies instead of the drawn marginal.
  bool realized_w_star = false;
  /// Attach a DiagnosticsReport evaluated at w* on the MLLS target table.
  bool diagnostics = false;
  /// Worker threads; 0 reads LABELSHIFT_THREADS, defaulting to hardware concurrency.
  std::size_t threads = 0;

  void validate() const;
};

struct TrialReport {
  Method method;
  std::size_t shift_index;
  std::size_t m;
  std::size_t trial;
  std::uint64_t seed;
  ProbVector target_marginal;
  Vector w_hat;
  Vector w_star;
  double squared_error = 0.0;
  bool failed = false;
  std::string error;
  std::optional<DiagnosticsReport> diagnostics;
};

struct MseRow {
  std::string shift;
  Method method;
  std::size_t m;
  std::size_t n_trials;
  double mse;
  double stderr_mse;
};

struct BenchmarkResult {
  std::vector<TrialReport> reports;
  std::vector<MseRow> table;
};

/// Runs every (shift, m, trial) cell and each method on it. The data of a cell is
/// seeded by derive_seed(base_seed, shift, m, trial), so methods are compared on
/// identical samples and a cell replays identically in isolation. Trial failures
/// are recorded, never thrown.
BenchmarkResult run_trials(const BenchmarkConfig& config);

/// Runs a single cell; run_trials is a parallel loop over this.
std::vector<TrialReport> run_trial_cell(const BenchmarkConfig& config, std::size_t shift_index, std::size_t m_index,
                                        std::size_t trial);

/// Groups reports by (shift, method, m) in config order.
std::vector<MseRow> aggregate_mse(const BenchmarkConfig& config, std::span<const TrialReport> reports);

/// Resolved worker count: explicit value, else LABELSHIFT_THREADS, else hardware.
std::size_t resolve_threads(std::size_t requested);

} // namespace labelshift
