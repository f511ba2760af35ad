#pragma once

#include "labelshift/calibration.hpp"
#include "labelshift/diagnostics.hpp"
#include "labelshift/estimators.hpp"
#include "labelshift/simulation.hpp"

#include <optional>
#include <span>
#include <vector>

namespace labelshift {

struct SourceSplit {
  std::vector<LabeledSample> calibration;
  std::vector<LabeledSample> estimation;
};

/// Seeded random permutation; the first round(fraction * n) samples go to the
/// calibration part. Both parts are non-empty for n >= 2.
SourceSplit split_source(std::span<const LabeledSample> source, double fraction, std::uint64_t seed);

/// Methods that consume calibrated probabilities (the others use the raw predictor).
bool uses_calibration(Method method);

struct PipelineOptions {
  EstimatorConfig estimator;
  bool calibrate = true;
  BctsFitOptions calibration;
  double calibration_fraction = 0.5;
  std::uint64_t seed = 0;
  bool diagnostics = true;
  double delta = 0.05;
  std::size_t calibration_bins = 20;
};

struct PipelineResult {
  EstimateResult estimate;
  std::optional<BctsFit> bcts;
  std::optional<DiagnosticsReport> diagnostics;
  std::vector<std::string> warnings;
};

/// Optional BCTS on a held-out part of the labeled source, then estimation with
/// p_s taken from the source labels, then diagnostics at the estimate.
PipelineResult estimate_pipeline(std::span<const LabeledSample> source, std::span<const ProbVector> target,
                                 const PipelineOptions& options);

struct SimulatedData {
  std::vector<LabeledSample> source;
  std::vector<ProbVector> target;
  ProbVector target_marginal;
  Vector w_star;
};

/// GMM data passed through the oracle posterior, as written by `labelshift simulate`.
SimulatedData simulate_gmm_predictions(const GmmSpec& gmm, const ShiftSpec& shift, std::size_t n_source, std::size_t m,
                                       std::uint64_t seed);

} // namespace labelshift
