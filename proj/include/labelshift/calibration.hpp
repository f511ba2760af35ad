#pragma once

#include "labelshift/confusion.hpp"
#include "labelshift/simplex.hpp"

#include <span>
#include <vector>

namespace labelshift {

/// Bias-corrected temperature scaling: g_j(f) = softmax_j(log f / T + b).
struct BctsParams {
  double temperature = 1.0;
  Vector biases;

  static BctsParams identity(std::size_t k);
  void validate() const;
};

enum class CalibrationLoss { nll, mse };

struct BctsFitOptions {
  CalibrationLoss loss = CalibrationLoss::nll;
  double grad_tol = 1e-8;
  int max_iters = 10'000;
  double armijo = 1e-4;
  double shrink = 0.5;
  /// Record the loss after every accepted step.
  bool record_trace = false;
};

struct BctsFit {
  BctsParams params;
  double loss = 0.0;
  double identity_loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_trace;
};

/// Zero entries are raised to `floor` and the vector renormalized, so log is defined.
ProbVector clip_for_log(const ProbVector& p, double floor = 1e-12);

/// Throws InvalidInput if `output` has a zero entry or dimensions disagree.
ProbVector bcts_apply(const BctsParams& params, const ProbVector& output);

/// Full-batch gradient descent with Armijo backtracking on (1/T, b), started at
/// the identity. Outputs are passed through clip_for_log first. Throws
/// InvalidInput when fewer than k + 1 samples are given or only one class occurs.
/// Non-convergence is reported in the result, not thrown.
BctsFit bcts_fit(std::span<const LabeledSample> validation, const BctsFitOptions& options = {});

/// Mean calibration loss of `params` on `samples`.
double bcts_loss(const BctsParams& params, std::span<const LabeledSample> samples, CalibrationLoss loss);

/// Hard prediction i ↦ row-normalized p_s(y | ŷ = i), mass p_s(ŷ = i). Entry i of
/// the returned table corresponds to hard prediction i. Throws InvalidInput
/// naming the first zero-mass row, and IdentifiabilityError when two rows
/// normalize to the same vector.
PredictorTable confusion_row_calibrate(const ConfusionMatrix& confusion);

struct CalibrationGroup {
  ProbVector output;
  Vector label_mean;
  double mass;
};

struct CalibrationReport {
  /// sqrt(E ||f - f_c||^2), with f_c the per-group empirical label mean.
  double calibration_error = 0.0;
  std::vector<CalibrationGroup> groups;
};

/// Groups samples by exact output vector; valid for finite-support predictors.
CalibrationReport estimate_calibration_error(std::span<const LabeledSample> samples);

/// Two-class estimate for continuous predictors: samples are grouped into
/// equal-width bins of output[0]; each bin compares its mean output with its
/// mean label.
CalibrationReport estimate_binned_calibration_error(std::span<const LabeledSample> samples, std::size_t n_bins);

} // namespace labelshift
