#pragma once

#include "labelshift/confusion.hpp"
#include "labelshift/simplex.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labelshift {

enum class Method { bbse_hard, bbse_soft, rlls, mlls_em, mlls_grad, mlls_cm };

std::string_view method_name(Method m);
/// Throws InvalidInput for unknown names.
Method parse_method(std::string_view name);

struct EstimatorConfig {
  Method method = Method::mlls_em;
  int max_iters = 10'000;
  /// Stopping threshold on the ∞-norm of the per-iteration weight change.
  double tol = 1e-8;
  double rlls_lambda = 0.01;
  bool clip_negative = false;
  /// Keep the objective value after every iteration (iterative solvers only).
  bool record_trace = false;

  void validate() const;
};

struct EstimateResult {
  /// Estimated weights. Feasible in W for every estimator except bbse without
  /// clipping, which returns the raw linear solve.
  Vector weights;
  ProbVector source_marginal;
  int iterations = 0;
  double final_objective = 0.0;
  bool converged = false;
  /// False when the solver detected a degenerate (non-identifiable) instance.
  bool identifiable = true;
  std::vector<double> objective_trace{};
  std::vector<std::string> warnings{};

  /// Throws InvalidInput if the weights are outside W.
  WeightVector weight_vector() const;
  /// p_t(y) = w_y p_s(y).
  ProbVector target_marginal() const;
};

/// Solves Ĉ w = μ̂ with partial-pivoting LU. Throws IdentifiabilityError when Ĉ is
/// singular or its reciprocal condition estimate is below 1e-12. With
/// `clip_negative`, negative entries are zeroed and the result projected onto W.
/// final_objective = ‖Ĉw - μ̂‖₂.
EstimateResult bbse(const ConfusionMatrix& confusion, const ProbVector& mu, bool clip_negative = false);

/// argmin over W of ‖Ĉw - μ̂‖² + λ‖w - 1‖².
EstimateResult rlls(const ConfusionMatrix& confusion, const ProbVector& mu, double lambda,
                    const EstimatorConfig& config = {});

/// Saerens-style EM for argmax over W of E_t[log f(x)ᵀw], started at w = 1.
EstimateResult mlls_em(const PredictorTable& target, const ProbVector& source_marginal,
                       const EstimatorConfig& config = {});

/// Projected gradient ascent on the same objective, backtracking from step 1.
EstimateResult mlls_grad(const PredictorTable& target, const ProbVector& source_marginal,
                         const EstimatorConfig& config = {});

/// MLLS on the hard-confusion row-calibrated predictor: each target output is
/// replaced by p_s(y | ŷ = argmax f(x)), then mlls_em runs on the k-point table.
EstimateResult mlls_cm(std::span<const LabeledSample> source, std::span<const ProbVector> target_outputs,
                       const ProbVector& source_marginal, const EstimatorConfig& config = {});

/// Least-squares distribution matching over W: argmin ‖J w - t‖² where
/// J(z, y) = p_s(z, y) and t(z) = p_t(z). A rank-deficient J produces a warning,
/// identifiable = false, and the minimum-norm minimizer when it is feasible.
EstimateResult distribution_match_lsq(const Matrix& joint, const Vector& target, const ProbVector& source_marginal,
                                      const EstimatorConfig& config = {});

/// ‖J w - t‖², the objective minimized by distribution_match_lsq.
double distribution_match_objective(const Matrix& joint, const Vector& target, const Vector& w);

} // namespace labelshift
