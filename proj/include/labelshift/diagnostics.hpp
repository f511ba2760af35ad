#pragma once

// Likelihood geometry of the MLLS objective and the quantities that enter the
// finite-sample error bound: curvature floor, the τ lower bound on f(x)ᵀw,
// identifiability of the second moment, and the two bound terms.

#include "labelshift/simplex.hpp"

#include <optional>
#include <span>

namespace labelshift {

/// Mass-weighted mean of log f(x)ᵀw. Throws SupportError naming the first support
/// point with positive mass and f(x)ᵀw <= 0.
double log_likelihood(const PredictorTable& table, const Vector& w);
double log_likelihood(const PredictorTable& table, const WeightVector& w);

/// E[f(x) / f(x)ᵀw].
Vector likelihood_gradient(const PredictorTable& table, const Vector& w);
Vector likelihood_gradient(const PredictorTable& table, const WeightVector& w);

/// -E[f(x) f(x)ᵀ / (f(x)ᵀw)²]; symmetric negative semidefinite.
Matrix likelihood_hessian(const PredictorTable& table, const Vector& w);
Matrix likelihood_hessian(const PredictorTable& table, const WeightVector& w);

/// Gradient with its component along p_s removed: the first-order optimality
/// residual on the constraint Σ w_y p_s(y) = 1 for interior points.
Vector tangent_gradient(const Vector& gradient, const ProbVector& source_marginal);

/// Mass-weighted E[f fᵀ] of a table.
Matrix second_moment(const PredictorTable& table);
/// Empirical E[f fᵀ] of sample outputs.
Matrix second_moment(std::span<const ProbVector> outputs);

/// Identifiability threshold on the minimum eigenvalue of E[f fᵀ].
inline constexpr double kIdentifiabilityEigenFloor = 1e-10;

struct IdentifiabilityCheck {
  bool identifiable;
  double min_eigenvalue;
};

/// Minimum eigenvalue of E[f fᵀ] by cyclic Jacobi; identifiable iff it exceeds
/// kIdentifiabilityEigenFloor.
IdentifiabilityCheck check_identifiability(const PredictorTable& table);
IdentifiabilityCheck check_identifiability(std::span<const LabeledSample> samples);

/// min over support points with positive mass of f(x)ᵀw.
double tau_lower_bound(const PredictorTable& table, const Vector& w);

struct BoundTerms {
  /// (1/σ_c) sqrt(log(4/δ)/m): finite-sample error with a calibrated predictor.
  double term1;
  /// (1/σ_f)(sqrt(log(4/δ)/m) + E(f)‖w*‖): error from miscalibration.
  double term2;
  double total;
  /// The O(·) constant, always 1; bounds are only meaningful up to it.
  double constant = 1.0;
};

/// Evaluates the two error-bound terms with unit constants. Zero eigenvalues give
/// infinite terms. τ and n are validated but do not enter the unit-constant form.
BoundTerms compute_bound_terms(double sigma_min_c, double sigma_min_f, double tau, double calib_error,
                               double w_star_norm, std::size_t m, std::size_t n, double delta);

struct SandwichCheck {
  bool holds;
  double sigma_fw;   ///< min eigenvalue of -Hessian at w
  double sigma_f;    ///< min eigenvalue of E_t[f fᵀ]
  double ps_min;
  double tau;
  double lower;      ///< p_s,min² σ_f
  double upper;      ///< σ_f / τ²
};

/// Checks p_s,min² σ_f <= σ_{f,w} <= τ⁻² σ_f with slack 1e-8. Requires τ > 0.
SandwichCheck eigenvalue_sandwich(const PredictorTable& table, const Vector& w, const ProbVector& source_marginal);
bool eigenvalue_sandwich_check(const PredictorTable& table, const Vector& w, const ProbVector& source_marginal);

struct Example1Solution {
  double w0;       ///< population MLLS weight of class 0, unconstrained
  double error;    ///< 2|w0 - 2α|
  double formula;  ///< 4|(1-2α)(Φ(μ) - c)/(1-2c)|
};

/// Closed-form population MLLS for the two-Gaussian threshold-classifier example:
/// w0 = (2 p_t(x<=0) - 2c)/(1 - 2c), with p_t(x<=0) = α(1-Φ(μ)) + (1-α)Φ(μ).
/// Both error routes are computed; throws std::logic_error if they disagree by
/// more than 1e-12 and InvalidInput for c = 0.5 or α outside [0, 1].
Example1Solution example1_closed_form(double alpha, double c, double mu);

struct DiagnosticsReport {
  double log_likelihood = 0.0;
  Vector gradient;
  Vector tangent_gradient;
  Matrix hessian;
  double sigma_min = 0.0;
  double tau = 0.0;
  double second_moment_min_eig = 0.0;
  bool identifiable = false;
  bool hessian_nsd = false;
  bool hessian_symmetric = false;
  std::optional<double> calibration_error;
  BoundTerms bound_terms{};
};

struct DiagnosticsOptions {
  double delta = 0.05;
  /// Source-sample size n used in the bound; 0 when unknown.
  std::size_t source_size = 0;
};

/// Full report at `w` for a target table. The second moment comes from
/// `source` outputs when given (the identifiability surrogate is a source
/// quantity), from the target table otherwise.
DiagnosticsReport diagnose(const PredictorTable& target, const WeightVector& w,
                           std::span<const LabeledSample> source = {},
                           std::optional<double> calibration_error = std::nullopt,
                           const DiagnosticsOptions& options = {});

} // namespace labelshift
