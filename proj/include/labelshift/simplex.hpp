#pragma once

// Probability vectors, importance-weight vectors and finite-support predictor
// tables. All types validate on construction and are immutable afterwards.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace labelshift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerance on Σ entries = 1 for every simplex-valued type.
inline constexpr double kSimplexTolerance = 1e-9;

/// A point on the (k-1)-simplex.
class ProbVector {
public:
  /// Validates without modifying: throws InvalidInput on negative entries or
  /// a sum off by more than kSimplexTolerance.
  explicit ProbVector(Vector values);
  ProbVector(std::initializer_list<double> values);

  /// Construction-time renormalization: accepts sums within `tolerance` of one
  /// and rescales them onto the simplex exactly.
  static ProbVector normalized(Vector values, double tolerance);

  static ProbVector uniform(std::size_t k);
  static ProbVector one_hot(std::size_t k, std::size_t index);

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }
  const Vector& values() const { return values_; }

  /// Index of the largest entry; ties go to the lowest index.
  std::size_t argmax() const;

  /// Exact bitwise equality of every entry.
  bool identical(const ProbVector& other) const;

private:
  Vector values_;
};

/// Importance weights w(y) = p_t(y) / p_s(y), constrained to
/// W = {w >= 0 : Σ_y w_y p_s(y) = 1}.
class WeightVector {
public:
  WeightVector(Vector weights, ProbVector source_marginal);

  /// w = 1, the no-shift point.
  static WeightVector ones(const ProbVector& source_marginal);

  std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
  double operator[](std::size_t i) const { return weights_(static_cast<Eigen::Index>(i)); }
  const Vector& values() const { return weights_; }
  const ProbVector& source_marginal() const { return source_marginal_; }

private:
  Vector weights_;
  ProbVector source_marginal_;
};

/// Tolerance accepted by WeightVector for Σ w p_s = 1 and w >= 0.
inline constexpr double kWeightTolerance = 1e-9;

enum class MassKind { probability, count };

/// Finite-support predictor: distinct output vectors with probability masses
/// (a population / source table) or counts (a grouped target sample).
class PredictorTable {
public:
  struct Entry {
    ProbVector output;
    double mass;
  };

  /// Rejects negative masses, mismatched dimensions, duplicate outputs, an empty
  /// support, and (for MassKind::probability) masses not summing to one.
  PredictorTable(std::vector<Entry> entries, MassKind kind);

  /// Groups raw outputs by exact equality, one count per occurrence, preserving
  /// first-appearance order.
  static PredictorTable from_outputs(std::span<const ProbVector> outputs);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_classes() const { return entries_.front().output.size(); }
  MassKind kind() const { return kind_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  double total_mass() const;

  /// Outputs stacked as rows (size() x k).
  Matrix output_matrix() const;
  /// Masses divided by the total, so they sum to one.
  Vector normalized_masses() const;

private:
  std::vector<Entry> entries_;
  MassKind kind_;
};

/// A predictor output paired with its 0-based class label.
struct LabeledSample {
  LabeledSample(ProbVector output, std::size_t label);

  ProbVector output;
  std::size_t label;
};

/// Euclidean projection of `v` onto W. Throws InvalidInput if p_s has a zero entry.
WeightVector project_to_weight_simplex(const Vector& v, const ProbVector& source_marginal);

/// p_t(y) = w(y) p_s(y).
ProbVector weights_to_target_marginal(const WeightVector& w);

/// w(y) = p_t(y) / p_s(y); requires p_s strictly positive.
WeightVector target_marginal_to_weights(const ProbVector& target_marginal,
                                        const ProbVector& source_marginal);

/// Empirical label frequencies of a labeled sample with k classes.
ProbVector label_marginal(std::span<const LabeledSample> samples, std::size_t k);

} // namespace labelshift
