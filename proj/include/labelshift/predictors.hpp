#pragma once

#include "labelshift/simplex.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace labelshift {

/// Two-class Gaussian mixture: class 0 ~ N(mu, 1), class 1 ~ N(-mu, 1).
struct GmmSpec {
  double mu = 1.0;
  ProbVector source_marginal = ProbVector::uniform(2);

  void validate() const;
};

/// f(x) = [1-c, c] for x >= 0 and [c, 1-c] otherwise.
struct ThresholdPredictorSpec {
  double c = 0.5;

  void validate() const;
};

double standard_normal_pdf(double x);
double standard_normal_cdf(double x);

/// Bayes posterior p_s(y | x) of the mixture.
ProbVector gmm_bayes_predict(const GmmSpec& spec, double x);

ProbVector threshold_predict(const ThresholdPredictorSpec& spec, double x);

/// What a bin's output is replaced with.
enum class BinValue {
  label_mean,   ///< mean one-hot label of the source samples in the bin (calibrated)
  output_mean,  ///< mean predictor output of the source samples in the bin
};

/// Predictor obtained by aggregating a two-class predictor over equal-width
/// bins of its first coordinate.
class BinnedPredictor {
public:
  std::size_t num_bins() const { return bin_outputs_.size(); }

  /// Bin index of an output: floor(f_0 * n_bins), clamped to the last bin.
  std::size_t bin_of(const ProbVector& output) const;

  /// Replacement output for the bin `output` falls into; nullopt for bins that
  /// received no source mass.
  std::optional<ProbVector> apply(const ProbVector& output) const;

  /// Aggregated source table over non-empty bins (probability masses).
  const PredictorTable& table() const { return table_; }
  const std::vector<std::optional<ProbVector>>& bin_outputs() const { return bin_outputs_; }
  /// Bins that received no source samples; they are absent from table().
  const std::vector<std::size_t>& empty_bins() const { return empty_bins_; }
  /// Bin index assigned to each input sample, in input order.
  const std::vector<std::size_t>& assignments() const { return assignments_; }

private:
  friend BinnedPredictor bin_aggregate(std::span<const LabeledSample>, std::size_t, BinValue);
  BinnedPredictor(PredictorTable table, std::vector<std::optional<ProbVector>> bin_outputs,
                  std::vector<std::size_t> empty_bins, std::vector<std::size_t> assignments)
      : table_(std::move(table)), bin_outputs_(std::move(bin_outputs)),
        empty_bins_(std::move(empty_bins)), assignments_(std::move(assignments)) {}

  PredictorTable table_;
  std::vector<std::optional<ProbVector>> bin_outputs_;
  std::vector<std::size_t> empty_bins_;
  std::vector<std::size_t> assignments_;
};

/// Equal-width binning of a two-class predictor on [0, 1] by output[0].
/// Throws InvalidInput for k != 2, n_bins == 0 or an empty sample.
BinnedPredictor bin_aggregate(std::span<const LabeledSample> samples, std::size_t n_bins,
                              BinValue value = BinValue::label_mean);

/// Table from explicit (output, mass) rows; duplicate outputs are merged by
/// summing their masses. Masses summing to one give a probability table,
/// otherwise a count table.
PredictorTable tabular_predictor(std::span<const std::pair<ProbVector, double>> rows);

} // namespace labelshift
