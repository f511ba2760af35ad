#include "labelshift/predictors.hpp"

#include "labelshift/error.hpp"

#include <cmath>
#include <numbers>

namespace labelshift {

void GmmSpec::validate() const {
  if (!std::isfinite(mu)) throw InvalidInput("GMM mean must be finite");
  if (source_marginal.size() != 2) throw InvalidInput("GMM source marginal must have two classes");
}

void ThresholdPredictorSpec::validate() const {
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidInput("threshold predictor needs 0 <= c <= 1");
}

double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

ProbVector gmm_bayes_predict(const GmmSpec& spec, double x) {
  spec.validate();
  // log-odds of class 0: log(p0/p1) + log φ(x-μ) - log φ(x+μ) = log(p0/p1) + 2μx.
  const double p0 = spec.source_marginal[0];
  const double p1 = spec.source_marginal[1];
  if (p0 == 0.0) return ProbVector::one_hot(2, 1);
  if (p1 == 0.0) return ProbVector::one_hot(2, 0);
  const double logit = std::log(p0 / p1) + 2.0 * spec.mu * x;
  // Numerically stable logistic for both tails.
  double q0;
  if (logit >= 0) {
    q0 = 1.0 / (1.0 + std::exp(-logit));
  } else {
    const double e = std::exp(logit);
    q0 = e / (1.0 + e);
  }
  Vector v(2);
  v << q0, 1.0 - q0;
  return ProbVector(std::move(v));
}

ProbVector threshold_predict(const ThresholdPredictorSpec& spec, double x) {
  spec.validate();
  Vector v(2);
  if (x >= 0.0) {
    v << 1.0 - spec.c, spec.c;
  } else {
    v << spec.c, 1.0 - spec.c;
  }
  return ProbVector(std::move(v));
}

std::size_t BinnedPredictor::bin_of(const ProbVector& output) const {
  if (output.size() != 2) throw InvalidInput("binned predictor is two-class only");
  const auto n = num_bins();
  const auto idx = static_cast<std::size_t>(std::floor(output[0] * static_cast<double>(n)));
  return idx >= n ? n - 1 : idx;
}

std::optional<ProbVector> BinnedPredictor::apply(const ProbVector& output) const {
  return bin_outputs_[bin_of(output)];
}

BinnedPredictor bin_aggregate(std::span<const LabeledSample> samples, std::size_t n_bins, BinValue value) {
  if (n_bins == 0) throw InvalidInput("bin_aggregate needs at least one bin");
  if (samples.empty()) throw InvalidInput("bin_aggregate on an empty sample");
  for (const auto& s : samples) {
    if (s.output.size() != 2) throw InvalidInput("equal-width binning supports two classes only");
  }

  std::vector<Vector> sums(n_bins, Vector::Zero(2));
  std::vector<double> counts(n_bins, 0.0);
  std::vector<std::size_t> assignments;
  assignments.reserve(samples.size());
  for (const auto& s : samples) {
    auto idx = static_cast<std::size_t>(std::floor(s.output[0] * static_cast<double>(n_bins)));
    if (idx >= n_bins) idx = n_bins - 1;
    assignments.push_back(idx);
    counts[idx] += 1.0;
    if (value == BinValue::label_mean) {
      sums[idx](static_cast<Eigen::Index>(s.label)) += 1.0;
    } else {
      sums[idx] += s.output.values();
    }
  }

  const double n = static_cast<double>(samples.size());
  std::vector<std::optional<ProbVector>> bin_outputs(n_bins);
  std::vector<std::size_t> empty_bins;
  std::vector<std::pair<ProbVector, double>> rows;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0.0) {
      empty_bins.push_back(b);
      continue;
    }
    auto out = ProbVector::normalized(sums[b] / counts[b], kSimplexTolerance);
    bin_outputs[b] = out;
    rows.emplace_back(std::move(out), counts[b] / n);
  }
  // Two bins may share a mean (e.g. identical label frequencies); merge them.
  auto table = tabular_predictor(rows);
  return BinnedPredictor(std::move(table), std::move(bin_outputs), std::move(empty_bins), std::move(assignments));
}

PredictorTable tabular_predictor(std::span<const std::pair<ProbVector, double>> rows) {
  if (rows.empty()) throw InvalidInput("tabular predictor needs at least one row");
  std::vector<PredictorTable::Entry> entries;
  double total = 0.0;
  for (const auto& [out, mass] : rows) {
    total += mass;
    bool merged = false;
    for (auto& e : entries) {
      if (e.output.identical(out)) {
        e.mass += mass;
        merged = true;
        break;
      }
    }
    if (!merged) entries.push_back({out, mass});
  }
  const auto kind = std::abs(total - 1.0) <= kSimplexTolerance ? MassKind::probability : MassKind::count;
  return PredictorTable(std::move(entries), kind);
}

} // namespace labelshift
