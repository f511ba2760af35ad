#include "labelshift/simplex.hpp"

#include "labelshift/error.hpp"
#include "labelshift/linalg.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>

namespace labelshift {

namespace {

void check_simplex(const Vector& v, double tolerance) {
  if (v.size() == 0) throw InvalidInput("probability vector must be non-empty");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i)) || v(i) < 0.0) {
      std::ostringstream os;
      os << "probability entry " << i << " is " << v(i) << "; entries must be finite and >= 0";
      throw InvalidInput(os.str());
    }
  }
  const double sum = v.sum();
  if (std::abs(sum - 1.0) > tolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "probability vector sums to " << sum << ", off by more than " << tolerance;
    throw InvalidInput(os.str());
  }
}

std::vector<std::uint64_t> bit_key(const ProbVector& p) {
  std::vector<std::uint64_t> key(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) key[i] = std::bit_cast<std::uint64_t>(p[i]);
  return key;
}

} // namespace

ProbVector::ProbVector(Vector values) : values_(std::move(values)) {
  check_simplex(values_, kSimplexTolerance);
}

ProbVector::ProbVector(std::initializer_list<double> values)
    : ProbVector(Eigen::Map<const Vector>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

ProbVector ProbVector::normalized(Vector values, double tolerance) {
  check_simplex(values, tolerance);
  values /= values.sum();
  return ProbVector(std::move(values));
}

ProbVector ProbVector::uniform(std::size_t k) {
  if (k == 0) throw InvalidInput("uniform: k must be positive");
  return ProbVector(Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k)));
}

ProbVector ProbVector::one_hot(std::size_t k, std::size_t index) {
  if (index >= k) throw InvalidInput("one_hot: index out of range");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(k));
  v(static_cast<Eigen::Index>(index)) = 1.0;
  return ProbVector(std::move(v));
}

std::size_t ProbVector::argmax() const {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values_.size(); ++i) {
    if (values_(i) > values_(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

bool ProbVector::identical(const ProbVector& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (std::bit_cast<std::uint64_t>((*this)[i]) != std::bit_cast<std::uint64_t>(other[i])) return false;
  }
  return true;
}

WeightVector::WeightVector(Vector weights, ProbVector source_marginal)
    : weights_(std::move(weights)), source_marginal_(std::move(source_marginal)) {
  if (weights_.size() != source_marginal_.values().size()) {
    throw InvalidInput("weight vector and source marginal differ in length");
  }
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(weights_(i)) || weights_(i) < -kWeightTolerance) {
      std::ostringstream os;
      os << "weight " << i << " is " << weights_(i) << "; weights must be >= 0";
      throw InvalidInput(os.str());
    }
  }
  const double constraint = weights_.dot(source_marginal_.values());
  if (std::abs(constraint - 1.0) > kWeightTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "weights violate sum_y w_y p_s(y) = 1 (got " << constraint << ")";
    throw InvalidInput(os.str());
  }
}

WeightVector WeightVector::ones(const ProbVector& source_marginal) {
  return WeightVector(Vector::Ones(source_marginal.values().size()), source_marginal);
}

PredictorTable::PredictorTable(std::vector<Entry> entries, MassKind kind)
    : entries_(std::move(entries)), kind_(kind) {
  if (entries_.empty()) throw InvalidInput("predictor table must have at least one support point");
  const std::size_t k = entries_.front().output.size();
  std::map<std::vector<std::uint64_t>, std::size_t> seen;
  double total = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.output.size() != k) throw InvalidInput("predictor table outputs differ in dimension");
    if (!std::isfinite(e.mass) || e.mass < 0.0) throw InvalidInput("predictor table masses must be >= 0");
    if (!seen.emplace(bit_key(e.output), i).second) {
      std::ostringstream os;
      os << "predictor table entry " << i << " duplicates an earlier output vector";
      throw InvalidInput(os.str());
    }
    total += e.mass;
  }
  if (kind_ == MassKind::probability && std::abs(total - 1.0) > kSimplexTolerance) {
    throw InvalidInput("probability masses of a predictor table must sum to one");
  }
  if (kind_ == MassKind::count && total <= 0.0) {
    throw InvalidInput("count table has zero total mass");
  }
}

PredictorTable PredictorTable::from_outputs(std::span<const ProbVector> outputs) {
  std::vector<Entry> entries;
  std::map<std::vector<std::uint64_t>, std::size_t> index;
  for (const auto& out : outputs) {
    auto [it, inserted] = index.emplace(bit_key(out), entries.size());
    if (inserted) {
      entries.push_back({out, 1.0});
    } else {
      entries[it->second].mass += 1.0;
    }
  }
  return PredictorTable(std::move(entries), MassKind::count);
}

double PredictorTable::total_mass() const {
  double total = 0.0;
  for (const auto& e : entries_) total += e.mass;
  return total;
}

Matrix PredictorTable::output_matrix() const {
  Matrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(num_classes()));
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = entries_[i].output.values().transpose();
  return m;
}

Vector PredictorTable::normalized_masses() const {
  Vector m(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) m(static_cast<Eigen::Index>(i)) = entries_[i].mass;
  return m / m.sum();
}

LabeledSample::LabeledSample(ProbVector out, std::size_t lab) : output(std::move(out)), label(lab) {
  if (label >= output.size()) {
    std::ostringstream os;
    os << "label " << label << " out of range for " << output.size() << " classes";
    throw InvalidInput(os.str());
  }
}

WeightVector project_to_weight_simplex(const Vector& v, const ProbVector& source_marginal) {
  if (v.size() != source_marginal.values().size()) throw InvalidInput("projection: dimension mismatch");
  if ((source_marginal.values().array() <= 0.0).any()) {
    throw InvalidInput("projection onto W needs a strictly positive source marginal");
  }
  return WeightVector(linalg::project_to_scaled_simplex(v, source_marginal.values()), source_marginal);
}

ProbVector weights_to_target_marginal(const WeightVector& w) {
  Vector pt = w.values().cwiseProduct(w.source_marginal().values());
  // Clamp the tiny negatives WeightVector tolerates.
  return ProbVector(pt.cwiseMax(0.0));
}

WeightVector target_marginal_to_weights(const ProbVector& target_marginal, const ProbVector& source_marginal) {
  if (target_marginal.size() != source_marginal.size()) throw InvalidInput("marginals differ in length");
  if ((source_marginal.values().array() <= 0.0).any()) {
    throw InvalidInput("weights need a strictly positive source marginal");
  }
  return WeightVector(target_marginal.values().cwiseQuotient(source_marginal.values()), source_marginal);
}

ProbVector label_marginal(std::span<const LabeledSample> samples, std::size_t k) {
  if (samples.empty()) throw InvalidInput("label marginal of an empty sample");
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(k));
  for (const auto& s : samples) {
    if (s.label >= k) throw InvalidInput("label out of range");
    counts(static_cast<Eigen::Index>(s.label)) += 1.0;
  }
  return ProbVector(counts / static_cast<double>(samples.size()));
}

} // namespace labelshift
