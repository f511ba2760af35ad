#include "labelshift/confusion.hpp"

#include "labelshift/error.hpp"

#include <cmath>

namespace labelshift {

namespace {

std::size_t common_dimension(std::span<const LabeledSample> samples) {
  if (samples.empty()) throw InvalidInput("confusion matrix of an empty sample");
  const std::size_t k = samples.front().output.size();
  for (const auto& s : samples) {
    if (s.output.size() != k) throw InvalidInput("samples differ in number of classes");
  }
  return k;
}

} // namespace

ConfusionMatrix::ConfusionMatrix(Matrix joint, ConfusionKind kind)
    : joint_(std::move(joint)),
      column_marginal_(ProbVector::uniform(joint_.rows() > 0 ? static_cast<std::size_t>(joint_.rows()) : 1)),
      kind_(kind) {
  if (joint_.rows() == 0 || joint_.rows() != joint_.cols()) throw InvalidInput("confusion matrix must be square");
  if (!joint_.allFinite() || (joint_.array() < 0.0).any()) throw InvalidInput("confusion entries must be >= 0");
  if (std::abs(joint_.sum() - 1.0) > kSimplexTolerance) throw InvalidInput("confusion matrix mass must be one");
  column_marginal_ = ProbVector(joint_.colwise().sum().transpose());
}

ConfusionMatrix build_hard_confusion(std::span<const LabeledSample> samples) {
  const auto k = static_cast<Eigen::Index>(common_dimension(samples));
  Matrix counts = Matrix::Zero(k, k);
  for (const auto& s : samples) {
    counts(static_cast<Eigen::Index>(s.output.argmax()), static_cast<Eigen::Index>(s.label)) += 1.0;
  }
  return ConfusionMatrix(counts / static_cast<double>(samples.size()), ConfusionKind::hard);
}

ConfusionMatrix build_soft_confusion(std::span<const LabeledSample> samples) {
  const auto k = static_cast<Eigen::Index>(common_dimension(samples));
  Matrix acc = Matrix::Zero(k, k);
  for (const auto& s : samples) acc.col(static_cast<Eigen::Index>(s.label)) += s.output.values();
  return ConfusionMatrix(acc / static_cast<double>(samples.size()), ConfusionKind::soft);
}

ProbVector build_target_prediction_marginal(std::span<const ProbVector> target_outputs, ConfusionKind kind) {
  if (target_outputs.empty()) throw InvalidInput("target prediction marginal of an empty sample");
  const auto k = static_cast<Eigen::Index>(target_outputs.front().size());
  Vector acc = Vector::Zero(k);
  for (const auto& out : target_outputs) {
    if (static_cast<Eigen::Index>(out.size()) != k) throw InvalidInput("target outputs differ in dimension");
    if (kind == ConfusionKind::hard) {
      acc(static_cast<Eigen::Index>(out.argmax())) += 1.0;
    } else {
      acc += out.values();
    }
  }
  return ProbVector::normalized(acc / static_cast<double>(target_outputs.size()), 1e-9);
}

} // namespace labelshift
