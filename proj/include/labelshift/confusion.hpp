#pragma once

#include "labelshift/simplex.hpp"

#include <span>

namespace labelshift {

enum class ConfusionKind { hard, soft };

/// Joint source distribution p_s(ŷ = i, y = j) stored as joint(i, j).
class ConfusionMatrix {
public:
  /// Validates entries >= 0 and total mass one; the column marginal is derived
  /// from the column sums.
  ConfusionMatrix(Matrix joint, ConfusionKind kind);

  std::size_t num_classes() const { return static_cast<std::size_t>(joint_.rows()); }
  const Matrix& joint() const { return joint_; }
  const ProbVector& column_marginal() const { return column_marginal_; }
  /// p_s(ŷ = i).
  Vector row_marginal() const { return joint_.rowwise().sum(); }
  ConfusionKind kind() const { return kind_; }

private:
  Matrix joint_;
  ProbVector column_marginal_;
  ConfusionKind kind_;
};

/// joint(i, j) = #{argmax = i, label = j} / n; argmax ties go to the lowest index.
ConfusionMatrix build_hard_confusion(std::span<const LabeledSample> samples);

/// joint(i, j) = mean over samples of output[i] * 1{label = j}.
ConfusionMatrix build_soft_confusion(std::span<const LabeledSample> samples);

/// μ̂ = p_t(ŷ): argmax frequencies (hard) or the mean output (soft).
ProbVector build_target_prediction_marginal(std::span<const ProbVector> target_outputs, ConfusionKind kind);

} // namespace labelshift
