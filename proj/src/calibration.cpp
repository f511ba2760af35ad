#include "labelshift/calibration.hpp"

#include "labelshift/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>

namespace labelshift {

namespace {

// Parameters packed as theta = [1/T, b_0, ..., b_{k-1}].
Vector pack(const BctsParams& p) {
  Vector theta(p.biases.size() + 1);
  theta(0) = 1.0 / p.temperature;
  theta.tail(p.biases.size()) = p.biases;
  return theta;
}

BctsParams unpack(const Vector& theta) {
  return BctsParams{1.0 / theta(0), theta.tail(theta.size() - 1)};
}

Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

struct LossGrad {
  double loss;
  Vector grad;
};

// Mean loss and gradient over pre-computed log-outputs.
LossGrad loss_and_grad(const Vector& theta, const std::vector<Vector>& logs,
                       std::span<const LabeledSample> samples, CalibrationLoss loss) {
  const Eigen::Index k = theta.size() - 1;
  LossGrad out{0.0, Vector::Zero(theta.size())};
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const Vector z = theta(0) * logs[i] + theta.tail(k);
    const Vector g = softmax(z);
    const auto y = static_cast<Eigen::Index>(samples[i].label);
    Vector dz;
    if (loss == CalibrationLoss::nll) {
      const double zmax = z.maxCoeff();
      const double lse = zmax + std::log((z.array() - zmax).exp().sum());
      out.loss += lse - z(y);
      dz = g;
      dz(y) -= 1.0;
    } else {
      Vector d = g;
      d(y) -= 1.0;
      out.loss += d.squaredNorm();
      d *= 2.0;
      dz = (g.array() * (d.array() - g.dot(d))).matrix();
    }
    out.grad(0) += dz.dot(logs[i]);
    out.grad.tail(k) += dz;
  }
  const double n = static_cast<double>(logs.size());
  out.loss /= n;
  out.grad /= n;
  return out;
}

std::vector<Vector> log_outputs(std::span<const LabeledSample> samples) {
  std::vector<Vector> logs;
  logs.reserve(samples.size());
  for (const auto& s : samples) logs.push_back(clip_for_log(s.output).values().array().log().matrix());
  return logs;
}

} // namespace

BctsParams BctsParams::identity(std::size_t k) {
  return BctsParams{1.0, Vector::Zero(static_cast<Eigen::Index>(k))};
}

void BctsParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidInput("BCTS temperature must be positive");
  if (biases.size() == 0 || !biases.allFinite()) throw InvalidInput("BCTS biases must be finite and non-empty");
}

ProbVector clip_for_log(const ProbVector& p, double floor) {
  Vector v = p.values().cwiseMax(floor);
  return ProbVector(v / v.sum());
}

ProbVector bcts_apply(const BctsParams& params, const ProbVector& output) {
  params.validate();
  if (output.size() != static_cast<std::size_t>(params.biases.size())) {
    throw InvalidInput("BCTS parameters and output differ in number of classes");
  }
  if ((output.values().array() <= 0.0).any()) {
    throw InvalidInput("BCTS needs strictly positive outputs; clip zero entries first");
  }
  const Vector z = output.values().array().log().matrix() / params.temperature + params.biases;
  return ProbVector::normalized(softmax(z), kSimplexTolerance);
}

double bcts_loss(const BctsParams& params, std::span<const LabeledSample> samples, CalibrationLoss loss) {
  if (samples.empty()) throw InvalidInput("calibration loss of an empty sample");
  return loss_and_grad(pack(params), log_outputs(samples), samples, loss).loss;
}

BctsFit bcts_fit(std::span<const LabeledSample> validation, const BctsFitOptions& options) {
  if (validation.empty()) throw InvalidInput("BCTS fit needs validation samples");
  const std::size_t k = validation.front().output.size();
  if (validation.size() < k + 1) {
    std::ostringstream os;
    os << "BCTS fit needs at least " << k + 1 << " samples, got " << validation.size();
    throw InvalidInput(os.str());
  }
  std::vector<bool> present(k, false);
  for (const auto& s : validation) {
    if (s.output.size() != k) throw InvalidInput("validation outputs differ in number of classes");
    present[s.label] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw InvalidInput("BCTS fit rejects a single-class validation set");
  }

  const auto logs = log_outputs(validation);
  Vector theta = pack(BctsParams::identity(k));
  LossGrad cur = loss_and_grad(theta, logs, validation, options.loss);

  BctsFit fit;
  fit.identity_loss = cur.loss;
  if (options.record_trace) fit.loss_trace.push_back(cur.loss);

  double step = 1.0;
  Vector prev_theta, prev_grad;
  bool have_prev = false;
  int it = 0;
  for (; it < options.max_iters; ++it) {
    const double gnorm = cur.grad.norm();
    if (gnorm < options.grad_tol) {
      fit.converged = true;
      break;
    }
    // Backtracking from a Barzilai-Borwein step (doubling the last step when the
    // curvature estimate is unusable).
    if (have_prev) {
      const Vector ds = theta - prev_theta;
      const Vector dg = cur.grad - prev_grad;
      const double sy = ds.dot(dg);
      step = sy > 0.0 ? ds.squaredNorm() / sy : step * 2.0;
    }
    step = std::clamp(step, 1e-12, 1e6);
    bool accepted = false;
    while (step > 1e-20) {
      Vector trial = theta - step * cur.grad;
      if (trial(0) > 0.0) {
        LossGrad next = loss_and_grad(trial, logs, validation, options.loss);
        if (next.loss <= cur.loss - options.armijo * step * gnorm * gnorm) {
          prev_theta = theta;
          prev_grad = cur.grad;
          have_prev = true;
          theta = std::move(trial);
          cur = std::move(next);
          accepted = true;
          break;
        }
      }
      step *= options.shrink;
    }
    if (options.record_trace && accepted) fit.loss_trace.push_back(cur.loss);
    if (!accepted) {
      // No descent possible at machine precision; treat as stationary.
      fit.converged = gnorm < std::sqrt(options.grad_tol);
      ++it;
      break;
    }
  }
  fit.params = unpack(theta);
  fit.loss = cur.loss;
  fit.grad_norm = cur.grad.norm();
  fit.iterations = it;
  if (!fit.converged && fit.grad_norm < options.grad_tol) fit.converged = true;
  return fit;
}

PredictorTable confusion_row_calibrate(const ConfusionMatrix& confusion) {
  const Matrix& joint = confusion.joint();
  std::vector<PredictorTable::Entry> entries;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    const double mass = joint.row(i).sum();
    if (mass <= 0.0) {
      std::ostringstream os;
      os << "confusion row " << i << " has zero mass: hard prediction " << i << " is never made on the source";
      throw InvalidInput(os.str());
    }
    ProbVector row = ProbVector::normalized(joint.row(i).transpose() / mass, kSimplexTolerance);
    for (const auto& e : entries) {
      if (e.output.identical(row)) {
        throw IdentifiabilityError("confusion rows normalize to identical vectors; hard predictions are not identifiable");
      }
    }
    entries.push_back({std::move(row), mass});
  }
  return PredictorTable(std::move(entries), MassKind::probability);
}

namespace {

CalibrationReport finish_report(std::vector<CalibrationGroup> groups, std::size_t n) {
  CalibrationReport report;
  double err2 = 0.0;
  for (auto& g : groups) {
    g.label_mean /= g.mass;  // mass still holds the count here
    err2 += g.mass * (g.output.values() - g.label_mean).squaredNorm();
    g.mass /= static_cast<double>(n);
  }
  report.calibration_error = std::sqrt(err2 / static_cast<double>(n));
  report.groups = std::move(groups);
  return report;
}

} // namespace

CalibrationReport estimate_calibration_error(std::span<const LabeledSample> samples) {
  if (samples.empty()) throw InvalidInput("calibration error of an empty sample");
  std::map<std::vector<std::uint64_t>, std::size_t> index;
  std::vector<CalibrationGroup> groups;
  for (const auto& s : samples) {
    std::vector<std::uint64_t> key(s.output.size());
    for (std::size_t i = 0; i < key.size(); ++i) key[i] = std::bit_cast<std::uint64_t>(s.output[i]);
    auto [it, inserted] = index.emplace(std::move(key), groups.size());
    if (inserted) {
      groups.push_back({s.output, Vector::Zero(static_cast<Eigen::Index>(s.output.size())), 0.0});
    }
    auto& g = groups[it->second];
    g.label_mean(static_cast<Eigen::Index>(s.label)) += 1.0;
    g.mass += 1.0;
  }
  return finish_report(std::move(groups), samples.size());
}

CalibrationReport estimate_binned_calibration_error(std::span<const LabeledSample> samples, std::size_t n_bins) {
  if (samples.empty()) throw InvalidInput("calibration error of an empty sample");
  if (n_bins == 0) throw InvalidInput("binned calibration error needs at least one bin");
  std::vector<Vector> out_sum(n_bins, Vector::Zero(2));
  std::vector<Vector> label_sum(n_bins, Vector::Zero(2));
  std::vector<double> count(n_bins, 0.0);
  for (const auto& s : samples) {
    if (s.output.size() != 2) throw InvalidInput("binned calibration error supports two classes only");
    auto b = static_cast<std::size_t>(std::floor(s.output[0] * static_cast<double>(n_bins)));
    if (b >= n_bins) b = n_bins - 1;
    out_sum[b] += s.output.values();
    label_sum[b](static_cast<Eigen::Index>(s.label)) += 1.0;
    count[b] += 1.0;
  }
  std::vector<CalibrationGroup> groups;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0.0) continue;
    groups.push_back({ProbVector::normalized(out_sum[b] / count[b], kSimplexTolerance), label_sum[b], count[b]});
  }
  return finish_report(std::move(groups), samples.size());
}

} // namespace labelshift
