#include "labelshift/diagnostics.hpp"

#include "labelshift/error.hpp"
#include "labelshift/linalg.hpp"
#include "labelshift/predictors.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace labelshift {

namespace {

void check_dims(const PredictorTable& table, const Vector& w) {
  if (static_cast<std::size_t>(w.size()) != table.num_classes()) {
    throw InvalidInput("weight vector and predictor table differ in number of classes");
  }
}

double inner(const PredictorTable::Entry& e, const Vector& w, std::size_t index) {
  const double v = e.output.values().dot(w);
  if (e.mass > 0.0 && !(v > 0.0)) {
    std::ostringstream os;
    os << "support point " << index << " has f(x)^T w = " << v << " <= 0; log-likelihood undefined";
    throw SupportError(os.str());
  }
  return v;
}

} // namespace

double log_likelihood(const PredictorTable& table, const Vector& w) {
  check_dims(table, w);
  const Vector masses = table.normalized_masses();
  double ll = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double m = masses(static_cast<Eigen::Index>(i));
    if (m == 0.0) continue;
    ll += m * std::log(inner(table[i], w, i));
  }
  return ll;
}

double log_likelihood(const PredictorTable& table, const WeightVector& w) {
  return log_likelihood(table, w.values());
}

Vector likelihood_gradient(const PredictorTable& table, const Vector& w) {
  check_dims(table, w);
  const Vector masses = table.normalized_masses();
  Vector g = Vector::Zero(w.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double m = masses(static_cast<Eigen::Index>(i));
    if (m == 0.0) continue;
    g += (m / inner(table[i], w, i)) * table[i].output.values();
  }
  return g;
}

Vector likelihood_gradient(const PredictorTable& table, const WeightVector& w) {
  return likelihood_gradient(table, w.values());
}

Matrix likelihood_hessian(const PredictorTable& table, const Vector& w) {
  check_dims(table, w);
  const Vector masses = table.normalized_masses();
  Matrix h = Matrix::Zero(w.size(), w.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double m = masses(static_cast<Eigen::Index>(i));
    if (m == 0.0) continue;
    const double v = inner(table[i], w, i);
    const Vector& f = table[i].output.values();
    h.noalias() -= (m / (v * v)) * f * f.transpose();
  }
  return h;
}

Matrix likelihood_hessian(const PredictorTable& table, const WeightVector& w) {
  return likelihood_hessian(table, w.values());
}

Vector tangent_gradient(const Vector& gradient, const ProbVector& source_marginal) {
  const Vector& p = source_marginal.values();
  return gradient - (gradient.dot(p) / p.squaredNorm()) * p;
}

Matrix second_moment(const PredictorTable& table) {
  const Vector masses = table.normalized_masses();
  const auto k = static_cast<Eigen::Index>(table.num_classes());
  Matrix m = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Vector& f = table[i].output.values();
    m.noalias() += masses(static_cast<Eigen::Index>(i)) * f * f.transpose();
  }
  return m;
}

Matrix second_moment(std::span<const ProbVector> outputs) {
  if (outputs.empty()) throw InvalidInput("second moment of an empty sample");
  const auto k = static_cast<Eigen::Index>(outputs.front().size());
  Matrix m = Matrix::Zero(k, k);
  for (const auto& o : outputs) m.noalias() += o.values() * o.values().transpose();
  return m / static_cast<double>(outputs.size());
}

IdentifiabilityCheck check_identifiability(const PredictorTable& table) {
  const double e = linalg::min_eigenvalue(second_moment(table));
  return {e > kIdentifiabilityEigenFloor, std::max(e, 0.0)};
}

IdentifiabilityCheck check_identifiability(std::span<const LabeledSample> samples) {
  std::vector<ProbVector> outputs;
  outputs.reserve(samples.size());
  for (const auto& s : samples) outputs.push_back(s.output);
  const double e = linalg::min_eigenvalue(second_moment(outputs));
  return {e > kIdentifiabilityEigenFloor, std::max(e, 0.0)};
}

double tau_lower_bound(const PredictorTable& table, const Vector& w) {
  check_dims(table, w);
  double tau = std::numeric_limits<double>::infinity();
  for (const auto& e : table.entries()) {
    if (e.mass > 0.0) tau = std::min(tau, e.output.values().dot(w));
  }
  return std::max(tau, 0.0);
}

BoundTerms compute_bound_terms(double sigma_min_c, double sigma_min_f, double tau, double calib_error,
                               double w_star_norm, std::size_t m, std::size_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("bound confidence delta must lie in (0, 1)");
  if (m == 0) throw InvalidInput("bound needs a positive target sample size");
  if (sigma_min_c < 0.0 || sigma_min_f < 0.0 || tau < 0.0 || calib_error < 0.0 || w_star_norm < 0.0) {
    throw InvalidInput("bound inputs must be non-negative");
  }
  (void)n;
  const double inf = std::numeric_limits<double>::infinity();
  const double stat = std::sqrt(std::log(4.0 / delta) / static_cast<double>(m));
  BoundTerms b;
  b.term1 = sigma_min_c > 0.0 ? stat / sigma_min_c : inf;
  b.term2 = sigma_min_f > 0.0 ? (stat + calib_error * w_star_norm) / sigma_min_f : inf;
  b.total = b.term1 + b.term2;
  return b;
}

SandwichCheck eigenvalue_sandwich(const PredictorTable& table, const Vector& w, const ProbVector& source_marginal) {
  SandwichCheck s{};
  s.tau = tau_lower_bound(table, w);
  if (!(s.tau > 0.0)) throw InvalidInput("eigenvalue sandwich needs tau > 0");
  s.sigma_fw = std::max(linalg::min_eigenvalue(Matrix(-likelihood_hessian(table, w))), 0.0);
  s.sigma_f = std::max(linalg::min_eigenvalue(second_moment(table)), 0.0);
  s.ps_min = source_marginal.values().minCoeff();
  s.lower = s.ps_min * s.ps_min * s.sigma_f;
  s.upper = s.sigma_f / (s.tau * s.tau);
  constexpr double slack = 1e-8;
  s.holds = s.lower <= s.sigma_fw + slack && s.sigma_fw <= s.upper + slack;
  return s;
}

bool eigenvalue_sandwich_check(const PredictorTable& table, const Vector& w, const ProbVector& source_marginal) {
  return eigenvalue_sandwich(table, w, source_marginal).holds;
}

Example1Solution example1_closed_form(double alpha, double c, double mu) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("threshold example needs alpha in [0, 1]");
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidInput("threshold example needs c in [0, 1]");
  if (c == 0.5) throw InvalidInput("threshold example is degenerate at c = 0.5 (constant classifier)");
  const double phi = standard_normal_cdf(mu);  // p_s(x >= 0 | y = 0)
  const double pt_le0 = alpha * (1.0 - phi) + (1.0 - alpha) * phi;
  Example1Solution s{};
  s.w0 = (2.0 * pt_le0 - 2.0 * c) / (1.0 - 2.0 * c);
  s.error = 2.0 * std::abs(s.w0 - 2.0 * alpha);
  s.formula = 4.0 * std::abs((1.0 - 2.0 * alpha) * (phi - c) / (1.0 - 2.0 * c));
  if (std::abs(s.error - s.formula) > 1e-12 * std::max(1.0, s.formula)) {
    throw std::logic_error("threshold example closed-form routes disagree");
  }
  return s;
}

DiagnosticsReport diagnose(const PredictorTable& target, const WeightVector& w, std::span<const LabeledSample> source,
                           std::optional<double> calibration_error, const DiagnosticsOptions& options) {
  DiagnosticsReport r;
  const Vector& wv = w.values();
  r.log_likelihood = log_likelihood(target, wv);
  r.gradient = likelihood_gradient(target, wv);
  r.tangent_gradient = tangent_gradient(r.gradient, w.source_marginal());
  r.hessian = likelihood_hessian(target, wv);
  const auto eig = linalg::jacobi_eigenvalues(Matrix(-r.hessian));
  r.sigma_min = std::max(eig(0), 0.0);
  r.hessian_nsd = eig(0) >= -1e-8;
  r.hessian_symmetric = (r.hessian - r.hessian.transpose()).cwiseAbs().maxCoeff() <= 1e-10;
  r.tau = tau_lower_bound(target, wv);

  const auto ident = source.empty() ? check_identifiability(target) : check_identifiability(source);
  r.identifiable = ident.identifiable;
  r.second_moment_min_eig = ident.min_eigenvalue;
  r.calibration_error = calibration_error;

  const auto m = static_cast<std::size_t>(std::max(1.0, std::round(target.kind() == MassKind::count ? target.total_mass() : 1.0)));
  const std::size_t n = options.source_size != 0 ? options.source_size : source.size();
  r.bound_terms = compute_bound_terms(r.sigma_min, r.sigma_min, r.tau, calibration_error.value_or(0.0), wv.norm(), m, n,
                                      options.delta);
  return r;
}

} // namespace labelshift
