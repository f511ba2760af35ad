#include "labelshift/estimators.hpp"

#include "labelshift/calibration.hpp"
#include "labelshift/diagnostics.hpp"
#include "labelshift/error.hpp"
#include "labelshift/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

namespace labelshift {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 6> kMethodNames{{
    {Method::bbse_hard, "bbse_hard"},
    {Method::bbse_soft, "bbse_soft"},
    {Method::rlls, "rlls"},
    {Method::mlls_em, "mlls_em"},
    {Method::mlls_grad, "mlls_grad"},
    {Method::mlls_cm, "mlls_cm"},
}};

void check_positive_marginal(const ProbVector& ps) {
  if ((ps.values().array() <= 0.0).any()) {
    throw InvalidInput("estimators need a strictly positive source marginal");
  }
}

struct LsqSolution {
  Vector w;
  int iterations = 0;
  bool converged = false;
  bool rank_deficient = false;
};

// argmin over W of ‖A w - b‖². Starts from the minimum-norm equality-constrained
// least-squares point (null-space method); if that is already non-negative it is
// the answer, otherwise projected gradient with step 1/L takes over.
LsqSolution constrained_least_squares(const Matrix& a, const Vector& b, const ProbVector& ps,
                                      const EstimatorConfig& config) {
  const Vector& p = ps.values();
  const Eigen::Index k = p.size();
  LsqSolution sol;

  const Vector w_particular = p / p.squaredNorm();
  const Matrix p_col = p;
  Eigen::HouseholderQR<Matrix> qr(p_col);
  const Matrix q = qr.householderQ() * Matrix::Identity(k, k);
  const Matrix null_basis = q.rightCols(k - 1);

  Vector w_start = w_particular;
  if (k > 1) {
    const Matrix an = a * null_basis;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
    cod.setThreshold(1e-10);
    cod.compute(an);
    sol.rank_deficient = cod.rank() < k - 1;
    w_start += null_basis * cod.solve(Vector(b - a * w_particular));
  }

  if ((w_start.array() >= 0.0).all()) {
    sol.w = w_start;
    sol.converged = true;
    return sol;
  }

  const Matrix gram = a.transpose() * a;
  const double lipschitz = 2.0 * std::max(linalg::max_eigenvalue(gram), 1e-300);
  const Vector atb = a.transpose() * b;
  Vector w = linalg::project_to_scaled_simplex(w_start, p);
  for (int it = 0; it < config.max_iters; ++it) {
    const Vector grad = 2.0 * (gram * w - atb);
    Vector next = linalg::project_to_scaled_simplex(Vector(w - grad / lipschitz), p);
    const double change = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    sol.iterations = it + 1;
    if (change < config.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.w = w;
  return sol;
}

// Distance to the maximizer predicted by one Newton step restricted to the face
// {w_j > 0} of W. Returns nullopt when the reduced Hessian is (near) singular, in
// which case no curvature-based certificate exists.
std::optional<double> newton_distance(const PredictorTable& target, const Vector& w, const Vector& grad,
                                      const Vector& ps) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) > 0.0) free.push_back(j);
  }
  const auto nf = static_cast<Eigen::Index>(free.size());
  if (nf <= 1) return 0.0;
  const Matrix hess = likelihood_hessian(target, w);
  Matrix h(nf, nf);
  Vector g(nf), p(nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    g(a) = grad(free[a]);
    p(a) = ps(free[a]);
    for (Eigen::Index b = 0; b < nf; ++b) h(a, b) = -hess(free[a], free[b]);
  }
  const Matrix p_col = p;
  Eigen::HouseholderQR<Matrix> qr(p_col);
  const Matrix z = (qr.householderQ() * Matrix::Identity(nf, nf)).rightCols(nf - 1);
  const Matrix hr = z.transpose() * h * z;
  const Vector ev = linalg::jacobi_eigenvalues(hr);
  if (!(ev(0) > 1e-12 * std::max(ev(ev.size() - 1), 1e-300))) return std::nullopt;
  const Vector step = z * hr.ldlt().solve(Vector(z.transpose() * g));
  return step.cwiseAbs().maxCoeff();
}

EstimateResult make_result(Vector w, const ProbVector& ps) {
  return EstimateResult{.weights = std::move(w), .source_marginal = ps};
}

// Fixed-point stopping rule. With linear contraction rate ρ (estimated from the
// last two steps, capped at 0.9) the remaining distance is about change·ρ/(1-ρ);
// require both that and the step itself to be below tol.
bool step_converged(double change, double& prev_change, double tol) {
  const double rho = prev_change > 0.0 ? std::min(change / prev_change, 0.9) : 0.0;
  prev_change = change;
  return change < tol && change * rho / (1.0 - rho) < tol;
}

void note_identifiability(EstimateResult& r, const PredictorTable& target) {
  const auto ident = check_identifiability(target);
  if (!ident.identifiable) {
    r.identifiable = false;
    std::ostringstream os;
    os << "E[f f^T] of the target table is singular (min eigenvalue " << ident.min_eigenvalue
       << "); the maximizer is not unique";
    r.warnings.push_back(os.str());
  }
}

} // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethodNames) {
    if (n == name) return method;
  }
  throw InvalidInput("unknown method '" + std::string(name) + "'");
}

void EstimatorConfig::validate() const {
  if (max_iters < 1) throw InvalidInput("max_iters must be >= 1");
  if (!(tol > 0.0)) throw InvalidInput("tol must be positive");
  if (!(rlls_lambda >= 0.0)) throw InvalidInput("rlls_lambda must be non-negative");
}

WeightVector EstimateResult::weight_vector() const {
  return WeightVector(weights, source_marginal);
}

ProbVector EstimateResult::target_marginal() const {
  return weights_to_target_marginal(weight_vector());
}

EstimateResult bbse(const ConfusionMatrix& confusion, const ProbVector& mu, bool clip_negative) {
  const Matrix& c = confusion.joint();
  if (static_cast<std::size_t>(mu.size()) != confusion.num_classes()) {
    throw InvalidInput("target prediction marginal and confusion matrix differ in size");
  }
  Eigen::PartialPivLU<Matrix> lu(c);
  const double rcond = lu.rcond();
  if (!(rcond >= 1e-12) || lu.determinant() == 0.0) {
    std::ostringstream os;
    os << "confusion matrix is singular or ill-conditioned (rcond " << rcond
       << "); predictions are not linearly independent across classes, so the shift is not identifiable";
    throw IdentifiabilityError(os.str());
  }
  Vector w = lu.solve(mu.values());
  const ProbVector& ps = confusion.column_marginal();
  EstimateResult r = make_result(w, ps);
  if (clip_negative && (w.array() < 0.0).any()) {
    check_positive_marginal(ps);
    r.weights = linalg::project_to_scaled_simplex(Vector(w.cwiseMax(0.0)), ps.values());
    r.warnings.push_back("negative weights clipped and projected onto the feasible set");
  }
  r.final_objective = (c * r.weights - mu.values()).norm();
  r.converged = true;
  return r;
}

double distribution_match_objective(const Matrix& joint, const Vector& target, const Vector& w) {
  return (joint * w - target).squaredNorm();
}

EstimateResult rlls(const ConfusionMatrix& confusion, const ProbVector& mu, double lambda,
                    const EstimatorConfig& config) {
  config.validate();
  if (!(lambda >= 0.0)) throw InvalidInput("rlls lambda must be non-negative");
  const ProbVector& ps = confusion.column_marginal();
  check_positive_marginal(ps);
  const Eigen::Index k = static_cast<Eigen::Index>(confusion.num_classes());
  if (mu.values().size() != k) throw InvalidInput("target prediction marginal and confusion matrix differ in size");

  const double root = std::sqrt(lambda);
  Matrix a(2 * k, k);
  a << confusion.joint(), root * Matrix::Identity(k, k);
  Vector b(2 * k);
  b << mu.values(), root * Vector::Ones(k);

  auto sol = constrained_least_squares(a, b, ps, config);
  EstimateResult r = make_result(std::move(sol.w), ps);
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  r.final_objective = (a * r.weights - b).squaredNorm();
  if (sol.rank_deficient) {
    r.identifiable = false;
    r.warnings.push_back("regularized system is rank-deficient");
  }
  return r;
}

EstimateResult distribution_match_lsq(const Matrix& joint, const Vector& target, const ProbVector& source_marginal,
                                      const EstimatorConfig& config) {
  config.validate();
  check_positive_marginal(source_marginal);
  if (joint.cols() != source_marginal.values().size() || joint.rows() != target.size()) {
    throw InvalidInput("distribution matching: dimension mismatch");
  }
  if (joint.rows() < joint.cols()) {
    throw InvalidInput("distribution matching needs at least as many latent values as classes");
  }
  const Vector col_sums = joint.colwise().sum().transpose();
  if ((col_sums - source_marginal.values()).cwiseAbs().maxCoeff() > 1e-6) {
    throw InvalidInput("joint column sums must equal the source marginal");
  }

  auto sol = constrained_least_squares(joint, target, source_marginal, config);
  EstimateResult r = make_result(std::move(sol.w), source_marginal);
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  r.final_objective = distribution_match_objective(joint, target, r.weights);
  if (sol.rank_deficient) {
    r.identifiable = false;
    r.warnings.push_back("joint p_s(z, y) is rank-deficient; returning the minimum-norm feasible minimizer");
  }
  return r;
}

EstimateResult mlls_em(const PredictorTable& target, const ProbVector& source_marginal, const EstimatorConfig& config) {
  config.validate();
  check_positive_marginal(source_marginal);
  if (target.num_classes() != source_marginal.size()) {
    throw InvalidInput("target table and source marginal differ in number of classes");
  }
  const Matrix f = target.output_matrix();
  const Vector masses = target.normalized_masses();
  const Vector& ps = source_marginal.values();

  EstimateResult r = make_result(Vector::Ones(ps.size()), source_marginal);
  note_identifiability(r, target);
  if (config.record_trace) r.objective_trace.push_back(log_likelihood(target, r.weights));

  double prev_change = 0.0;
  for (int it = 0; it < config.max_iters; ++it) {
    const Vector inner = f * r.weights;
    for (Eigen::Index i = 0; i < inner.size(); ++i) {
      if (masses(i) > 0.0 && !(inner(i) > 0.0)) {
        std::ostringstream os;
        os << "target support point " << i << " has zero likelihood under every reachable weight vector";
        throw SupportError(os.str());
      }
    }
    // Σ_i m_i r_i(y), r_i(y) = f_y(x_i) w_y / f(x_i)ᵀw.
    const Vector scaled = masses.cwiseQuotient(inner.cwiseMax(std::numeric_limits<double>::min()));
    const Vector q = (f.transpose() * scaled).cwiseProduct(r.weights);
    Vector next = q.cwiseQuotient(ps);
    const double change = (next - r.weights).cwiseAbs().maxCoeff();
    r.weights = std::move(next);
    r.iterations = it + 1;
    if (config.record_trace) r.objective_trace.push_back(log_likelihood(target, r.weights));
    if (step_converged(change, prev_change, config.tol)) {
      r.converged = true;
      break;
    }
  }
  r.final_objective = log_likelihood(target, r.weights);
  return r;
}

EstimateResult mlls_grad(const PredictorTable& target, const ProbVector& source_marginal,
                         const EstimatorConfig& config) {
  config.validate();
  check_positive_marginal(source_marginal);
  if (target.num_classes() != source_marginal.size()) {
    throw InvalidInput("target table and source marginal differ in number of classes");
  }
  const Vector& ps = source_marginal.values();
  const Matrix f = target.output_matrix();
  const Vector masses = target.normalized_masses();

  auto objective = [&](const Vector& w, double& out) {
    const Vector inner = f * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < inner.size(); ++i) {
      if (masses(i) == 0.0) continue;
      if (!(inner(i) > 0.0)) return false;
      ll += masses(i) * std::log(inner(i));
    }
    out = ll;
    return true;
  };

  EstimateResult r = make_result(Vector::Ones(ps.size()), source_marginal);
  note_identifiability(r, target);
  double value = 0.0;
  if (!objective(r.weights, value)) throw SupportError("target table has zero likelihood at w = 1");
  if (config.record_trace) r.objective_trace.push_back(value);

  auto tangent = [&](const Vector& g) -> Vector { return g - (g.dot(ps) / ps.squaredNorm()) * ps; };
  double prev_change = 0.0;
  double step = 1.0;
  Vector prev_weights, prev_grad;
  for (int it = 0; it < config.max_iters; ++it) {
    const Vector grad = likelihood_gradient(target, r.weights);
    // Barzilai-Borwein trial step; the objective is concave so sᵀy < 0.
    if (it > 0) {
      const Vector s = r.weights - prev_weights;
      const double sy = s.dot(grad - prev_grad);
      step = sy < 0.0 ? s.squaredNorm() / -sy : 2.0 * step;
    }
    step = std::clamp(step, 1e-12, 1e6);
    bool accepted = false;
    Vector next;
    double next_value = 0.0;
    while (step > 1e-20) {
      // Armijo along the projection arc, or (for when function values no longer
      // resolve the gain) a non-negative slope at the far end of the segment, which
      // by concavity also guarantees ascent.
      next = linalg::project_to_scaled_simplex(Vector(r.weights + step * grad), ps);
      const Vector delta = next - r.weights;
      // Slopes use tangent components: delta is tangent up to rounding, and the
      // normal part of the gradient is O(1) at the optimum, so it would swamp them.
      if (objective(next, next_value) && (next_value >= value + 1e-4 * tangent(grad).dot(delta) ||
                                          tangent(likelihood_gradient(target, next)).dot(delta) >= 0.0)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    prev_weights = r.weights;
    prev_grad = grad;
    r.iterations = it + 1;
    if (!accepted) {
      // Ascent stalled at machine precision: stationary.
      r.converged = true;
      break;
    }
    const double change = (next - r.weights).cwiseAbs().maxCoeff();
    r.weights = std::move(next);
    value = next_value;
    if (config.record_trace) r.objective_trace.push_back(value);
    if (step_converged(change, prev_change, config.tol)) {
      // Small steps can be an artefact of the step-size rule; confirm with curvature.
      const auto dist = newton_distance(target, r.weights, likelihood_gradient(target, r.weights), ps);
      if (!dist || *dist < config.tol) {
        r.converged = true;
        break;
      }
    }
  }
  r.final_objective = value;
  return r;
}

EstimateResult mlls_cm(std::span<const LabeledSample> source, std::span<const ProbVector> target_outputs,
                       const ProbVector& source_marginal, const EstimatorConfig& config) {
  if (target_outputs.empty()) throw InvalidInput("MLLS-CM needs target outputs");
  const ConfusionMatrix confusion = build_hard_confusion(source);
  const PredictorTable rows = confusion_row_calibrate(confusion);
  std::vector<double> counts(rows.size(), 0.0);
  for (const auto& out : target_outputs) {
    if (out.size() != rows.num_classes()) throw InvalidInput("target outputs differ in number of classes");
    counts[out.argmax()] += 1.0;
  }
  std::vector<PredictorTable::Entry> entries;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (counts[i] > 0.0) entries.push_back({rows[i].output, counts[i]});
  }
  return mlls_em(PredictorTable(std::move(entries), MassKind::count), source_marginal, config);
}

} // namespace labelshift
