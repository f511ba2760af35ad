#include "labelshift/simulation.hpp"

#include "labelshift/error.hpp"
#include "labelshift/random.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace labelshift {

std::vector<GmmPoint> sample_gmm(const GmmSpec& spec, const ProbVector& marginal, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (marginal.size() != 2) throw InvalidInput("GMM sampling needs a two-class marginal");
  rng::CounterRng gen(seed);
  std::vector<GmmPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = gen.categorical(marginal);
    const double mean = y == 0 ? spec.mu : -spec.mu;
    out.push_back({mean + gen.normal(), y});
  }
  return out;
}

ProbVector sample_dirichlet_shift(double alpha, std::size_t k, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw InvalidInput("Dirichlet concentration must be positive");
  if (k == 0) throw InvalidInput("Dirichlet needs at least one class");
  rng::CounterRng gen(seed);
  Vector g(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gen.gamma(alpha);
  const double sum = g.sum();
  if (!(sum > 0.0)) {
    // Every gamma variate underflowed (only for tiny α); the limit is a vertex.
    return ProbVector::one_hot(k, gen.index(k));
  }
  return ProbVector::normalized(g / sum, kSimplexTolerance);
}

std::vector<std::size_t> resample_indices_by_marginal(std::span<const std::size_t> pool_labels,
                                                      const ProbVector& target_marginal, std::size_t n,
                                                      std::uint64_t seed) {
  const std::size_t k = target_marginal.size();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < pool_labels.size(); ++i) {
    if (pool_labels[i] >= k) throw InvalidInput("pool label out of range");
    by_class[pool_labels[i]].push_back(i);
  }
  for (std::size_t y = 0; y < k; ++y) {
    if (target_marginal[y] > 0.0 && by_class[y].empty()) {
      std::ostringstream os;
      os << "class " << y << " has target mass " << target_marginal[y] << " but no pool examples";
      throw InvalidInput(os.str());
    }
  }
  rng::CounterRng gen(seed);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& members = by_class[gen.categorical(target_marginal)];
    out.push_back(members[gen.index(members.size())]);
  }
  return out;
}

std::vector<LabeledSample> resample_by_marginal(std::span<const LabeledSample> pool, const ProbVector& target_marginal,
                                                std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> labels;
  labels.reserve(pool.size());
  for (const auto& s : pool) labels.push_back(s.label);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (auto i : resample_indices_by_marginal(labels, target_marginal, n, seed)) out.push_back(pool[i]);
  return out;
}

std::string shift_label(const ShiftSpec& shift) {
  std::ostringstream os;
  os.precision(10);
  if (const auto* d = std::get_if<DirichletShift>(&shift)) {
    os << "dirichlet:" << d->alpha;
  } else {
    const auto& p = std::get<ExplicitShift>(shift).target_marginal;
    os << "explicit:";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ";" : "") << p[i];
  }
  return os.str();
}

void BenchmarkConfig::validate() const {
  gmm.validate();
  estimator.validate();
  if (shifts.empty()) throw InvalidInput("benchmark needs at least one shift");
  if (methods.empty()) throw InvalidInput("benchmark needs at least one method");
  if (m_values.empty()) throw InvalidInput("benchmark needs at least one target size");
  if (n_trials == 0) throw InvalidInput("benchmark needs n_trials >= 1");
  if (n_source < 2) throw InvalidInput("benchmark needs n_source >= 2");
  for (auto m : m_values) {
    if (m == 0) throw InvalidInput("target sizes must be positive");
  }
  for (const auto& s : shifts) {
    if (const auto* d = std::get_if<DirichletShift>(&s)) {
      if (!(d->alpha > 0.0)) throw InvalidInput("Dirichlet alpha must be positive");
    } else if (std::get<ExplicitShift>(s).target_marginal.size() != 2) {
      throw InvalidInput("GMM benchmark shifts must have two classes");
    }
  }
  if (predictor.kind == PredictorSpec::Kind::tempered && !(predictor.temperature > 0.0)) {
    throw InvalidInput("tempered predictor needs a positive temperature");
  }
  if (predictor.kind == PredictorSpec::Kind::binned && predictor.bins == 0) {
    throw InvalidInput("binned predictor needs at least one bin");
  }
}

namespace {

struct CellData {
  ProbVector target_marginal;
  std::vector<LabeledSample> source;       // predictor outputs
  std::vector<ProbVector> target;          // predictor outputs
  std::vector<LabeledSample> mlls_source;  // after optional BCTS
  std::vector<ProbVector> mlls_target;
  ProbVector mlls_source_marginal;
  Vector w_star;
};

CellData build_cell(const BenchmarkConfig& config, std::size_t shift_index, std::size_t m_index, std::size_t trial,
                    std::uint64_t cell_seed) {
  const auto& shift = config.shifts[shift_index];
  ProbVector pt = std::holds_alternative<DirichletShift>(shift)
                      ? sample_dirichlet_shift(std::get<DirichletShift>(shift).alpha, 2,
                                               rng::derive_seed(config.base_seed, {shift_index, trial, 0xd1}))
                      : std::get<ExplicitShift>(shift).target_marginal;
  (void)m_index;

  const auto source_points =
      sample_gmm(config.gmm, config.gmm.source_marginal, config.n_source, rng::derive_seed(cell_seed, {1}));
  const auto target_points =
      sample_gmm(config.gmm, pt, config.m_values[m_index], rng::derive_seed(cell_seed, {2}));

  CellData cell{pt, {}, {}, {}, {}, config.gmm.source_marginal, {}};
  const auto& pred = config.predictor;
  const BctsParams temper{pred.temperature, Vector::Zero(2)};
  auto predict = [&](double x) {
    ProbVector f = gmm_bayes_predict(config.gmm, x);
    if (pred.kind == PredictorSpec::Kind::tempered) f = bcts_apply(temper, clip_for_log(f));
    return f;
  };

  cell.source.reserve(source_points.size());
  for (const auto& p : source_points) cell.source.emplace_back(predict(p.x), p.label);
  cell.target.reserve(target_points.size());
  for (const auto& p : target_points) cell.target.push_back(predict(p.x));

  bool empirical_marginal = false;
  if (pred.kind == PredictorSpec::Kind::binned) {
    const auto binned = bin_aggregate(cell.source, pred.bins, BinValue::label_mean);
    for (auto& s : cell.source) s = LabeledSample(*binned.apply(s.output), s.label);
    for (auto& t : cell.target) {
      auto out = binned.apply(t);
      if (!out) throw InvalidInput("target output falls in a bin with no source mass");
      t = *out;
    }
    empirical_marginal = true;
  }

  cell.mlls_source = cell.source;
  cell.mlls_target = cell.target;
  if (config.bcts_calibrate) {
    BctsFitOptions opts;
    opts.loss = config.calibration_loss;
    const auto fit = bcts_fit(cell.source, opts);
    for (auto& s : cell.mlls_source) s = LabeledSample(bcts_apply(fit.params, clip_for_log(s.output)), s.label);
    for (auto& t : cell.mlls_target) t = bcts_apply(fit.params, clip_for_log(t));
    empirical_marginal = true;
  }
  if (empirical_marginal) cell.mlls_source_marginal = label_marginal(cell.source, 2);

  if (config.realized_w_star) {
    Vector freq = Vector::Zero(2);
    for (const auto& p : target_points) freq(static_cast<Eigen::Index>(p.label)) += 1.0;
    cell.w_star = (freq / static_cast<double>(target_points.size())).cwiseQuotient(config.gmm.source_marginal.values());
  } else {
    cell.w_star = pt.values().cwiseQuotient(config.gmm.source_marginal.values());
  }
  return cell;
}

EstimateResult run_method(const BenchmarkConfig& config, Method method, const CellData& cell) {
  EstimatorConfig est = config.estimator;
  est.method = method;
  switch (method) {
    case Method::bbse_hard:
    case Method::bbse_soft: {
      const auto kind = method == Method::bbse_hard ? ConfusionKind::hard : ConfusionKind::soft;
      const auto c = kind == ConfusionKind::hard ? build_hard_confusion(cell.source) : build_soft_confusion(cell.source);
      // Harness MSE needs feasible weights.
      return bbse(c, build_target_prediction_marginal(cell.target, kind), true);
    }
    case Method::rlls:
      return rlls(build_hard_confusion(cell.source), build_target_prediction_marginal(cell.target, ConfusionKind::hard),
                  est.rlls_lambda, est);
    case Method::mlls_em:
      return mlls_em(PredictorTable::from_outputs(cell.mlls_target), cell.mlls_source_marginal, est);
    case Method::mlls_grad:
      return mlls_grad(PredictorTable::from_outputs(cell.mlls_target), cell.mlls_source_marginal, est);
    case Method::mlls_cm:
      return mlls_cm(cell.source, cell.target, label_marginal(cell.source, 2), est);
  }
  throw InvalidInput("unhandled method");
}

} // namespace

std::vector<TrialReport> run_trial_cell(const BenchmarkConfig& config, std::size_t shift_index, std::size_t m_index,
                                        std::size_t trial) {
  const std::uint64_t cell_seed = rng::derive_seed(config.base_seed, {shift_index, m_index, trial});
  const std::size_t m = config.m_values[m_index];
  std::vector<TrialReport> reports;
  reports.reserve(config.methods.size());

  std::optional<CellData> cell;
  std::string cell_error;
  try {
    cell = build_cell(config, shift_index, m_index, trial, cell_seed);
  } catch (const std::exception& e) {
    cell_error = e.what();
  }

  std::optional<DiagnosticsReport> diag;
  if (cell && config.diagnostics) {
    try {
      const auto table = PredictorTable::from_outputs(cell->mlls_target);
      const WeightVector w_star(cell->w_star, config.gmm.source_marginal);
      const double ce = estimate_binned_calibration_error(cell->mlls_source, 20).calibration_error;
      DiagnosticsOptions opts;
      opts.source_size = config.n_source;
      diag = diagnose(table, w_star, cell->mlls_source, ce, opts);
    } catch (const std::exception&) {
      diag.reset();
    }
  }

  for (const Method method : config.methods) {
    TrialReport r{method, shift_index, m, trial, cell_seed, cell ? cell->target_marginal : ProbVector::uniform(2),
                  Vector(), Vector(), 0.0, false, {}, diag};
    if (!cell) {
      r.failed = true;
      r.error = cell_error;
      reports.push_back(std::move(r));
      continue;
    }
    r.w_star = cell->w_star;
    try {
      const auto est = run_method(config, method, *cell);
      r.w_hat = est.weights;
      r.squared_error = (r.w_hat - r.w_star).squaredNorm();
      if (!est.converged) r.error = "did not converge";
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  if (const char* env = std::getenv("LABELSHIFT_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

BenchmarkResult run_trials(const BenchmarkConfig& config) {
  config.validate();
  const std::size_t n_shift = config.shifts.size();
  const std::size_t n_m = config.m_values.size();
  const std::size_t n_cells = n_shift * n_m * config.n_trials;
  std::vector<std::vector<TrialReport>> cells(n_cells);

  // Cell index = ((shift * n_m) + m) * n_trials + trial.
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      const std::size_t trial = c % config.n_trials;
      const std::size_t m_index = (c / config.n_trials) % n_m;
      const std::size_t shift_index = c / (config.n_trials * n_m);
      cells[c] = run_trial_cell(config, shift_index, m_index, trial);
    }
  };
  const std::size_t n_threads = std::min(resolve_threads(config.threads), std::max<std::size_t>(n_cells, 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  BenchmarkResult result;
  result.reports.reserve(n_cells * config.methods.size());
  for (auto& cell : cells) {
    for (auto& r : cell) result.reports.push_back(std::move(r));
  }
  result.table = aggregate_mse(config, result.reports);
  return result;
}

std::vector<MseRow> aggregate_mse(const BenchmarkConfig& config, std::span<const TrialReport> reports) {
  std::vector<MseRow> rows;
  for (std::size_t s = 0; s < config.shifts.size(); ++s) {
    for (const std::size_t m : config.m_values) {
      for (const Method method : config.methods) {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t n = 0;
        for (const auto& r : reports) {
          if (r.failed || r.shift_index != s || r.m != m || r.method != method) continue;
          sum += r.squared_error;
          sum_sq += r.squared_error * r.squared_error;
          ++n;
        }
        MseRow row{shift_label(config.shifts[s]), method, m, n, std::nan(""), std::nan("")};
        if (n > 0) {
          row.mse = sum / static_cast<double>(n);
          const double var = n > 1 ? std::max(0.0, (sum_sq - static_cast<double>(n) * row.mse * row.mse) /
                                                       static_cast<double>(n - 1))
                                   : 0.0;
          row.stderr_mse = std::sqrt(var / static_cast<double>(n));
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

} // namespace labelshift
