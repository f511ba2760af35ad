#include "labelshift/pipeline.hpp"

#include "labelshift/error.hpp"
#include "labelshift/random.hpp"

#include <cmath>
#include <numeric>

namespace labelshift {

SourceSplit split_source(std::span<const LabeledSample> source, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("split fraction must lie in (0, 1)");
  if (source.size() < 2) throw InvalidInput("need at least two source samples to split");
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::CounterRng gen(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[gen.index(i + 1)]);

  auto n_cal = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(source.size())));
  n_cal = std::clamp<std::size_t>(n_cal, 1, source.size() - 1);
  SourceSplit split;
  split.calibration.reserve(n_cal);
  split.estimation.reserve(source.size() - n_cal);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_cal ? split.calibration : split.estimation).push_back(source[order[i]]);
  }
  return split;
}

bool uses_calibration(Method method) { return method == Method::mlls_em || method == Method::mlls_grad; }

PipelineResult estimate_pipeline(std::span<const LabeledSample> source, std::span<const ProbVector> target,
                                 const PipelineOptions& options) {
  options.estimator.validate();
  if (source.empty()) throw InvalidInput("source sample is empty");
  if (target.empty()) throw InvalidInput("target sample is empty");
  const std::size_t k = source.front().output.size();
  for (const auto& s : source) {
    if (s.output.size() != k) throw InvalidInput("source rows differ in number of classes");
  }
  for (const auto& t : target) {
    if (t.size() != k) throw InvalidInput("source and target differ in number of classes");
  }

  const Method method = options.estimator.method;
  std::vector<LabeledSample> cal_source(source.begin(), source.end());
  std::vector<ProbVector> cal_target(target.begin(), target.end());
  std::vector<LabeledSample> held_out = cal_source;
  std::optional<BctsFit> fit;
  std::vector<std::string> warnings;

  if (options.calibrate && uses_calibration(method)) {
    auto split = split_source(source, options.calibration_fraction, options.seed);
    fit = bcts_fit(split.calibration, options.calibration);
    if (!fit->converged) warnings.push_back("BCTS fit did not reach its gradient tolerance");
    const BctsParams& params = fit->params;
    for (auto& s : cal_source) s = LabeledSample(bcts_apply(params, clip_for_log(s.output)), s.label);
    for (auto& t : cal_target) t = bcts_apply(params, clip_for_log(t));
    held_out = std::move(split.estimation);
    for (auto& s : held_out) s = LabeledSample(bcts_apply(params, clip_for_log(s.output)), s.label);
  }

  const ProbVector ps = label_marginal(source, k);
  const EstimatorConfig& cfg = options.estimator;
  auto run = [&]() -> EstimateResult {
    switch (method) {
      case Method::bbse_hard:
        return bbse(build_hard_confusion(source), build_target_prediction_marginal(target, ConfusionKind::hard),
                    cfg.clip_negative);
      case Method::bbse_soft:
        return bbse(build_soft_confusion(source), build_target_prediction_marginal(target, ConfusionKind::soft),
                    cfg.clip_negative);
      case Method::rlls:
        return rlls(build_hard_confusion(source), build_target_prediction_marginal(target, ConfusionKind::hard),
                    cfg.rlls_lambda, cfg);
      case Method::mlls_em:
        return mlls_em(PredictorTable::from_outputs(cal_target), ps, cfg);
      case Method::mlls_grad:
        return mlls_grad(PredictorTable::from_outputs(cal_target), ps, cfg);
      case Method::mlls_cm:
        return mlls_cm(source, target, ps, cfg);
    }
    throw InvalidInput("unhandled method");
  };
  PipelineResult result{run(), std::move(fit), std::nullopt, std::move(warnings)};

  if (options.diagnostics) {
    try {
      const WeightVector w(result.estimate.weights, result.estimate.source_marginal);
      std::optional<double> ce;
      if (k == 2) {
        ce = estimate_binned_calibration_error(held_out, options.calibration_bins).calibration_error;
      } else {
        ce = estimate_calibration_error(held_out).calibration_error;
      }
      DiagnosticsOptions d;
      d.delta = options.delta;
      d.source_size = source.size();
      result.diagnostics = diagnose(PredictorTable::from_outputs(cal_target), w, cal_source, ce, d);
    } catch (const Error& e) {
      result.warnings.push_back(std::string("diagnostics skipped: ") + e.what());
    }
  }
  return result;
}

SimulatedData simulate_gmm_predictions(const GmmSpec& gmm, const ShiftSpec& shift, std::size_t n_source, std::size_t m,
                                       std::uint64_t seed) {
  gmm.validate();
  if (gmm.source_marginal.size() != 2) throw InvalidInput("GMM source marginal must have two classes");
  ProbVector pt = std::holds_alternative<DirichletShift>(shift)
                      ? sample_dirichlet_shift(std::get<DirichletShift>(shift).alpha, 2, rng::derive_seed(seed, {0}))
                      : std::get<ExplicitShift>(shift).target_marginal;
  if (pt.size() != 2) throw InvalidInput("GMM target marginal must have two classes");

  SimulatedData data{{}, {}, pt, pt.values().cwiseQuotient(gmm.source_marginal.values())};
  for (const auto& p : sample_gmm(gmm, gmm.source_marginal, n_source, rng::derive_seed(seed, {1}))) {
    data.source.emplace_back(gmm_bayes_predict(gmm, p.x), p.label);
  }
  for (const auto& p : sample_gmm(gmm, pt, m, rng::derive_seed(seed, {2}))) {
    data.target.push_back(gmm_bayes_predict(gmm, p.x));
  }
  return data;
}

} // namespace labelshift
