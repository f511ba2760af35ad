// labelshift: estimate, calibrate, diagnose, simulate and benchmark label shift.

#include "labelshift/error.hpp"
#include "labelshift/io.hpp"
#include "labelshift/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using labelshift::io::Json;
namespace ls = labelshift;

namespace {

int exit_code(const ls::Error& e) {
  if (dynamic_cast<const ls::IdentifiabilityError*>(&e)) return 3;
  if (dynamic_cast<const ls::ConvergenceError*>(&e)) return 4;
  if (dynamic_cast<const ls::IoError*>(&e)) return 5;
  return 2;
}

void report_error(const char* kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << '\n';
}

ls::Vector parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ls::InvalidInput(std::string("cannot parse ") + what + " '" + text + "'");
    }
  }
  if (values.empty()) throw ls::InvalidInput(std::string("empty ") + what);
  return Eigen::Map<ls::Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void emit(const Json& doc, const std::string& output) {
  if (!output.empty()) {
    std::ofstream out(output);
    if (!out) throw ls::IoError("cannot write '" + output + "'");
    out << doc.dump(2) << '\n';
    if (!out) throw ls::IoError("write failed for '" + output + "'");
  }
  std::cout << doc.dump(2) << '\n';
}

// Shared by estimate and diagnose.
struct EstimateArgs {
  std::string config;
  std::string source;
  std::string target;
  std::string method;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool no_calibration = false;
  bool clip_negative = false;
  std::size_t bins = 0;
  double fraction = 0.0;
  std::string output;
};

void add_estimate_flags(CLI::App* cmd, EstimateArgs& a) {
  cmd->add_option("--config", a.config, "RunConfig JSON");
  cmd->add_option("--source", a.source, "labeled source prediction CSV");
  cmd->add_option("--target", a.target, "target prediction CSV");
  cmd->add_option("--method", a.method, "bbse_hard|bbse_soft|rlls|mlls_em|mlls_grad|mlls_cm");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&a](std::uint64_t s) { a.seed = s, a.seed_given = true; }, "seed of the calibration split");
  cmd->add_flag("--no-calibration", a.no_calibration, "skip BCTS");
  cmd->add_flag("--clip-negative", a.clip_negative, "clip and project BBSE weights onto W");
  cmd->add_option("--bins", a.bins, "bins for the two-class calibration-error estimate");
  cmd->add_option("--calibration-fraction", a.fraction, "share of the source used to fit BCTS");
  cmd->add_option("--output", a.output, "also write the report to this file");
}

ls::io::RunConfig resolve_config(const EstimateArgs& a) {
  ls::io::RunConfig cfg = a.config.empty() ? ls::io::parse_run_config(Json::object()) : ls::io::read_run_config(a.config);
  if (!a.source.empty()) cfg.source_path = a.source;
  if (!a.target.empty()) cfg.target_path = a.target;
  if (!a.method.empty()) cfg.estimator.method = ls::parse_method(a.method);
  if (a.seed_given) cfg.calibration.seed = a.seed;
  if (a.no_calibration) cfg.calibration.enabled = false;
  if (a.clip_negative) cfg.estimator.clip_negative = true;
  if (a.bins > 0) cfg.diagnostics.bins = a.bins;
  if (a.fraction != 0.0) {
    if (!(a.fraction > 0.0 && a.fraction < 1.0)) throw ls::InvalidInput("--calibration-fraction must lie in (0, 1)");
    cfg.calibration.fraction = a.fraction;
  }
  if (!cfg.source_path) throw ls::InvalidInput("no source file given");
  if (!cfg.target_path) throw ls::InvalidInput("no target file given");
  return cfg;
}

ls::PipelineOptions pipeline_options(const ls::io::RunConfig& cfg) {
  ls::PipelineOptions o;
  o.estimator = cfg.estimator;
  o.calibrate = cfg.calibration.enabled;
  o.calibration.loss = cfg.calibration.loss;
  o.calibration.grad_tol = cfg.calibration.grad_tol;
  o.calibration.max_iters = cfg.calibration.max_iters;
  o.calibration_fraction = cfg.calibration.fraction;
  o.seed = cfg.calibration.seed;
  o.diagnostics = cfg.diagnostics.enabled;
  o.delta = cfg.diagnostics.delta;
  o.calibration_bins = cfg.diagnostics.bins;
  return o;
}

Json fit_json(const ls::BctsFit& fit) {
  return Json{{"params", ls::io::to_json(fit.params)},
              {"loss", fit.loss},
              {"identity_loss", fit.identity_loss},
              {"grad_norm", fit.grad_norm},
              {"iterations", fit.iterations},
              {"converged", fit.converged}};
}

int cmd_estimate(const EstimateArgs& a) {
  const auto cfg = resolve_config(a);
  const auto source = ls::io::read_prediction_file(*cfg.source_path);
  const auto target = ls::io::read_prediction_file(*cfg.target_path);
  if (source.num_classes() != target.num_classes()) throw ls::InvalidInput("source and target class counts differ");
  const auto result = ls::estimate_pipeline(source.labeled(), target.outputs, pipeline_options(cfg));
  const auto& est = result.estimate;
  if (!est.converged) {
    throw ls::ConvergenceError(std::string(ls::method_name(cfg.estimator.method)) + " did not converge in " +
                               std::to_string(est.iterations) + " iterations");
  }
  Json doc = ls::io::to_json(est);
  doc["method"] = ls::method_name(cfg.estimator.method);
  doc["class_ids"] = source.class_ids;
  doc["calibration"] = result.bcts ? fit_json(*result.bcts) : Json(nullptr);
  if (result.diagnostics) {
    const Json d = ls::io::to_json(*result.diagnostics);
    doc["diagnostics"] = Json{{"log_likelihood", d["log_likelihood"]},
                              {"tangent_gradient_norm", d["tangent_gradient_norm"]},
                              {"sigma_min", d["sigma_min"]},
                              {"tau", d["tau"]},
                              {"identifiable", d["identifiable"]},
                              {"hessian_nsd", d["hessian_nsd"]},
                              {"calibration_error", d["calibration_error"]},
                              {"bound_total", d["bound_terms"]["total"]}};
  } else {
    doc["diagnostics"] = nullptr;
  }
  for (const auto& w : result.warnings) doc["warnings"].push_back(w);
  emit(doc, a.output);
  return 0;
}

int cmd_diagnose(const EstimateArgs& a, const std::string& weights) {
  auto cfg = resolve_config(a);
  const auto source = ls::io::read_prediction_file(*cfg.source_path);
  const auto target = ls::io::read_prediction_file(*cfg.target_path);
  if (source.num_classes() != target.num_classes()) throw ls::InvalidInput("source and target class counts differ");
  const auto labeled = source.labeled();
  const std::size_t k = source.num_classes();

  Json doc;
  if (!weights.empty()) {
    if (!a.method.empty()) throw ls::InvalidInput("give either --weights or --method, not both");
    const ls::WeightVector w(parse_list(weights, "weights"), ls::label_marginal(labeled, k));
    const double ce = k == 2 ? ls::estimate_binned_calibration_error(labeled, cfg.diagnostics.bins).calibration_error
                             : ls::estimate_calibration_error(labeled).calibration_error;
    ls::DiagnosticsOptions d;
    d.delta = cfg.diagnostics.delta;
    d.source_size = labeled.size();
    doc = ls::io::to_json(ls::diagnose(ls::PredictorTable::from_outputs(target.outputs), w, labeled, ce, d));
    doc["weights"] = Json(std::vector<double>(w.values().data(), w.values().data() + w.values().size()));
  } else {
    cfg.diagnostics.enabled = true;
    const auto result = ls::estimate_pipeline(labeled, target.outputs, pipeline_options(cfg));
    if (!result.diagnostics) {
      throw ls::InvalidInput(result.warnings.empty() ? "diagnostics unavailable" : result.warnings.back());
    }
    doc = ls::io::to_json(*result.diagnostics);
    doc["weights"] = ls::io::to_json(result.estimate)["weights"];
    doc["method"] = ls::method_name(cfg.estimator.method);
  }
  emit(doc, a.output);
  return 0;
}

struct CalibrateArgs {
  std::string source;
  std::string target;
  std::string loss = "nll";
  std::string output;
  std::string params_out;
  std::size_t bins = 20;
};

int cmd_calibrate(const CalibrateArgs& a) {
  if (a.source.empty()) throw ls::InvalidInput("no source file given");
  if (!a.output.empty() && a.target.empty()) throw ls::InvalidInput("--output needs --target");
  const auto source = ls::io::read_prediction_file(a.source);
  const auto labeled = source.labeled();
  ls::BctsFitOptions opts;
  if (a.loss == "mse") {
    opts.loss = ls::CalibrationLoss::mse;
  } else if (a.loss != "nll") {
    throw ls::InvalidInput("unknown loss '" + a.loss + "'");
  }
  const auto fit = ls::bcts_fit(labeled, opts);

  std::vector<ls::LabeledSample> after;
  after.reserve(labeled.size());
  for (const auto& s : labeled) after.emplace_back(ls::bcts_apply(fit.params, ls::clip_for_log(s.output)), s.label);
  auto ce = [&](std::span<const ls::LabeledSample> s) {
    return source.num_classes() == 2 ? ls::estimate_binned_calibration_error(s, a.bins).calibration_error
                                     : ls::estimate_calibration_error(s).calibration_error;
  };
  Json doc = fit_json(fit);
  doc["calibration_error_before"] = ce(labeled);
  doc["calibration_error_after"] = ce(after);

  if (!a.target.empty()) {
    auto target = ls::io::read_prediction_file(a.target);
    if (target.num_classes() != source.num_classes()) throw ls::InvalidInput("source and target class counts differ");
    for (auto& t : target.outputs) t = ls::bcts_apply(fit.params, ls::clip_for_log(t));
    if (!a.output.empty()) {
      ls::io::write_prediction_file(a.output, target);
      doc["calibrated_target"] = a.output;
    }
  }
  if (!a.params_out.empty()) {
    std::ofstream out(a.params_out);
    if (!out) throw ls::IoError("cannot write '" + a.params_out + "'");
    out << ls::io::to_json(fit.params).dump(2) << '\n';
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

struct SimulateArgs {
  double mu = 1.0;
  std::string source_marginal = "0.5,0.5";
  double alpha = 0.0;
  std::string target_marginal;
  std::size_t n_source = 10'000;
  std::size_t m = 10'000;
  std::uint64_t seed = 0;
  std::string output = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  ls::GmmSpec gmm;
  gmm.mu = a.mu;
  gmm.source_marginal = ls::ProbVector(parse_list(a.source_marginal, "source marginal"));
  if ((a.alpha > 0.0) == !a.target_marginal.empty()) {
    throw ls::InvalidInput("give exactly one of --alpha and --target-marginal");
  }
  const ls::ShiftSpec shift = a.alpha > 0.0 ? ls::ShiftSpec(ls::DirichletShift{a.alpha})
                                            : ls::ShiftSpec(ls::ExplicitShift{
                                                  ls::ProbVector(parse_list(a.target_marginal, "target marginal"))});
  const auto data = ls::simulate_gmm_predictions(gmm, shift, a.n_source, a.m, a.seed);

  const fs::path dir(a.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ls::IoError("cannot create output directory '" + a.output + "'");
  const fs::path source_path = dir / "source.csv";
  const fs::path target_path = dir / "target.csv";
  const fs::path shift_path = dir / "shift.json";
  ls::io::write_prediction_file(source_path, ls::io::PredictionFile::from_samples(data.source));
  ls::io::write_prediction_file(target_path, ls::io::PredictionFile::from_outputs(data.target));

  const auto vec = [](const ls::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const Json sidecar{{"seed", a.seed},
                     {"mu", a.mu},
                     {"shift", ls::io::to_json(shift)},
                     {"source_marginal", vec(gmm.source_marginal.values())},
                     {"target_marginal", vec(data.target_marginal.values())},
                     {"w_star", vec(data.w_star)}};
  {
    std::ofstream out(shift_path);
    if (!out) throw ls::IoError("cannot write '" + shift_path.string() + "'");
    out << sidecar.dump(2) << '\n';
    if (!out) throw ls::IoError("write failed for '" + shift_path.string() + "'");
  }
  Json doc = sidecar;
  doc["source"] = source_path.string();
  doc["target"] = target_path.string();
  doc["sidecar"] = shift_path.string();
  std::cout << doc.dump(2) << '\n';
  return 0;
}

struct BenchmarkArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t bins = 0;
  std::string output;
  std::string reports;
};

int cmd_benchmark(const BenchmarkArgs& a) {
  auto cfg = ls::io::read_run_config(a.config);
  if (!cfg.has_benchmark) throw ls::InvalidInput("config has no benchmark section");
  auto& bench = cfg.benchmark;
  if (a.seed_given) bench.base_seed = a.seed;
  if (a.bins > 0) {
    bench.predictor.kind = ls::PredictorSpec::Kind::binned;
    bench.predictor.bins = a.bins;
  }
  bench.validate();
  const auto result = ls::run_trials(bench);

  std::ostringstream csv;
  ls::io::write_mse_csv(csv, result.table);
  std::size_t failed = 0;
  for (const auto& r : result.reports) failed += r.failed ? 1 : 0;
  Json per_method = Json::object();
  for (const auto& row : result.table) {
    per_method[std::string(ls::method_name(row.method))].push_back(
        Json{{"shift_param", row.shift}, {"m", row.m}, {"mse", row.mse}, {"stderr", row.stderr_mse}});
  }
  const Json summary{{"rows", result.table.size()},
                     {"trials", result.reports.size()},
                     {"failed_trials", failed},
                     {"mse", per_method}};

  if (!a.reports.empty()) {
    std::ofstream out(a.reports);
    if (!out) throw ls::IoError("cannot write '" + a.reports + "'");
    for (const auto& r : result.reports) out << ls::io::to_json(r).dump() << '\n';
  }
  if (a.output.empty()) {
    std::cout << csv.str();
    std::cerr << summary.dump() << '\n';
  } else {
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw ls::IoError("cannot write '" + a.output + "'");
    out << csv.str();
    if (!out) throw ls::IoError("write failed for '" + a.output + "'");
    std::cout << summary.dump(2) << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label shift estimation, calibration and diagnostics"};
  app.require_subcommand(1);

  EstimateArgs est_args;
  auto* estimate = app.add_subcommand("estimate", "estimate importance weights from prediction files");
  add_estimate_flags(estimate, est_args);

  EstimateArgs diag_args;
  std::string weights;
  auto* diagnose = app.add_subcommand("diagnose", "likelihood diagnostics at given or estimated weights");
  add_estimate_flags(diagnose, diag_args);
  diagnose->add_option("--weights", weights, "comma-separated weights instead of --method");

  CalibrateArgs cal_args;
  auto* calibrate = app.add_subcommand("calibrate", "fit BCTS on a labeled source file");
  calibrate->add_option("--source", cal_args.source, "labeled source prediction CSV")->required();
  calibrate->add_option("--target", cal_args.target, "prediction CSV to recalibrate");
  calibrate->add_option("--loss", cal_args.loss, "nll|mse");
  calibrate->add_option("--bins", cal_args.bins, "bins for the two-class calibration-error estimate");
  calibrate->add_option("--output", cal_args.output, "calibrated target CSV");
  calibrate->add_option("--params-out", cal_args.params_out, "BCTS parameters JSON");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "write GMM oracle-posterior prediction files");
  simulate->add_option("--mu", sim_args.mu, "class means are +mu and -mu");
  simulate->add_option("--source-marginal", sim_args.source_marginal, "comma-separated p_s");
  simulate->add_option("--alpha", sim_args.alpha, "Dirichlet shift concentration");
  simulate->add_option("--target-marginal", sim_args.target_marginal, "comma-separated explicit p_t");
  simulate->add_option("--n-source", sim_args.n_source, "labeled source size");
  simulate->add_option("--m", sim_args.m, "target size");
  simulate->add_option("--seed", sim_args.seed, "random seed");
  simulate->add_option("--output", sim_args.output, "output directory");

  BenchmarkArgs bench_args;
  auto* benchmark = app.add_subcommand("benchmark", "Monte Carlo MSE table over shifts, methods and sizes");
  benchmark->add_option("--config", bench_args.config, "RunConfig JSON with a benchmark section")->required();
  benchmark->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { bench_args.seed = s, bench_args.seed_given = true; }, "base seed");
  benchmark->add_option("--bins", bench_args.bins, "use a binned oracle predictor with this many bins");
  benchmark->add_option("--output", bench_args.output, "MSE CSV path (CSV goes to stdout otherwise)");
  benchmark->add_option("--reports", bench_args.reports, "per-trial JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("invalid_input", e.what());
    return 2;
  }

  try {
    if (*estimate) return cmd_estimate(est_args);
    if (*diagnose) return cmd_diagnose(diag_args, weights);
    if (*calibrate) return cmd_calibrate(cal_args);
    if (*simulate) return cmd_simulate(sim_args);
    if (*benchmark) return cmd_benchmark(bench_args);
  } catch (const ls::Error& e) {
    report_error(e.kind(), e.what());
    return exit_code(e);
  } catch (const Json::exception& e) {
    report_error("invalid_input", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 2;
}
