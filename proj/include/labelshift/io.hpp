#pragma once

#include "labelshift/calibration.hpp"
#include "labelshift/confusion.hpp"
#include "labelshift/diagnostics.hpp"
#include "labelshift/estimators.hpp"
#include "labelshift/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace labelshift::io {

using Json = nlohmann::json;

/// Rows are accepted as-is within kSimplexTolerance of summing to one and
/// rescaled within this looser tolerance; anything further off is rejected.
inline constexpr double kIngestTolerance = 1e-6;

/// Predictor outputs on disk: one probability column per class plus an
/// optional integer "label" column (0-based class index).
struct PredictionFile {
  std::vector<std::string> class_ids;
  std::vector<ProbVector> outputs;
  std::optional<std::vector<std::size_t>> labels;

  std::size_t num_classes() const { return class_ids.size(); }
  /// Throws InvalidInput when the file carries no labels.
  std::vector<LabeledSample> labeled() const;

  static PredictionFile from_samples(std::span<const LabeledSample> samples);
  static PredictionFile from_outputs(std::span<const ProbVector> outputs);
};

PredictionFile parse_prediction_csv(std::istream& in);
void write_prediction_csv(std::ostream& out, const PredictionFile& file);
/// IoError when the path cannot be opened; InvalidInput on malformed content.
PredictionFile read_prediction_file(const std::filesystem::path& path);
void write_prediction_file(const std::filesystem::path& path, const PredictionFile& file);

/// Row-major joint with a header row of class labels.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& c);
ConfusionMatrix parse_confusion_csv(std::istream& in, ConfusionKind kind);

Json to_json(const BctsParams& params);
BctsParams bcts_params_from_json(const Json& j);

/// Non-finite values (e.g. infinite bound terms) are written as null.
Json to_json(const DiagnosticsReport& report);
Json to_json(const EstimateResult& result);
Json to_json(const TrialReport& report);

/// Columns: shift_param, method, m, n_trials, mse, stderr.
void write_mse_csv(std::ostream& out, std::span<const MseRow> rows);

struct CalibrationSection {
  bool enabled = true;
  CalibrationLoss loss = CalibrationLoss::nll;
  /// Share of the labeled source held out for fitting BCTS.
  double fraction = 0.5;
  double grad_tol = 1e-8;
  int max_iters = 10'000;
  /// Seed of the calibration/estimation split permutation.
  std::uint64_t seed = 0;
};

struct DiagnosticsSection {
  bool enabled = true;
  double delta = 0.05;
  /// Bins for the calibration-error estimate on two-class data.
  std::size_t bins = 20;
};

struct RunConfig {
  std::optional<std::string> source_path;
  std::optional<std::string> target_path;
  EstimatorConfig estimator;
  CalibrationSection calibration;
  DiagnosticsSection diagnostics;
  BenchmarkConfig benchmark;
  bool has_benchmark = false;
};

/// Sections: source, target, method, calibration, diagnostics, benchmark.
/// Unknown keys and wrongly typed values raise InvalidInput.
RunConfig parse_run_config(const Json& j);
RunConfig read_run_config(const std::filesystem::path& path);

/// Shift spec from {"dirichlet": α} or {"explicit": [p...]}.
ShiftSpec shift_from_json(const Json& j);
Json to_json(const ShiftSpec& shift);

} // namespace labelshift::io
