#include "labelshift/io.hpp"

#include "labelshift/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace labelshift::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::string where(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InvalidInput(where(line) + "cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

std::size_t parse_index(std::string_view s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidInput(where(line) + "cannot parse label '" + std::string(s) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
  return a;
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

} // namespace

std::vector<LabeledSample> PredictionFile::labeled() const {
  if (!labels) throw InvalidInput("prediction file has no label column");
  std::vector<LabeledSample> out;
  out.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) out.emplace_back(outputs[i], (*labels)[i]);
  return out;
}

PredictionFile PredictionFile::from_samples(std::span<const LabeledSample> samples) {
  if (samples.empty()) throw InvalidInput("no samples to write");
  PredictionFile f;
  for (std::size_t j = 0; j < samples.front().output.size(); ++j) f.class_ids.push_back(std::to_string(j));
  f.labels.emplace();
  for (const auto& s : samples) {
    f.outputs.push_back(s.output);
    f.labels->push_back(s.label);
  }
  return f;
}

PredictionFile PredictionFile::from_outputs(std::span<const ProbVector> outputs) {
  if (outputs.empty()) throw InvalidInput("no outputs to write");
  PredictionFile f;
  for (std::size_t j = 0; j < outputs.front().size(); ++j) f.class_ids.push_back(std::to_string(j));
  f.outputs.assign(outputs.begin(), outputs.end());
  return f;
}

PredictionFile parse_prediction_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!is_blank(line)) break;
  }
  if (is_blank(line)) throw InvalidInput("prediction file is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  PredictionFile file;
  std::optional<std::size_t> label_col;
  const auto header = split_row(line);
  std::set<std::string> seen;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string name = unquote(header[c]);
    if (name.empty()) throw InvalidInput(where(line_no) + "empty column name");
    if (!seen.insert(name).second) throw InvalidInput(where(line_no) + "duplicate column '" + name + "'");
    if (name == "label") {
      label_col = c;
    } else {
      file.class_ids.push_back(std::move(name));
    }
  }
  if (file.class_ids.empty()) throw InvalidInput("prediction file has no probability columns");
  if (label_col) file.labels.emplace();

  const std::size_t k = file.class_ids.size();
  Vector row(static_cast<Eigen::Index>(k));
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_row(line);
    if (fields.size() != header.size()) {
      throw InvalidInput(where(line_no) + "expected " + std::to_string(header.size()) + " fields, got " +
                         std::to_string(fields.size()));
    }
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (label_col && c == *label_col) {
        const std::size_t y = parse_index(fields[c], line_no);
        if (y >= k) throw InvalidInput(where(line_no) + "label " + std::to_string(y) + " out of range");
        file.labels->push_back(y);
      } else {
        row(j++) = parse_double(fields[c], line_no);
      }
    }
    if ((row.array() < 0.0).any()) throw InvalidInput(where(line_no) + "negative probability");
    const double sum = row.sum();
    if (std::abs(sum - 1.0) <= kSimplexTolerance) {
      file.outputs.emplace_back(row);
    } else if (std::abs(sum - 1.0) <= kIngestTolerance) {
      file.outputs.push_back(ProbVector::normalized(row, kIngestTolerance));
    } else {
      throw InvalidInput(where(line_no) + "probabilities sum to " + format_double(sum));
    }
  }
  if (file.outputs.empty()) throw InvalidInput("prediction file has no rows");
  return file;
}

void write_prediction_csv(std::ostream& out, const PredictionFile& file) {
  for (std::size_t j = 0; j < file.class_ids.size(); ++j) out << (j ? "," : "") << file.class_ids[j];
  if (file.labels) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < file.outputs.size(); ++i) {
    const auto& p = file.outputs[i];
    for (std::size_t j = 0; j < p.size(); ++j) out << (j ? "," : "") << format_double(p[j]);
    if (file.labels) out << ',' << (*file.labels)[i];
    out << '\n';
  }
}

PredictionFile read_prediction_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return parse_prediction_csv(in);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_prediction_file(const std::filesystem::path& path, const PredictionFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_prediction_csv(out, file);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& c) {
  const Matrix& j = c.joint();
  for (Eigen::Index col = 0; col < j.cols(); ++col) out << (col ? "," : "") << col;
  out << '\n';
  for (Eigen::Index r = 0; r < j.rows(); ++r) {
    for (Eigen::Index col = 0; col < j.cols(); ++col) out << (col ? "," : "") << format_double(j(r, col));
    out << '\n';
  }
}

ConfusionMatrix parse_confusion_csv(std::istream& in, ConfusionKind kind) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t k = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_row(line);
    if (k == 0) {
      k = fields.size();
      continue;
    }
    if (fields.size() != k) throw InvalidInput(where(line_no) + "confusion row has the wrong width");
    for (auto f : fields) values.push_back(parse_double(f, line_no));
  }
  if (k == 0 || values.size() != k * k) throw InvalidInput("confusion matrix must be square with a header row");
  const auto n = static_cast<Eigen::Index>(k);
  Matrix joint(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) joint(r, c) = values[static_cast<std::size_t>(r * n + c)];
  }
  return ConfusionMatrix(joint, kind);
}

Json to_json(const BctsParams& params) {
  return Json{{"temperature", params.temperature}, {"biases", vector_json(params.biases)}};
}

BctsParams bcts_params_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidInput("BCTS parameters must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "temperature" && key != "biases") throw InvalidInput("unknown BCTS key '" + key + "'");
  }
  if (!j.contains("temperature") || !j["temperature"].is_number()) throw InvalidInput("BCTS temperature missing");
  if (!j.contains("biases") || !j["biases"].is_array()) throw InvalidInput("BCTS biases missing");
  BctsParams p;
  p.temperature = j["temperature"].get<double>();
  p.biases.resize(static_cast<Eigen::Index>(j["biases"].size()));
  for (std::size_t i = 0; i < j["biases"].size(); ++i) {
    if (!j["biases"][i].is_number()) throw InvalidInput("BCTS biases must be numbers");
    p.biases(static_cast<Eigen::Index>(i)) = j["biases"][i].get<double>();
  }
  p.validate();
  return p;
}

Json to_json(const DiagnosticsReport& r) {
  const auto& b = r.bound_terms;
  return Json{
      {"log_likelihood", number_or_null(r.log_likelihood)},
      {"gradient", vector_json(r.gradient)},
      {"tangent_gradient", vector_json(r.tangent_gradient)},
      {"tangent_gradient_norm", number_or_null(r.tangent_gradient.norm())},
      {"hessian", matrix_json(r.hessian)},
      {"sigma_min", number_or_null(r.sigma_min)},
      {"tau", number_or_null(r.tau)},
      {"second_moment_min_eig", number_or_null(r.second_moment_min_eig)},
      {"identifiable", r.identifiable},
      {"hessian_nsd", r.hessian_nsd},
      {"hessian_symmetric", r.hessian_symmetric},
      {"calibration_error", r.calibration_error ? number_or_null(*r.calibration_error) : Json(nullptr)},
      {"bound_terms",
       {{"term1", number_or_null(b.term1)},
        {"term2", number_or_null(b.term2)},
        {"total", number_or_null(b.total)},
        {"constant", b.constant}}},
  };
}

Json to_json(const EstimateResult& r) {
  Json j{
      {"weights", vector_json(r.weights)},
      {"source_marginal", vector_json(r.source_marginal.values())},
      {"iterations", r.iterations},
      {"final_objective", number_or_null(r.final_objective)},
      {"converged", r.converged},
      {"identifiable", r.identifiable},
      {"warnings", r.warnings},
  };
  const Vector pt = r.weights.cwiseProduct(r.source_marginal.values());
  j["target_marginal"] = vector_json(pt);
  if (!r.objective_trace.empty()) j["objective_trace"] = r.objective_trace;
  return j;
}

Json to_json(const TrialReport& r) {
  Json j{
      {"method", method_name(r.method)},
      {"shift_index", r.shift_index},
      {"m", r.m},
      {"trial", r.trial},
      {"seed", r.seed},
      {"target_marginal", vector_json(r.target_marginal.values())},
      {"w_hat", vector_json(r.w_hat)},
      {"w_star", vector_json(r.w_star)},
      {"squared_error", number_or_null(r.squared_error)},
      {"failed", r.failed},
      {"error", r.error},
  };
  if (r.diagnostics) j["diagnostics"] = to_json(*r.diagnostics);
  return j;
}

void write_mse_csv(std::ostream& out, std::span<const MseRow> rows) {
  out << "shift_param,method,m,n_trials,mse,stderr\n";
  for (const auto& r : rows) {
    out << r.shift << ',' << method_name(r.method) << ',' << r.m << ',' << r.n_trials << ',' << format_double(r.mse)
        << ',' << format_double(r.stderr_mse) << '\n';
  }
}

// ---- RunConfig ----

namespace {

class Section {
public:
  Section(const Json& j, std::string name, std::initializer_list<const char*> keys) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw InvalidInput("'" + name_ + "' must be an object");
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw InvalidInput("unknown key '" + name_ + "." + key + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const Json& at(const char* key) const { return j_.at(key); }

  template <class T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    const std::string path = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InvalidInput("'" + path + "' must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw InvalidInput("'" + path + "' must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw InvalidInput("'" + path + "' must be a number");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw InvalidInput("'" + path + "' must be a non-negative integer");
    } else {
      if (!v.is_number_integer()) throw InvalidInput("'" + path + "' must be an integer");
    }
    out = v.get<T>();
  }

private:
  const Json& j_;
  std::string name_;
};

CalibrationLoss parse_loss(const std::string& s) {
  if (s == "nll") return CalibrationLoss::nll;
  if (s == "mse") return CalibrationLoss::mse;
  throw InvalidInput("unknown calibration loss '" + s + "'");
}

Vector number_array(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw InvalidInput("'" + path + "' must be a non-empty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidInput("'" + path + "' must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

} // namespace

ShiftSpec shift_from_json(const Json& j) {
  Section s(j, "shift", {"dirichlet", "explicit"});
  if (s.has("dirichlet") == s.has("explicit")) throw InvalidInput("shift needs exactly one of dirichlet/explicit");
  if (s.has("dirichlet")) {
    DirichletShift d{0.0};
    s.read("dirichlet", d.alpha);
    return d;
  }
  return ExplicitShift{ProbVector(number_array(s.at("explicit"), "shift.explicit"))};
}

Json to_json(const ShiftSpec& shift) {
  if (const auto* d = std::get_if<DirichletShift>(&shift)) return Json{{"dirichlet", d->alpha}};
  return Json{{"explicit", vector_json(std::get<ExplicitShift>(shift).target_marginal.values())}};
}

RunConfig parse_run_config(const Json& j) {
  Section root(j, "config", {"source", "target", "method", "calibration", "diagnostics", "benchmark"});
  RunConfig cfg;

  if (root.has("source")) {
    Section s(root.at("source"), "source", {"path"});
    std::string p;
    s.read("path", p);
    if (s.has("path")) cfg.source_path = p;
  }
  if (root.has("target")) {
    Section s(root.at("target"), "target", {"path"});
    std::string p;
    s.read("path", p);
    if (s.has("path")) cfg.target_path = p;
  }
  if (root.has("method")) {
    Section s(root.at("method"), "method", {"name", "max_iters", "tol", "rlls_lambda", "clip_negative", "record_trace"});
    std::string name;
    s.read("name", name);
    if (s.has("name")) cfg.estimator.method = parse_method(name);
    s.read("max_iters", cfg.estimator.max_iters);
    s.read("tol", cfg.estimator.tol);
    s.read("rlls_lambda", cfg.estimator.rlls_lambda);
    s.read("clip_negative", cfg.estimator.clip_negative);
    s.read("record_trace", cfg.estimator.record_trace);
  }
  cfg.estimator.validate();

  if (root.has("calibration")) {
    Section s(root.at("calibration"), "calibration", {"enabled", "loss", "fraction", "grad_tol", "max_iters", "seed"});
    s.read("enabled", cfg.calibration.enabled);
    std::string loss;
    s.read("loss", loss);
    if (s.has("loss")) cfg.calibration.loss = parse_loss(loss);
    s.read("fraction", cfg.calibration.fraction);
    s.read("grad_tol", cfg.calibration.grad_tol);
    s.read("max_iters", cfg.calibration.max_iters);
    s.read("seed", cfg.calibration.seed);
  }
  if (!(cfg.calibration.fraction > 0.0 && cfg.calibration.fraction < 1.0)) {
    throw InvalidInput("calibration.fraction must lie in (0, 1)");
  }
  if (!(cfg.calibration.grad_tol > 0.0) || cfg.calibration.max_iters < 1) {
    throw InvalidInput("calibration.grad_tol and max_iters must be positive");
  }

  if (root.has("diagnostics")) {
    Section s(root.at("diagnostics"), "diagnostics", {"enabled", "delta", "bins"});
    s.read("enabled", cfg.diagnostics.enabled);
    s.read("delta", cfg.diagnostics.delta);
    s.read("bins", cfg.diagnostics.bins);
  }
  if (!(cfg.diagnostics.delta > 0.0 && cfg.diagnostics.delta < 1.0)) throw InvalidInput("diagnostics.delta in (0, 1)");
  if (cfg.diagnostics.bins == 0) throw InvalidInput("diagnostics.bins must be positive");

  if (root.has("benchmark")) {
    Section s(root.at("benchmark"), "benchmark",
              {"gmm", "n_source", "shifts", "methods", "m_values", "n_trials", "seed", "predictor", "bcts_calibrate",
               "calibration_loss", "realized_w_star", "diagnostics", "threads"});
    BenchmarkConfig& b = cfg.benchmark;
    cfg.has_benchmark = true;
    if (s.has("gmm")) {
      Section g(s.at("gmm"), "benchmark.gmm", {"mu", "source_marginal"});
      g.read("mu", b.gmm.mu);
      if (g.has("source_marginal")) {
        b.gmm.source_marginal = ProbVector(number_array(g.at("source_marginal"), "benchmark.gmm.source_marginal"));
      }
    }
    s.read("n_source", b.n_source);
    if (s.has("shifts")) {
      if (!s.at("shifts").is_array()) throw InvalidInput("'benchmark.shifts' must be an array");
      for (const auto& sh : s.at("shifts")) b.shifts.push_back(shift_from_json(sh));
    }
    if (s.has("methods")) {
      if (!s.at("methods").is_array()) throw InvalidInput("'benchmark.methods' must be an array");
      for (const auto& m : s.at("methods")) {
        if (!m.is_string()) throw InvalidInput("'benchmark.methods' must contain strings");
        b.methods.push_back(parse_method(m.get<std::string>()));
      }
    }
    if (s.has("m_values")) {
      if (!s.at("m_values").is_array()) throw InvalidInput("'benchmark.m_values' must be an array");
      for (const auto& m : s.at("m_values")) {
        if (!m.is_number_unsigned()) throw InvalidInput("'benchmark.m_values' must contain positive integers");
        b.m_values.push_back(m.get<std::size_t>());
      }
    }
    s.read("n_trials", b.n_trials);
    s.read("seed", b.base_seed);
    if (s.has("predictor")) {
      Section p(s.at("predictor"), "benchmark.predictor", {"kind", "temperature", "bins"});
      std::string kind;
      p.read("kind", kind);
      if (p.has("kind")) {
        if (kind == "oracle") {
          b.predictor.kind = PredictorSpec::Kind::oracle;
        } else if (kind == "tempered") {
          b.predictor.kind = PredictorSpec::Kind::tempered;
        } else if (kind == "binned") {
          b.predictor.kind = PredictorSpec::Kind::binned;
        } else {
          throw InvalidInput("unknown predictor kind '" + kind + "'");
        }
      }
      p.read("temperature", b.predictor.temperature);
      p.read("bins", b.predictor.bins);
    }
    s.read("bcts_calibrate", b.bcts_calibrate);
    std::string loss;
    s.read("calibration_loss", loss);
    if (s.has("calibration_loss")) b.calibration_loss = parse_loss(loss);
    s.read("realized_w_star", b.realized_w_star);
    s.read("diagnostics", b.diagnostics);
    s.read("threads", b.threads);
  }
  cfg.benchmark.estimator = cfg.estimator;
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

} // namespace labelshift::io
