/*
 * Copyright 2026 The Selex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "selex/cli.h"

#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "selex/amortize.h"
#include "selex/benchmark.h"
#include "selex/blackbox.h"
#include "selex/cache.h"
#include "selex/combine.h"
#include "selex/evalsuite.h"
#include "selex/text_format.h"
#include "selex/uncertainty.h"

namespace selex {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kModelFile[] = "model.txt";
constexpr char kSplitFile[] = "split.json";
constexpr char kAmortizerFile[] = "amortizer.txt";
constexpr char kManifestFile[] = "selective.json";
constexpr char kExplanationDir[] = "explanations";

// Stream ids for stages that only the CLI runs.
constexpr uint64_t kExplainStream = 10;
constexpr uint64_t kRandomRankingStream = 11;
constexpr uint64_t kBootstrapStream = 12;
constexpr uint64_t kCacheStreamBase = 1000;
constexpr uint64_t kLevelCalStreamBase = 2000;
constexpr uint64_t kLevelTestStreamBase = 3000;

const std::vector<std::string> kSplits = {"train", "cal", "test"};
const std::vector<std::string> kProtocols = {
    "coverage", "recourse", "quantiles", "perturbation", "timeshare", "ablation"};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

int line_of(const std::string& text, size_t byte) {
  return 1 + static_cast<int>(std::count(
                 text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

// Typed lookup that names the offending key on failure.
template <typename T>
T get_as(const json& node, const std::string& key, const std::string& path) {
  try {
    return node.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgumentError("config key '" + path + "' has the wrong type");
  }
}

template <typename T>
void read_opt(const json& node, const std::string& key, const std::string& path,
              T* value) {
  if (node.contains(key)) *value = get_as<T>(node, key, path + key);
}

void check_keys(const json& node, const std::string& path,
                const std::vector<std::string>& allowed) {
  if (!node.is_object()) {
    throw InvalidArgumentError("config key '" + path + "' must be an object");
  }
  for (const auto& [key, value] : node.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidArgumentError("unknown config key '" + path + key +
                                 "' (allowed: " + join(allowed) + ")");
    }
  }
}

void read_network(const json& node, const std::string& path,
                  NetworkConfig* net) {
  check_keys(node, path,
             {"hidden", "activation", "epochs", "batch_size", "learning_rate"});
  read_opt(node, "hidden", path, &net->hidden);
  if (node.contains("activation")) {
    net->activation =
        parse_activation(get_as<std::string>(node, "activation", path + "activation"));
  }
  read_opt(node, "epochs", path, &net->epochs);
  read_opt(node, "batch_size", path, &net->batch_size);
  read_opt(node, "learning_rate", path, &net->learning_rate);
}

MlpSpec network_spec(const NetworkConfig& net, int inputs, int outputs,
                     int num_features) {
  MlpSpec spec;
  spec.layer_widths = {inputs};
  if (net.hidden.empty()) {
    spec.layer_widths.push_back(3 * num_features);
  } else {
    spec.layer_widths.insert(spec.layer_widths.end(), net.hidden.begin(),
                             net.hidden.end());
  }
  spec.layer_widths.push_back(outputs);
  spec.activation = net.activation;
  spec.epochs = net.epochs;
  spec.batch_size = net.batch_size;
  spec.learning_rate = net.learning_rate;
  spec.validate();
  return spec;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgumentError("cannot write " + path);
  out << text;
}

void require_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing artifact " + path + " (" + hint + ")");
  }
}

// Exclusive advisory lock on the output directory for the lifetime of a
// command.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir) {
    const std::string path = (fs::path(dir) / ".selex.lock").string();
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) {
      throw InvalidArgumentError("cannot create lock file " + path + ": " +
                                 std::strerror(errno));
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw InvalidArgumentError("another selex command holds " + path);
    }
  }
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

std::string input_id(int row) { return "row-" + std::to_string(row); }

std::vector<std::string> ids_of(const std::vector<int>& rows) {
  std::vector<std::string> ids;
  for (int r : rows) ids.push_back(input_id(r));
  return ids;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

struct GlobalOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
  bool force = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  if (g.config_path.empty()) {
    throw InvalidArgumentError("--config is required for this command");
  }
  ExperimentConfig config = load_config(g.config_path);
  if (g.seed.has_value()) config.seed = *g.seed;
  if (!g.out_dir.empty()) {
    config.out_dir = fs::absolute(g.out_dir).string();
  } else {
    config.out_dir = config.resolve(config.out_dir);
  }
  fs::create_directories(config.out_dir);
  return config;
}

// Loaded dataset, split and model shared by every stage after train-model.
struct Workspace {
  ExperimentConfig config;
  Dataset data;
  DatasetSplit split;
  ModelBundle bundle;
  std::unique_ptr<CountedModel> model;
  Eigen::MatrixXd features;  // standardized, all rows
  std::map<std::string, std::vector<int>> predicted;  // per split

  std::string out(const std::string& name) const {
    return (fs::path(config.out_dir) / name).string();
  }
  const std::vector<int>& rows(const std::string& split_name) const {
    if (split_name == "train") return split.train;
    if (split_name == "cal") return split.cal;
    if (split_name == "test") return split.test;
    throw InvalidArgumentError("unknown split '" + split_name +
                               "' (expected train, cal or test)");
  }
  Eigen::MatrixXd inputs(const std::string& split_name) const {
    return rows_of(features, rows(split_name));
  }
  int num_features() const { return data.num_features(); }
  std::string cache_path(const std::string& split_name) const {
    return (fs::path(config.out_dir) / kExplanationDir / (split_name + ".jsonl"))
        .string();
  }
  ExplanationCache cache(const std::string& split_name) const {
    const std::string path = cache_path(split_name);
    require_file(path, "run gen-explanations --split " + split_name);
    return ExplanationCache::load(path);
  }
  Eigen::MatrixXd cached(const std::string& split_name,
                         const std::string& method) const {
    return cache(split_name).gather(ids_of(rows(split_name)), method,
                                    config.seed);
  }
};

std::string split_to_json(const DatasetSplit& split,
                          const std::string& dataset_digest) {
  json doc = {{"dataset_sha256", dataset_digest},
              {"train", split.train},
              {"cal", split.cal},
              {"test", split.test}};
  return doc.dump() + "\n";
}

Workspace open_workspace(const ExperimentConfig& config) {
  Workspace ws;
  ws.config = config;
  const std::string dataset_path = config.resolve(config.dataset_path);
  require_file(dataset_path, "dataset.path");
  ws.data = load_csv(dataset_path, config.label_column);
  const std::string split_path = ws.out(kSplitFile);
  const std::string model_path = ws.out(kModelFile);
  require_file(split_path, "run train-model first");
  require_file(model_path, "run train-model first");
  try {
    const json doc = json::parse(read_text(split_path));
    if (doc.at("dataset_sha256").get<std::string>() != sha256_file(dataset_path)) {
      throw MissingArtifactError(split_path + " was produced from a different "
                                              "dataset; rerun train-model");
    }
    ws.split.train = doc.at("train").get<std::vector<int>>();
    ws.split.cal = doc.at("cal").get<std::vector<int>>();
    ws.split.test = doc.at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InvalidArgumentError(split_path + ": malformed split: " + e.what());
  }
  ws.bundle = load_model(model_path);
  if (static_cast<int>(ws.bundle.standardizer.mean.size()) !=
      ws.data.num_features()) {
    throw InvalidArgumentError("model expects " +
                               std::to_string(ws.bundle.standardizer.mean.size()) +
                               " features, dataset has " +
                               std::to_string(ws.data.num_features()));
  }
  ws.model = std::make_unique<CountedModel>(ws.bundle.classifier);
  ws.features = ws.bundle.standardizer.transform(ws.data.features);
  for (const auto& s : kSplits) {
    ws.predicted[s] = argmax_rows(ws.model->evaluate_batch(ws.inputs(s)));
  }
  ws.model->reset_counter();
  return ws;
}

// ---------------------------------------------------------------- verbs

int cmd_make_benchmark(const GlobalOptions& g, int rows, int features,
                       const std::string& output, std::ostream& out) {
  if (output.empty()) throw InvalidArgumentError("--output is required");
  const Dataset data =
      make_benchmark_dataset(rows, features, RngSpec{g.seed.value_or(0), 0});
  write_csv(data, "label", output);
  out << "wrote " << rows << " rows with " << features << " features to "
      << output << "\n";
  return kExitOk;
}

int cmd_train_model(const GlobalOptions& g, std::ostream& out) {
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  const std::string dataset_path = config.resolve(config.dataset_path);
  require_file(dataset_path, "dataset.path");
  const Dataset data = load_csv(dataset_path, config.label_column);
  if (data.num_classes() < 2) {
    throw InvalidArgumentError("label column '" + config.label_column +
                               "' needs at least two distinct values");
  }
  const DatasetSplit split = split_dataset(
      data.num_rows(), config.fractions,
      RngSpec{config.seed, PipelineStreams::kSplit});
  if (split.train.empty()) throw InvalidArgumentError("empty training split");

  ModelBundle bundle;
  bundle.standardizer = Standardizer::fit(rows_of(data.features, split.train));
  bundle.feature_names = data.feature_names;
  bundle.label_values = data.label_values;
  const Eigen::MatrixXd all = bundle.standardizer.transform(data.features);
  std::vector<int> labels;
  for (int r : split.train) labels.push_back(data.labels[r]);
  MlpSpec spec = network_spec(config.model, data.num_features(),
                              data.num_classes(), data.num_features());
  spec.seed = RngSpec{config.seed, PipelineStreams::kClassifier};
  TrainingTrace trace;
  bundle.classifier = train_mlp(spec, rows_of(all, split.train), labels, &trace);

  const std::string model_path = (fs::path(config.out_dir) / kModelFile).string();
  save_model(bundle, model_path);
  write_text((fs::path(config.out_dir) / kSplitFile).string(),
             split_to_json(split, sha256_file(dataset_path)));

  const std::vector<int>& eval_rows = split.test.empty() ? split.train : split.test;
  const std::vector<int> predicted =
      argmax_rows(bundle.classifier->predict_batch(rows_of(all, eval_rows)));
  int correct = 0;
  for (size_t i = 0; i < eval_rows.size(); ++i) {
    correct += predicted[i] == data.labels[eval_rows[i]];
  }
  out << "split sizes: train " << split.train.size() << ", cal "
      << split.cal.size() << ", test " << split.test.size() << "\n";
  out << "final training loss: " << format_real_decimal(trace.epoch_loss.back())
      << "\n";
  out << (split.test.empty() ? "train" : "test") << " accuracy: "
      << format_real_decimal(static_cast<double>(correct) /
                             static_cast<double>(eval_rows.size()))
      << "\n";
  out << "wrote " << model_path << "\n";
  return kExitOk;
}

int cmd_gen_explanations(const GlobalOptions& g, const std::string& method,
                         const std::string& split_name, std::ostream& out) {
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  Workspace ws = open_workspace(config);
  const std::vector<int>& rows = ws.rows(split_name);
  const int d = ws.num_features();
  parse_method_name(method);
  const bool exact = method == "exact";
  if (exact && d > kExactShapMaxFeatures && !g.force) {
    throw InvalidArgumentError("exact explanations for d = " + std::to_string(d) +
                               " need 2^d inferences per row; pass --force");
  }
  const auto split_index = static_cast<uint64_t>(
      std::find(kSplits.begin(), kSplits.end(), split_name) - kSplits.begin());
  const RngSpec rng{config.seed, kCacheStreamBase + split_index};
  const std::vector<int>& targets = ws.predicted.at(split_name);

  std::vector<ExplanationRecord> records;
  int64_t total = 0;
  ws.model->reset_counter();
  for (size_t i = 0; i < rows.size(); ++i) {
    const FeatureVector x = ws.features.row(rows[i]).transpose();
    const TargetClass y{targets[i]};
    AttributionVector a;
    if (exact) {
      ExactShapOptions options;
      options.allow_large = g.force;
      a = exact_shap(*ws.model, x, y, MaskingSpec::zeros(d), options);
    } else {
      a = run_mc(McMethod::parse(method), *ws.model, x, y, MaskingSpec::zeros(d),
                 rng.child(static_cast<uint64_t>(rows[i])));
    }
    a.input_id = input_id(rows[i]);
    total += a.inference_cost;
    records.push_back(make_record(a, method, config.seed));
  }
  if (total != ws.model->evaluations()) {
    throw NumericalError("inference accounting mismatch: reported " +
                         std::to_string(total) + ", counted " +
                         std::to_string(ws.model->evaluations()));
  }
  fs::create_directories(fs::path(config.out_dir) / kExplanationDir);
  const int written = append_records(ws.cache_path(split_name), records);
  out << "explained " << rows.size() << " " << split_name << " rows with "
      << method << "\n";
  out << "total inferences: " << total << "\n";
  out << "new cache records: " << written << "\n";
  return kExitOk;
}

int cmd_train_amortized(const GlobalOptions& g, std::ostream& out) {
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  Workspace ws = open_workspace(config);
  const Eigen::MatrixXd targets = ws.cached("train", config.train_targets);
  const Eigen::MatrixXd inputs = ws.inputs("train");
  const int d = ws.num_features();
  const int k = ws.data.num_classes();
  const MlpSpec spec = network_spec(config.amortizer, d + k, d, d);
  AmortizerMeta meta;
  meta.target_method = config.train_targets;
  meta.target_seed = config.seed;
  TrainingTrace trace;
  const AmortizedExplainer amortizer = train_amortized(
      inputs, ws.predicted.at("train"), targets, k, spec,
      RngSpec{config.seed, PipelineStreams::kAmortizer}, meta, &trace);
  save_amortizer(amortizer, ws.out(kAmortizerFile));
  const std::vector<double> errors =
      row_mse(amortizer.explain_batch(inputs, ws.predicted.at("train")), targets);
  double mean = 0.0;
  for (double e : errors) mean += e / static_cast<double>(errors.size());
  out << "amortizer train mse vs " << config.train_targets << ": "
      << format_real_decimal(mean) << "\n";
  out << "wrote " << ws.out(kAmortizerFile) << "\n";
  return kExitOk;
}

CalibrationData cli_calibration(const Workspace& ws, const McMethod& recourse,
                                uint64_t stream) {
  CalibrationData cal;
  cal.inputs = ws.inputs("cal");
  cal.targets = ws.predicted.at("cal");
  cal.mc = run_mc_rows(recourse, *ws.model, cal.inputs, cal.targets,
                       MaskingSpec::zeros(ws.num_features()),
                       RngSpec{ws.config.seed, stream});
  cal.reference = ws.cached("cal", ws.config.reference);
  return cal;
}

int cmd_fit_selective(const GlobalOptions& g, std::ostream& out) {
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  Workspace ws = open_workspace(config);
  const int d = ws.num_features();
  const int k = ws.data.num_classes();
  require_file(ws.out(kAmortizerFile), "run train-amortized first");
  auto amortizer =
      std::make_shared<const AmortizedExplainer>(load_amortizer(ws.out(kAmortizerFile)));
  if (amortizer->num_features() != d || amortizer->num_classes() != k) {
    throw InvalidArgumentError("amortizer does not match the dataset schema");
  }
  const Eigen::MatrixXd train_targets = ws.cached("train", config.train_targets);
  const Eigen::MatrixXd train_inputs = ws.inputs("train");
  const auto kind = parse_metric_kind(config.metric_kind);
  std::shared_ptr<const UncertaintyMetric> metric;
  if (kind == UncertaintyMetric::Kind::kLearned) {
    metric = std::make_shared<const UncertaintyMetric>(train_learned_uncertainty(
        train_inputs, ws.predicted.at("train"), *amortizer, train_targets,
        network_spec(config.learned_metric, d, 1, d),
        RngSpec{config.seed, PipelineStreams::kMetric}));
  } else {
    std::vector<RngSpec> streams;
    for (int i = 1; i <= config.ensemble_size; ++i) {
      streams.push_back(RngSpec{config.seed, PipelineStreams::kEnsembleBase +
                                                 static_cast<uint64_t>(i)});
    }
    metric = std::make_shared<const UncertaintyMetric>(UncertaintyMetric::deep(
        train_ensemble(train_inputs, ws.predicted.at("train"), train_targets, k,
                       network_spec(config.amortizer, d + k, d, d), streams,
                       amortizer->meta())));
  }
  const McMethod recourse = McMethod::parse(config.recourse);
  const CalibrationData cal =
      cli_calibration(ws, recourse, PipelineStreams::kCalRecourse);
  SelectiveConfig sc;
  sc.alpha = config.coverage(d);
  sc.num_bins = config.num_bins;
  sc.recourse = recourse;
  const SelectiveExplainer se =
      fit_selective(amortizer, metric, cal, sc, MaskingSpec::zeros(d));
  const json extra = {
      {"model", {{"file", kModelFile}, {"sha256", sha256_file(ws.out(kModelFile))}}},
      {"seed", config.seed},
      {"train_targets", config.train_targets},
      {"reference", config.reference}};
  save_selective(se, ws.out(kManifestFile), {}, extra.dump());

  out << "coverage alpha: " << format_real_decimal(se.policy().alpha()) << "\n";
  if (se.policy().mode() == SelectionPolicy::Mode::kCoverNone) {
    out << "threshold: cover-none\n";
  } else {
    out << "threshold: " << format_real_decimal(se.policy().threshold()) << "\n";
  }
  out << "bin lambdas:";
  for (double l : se.bins().lambdas) out << ' ' << format_real_decimal(l);
  out << "\n";
  if (se.bins().out_of_unit_interval()) {
    out << "note: some bin lambdas lie outside [0, 1]\n";
  }
  out << "wrote " << ws.out(kManifestFile) << "\n";
  return kExitOk;
}

struct LoadedManifest {
  SelectiveExplainer se;
  ModelBundle bundle;
};

LoadedManifest open_manifest(const std::string& manifest_path) {
  require_file(manifest_path, "run fit-selective first");
  LoadedManifest loaded;
  loaded.se = load_selective(manifest_path);
  json doc = json::parse(read_text(manifest_path));
  const fs::path base = fs::path(manifest_path).parent_path();
  try {
    const json& model = doc.at("extra").at("model");
    const std::string model_path =
        (base / model.at("file").get<std::string>()).string();
    require_file(model_path, "model referenced by the manifest");
    if (sha256_file(model_path) != model.at("sha256").get<std::string>()) {
      throw MissingArtifactError(model_path +
                                 " does not match its manifest digest");
    }
    loaded.bundle = load_model(model_path);
  } catch (const json::exception& e) {
    throw InvalidArgumentError(manifest_path + ": manifest has no model entry: " +
                               e.what());
  }
  return loaded;
}

// Feature rows from a CSV whose header must match the model's features. A
// column named `label_column` is ignored.
Eigen::MatrixXd read_feature_rows(const std::string& path,
                                  const std::vector<std::string>& names,
                                  const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open input rows " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgumentError(path + ": empty file");
  const auto split_line = [](const std::string& text) {
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    return cells;
  };
  const std::vector<std::string> header = split_line(line);
  std::vector<int> columns;
  for (const auto& name : names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw InvalidArgumentError(path + ":1: missing feature column '" + name +
                                 "' expected by the manifest");
    }
    columns.push_back(static_cast<int>(it - header.begin()));
  }
  for (const auto& h : header) {
    if (h != label_column && std::find(names.begin(), names.end(), h) == names.end()) {
      throw InvalidArgumentError(path + ":1: unexpected column '" + h +
                                 "'; the manifest expects " +
                                 std::to_string(names.size()) + " features");
    }
  }
  std::vector<std::vector<double>> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw InvalidArgumentError(path + ":" + std::to_string(number) +
                                 ": expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (int c : columns) {
      double v = 0.0;
      if (!parse_real(cells[c], &v) || !std::isfinite(v)) {
        throw InvalidArgumentError(path + ":" + std::to_string(number) +
                                   ": non-numeric value '" + cells[c] + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(names.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < names.size(); ++c) out(r, c) = rows[r][c];
  }
  return out;
}

int cmd_explain(const GlobalOptions& g, std::string manifest_path,
                const std::string& input_path, std::string output_path,
                std::ostream& out) {
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  if (manifest_path.empty()) {
    manifest_path = (fs::path(config.out_dir) / kManifestFile).string();
  }
  if (output_path.empty()) {
    output_path = (fs::path(config.out_dir) / "explain.csv").string();
  }
  if (input_path.empty()) throw InvalidArgumentError("--input is required");
  const LoadedManifest loaded = open_manifest(manifest_path);
  const SelectiveExplainer& se = loaded.se;
  const int d = se.amortizer().num_features();
  if (static_cast<int>(loaded.bundle.feature_names.size()) != d) {
    throw InvalidArgumentError("model and manifest disagree on d");
  }
  const Eigen::MatrixXd raw = read_feature_rows(
      input_path, loaded.bundle.feature_names, config.label_column);
  const Eigen::MatrixXd inputs = loaded.bundle.standardizer.transform(raw);
  CountedModel model(loaded.bundle.classifier);
  const std::vector<int> targets = argmax_rows(model.evaluate_batch(inputs));
  model.reset_counter();

  const RngSpec rng{config.seed, kExplainStream};
  std::ostringstream csv;
  csv << "input_id,target,covered,score,lambda,inference_cost";
  for (const auto& name : loaded.bundle.feature_names) csv << ",phi_" << name;
  csv << "\n";
  int64_t total_cost = 0;
  int covered = 0;
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const SelectiveOutput o =
        se.explain(model, inputs.row(r).transpose(), TargetClass{targets[r]},
                   rng.child(static_cast<uint64_t>(r)));
    total_cost += o.attribution.inference_cost;
    covered += o.covered;
    csv << input_id(static_cast<int>(r)) << ',' << targets[r] << ','
        << (o.covered ? 1 : 0) << ',' << format_real_decimal(o.score) << ','
        << format_real_decimal(o.lambda) << ',' << o.attribution.inference_cost;
    for (Eigen::Index j = 0; j < d; ++j) {
      csv << ',' << format_real_decimal(o.attribution.scores(j));
    }
    csv << "\n";
  }
  if (total_cost != model.evaluations()) {
    throw NumericalError("inference accounting mismatch");
  }
  write_text(output_path, csv.str());
  const double n = std::max<Eigen::Index>(inputs.rows(), 1);
  out << "rows: " << inputs.rows() << "\n";
  out << "mean inference cost: " << format_real_decimal(total_cost / n) << "\n";
  out << "covered fraction: " << format_real_decimal(covered / n) << "\n";
  out << "wrote " << output_path << "\n";
  return kExitOk;
}

std::vector<ExampleRow> example_rows(const Workspace& ws,
                                     const RecourseData& data,
                                     const SelectionPolicy& policy) {
  std::vector<bool> covered;
  const Eigen::MatrixXd outputs = selective_outputs(data, policy, false, &covered);
  const std::vector<double> errors = row_mse(outputs, data.reference);
  const auto rho = row_spearman(outputs, data.reference);
  std::vector<ExampleRow> rows;
  const std::vector<int>& test = ws.rows("test");
  for (size_t i = 0; i < test.size(); ++i) {
    rows.push_back(ExampleRow{input_id(test[i]), errors[i], rho[i], covered[i],
                              covered[i] ? 0 : data.recourse_cost});
  }
  return rows;
}

MethodErrors method_errors(const std::string& name, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& reference) {
  return MethodErrors{name, row_mse(a, reference), row_spearman(a, reference)};
}

int cmd_evaluate(const GlobalOptions& g, std::string manifest_path,
                 const std::string& protocol, std::ostream& out) {
  if (std::find(kProtocols.begin(), kProtocols.end(), protocol) ==
      kProtocols.end()) {
    throw InvalidArgumentError("unknown protocol '" + protocol +
                               "'; valid protocols: " + join(kProtocols));
  }
  const ExperimentConfig config = resolve_config(g);
  DirectoryLock lock(config.out_dir);
  Workspace ws = open_workspace(config);
  if (manifest_path.empty()) manifest_path = ws.out(kManifestFile);
  const LoadedManifest loaded = open_manifest(manifest_path);
  const SelectiveExplainer& se = loaded.se;
  const int d = ws.num_features();
  if (se.amortizer().num_features() != d) {
    throw InvalidArgumentError("manifest does not match the dataset schema");
  }
  const std::string reference_path = ws.cache_path("test");
  require_file(reference_path, "reference cache: run gen-explanations --method " +
                                   config.high_quality + " --split test");
  const Eigen::MatrixXd reference = ws.cached("test", config.high_quality);
  const Eigen::MatrixXd test_x = ws.inputs("test");
  const std::vector<int>& test_y = ws.predicted.at("test");

  BootstrapOptions bootstrap;
  bootstrap.resamples = config.bootstrap_resamples;
  bootstrap.rng = RngSpec{config.seed, kBootstrapStream};

  ws.model->reset_counter();
  const RecourseData data = prepare_recourse_data(
      se, *ws.model, test_x, test_y, reference,
      RngSpec{config.seed, PipelineStreams::kTestRecourse});

  EvalReport report;
  report.protocol = protocol;
  report.metadata = {{"seed", config.seed},
                     {"alpha", se.policy().alpha()},
                     {"metric", se.metric().kind_name()},
                     {"recourse", se.recourse().name()},
                     {"reference", config.high_quality},
                     {"num_test_rows", test_x.rows()},
                     {"bootstrap_resamples", bootstrap.resamples}};
  report.per_example = example_rows(ws, data, se.policy());

  if (protocol == "coverage") {
    report.metadata["alphas"] = config.alphas;
    report.curves = coverage_curve(data.scores, row_mse(data.amortized, reference),
                                   config.alphas, bootstrap,
                                   se.metric().kind_name());
  } else if (protocol == "recourse") {
    report.metadata["alphas"] = config.alphas;
    report.curves =
        recourse_comparison(data, se.cal_scores(), config.alphas, bootstrap);
  } else if (protocol == "quantiles") {
    const double alpha = 1.0 - config.worst_case_recourse;
    report.metadata["quantiles"] = config.quantiles;
    report.metadata["selective_recourse_fraction"] = config.worst_case_recourse;
    const Eigen::MatrixXd selective =
        selective_outputs(data, calibrate_threshold(se.cal_scores(), alpha), false);
    const std::vector<MethodErrors> methods = {
        method_errors("amortized", data.amortized, reference),
        method_errors(se.recourse().name(), data.mc, reference),
        method_errors("selective", selective, reference)};
    report.curves = worst_case_quantiles(methods, config.quantiles, bootstrap);
  } else if (protocol == "perturbation") {
    report.metadata["removal_fractions"] = config.removal_fractions;
    report.metadata["accuracy_reference"] =
        config.gold_labels ? "gold_labels" : "original_predictions";
    PerturbationOptions options;
    if (config.gold_labels) {
      std::vector<int> gold;
      for (int r : ws.rows("test")) gold.push_back(ws.data.labels[r]);
      options.gold_labels = gold;
    }
    auto engine = RngSpec{config.seed, kRandomRankingStream}.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd random(test_x.rows(), d);
    for (Eigen::Index r = 0; r < random.rows(); ++r) {
      for (Eigen::Index j = 0; j < d; ++j) random(r, j) = normal(engine);
    }
    const Eigen::MatrixXd selective = selective_outputs(data, se.policy(), false);
    const MaskingSpec mask = MaskingSpec::zeros(d);
    report.curves = {
        perturbation_curve(*ws.model, test_x, reference, mask,
                           config.removal_fractions, options, config.high_quality),
        perturbation_curve(*ws.model, test_x, data.amortized, mask,
                           config.removal_fractions, options, "amortized"),
        perturbation_curve(*ws.model, test_x, selective, mask,
                           config.removal_fractions, options, "selective"),
        perturbation_curve(*ws.model, test_x, random, mask,
                           config.removal_fractions, options, "random")};
  } else {
    const bool timeshare = protocol == "timeshare";
    const std::vector<std::string>& names =
        timeshare ? config.timeshare_levels : config.ablation_methods;
    if (names.empty()) throw InvalidArgumentError("no Monte Carlo methods listed");
    std::vector<TimeShareLevel> levels;
    std::vector<AblationMethod> methods;
    json costs = json::object();
    for (size_t l = 0; l < names.size(); ++l) {
      const McMethod method = McMethod::parse(names[l]);
      const CalibrationData cal =
          cli_calibration(ws, method, kLevelCalStreamBase + l);
      const SelectiveExplainer variant = refit_recourse(se, method, cal);
      ws.model->reset_counter();
      RecourseData level_data = prepare_recourse_data(
          variant, *ws.model, test_x, test_y, reference,
          RngSpec{config.seed, kLevelTestStreamBase + l});
      costs[names[l]] = {{"per_explanation", method.cost(d)},
                         {"counted_total", ws.model->evaluations()}};
      if (timeshare) {
        levels.push_back(TimeShareLevel{names[l], method.cost(d), std::move(level_data),
                                        calibration_recourse_data(variant, cal)});
      } else {
        methods.push_back(AblationMethod{names[l], std::move(level_data)});
      }
    }
    report.metadata["inference_costs"] = costs;
    if (timeshare) {
      report.metadata["levels"] = names;
      report.curves = time_sharing(levels, se.cal_scores(), bootstrap);
    } else {
      report.metadata["methods"] = names;
      report.metadata["alphas"] = config.alphas;
      report.curves =
          estimator_ablation(methods, se.cal_scores(), config.alphas, bootstrap);
    }
  }

  const std::string json_path = ws.out("report_" + protocol + ".json");
  const std::string csv_path = ws.out("report_" + protocol + ".csv");
  report.write(json_path, csv_path);
  out << "protocol " << protocol << ": " << report.curves.size() << " curves\n";
  for (const auto& c : report.curves) {
    out << "  " << c.name << ":";
    for (const auto& p : c.points) {
      out << " (" << format_real_decimal(p.x) << ", " << format_real_decimal(p.y)
          << ")";
    }
    out << "\n";
  }
  out << "wrote " << json_path << " and " << csv_path << "\n";
  return kExitOk;
}

}  // namespace

double ExperimentConfig::coverage(int num_features) const {
  if (alpha.has_value()) return *alpha;
  const int64_t n = McMethod::parse(recourse).cost(num_features);
  return coverage_for_budget(static_cast<int>(n), *budget);
}

std::string ExperimentConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  if (p.is_absolute() || config_dir.empty()) return p.string();
  return (fs::path(config_dir) / p).string();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              const std::string& config_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgumentError(source + ":" + std::to_string(line_of(text, e.byte)) +
                               ": " + e.what());
  }
  ExperimentConfig c;
  c.config_dir = config_dir;
  check_keys(doc, "",
             {"dataset", "split", "seed", "out", "model", "amortizer", "methods",
              "metric", "selection", "bins", "evaluation"});
  if (!doc.contains("dataset")) {
    throw InvalidArgumentError(source + ": missing required key 'dataset'");
  }
  const json& dataset = doc.at("dataset");
  check_keys(dataset, "dataset.", {"path", "label_column"});
  if (!dataset.contains("path")) {
    throw InvalidArgumentError(source + ": missing required key 'dataset.path'");
  }
  if (!dataset.contains("label_column")) {
    throw InvalidArgumentError(source +
                               ": missing required key 'dataset.label_column'");
  }
  c.dataset_path = get_as<std::string>(dataset, "path", "dataset.path");
  c.label_column = get_as<std::string>(dataset, "label_column", "dataset.label_column");
  if (doc.contains("split")) {
    const json& split = doc.at("split");
    check_keys(split, "split.", {"train", "cal", "test"});
    read_opt(split, "train", "split.", &c.fractions.train);
    read_opt(split, "cal", "split.", &c.fractions.cal);
    read_opt(split, "test", "split.", &c.fractions.test);
  }
  read_opt(doc, "seed", "", &c.seed);
  read_opt(doc, "out", "", &c.out_dir);
  if (doc.contains("model")) read_network(doc.at("model"), "model.", &c.model);
  if (doc.contains("amortizer")) {
    read_network(doc.at("amortizer"), "amortizer.", &c.amortizer);
  }
  if (doc.contains("methods")) {
    const json& m = doc.at("methods");
    check_keys(m, "methods.", {"train_targets", "recourse", "reference", "high_quality"});
    read_opt(m, "train_targets", "methods.", &c.train_targets);
    read_opt(m, "recourse", "methods.", &c.recourse);
    read_opt(m, "reference", "methods.", &c.reference);
    read_opt(m, "high_quality", "methods.", &c.high_quality);
  }
  if (doc.contains("metric")) {
    const json& m = doc.at("metric");
    check_keys(m, "metric.", {"kind", "ensemble_size", "network"});
    read_opt(m, "kind", "metric.", &c.metric_kind);
    read_opt(m, "ensemble_size", "metric.", &c.ensemble_size);
    if (m.contains("network")) {
      read_network(m.at("network"), "metric.network.", &c.learned_metric);
    }
  }
  if (doc.contains("selection")) {
    const json& s = doc.at("selection");
    check_keys(s, "selection.", {"alpha", "budget"});
    if (s.contains("alpha")) c.alpha = get_as<double>(s, "alpha", "selection.alpha");
    if (s.contains("budget")) c.budget = get_as<double>(s, "budget", "selection.budget");
  }
  read_opt(doc, "bins", "", &c.num_bins);
  if (doc.contains("evaluation")) {
    const json& e = doc.at("evaluation");
    check_keys(e, "evaluation.",
               {"alphas", "quantiles", "removal_fractions", "timeshare_levels",
                "ablation_methods", "worst_case_recourse", "bootstrap_resamples",
                "gold_labels"});
    read_opt(e, "alphas", "evaluation.", &c.alphas);
    read_opt(e, "quantiles", "evaluation.", &c.quantiles);
    read_opt(e, "removal_fractions", "evaluation.", &c.removal_fractions);
    read_opt(e, "timeshare_levels", "evaluation.", &c.timeshare_levels);
    read_opt(e, "ablation_methods", "evaluation.", &c.ablation_methods);
    read_opt(e, "worst_case_recourse", "evaluation.", &c.worst_case_recourse);
    read_opt(e, "bootstrap_resamples", "evaluation.", &c.bootstrap_resamples);
    read_opt(e, "gold_labels", "evaluation.", &c.gold_labels);
  }

  // Semantic validation.
  const double total = c.fractions.train + c.fractions.cal + c.fractions.test;
  if (std::abs(total - 1.0) > 1e-9 || c.fractions.train < 0 ||
      c.fractions.cal < 0 || c.fractions.test < 0) {
    throw InvalidArgumentError(source + ": split fractions must be nonnegative "
                                        "and sum to 1");
  }
  if (c.alpha.has_value() == c.budget.has_value()) {
    throw InvalidArgumentError(source + ": set exactly one of 'selection.alpha' "
                                        "and 'selection.budget'");
  }
  if (c.alpha.has_value() && !(*c.alpha >= 0.0 && *c.alpha <= 1.0)) {
    throw InvalidArgumentError(source + ": 'selection.alpha' must lie in [0, 1]");
  }
  for (const std::string* m : {&c.train_targets, &c.recourse, &c.reference}) {
    McMethod::parse(*m);
  }
  parse_method_name(c.high_quality);
  for (const auto& m : c.timeshare_levels) McMethod::parse(m);
  for (const auto& m : c.ablation_methods) McMethod::parse(m);
  parse_metric_kind(c.metric_kind);
  if (c.ensemble_size < 2) {
    throw InvalidArgumentError(source + ": 'metric.ensemble_size' must be >= 2");
  }
  if (c.num_bins < 1) throw InvalidArgumentError(source + ": 'bins' must be >= 1");
  if (c.budget.has_value()) {
    // Validates the range against a nominal d of 1 here; the exact check runs
    // once the dataset is known.
    if (*c.budget < 1.0) {
      throw InvalidArgumentError(source + ": 'selection.budget' must be >= 1");
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path,
                      fs::absolute(path).parent_path().string());
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selective explanations for black-box classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_flag("--force", g.force, "Allow exact explanations above the guard");

  int rows = 4000;
  int features = 8;
  std::string output;
  auto* bench = app.add_subcommand("make-benchmark", "Write the synthetic dataset");
  bench->add_option("--rows", rows, "Number of rows");
  bench->add_option("--features", features, "Number of features");
  bench->add_option("--output", output, "CSV path")->required();

  auto* train_model = app.add_subcommand("train-model", "Train the black box");

  std::string method;
  std::string split_name;
  auto* gen = app.add_subcommand("gen-explanations", "Append explanations to a cache");
  gen->add_option("--method", method, "exact, svs-M or ks-N")->required();
  gen->add_option("--split", split_name, "train, cal or test")->required();

  auto* train_amortized_cmd =
      app.add_subcommand("train-amortized", "Train the amortized explainer");
  auto* fit = app.add_subcommand("fit-selective", "Calibrate the selective explainer");

  std::string manifest;
  std::string input;
  auto* explain = app.add_subcommand("explain", "Explain input rows");
  explain->add_option("--manifest", manifest, "Selective manifest");
  explain->add_option("--input", input, "CSV rows to explain")->required();
  explain->add_option("--output", output, "Attribution CSV");

  std::string protocol;
  auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  evaluate->add_option("--manifest", manifest, "Selective manifest");
  evaluate->add_option("--protocol", protocol, join(kProtocols))->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (bench->parsed()) return cmd_make_benchmark(g, rows, features, output, out);
    if (train_model->parsed()) return cmd_train_model(g, out);
    if (gen->parsed()) return cmd_gen_explanations(g, method, split_name, out);
    if (train_amortized_cmd->parsed()) return cmd_train_amortized(g, out);
    if (fit->parsed()) return cmd_fit_selective(g, out);
    if (explain->parsed()) return cmd_explain(g, manifest, input, output, out);
    if (evaluate->parsed()) return cmd_evaluate(g, manifest, protocol, out);
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InvalidArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace selex
