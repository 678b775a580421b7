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

#include "selex/combine.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "selex/text_format.h"

namespace selex {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kManifestVersion = 1;

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const Eigen::MatrixXd& c) {
  if (a.rows() != b.rows() || a.rows() != c.rows() || a.cols() != b.cols() ||
      a.cols() != c.cols()) {
    throw InvalidArgumentError("bin members need matching amortized, Monte "
                               "Carlo and reference rows");
  }
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgumentError("cannot write " + path.string());
  out << content;
}

std::string verified_path(const json& entry, const fs::path& base,
                          const std::string& what) {
  const fs::path path = base / entry.at("file").get<std::string>();
  if (!fs::exists(path)) {
    throw MissingArtifactError("manifest references missing " + what +
                               " file " + path.string());
  }
  const std::string expected = entry.at("sha256").get<std::string>();
  if (sha256_file(path.string()) != expected) {
    throw MissingArtifactError(what + " file " + path.string() +
                               " does not match its manifest digest");
  }
  return path.string();
}

BinTable bins_from_json(const std::string& text, const std::string& where) {
  try {
    const json doc = json::parse(text);
    BinTable bins;
    bins.edges = doc.at("edges").get<std::vector<double>>();
    bins.lambdas = doc.at("lambdas").get<std::vector<double>>();
    bins.counts = doc.at("counts").get<std::vector<int>>();
    bins.fallback = doc.at("fallback").get<std::vector<bool>>();
    const size_t k = bins.counts.size();
    if (k == 0 || bins.edges.size() != k + 1 || bins.lambdas.size() != k ||
        bins.fallback.size() != k) {
      throw InvalidArgumentError(where + ": inconsistent bin table");
    }
    return bins;
  } catch (const json::exception& e) {
    throw InvalidArgumentError(where + ": malformed bin table: " + e.what());
  }
}

}  // namespace

int BinTable::bin_of(double score) const {
  if (counts.empty()) throw InvalidArgumentError("bins are not fitted");
  const auto upper_begin = edges.begin() + 1;
  const auto it = std::lower_bound(upper_begin, edges.end(), score);
  const auto index = static_cast<int>(it - upper_begin);
  return std::min(index, num_bins() - 1);
}

double BinTable::lambda_for(double score) const {
  if (lambdas.size() != counts.size() || lambdas.empty()) {
    throw InvalidArgumentError("bin lambdas are not fitted");
  }
  return lambdas[static_cast<size_t>(bin_of(score))];
}

bool BinTable::out_of_unit_interval() const {
  return std::any_of(lambdas.begin(), lambdas.end(),
                     [](double l) { return l < 0.0 || l > 1.0; });
}

BinTable build_bins(std::span<const double> cal_scores, int k) {
  if (k < 1) throw InvalidArgumentError("need at least one bin");
  if (cal_scores.empty()) throw InvalidArgumentError("empty calibration set");
  BinTable bins;
  bins.edges.push_back(*std::min_element(cal_scores.begin(), cal_scores.end()));
  for (int i = 1; i <= k; ++i) {
    bins.edges.push_back(
        *quantile_threshold(cal_scores, static_cast<double>(i) / k));
  }
  bins.counts.assign(static_cast<size_t>(k), 0);
  for (double s : cal_scores) ++bins.counts[static_cast<size_t>(bins.bin_of(s))];
  bins.lambdas.assign(static_cast<size_t>(k), 0.0);
  bins.fallback.assign(static_cast<size_t>(k), true);
  return bins;
}

double fit_lambda(const Eigen::MatrixXd& amortized, const Eigen::MatrixXd& mc,
                  const Eigen::MatrixXd& reference) {
  check_same_shape(amortized, mc, reference);
  if (amortized.rows() == 0) throw DegenerateBinError("empty bin");
  const double numerator =
      ((mc - reference).array() * (mc - amortized).array()).sum();
  const double denominator = (amortized - mc).squaredNorm();
  if (!(denominator > 0.0)) {
    throw DegenerateBinError("amortized and Monte Carlo explanations coincide "
                             "on every bin member");
  }
  return numerator / denominator;
}

double lambda_objective(double lambda, const Eigen::MatrixXd& amortized,
                        const Eigen::MatrixXd& mc,
                        const Eigen::MatrixXd& reference) {
  check_same_shape(amortized, mc, reference);
  return (lambda * amortized + (1.0 - lambda) * mc - reference).squaredNorm();
}

double fit_lambda_unit_interval(const Eigen::MatrixXd& amortized,
                                const Eigen::MatrixXd& mc,
                                const Eigen::MatrixXd& reference) {
  return std::clamp(fit_lambda(amortized, mc, reference), 0.0, 1.0);
}

void fit_bin_lambdas(BinTable& bins, std::span<const double> cal_scores,
                     const Eigen::MatrixXd& amortized,
                     const Eigen::MatrixXd& mc,
                     const Eigen::MatrixXd& reference, int min_bin_size) {
  check_same_shape(amortized, mc, reference);
  if (static_cast<Eigen::Index>(cal_scores.size()) != amortized.rows()) {
    throw InvalidArgumentError("one calibration score per bin member row");
  }
  std::vector<std::vector<int>> members(static_cast<size_t>(bins.num_bins()));
  for (size_t r = 0; r < cal_scores.size(); ++r) {
    members[static_cast<size_t>(bins.bin_of(cal_scores[r]))].push_back(
        static_cast<int>(r));
  }
  for (size_t b = 0; b < members.size(); ++b) {
    bins.counts[b] = static_cast<int>(members[b].size());
    bins.lambdas[b] = 0.0;
    bins.fallback[b] = true;
    if (bins.counts[b] < std::max(min_bin_size, 1)) continue;
    try {
      bins.lambdas[b] = fit_lambda(select_rows(amortized, members[b]),
                                   select_rows(mc, members[b]),
                                   select_rows(reference, members[b]));
      bins.fallback[b] = false;
    } catch (const DegenerateBinError&) {
      // lambda = 0 keeps the plain Monte Carlo explanation.
    }
  }
}

Eigen::VectorXd combine_initial_guess(double lambda,
                                      const Eigen::VectorXd& amortized,
                                      const Eigen::VectorXd& mc) {
  if (amortized.size() != mc.size()) {
    throw InvalidArgumentError("attribution dimension mismatch");
  }
  if (lambda == 0.0) return mc;
  if (lambda == 1.0) return amortized;
  return lambda * amortized + (1.0 - lambda) * mc;
}

SelectiveExplainer::SelectiveExplainer(
    std::shared_ptr<const AmortizedExplainer> amortizer,
    std::shared_ptr<const UncertaintyMetric> metric, McMethod recourse,
    SelectionPolicy policy, BinTable bins, MaskingSpec mask,
    std::vector<double> cal_scores)
    : amortizer_(std::move(amortizer)),
      metric_(std::move(metric)),
      recourse_(recourse),
      policy_(std::move(policy)),
      bins_(std::move(bins)),
      mask_(std::move(mask)),
      cal_scores_(std::move(cal_scores)) {
  if (!amortizer_ || !metric_) {
    throw InvalidArgumentError("selective explainer needs an amortizer and a "
                               "metric");
  }
  if (bins_.num_bins() == 0 || bins_.lambdas.size() != bins_.counts.size()) {
    throw InvalidArgumentError("selective explainer needs fitted bins");
  }
}

SelectiveOutput SelectiveExplainer::explain(const CountedModel& model,
                                            const FeatureVector& x,
                                            TargetClass y, RngSpec rng) const {
  SelectiveOutput out;
  out.score = metric_->score(x, y);
  out.covered = policy_.select(out.score);
  if (out.covered) {
    out.attribution = amortizer_->explain(x, y);
    out.lambda = 1.0;
    return out;
  }
  out.lambda = bins_.lambda_for(out.score);
  AttributionVector mc = run_mc(recourse_, model, x, y, mask_, rng);
  out.attribution = mc;
  out.attribution.scores = combine_initial_guess(
      out.lambda, amortizer_->explain(x, y).scores, mc.scores);
  return out;
}

AttributionVector SelectiveExplainer::initial_guess_explain(
    const CountedModel& model, const FeatureVector& x, TargetClass y,
    RngSpec rng) const {
  const double lambda = bins_.lambda_for(metric_->score(x, y));
  AttributionVector out = run_mc(recourse_, model, x, y, mask_, rng);
  out.scores =
      combine_initial_guess(lambda, amortizer_->explain(x, y).scores, out.scores);
  return out;
}

SelectiveExplainer SelectiveExplainer::with_coverage(double alpha) const {
  SelectiveExplainer copy = *this;
  const std::string digest = policy_.metric_digest;
  copy.policy_ = calibrate_threshold(cal_scores_, alpha);
  copy.policy_.metric_digest = digest;
  return copy;
}

SelectiveExplainer SelectiveExplainer::naive() const {
  SelectiveExplainer copy = *this;
  std::fill(copy.bins_.lambdas.begin(), copy.bins_.lambdas.end(), 0.0);
  return copy;
}

SelectiveExplainer SelectiveExplainer::with_recourse(const McMethod& method,
                                                     BinTable bins) const {
  SelectiveExplainer copy = *this;
  copy.recourse_ = method;
  copy.bins_ = std::move(bins);
  return copy;
}

SelectiveExplainer refit_recourse(const SelectiveExplainer& se,
                                  const McMethod& method,
                                  const CalibrationData& cal,
                                  int min_bin_size) {
  if (static_cast<size_t>(cal.inputs.rows()) != se.cal_scores().size()) {
    throw InvalidArgumentError("calibration rows do not match the fitted "
                               "explainer");
  }
  BinTable bins = se.bins();
  fit_bin_lambdas(bins, se.cal_scores(),
                  se.amortizer().explain_batch(cal.inputs, cal.targets), cal.mc,
                  cal.reference, min_bin_size);
  return se.with_recourse(method, std::move(bins));
}

SelectiveExplainer fit_selective(
    std::shared_ptr<const AmortizedExplainer> amortizer,
    std::shared_ptr<const UncertaintyMetric> metric,
    const CalibrationData& cal, const SelectiveConfig& config,
    const MaskingSpec& mask) {
  if (!amortizer || !metric) {
    throw InvalidArgumentError("fit_selective needs an amortizer and a metric");
  }
  if (cal.inputs.rows() == 0) throw InvalidArgumentError("empty calibration set");
  std::vector<double> scores = metric->score_batch(cal.inputs, cal.targets);
  SelectionPolicy policy = calibrate_threshold(scores, config.alpha);
  BinTable bins = build_bins(scores, config.num_bins);
  const Eigen::MatrixXd amortized =
      amortizer->explain_batch(cal.inputs, cal.targets);
  fit_bin_lambdas(bins, scores, amortized, cal.mc, cal.reference,
                  config.min_bin_size);
  return SelectiveExplainer(std::move(amortizer), std::move(metric),
                            config.recourse, std::move(policy),
                            std::move(bins), mask, std::move(scores));
}

std::string bins_to_json(const BinTable& bins) {
  json doc = {{"edges", bins.edges},
              {"lambdas", bins.lambdas},
              {"counts", bins.counts},
              {"fallback", bins.fallback},
              {"lambda_outside_unit_interval", bins.out_of_unit_interval()}};
  return doc.dump(2) + "\n";
}

void save_selective(const SelectiveExplainer& explainer,
                    const std::string& manifest_path,
                    const ManifestFiles& files, const std::string& extra_json) {
  const fs::path base = fs::path(manifest_path).parent_path();
  const fs::path amortizer_path = base / files.amortizer;
  const fs::path metric_path = base / files.metric;
  save_amortizer(explainer.amortizer(), amortizer_path.string());
  save_metric(explainer.metric(), metric_path.string());
  SelectionPolicy policy = explainer.policy();
  policy.metric_digest = sha256_file(metric_path.string());
  write_file(base / files.policy, policy.to_json() + "\n");
  write_file(base / files.bins, bins_to_json(explainer.bins()));

  const auto entry = [&](const std::string& name) {
    return json{{"file", name}, {"sha256", sha256_file((base / name).string())}};
  };
  const Eigen::VectorXd& baseline = explainer.mask().baseline;
  json doc = {
      {"schema_version", kManifestVersion},
      {"amortizer", entry(files.amortizer)},
      {"metric", entry(files.metric)},
      {"metric_kind", explainer.metric().kind_name()},
      {"policy", entry(files.policy)},
      {"bins", entry(files.bins)},
      {"recourse", explainer.recourse().name()},
      {"alpha", explainer.policy().alpha()},
      {"num_features", explainer.amortizer().num_features()},
      {"num_classes", explainer.amortizer().num_classes()},
      {"mask_baseline",
       std::vector<double>(baseline.data(), baseline.data() + baseline.size())},
      {"cal_scores", explainer.cal_scores()},
      {"extra", json::parse(extra_json)}};
  write_file(manifest_path, doc.dump(2) + "\n");
}

SelectiveExplainer load_selective(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw InvalidArgumentError(manifest_path + ": malformed manifest: " +
                               e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kManifestVersion) {
      throw InvalidArgumentError(manifest_path +
                                 ": unsupported manifest schema version");
    }
    // Every digest is checked before anything is parsed.
    const std::string amortizer_path =
        verified_path(doc.at("amortizer"), base, "amortizer");
    const std::string metric_path =
        verified_path(doc.at("metric"), base, "metric");
    const std::string policy_path =
        verified_path(doc.at("policy"), base, "policy");
    const std::string bins_path = verified_path(doc.at("bins"), base, "bins");

    auto amortizer =
        std::make_shared<const AmortizedExplainer>(load_amortizer(amortizer_path));
    auto metric = std::make_shared<const UncertaintyMetric>(load_metric(metric_path));
    SelectionPolicy policy =
        SelectionPolicy::from_json(read_file(policy_path), policy_path);
    if (policy.metric_digest != doc.at("metric").at("sha256").get<std::string>()) {
      throw MissingArtifactError(policy_path +
                                 " was calibrated for a different metric");
    }
    BinTable bins = bins_from_json(read_file(bins_path), bins_path);
    const auto baseline = doc.at("mask_baseline").get<std::vector<double>>();
    MaskingSpec mask{Eigen::Map<const Eigen::VectorXd>(
        baseline.data(), static_cast<Eigen::Index>(baseline.size()))};
    if (mask.baseline.size() != amortizer->num_features()) {
      throw InvalidArgumentError(manifest_path + ": baseline dimension mismatch");
    }
    return SelectiveExplainer(
        std::move(amortizer), std::move(metric),
        McMethod::parse(doc.at("recourse").get<std::string>()),
        std::move(policy), std::move(bins), std::move(mask),
        doc.at("cal_scores").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw InvalidArgumentError(manifest_path + ": malformed manifest: " +
                               e.what());
  }
}

}  // namespace selex
