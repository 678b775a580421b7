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

#include "selex/uncertainty.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "selex/text_format.h"

namespace selex {
namespace {

constexpr char kMetricMagic[] = "selex-metric";
constexpr int kMetricVersion = 1;

}  // namespace

double deep_uncertainty_from_outputs(const Eigen::MatrixXd& outputs) {
  const Eigen::Index k = outputs.rows();
  const Eigen::Index d = outputs.cols();
  if (k < 2) throw InvalidArgumentError("deep uncertainty needs k >= 2");
  if (d == 0) throw InvalidArgumentError("empty attribution vectors");
  const Eigen::RowVectorXd mean = outputs.colwise().mean();
  const double sum_var =
      (outputs.rowwise() - mean).array().square().sum() / static_cast<double>(k);
  return sum_var / static_cast<double>(d * k);
}

double deep_uncertainty(const ExplainerEnsemble& ensemble,
                        const FeatureVector& x, TargetClass y) {
  if (ensemble.size() < 2) {
    throw InvalidArgumentError("deep uncertainty needs k >= 2");
  }
  return deep_uncertainty_from_outputs(ensemble.outputs(x, y));
}

UncertaintyMetric UncertaintyMetric::deep(ExplainerEnsemble ensemble) {
  if (ensemble.size() < 2) {
    throw InvalidArgumentError("deep uncertainty needs k >= 2");
  }
  UncertaintyMetric metric;
  metric.kind_ = Kind::kDeep;
  metric.ensemble_ = std::move(ensemble);
  return metric;
}

UncertaintyMetric UncertaintyMetric::learned(Mlp regressor) {
  if (regressor.output_width() != 1) {
    throw InvalidArgumentError("learned uncertainty emits one score");
  }
  UncertaintyMetric metric;
  metric.kind_ = Kind::kLearned;
  metric.regressor_ = std::move(regressor);
  return metric;
}

std::string UncertaintyMetric::kind_name() const {
  return kind_ == Kind::kDeep ? "deep" : "learned";
}

UncertaintyMetric::Kind parse_metric_kind(const std::string& name) {
  if (name == "deep") return UncertaintyMetric::Kind::kDeep;
  if (name == "learned") return UncertaintyMetric::Kind::kLearned;
  throw InvalidArgumentError("unknown uncertainty metric '" + name +
                             "' (expected deep or learned)");
}

double UncertaintyMetric::score(const FeatureVector& x, TargetClass y) const {
  const int target = y.index;
  return score_batch(x.transpose(), std::span<const int>(&target, 1))[0];
}

std::vector<double> UncertaintyMetric::score_batch(
    const Eigen::MatrixXd& inputs, std::span<const int> targets) const {
  const auto n = inputs.rows();
  std::vector<double> scores(static_cast<size_t>(n));
  if (kind_ == Kind::kLearned) {
    if (inputs.cols() != regressor_.input_width()) {
      throw InvalidArgumentError("metric expects " +
                                 std::to_string(regressor_.input_width()) +
                                 " features");
    }
    const Eigen::MatrixXd out = regressor_.forward(inputs);
    for (Eigen::Index r = 0; r < n; ++r) scores[r] = out(r, 0);
    return scores;
  }
  const int k = ensemble_.size();
  std::vector<Eigen::MatrixXd> outputs;
  outputs.reserve(k);
  for (const auto& member : ensemble_.members) {
    outputs.push_back(member.explain_batch(inputs, targets));
  }
  const Eigen::Index d = outputs.front().cols();
  Eigen::MatrixXd per_row(k, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int m = 0; m < k; ++m) per_row.row(m) = outputs[m].row(r);
    scores[r] = deep_uncertainty_from_outputs(per_row);
  }
  return scores;
}

void UncertaintyMetric::write(std::ostream& out) const {
  out << kMetricMagic << ' ' << kMetricVersion << '\n';
  out << "kind " << kind_name() << '\n';
  if (kind_ == Kind::kDeep) {
    ensemble_.write(out);
  } else {
    regressor_.write(out);
  }
}

UncertaintyMetric UncertaintyMetric::read(TokenReader& reader) {
  const auto magic = reader.expect(kMetricMagic);
  if (magic.size() != 1 || reader.integer(magic[0]) != kMetricVersion) {
    reader.fail("unsupported metric version");
  }
  const auto kind = reader.expect("kind");
  if (kind.size() != 1) reader.fail("expected the metric kind");
  if (parse_metric_kind(kind[0]) == Kind::kDeep) {
    return deep(ExplainerEnsemble::read(reader));
  }
  return learned(Mlp::read(reader));
}

MlpSpec default_uncertainty_spec(int num_features) {
  MlpSpec spec;
  spec.layer_widths = {num_features, 3 * num_features, 1};
  spec.activation = Activation::kTanh;
  spec.epochs = 100;
  spec.batch_size = 32;
  spec.learning_rate = 0.02;
  return spec;
}

UncertaintyMetric train_learned_uncertainty(
    const Eigen::MatrixXd& inputs, std::span<const int> targets,
    const AmortizedExplainer& amortizer, const Eigen::MatrixXd& mc_scores,
    MlpSpec spec, RngSpec rng) {
  if (mc_scores.rows() != inputs.rows()) {
    throw MissingArtifactError("need one Monte Carlo attribution per "
                               "training row");
  }
  const Eigen::MatrixXd amortized = amortizer.explain_batch(inputs, targets);
  if (mc_scores.cols() != amortized.cols()) {
    throw InvalidArgumentError("Monte Carlo attributions must have d entries");
  }
  Eigen::MatrixXd losses(inputs.rows(), 1);
  losses.col(0) = ((amortized - mc_scores).array().square().rowwise().sum() /
                   static_cast<double>(amortized.cols()))
                      .max(0.0)
                      .matrix();
  spec.seed = rng;
  return UncertaintyMetric::learned(fit_regressor(inputs, losses, spec));
}

void save_metric(const UncertaintyMetric& metric, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgumentError("cannot write metric file " + path);
  metric.write(out);
}

UncertaintyMetric load_metric(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open metric file " + path);
  TokenReader reader(in, path);
  return UncertaintyMetric::read(reader);
}

size_t coverage_count(size_t n, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgumentError("coverage must lie in [0, 1]");
  }
  if (alpha == 0.0 || n == 0) return 0;
  const auto total = static_cast<double>(n);
  // ceil(alpha * n) can be off by one after rounding; settle on the
  // comparison exactly as callers will evaluate it.
  auto k = static_cast<size_t>(std::ceil(alpha * total));
  while (k > 1 && static_cast<double>(k - 1) / total >= alpha) --k;
  while (k < n && static_cast<double>(k) / total < alpha) ++k;
  return std::clamp<size_t>(k, 1, n);
}

std::optional<double> quantile_threshold(std::span<const double> scores,
                                         double alpha) {
  if (scores.empty()) throw InvalidArgumentError("empty calibration set");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgumentError("coverage must lie in [0, 1]");
  }
  if (alpha == 0.0) return std::nullopt;
  std::vector<double> sorted(scores.begin(), scores.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) throw NumericalError("non-finite uncertainty score");
  }
  std::sort(sorted.begin(), sorted.end());
  const size_t k = coverage_count(sorted.size(), alpha);
  return sorted[k - 1];
}

SelectionPolicy::SelectionPolicy(Mode mode, double alpha, double threshold)
    : mode_(mode), alpha_(alpha), threshold_(threshold) {}

bool SelectionPolicy::select(double score) const {
  switch (mode_) {
    case Mode::kCoverNone:
      return false;
    case Mode::kCoverAll:
      return true;
    case Mode::kThreshold:
      return score <= threshold_;
  }
  return false;
}

std::string SelectionPolicy::to_json() const {
  nlohmann::json doc;
  doc["alpha"] = alpha_;
  if (mode_ == Mode::kCoverNone) {
    doc["mode"] = "cover-none";
    doc["threshold"] = "cover-none";
  } else {
    doc["mode"] = mode_ == Mode::kCoverAll ? "cover-all" : "threshold";
    doc["threshold"] = threshold_;
  }
  doc["metric_digest"] = metric_digest;
  return doc.dump(2);
}

SelectionPolicy SelectionPolicy::from_json(const std::string& text,
                                           const std::string& where) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const std::string mode = doc.at("mode").get<std::string>();
    const double alpha = doc.at("alpha").get<double>();
    SelectionPolicy policy;
    if (mode == "cover-none") {
      policy = SelectionPolicy(Mode::kCoverNone, alpha, 0.0);
    } else if (mode == "cover-all") {
      policy = SelectionPolicy(Mode::kCoverAll, alpha,
                               doc.at("threshold").get<double>());
    } else if (mode == "threshold") {
      policy = SelectionPolicy(Mode::kThreshold, alpha,
                               doc.at("threshold").get<double>());
    } else {
      throw InvalidArgumentError(where + ": unknown policy mode '" + mode + "'");
    }
    policy.metric_digest = doc.value("metric_digest", "");
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgumentError(where + ": malformed policy: " + e.what());
  }
}

SelectionPolicy calibrate_threshold(std::span<const double> cal_scores,
                                    double alpha) {
  const std::optional<double> t = quantile_threshold(cal_scores, alpha);
  if (!t.has_value()) return SelectionPolicy(SelectionPolicy::Mode::kCoverNone,
                                             alpha, 0.0);
  const auto mode = alpha == 1.0 ? SelectionPolicy::Mode::kCoverAll
                                 : SelectionPolicy::Mode::kThreshold;
  return SelectionPolicy(mode, alpha, *t);
}

SelectionPolicy calibrate_threshold(const UncertaintyMetric& metric,
                                    const Eigen::MatrixXd& cal_inputs,
                                    std::span<const int> cal_targets,
                                    double alpha) {
  const std::vector<double> scores = metric.score_batch(cal_inputs, cal_targets);
  return calibrate_threshold(scores, alpha);
}

double coverage_for_budget(int n, double budget) {
  if (n < 1) throw InvalidArgumentError("recourse cost n must be positive");
  if (!(budget >= 1.0 && budget <= n + 1.0)) {
    throw InvalidArgumentError("inference budget must lie in [1, n + 1]");
  }
  return (n + 1.0 - budget) / n;
}

}  // namespace selex
