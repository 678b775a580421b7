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

// Uncertainty scores for amortized explanations and the quantile-threshold
// selection rule built on them. Lower scores mean better expected quality.

#ifndef SELEX_UNCERTAINTY_H_
#define SELEX_UNCERTAINTY_H_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selex/amortize.h"
#include "selex/core.h"
#include "selex/mlp.h"

namespace selex {

// (1 / (d k)) * sum_i Var_k(member outputs at coordinate i), population
// variance. `outputs` is k x d.
double deep_uncertainty_from_outputs(const Eigen::MatrixXd& outputs);

double deep_uncertainty(const ExplainerEnsemble& ensemble,
                        const FeatureVector& x, TargetClass y);

class UncertaintyMetric {
 public:
  enum class Kind { kDeep, kLearned };

  static UncertaintyMetric deep(ExplainerEnsemble ensemble);
  // `regressor` maps x (d inputs) to one score.
  static UncertaintyMetric learned(Mlp regressor);

  Kind kind() const { return kind_; }
  std::string kind_name() const;

  double score(const FeatureVector& x, TargetClass y) const;
  std::vector<double> score_batch(const Eigen::MatrixXd& inputs,
                                  std::span<const int> targets) const;

  const ExplainerEnsemble& ensemble() const { return ensemble_; }
  const Mlp& regressor() const { return regressor_; }

  void write(std::ostream& out) const;
  static UncertaintyMetric read(TokenReader& reader);

 private:
  Kind kind_ = Kind::kLearned;
  ExplainerEnsemble ensemble_;
  Mlp regressor_;
};

UncertaintyMetric::Kind parse_metric_kind(const std::string& name);

// Default regressor: d -> 3d (tanh) -> 1.
MlpSpec default_uncertainty_spec(int num_features);

// Regresses max(0, mse(Amor(x, y), MC(x, y))) on x. spec.seed is replaced by
// `rng`.
UncertaintyMetric train_learned_uncertainty(
    const Eigen::MatrixXd& inputs, std::span<const int> targets,
    const AmortizedExplainer& amortizer, const Eigen::MatrixXd& mc_scores,
    MlpSpec spec, RngSpec rng);

void save_metric(const UncertaintyMetric& metric, const std::string& path);
UncertaintyMetric load_metric(const std::string& path);

// Smallest k with k / n >= alpha (0 for alpha = 0).
size_t coverage_count(size_t n, double alpha);

// min{t in scores : fraction of scores <= t is >= alpha}. Returns nullopt for
// alpha = 0, where no finite minimizer exists.
std::optional<double> quantile_threshold(std::span<const double> scores,
                                         double alpha);

class SelectionPolicy {
 public:
  enum class Mode { kCoverNone, kThreshold, kCoverAll };

  SelectionPolicy() = default;
  SelectionPolicy(Mode mode, double alpha, double threshold);

  Mode mode() const { return mode_; }
  double alpha() const { return alpha_; }
  // Calibrated t_alpha; meaningless for kCoverNone.
  double threshold() const { return threshold_; }

  // True routes the input to the amortized explainer. At alpha = 1 every
  // score is covered, including scores above the calibration maximum.
  bool select(double score) const;

  std::string metric_digest;

  std::string to_json() const;
  static SelectionPolicy from_json(const std::string& text,
                                   const std::string& where);

 private:
  Mode mode_ = Mode::kCoverNone;
  double alpha_ = 0.0;
  double threshold_ = 0.0;
};

SelectionPolicy calibrate_threshold(std::span<const double> cal_scores,
                                    double alpha);
SelectionPolicy calibrate_threshold(const UncertaintyMetric& metric,
                                    const Eigen::MatrixXd& cal_inputs,
                                    std::span<const int> cal_targets,
                                    double alpha);

// alpha = (n + 1 - budget) / n for 1 <= budget <= n + 1.
double coverage_for_budget(int n, double budget);

}  // namespace selex

#endif  // SELEX_UNCERTAINTY_H_
