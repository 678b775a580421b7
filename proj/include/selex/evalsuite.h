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

// Explanation quality metrics and evaluation protocols. Protocols consume
// precomputed per-row attributions so that the expensive Monte Carlo draws
// are shared between curve points.

#ifndef SELEX_EVALSUITE_H_
#define SELEX_EVALSUITE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "selex/combine.h"
#include "selex/core.h"

namespace selex {

inline constexpr int kReportSchemaVersion = 1;

// (1 / d) * sum (a_i - b_i)^2.
double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double mse(const AttributionVector& a, const AttributionVector& b);

// Ranks starting at 1; ties share the average rank.
std::vector<double> average_ranks(const Eigen::VectorXd& v);

// Pearson correlation of average ranks. nullopt when either side has zero
// rank variance.
std::optional<double> spearman(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b);
std::optional<double> spearman(const AttributionVector& a,
                               const AttributionVector& b);

// Row-wise metrics between two attribution matrices.
std::vector<double> row_mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
std::vector<std::optional<double>> row_spearman(const Eigen::MatrixXd& a,
                                                const Eigen::MatrixXd& b);

struct BootstrapOptions {
  // 0 disables the intervals.
  int resamples = 1000;
  double level = 0.95;
  RngSpec rng;
};

// Half the width of the percentile interval of the bootstrap mean.
double bootstrap_halfwidth(std::span<const double> values,
                           const BootstrapOptions& options);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double halfwidth = 0.0;
  int count = 0;
};

struct Curve {
  std::string name;
  std::string x_label;
  std::string y_label;
  std::vector<CurvePoint> points;

  const CurvePoint* at(double x) const;
};

// For each alpha, mean amortized MSE over rows whose score is at most the
// alpha-quantile of the scores, plus an "oracle" series averaging the
// ceil(alpha N) smallest MSEs. Curves are named `metric_name` and "oracle".
std::vector<Curve> coverage_curve(std::span<const double> scores,
                                  std::span<const double> amortized_mse,
                                  std::span<const double> alphas,
                                  const BootstrapOptions& bootstrap,
                                  const std::string& metric_name = "metric");

std::vector<Curve> coverage_curve(const UncertaintyMetric& metric,
                                  const AmortizedExplainer& amortizer,
                                  const Eigen::MatrixXd& reference,
                                  const Eigen::MatrixXd& inputs,
                                  std::span<const int> targets,
                                  std::span<const double> alphas,
                                  const BootstrapOptions& bootstrap);

// Everything a recourse evaluation needs per test row.
struct RecourseData {
  std::vector<double> scores;
  Eigen::MatrixXd amortized;
  Eigen::MatrixXd mc;
  Eigen::MatrixXd reference;
  std::vector<double> lambdas;
  // h-inferences per recourse explanation.
  int64_t recourse_cost = 0;

  int num_rows() const { return static_cast<int>(scores.size()); }
};

// Calibration-side counterpart: cal.mc as the MC rows and cal.reference as
// the reference.
RecourseData calibration_recourse_data(const SelectiveExplainer& se,
                                       const CalibrationData& cal);

// Scores, amortized outputs and lambdas from `se`, and one fresh MC draw per
// row from rng.child(row).
RecourseData prepare_recourse_data(const SelectiveExplainer& se,
                                   const CountedModel& model,
                                   const Eigen::MatrixXd& inputs,
                                   std::span<const int> targets,
                                   const Eigen::MatrixXd& reference,
                                   RngSpec rng);

// Selective outputs at coverage alpha (policy calibrated on `cal_scores`).
// `naive` uses lambda = 0 in place of the fitted lambdas.
Eigen::MatrixXd selective_outputs(const RecourseData& data,
                                  const SelectionPolicy& policy, bool naive,
                                  std::vector<bool>* covered = nullptr);

// Curves "initial_guess_mse", "naive_mse", "initial_guess_spearman" and
// "naive_spearman" against the recourse fraction 1 - alpha.
std::vector<Curve> recourse_comparison(const RecourseData& data,
                                       std::span<const double> cal_scores,
                                       std::span<const double> alphas,
                                       const BootstrapOptions& bootstrap);

struct MethodErrors {
  std::string name;
  std::vector<double> mse;
  std::vector<std::optional<double>> spearman;
};

// For each method: "<name>_mse" is the mean of the worst ceil(qN) MSEs and
// "<name>_spearman" the mean of the worst ceil(qN) Spearman values.
std::vector<Curve> worst_case_quantiles(std::span<const MethodErrors> methods,
                                        std::span<const double> quantiles,
                                        const BootstrapOptions& bootstrap);

struct PerturbationOptions {
  // Score against these labels instead of the original predictions.
  std::optional<std::vector<int>> gold_labels;
};

// Removes the round(r d) features with the largest attributions (ties by
// lower index) and reports accuracy against the original predictions.
Curve perturbation_curve(const CountedModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& attributions,
                         const MaskingSpec& mask,
                         std::span<const double> fractions,
                         const PerturbationOptions& options = {},
                         const std::string& name = "perturbation");

// One Monte Carlo configuration of the time-sharing grid.
struct TimeShareLevel {
  std::string name;
  // h-inferences per explanation.
  int64_t cost = 0;
  // MC rows, lambdas and scores for this method used as recourse.
  RecourseData data;
  // Same quantities on the calibration rows, reference included. When every
  // level has them the selective point picks its recourse level on these.
  std::optional<RecourseData> calibration;
};

// Minimum mean MSE over assignments of one candidate per row with total
// cost at most `budget`, for every budget. Entry j of `errors` holds the
// per-row errors of candidate j. nullopt where no assignment fits.
std::vector<std::optional<double>> oracle_allocation(
    std::span<const std::vector<double>> errors,
    std::span<const int64_t> costs, std::span<const double> budgets);

// Curves "vanilla", "oracle" and "selective" of mean MSE against the total
// number of inferences. Level l is compared at budget N * cost_l. The
// selective point uses some level r >= l as recourse with coverage from the
// budget rule, counting one inference for an amortized explanation. r is the
// level with the lowest calibration MSE when calibration data is present and
// l + 1 (or l for the last level) otherwise. "selective_cost" reports the
// realized total cost and "selective_level" the chosen r.
std::vector<Curve> time_sharing(std::span<const TimeShareLevel> levels,
                                std::span<const double> cal_scores,
                                const BootstrapOptions& bootstrap);

struct AblationMethod {
  std::string name;
  RecourseData data;
};

// Per method: initial-guess "<name>_mse" and "<name>_spearman" curves
// against the recourse fraction.
std::vector<Curve> estimator_ablation(std::span<const AblationMethod> methods,
                                      std::span<const double> cal_scores,
                                      std::span<const double> alphas,
                                      const BootstrapOptions& bootstrap);

struct ExampleRow {
  std::string input_id;
  double mse = 0.0;
  std::optional<double> spearman;
  bool covered = false;
  int64_t inference_cost = 0;
};

struct EvalReport {
  std::string protocol;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Curve> curves;
  std::vector<ExampleRow> per_example;

  nlohmann::json to_json() const;
  std::string per_example_csv() const;
  void write(const std::string& json_path, const std::string& csv_path) const;
};

}  // namespace selex

#endif  // SELEX_EVALSUITE_H_
