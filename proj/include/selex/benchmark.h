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

// Synthetic tabular benchmark and an in-memory run of the whole pipeline:
// black box, Monte Carlo targets, exact references, amortizer, metric and
// selective explainer.

#ifndef SELEX_BENCHMARK_H_
#define SELEX_BENCHMARK_H_

#include <memory>
#include <string>
#include <vector>

#include "selex/amortize.h"
#include "selex/attribution.h"
#include "selex/blackbox.h"
#include "selex/combine.h"
#include "selex/core.h"
#include "selex/uncertainty.h"

namespace selex {

// Binary labels drawn from a logistic model with pairwise interactions and a
// smooth nonlinearity; features are correlated Gaussians with mixed scales.
Dataset make_benchmark_dataset(int num_rows, int num_features, RngSpec rng);

struct PipelineConfig {
  int num_rows = 4000;
  int num_features = 8;
  uint64_t seed = 1;
  SplitFractions fractions;
  McMethod train_targets{McMethod::Kind::kSvs, 12};
  McMethod recourse{McMethod::Kind::kSvs, 12};
  McMethod reference{McMethod::Kind::kSvs, 12};
  int ensemble_size = 20;
  int num_bins = kDefaultNumBins;
  int classifier_epochs = 60;
  int amortizer_epochs = 150;
};

// Everything up to a trained amortizer, in standardized feature space.
// Targets are the black box's predicted classes.
struct PipelineState {
  PipelineConfig config;
  Dataset data;
  DatasetSplit split;
  Standardizer standardizer;
  std::shared_ptr<const MlpClassifier> classifier;
  std::unique_ptr<CountedModel> model;
  MaskingSpec mask;

  Eigen::MatrixXd train_x, cal_x, test_x;
  std::vector<int> train_y, cal_y, test_y;
  std::vector<int> test_labels;

  // Monte Carlo targets on train, exact SHAP on calibration and test.
  Eigen::MatrixXd train_targets;
  Eigen::MatrixXd cal_exact, test_exact;

  std::shared_ptr<const AmortizedExplainer> amortizer;

  RngSpec stream(uint64_t id) const { return RngSpec{config.seed, id}; }
};

// Stream ids used by the pipeline stages.
struct PipelineStreams {
  static constexpr uint64_t kSplit = 1;
  static constexpr uint64_t kClassifier = 2;
  static constexpr uint64_t kTrainTargets = 3;
  static constexpr uint64_t kAmortizer = 4;
  static constexpr uint64_t kMetric = 5;
  static constexpr uint64_t kCalRecourse = 6;
  static constexpr uint64_t kCalReference = 7;
  static constexpr uint64_t kTestRecourse = 8;
  static constexpr uint64_t kData = 9;
  static constexpr uint64_t kEnsembleBase = 100;
};

PipelineState prepare_pipeline(const PipelineConfig& config);

std::shared_ptr<const UncertaintyMetric> fit_metric(
    const PipelineState& state, UncertaintyMetric::Kind kind);

// Calibration rows with fresh MC^n draws for `recourse` and independent
// MC^n' draws for the reference method.
CalibrationData calibration_data(const PipelineState& state,
                                 const McMethod& recourse,
                                 const McMethod& reference);

}  // namespace selex

#endif  // SELEX_BENCHMARK_H_
