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

#include "selex/benchmark.h"

#include <cmath>
#include <random>

namespace selex {
namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

}  // namespace

Dataset make_benchmark_dataset(int num_rows, int num_features, RngSpec rng) {
  if (num_rows < 1 || num_features < 2) {
    throw InvalidArgumentError("benchmark needs rows >= 1 and d >= 2");
  }
  const int d = num_features;
  auto engine = rng.engine();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Dataset data;
  data.features.resize(num_rows, d);
  data.labels.resize(static_cast<size_t>(num_rows));
  data.label_values = {0.0, 1.0};
  for (int j = 0; j < d; ++j) data.feature_names.push_back("f" + std::to_string(j));

  Eigen::VectorXd z(d), x(d);
  for (int r = 0; r < num_rows; ++r) {
    for (int j = 0; j < d; ++j) z(j) = normal(engine);
    for (int j = 0; j < d; ++j) x(j) = j == 0 ? z(0) : 0.8 * z(j) + 0.6 * z(j - 1);
    double logit = 0.2;
    for (int j = 0; j < d; ++j) {
      const double sign = j % 2 == 0 ? 1.0 : -1.0;
      logit += sign * 1.6 / (1.0 + 0.35 * j) * x(j);
    }
    for (int j = 0; j + 1 < d; j += 2) {
      logit += (j % 4 == 0 ? 1.2 : -1.0) * x(j) * x(j + 1);
    }
    logit += 1.1 * std::sin(2.0 * x(d - 1));
    const double p = 1.0 / (1.0 + std::exp(-logit));
    data.labels[r] = uniform(engine) < p ? 1 : 0;
    for (int j = 0; j < d; ++j) {
      data.features(r, j) = (1.0 + j % 3) * x(j) + 0.5 * j;
    }
  }
  return data;
}

PipelineState prepare_pipeline(const PipelineConfig& config) {
  PipelineState s;
  s.config = config;
  s.data = make_benchmark_dataset(config.num_rows, config.num_features,
                                  s.stream(PipelineStreams::kData));
  s.split = split_dataset(s.data.num_rows(), config.fractions,
                          s.stream(PipelineStreams::kSplit));
  s.standardizer = Standardizer::fit(rows_of(s.data.features, s.split.train));
  const Eigen::MatrixXd all = s.standardizer.transform(s.data.features);
  s.train_x = rows_of(all, s.split.train);
  s.cal_x = rows_of(all, s.split.cal);
  s.test_x = rows_of(all, s.split.test);
  std::vector<int> train_labels;
  for (int i : s.split.train) train_labels.push_back(s.data.labels[i]);
  for (int i : s.split.test) s.test_labels.push_back(s.data.labels[i]);

  const int d = config.num_features;
  const int k = s.data.num_classes();
  MlpSpec classifier_spec = default_classifier_spec(d, k);
  classifier_spec.epochs = config.classifier_epochs;
  classifier_spec.seed = s.stream(PipelineStreams::kClassifier);
  s.classifier = train_mlp(classifier_spec, s.train_x, train_labels);
  s.model = std::make_unique<CountedModel>(s.classifier);
  s.mask = MaskingSpec::zeros(d);

  s.train_y = argmax_rows(s.model->evaluate_batch(s.train_x));
  s.cal_y = argmax_rows(s.model->evaluate_batch(s.cal_x));
  s.test_y = argmax_rows(s.model->evaluate_batch(s.test_x));

  s.train_targets =
      run_mc_rows(config.train_targets, *s.model, s.train_x, s.train_y, s.mask,
                  s.stream(PipelineStreams::kTrainTargets));
  s.cal_exact = exact_shap_rows(*s.model, s.cal_x, s.cal_y, s.mask);
  s.test_exact = exact_shap_rows(*s.model, s.test_x, s.test_y, s.mask);

  MlpSpec amortizer_spec = default_amortizer_spec(d, k);
  amortizer_spec.epochs = config.amortizer_epochs;
  AmortizerMeta meta;
  meta.target_method = config.train_targets.name();
  meta.target_seed = config.seed;
  s.amortizer = std::make_shared<const AmortizedExplainer>(train_amortized(
      s.train_x, s.train_y, s.train_targets, k, amortizer_spec,
      s.stream(PipelineStreams::kAmortizer), meta));
  return s;
}

std::shared_ptr<const UncertaintyMetric> fit_metric(
    const PipelineState& state, UncertaintyMetric::Kind kind) {
  const int d = state.config.num_features;
  const int k = state.data.num_classes();
  if (kind == UncertaintyMetric::Kind::kLearned) {
    return std::make_shared<const UncertaintyMetric>(train_learned_uncertainty(
        state.train_x, state.train_y, *state.amortizer, state.train_targets,
        default_uncertainty_spec(d), state.stream(PipelineStreams::kMetric)));
  }
  MlpSpec spec = default_amortizer_spec(d, k);
  spec.epochs = state.config.amortizer_epochs;
  std::vector<RngSpec> streams;
  for (int i = 1; i <= state.config.ensemble_size; ++i) {
    streams.push_back(state.stream(PipelineStreams::kEnsembleBase +
                                   static_cast<uint64_t>(i)));
  }
  return std::make_shared<const UncertaintyMetric>(
      UncertaintyMetric::deep(train_ensemble(state.train_x, state.train_y,
                                             state.train_targets, k, spec,
                                             streams, state.amortizer->meta())));
}

CalibrationData calibration_data(const PipelineState& state,
                                 const McMethod& recourse,
                                 const McMethod& reference) {
  CalibrationData cal;
  cal.inputs = state.cal_x;
  cal.targets = state.cal_y;
  cal.mc = run_mc_rows(recourse, *state.model, state.cal_x, state.cal_y,
                       state.mask, state.stream(PipelineStreams::kCalRecourse));
  cal.reference =
      run_mc_rows(reference, *state.model, state.cal_x, state.cal_y, state.mask,
                  state.stream(PipelineStreams::kCalReference));
  return cal;
}

}  // namespace selex
