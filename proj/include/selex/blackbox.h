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

// The black-box classifier h: an MLP trained with softmax cross-entropy,
// plus closed-form synthetic families used as test fixtures.

#ifndef SELEX_BLACKBOX_H_
#define SELEX_BLACKBOX_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "selex/core.h"
#include "selex/mlp.h"

namespace selex {

// Softmax over the outputs of an MLP.
class MlpClassifier : public Classifier {
 public:
  explicit MlpClassifier(Mlp network);

  int num_features() const override { return network_.input_width(); }
  int num_classes() const override { return network_.output_width(); }
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const override;

  const Mlp& network() const { return network_; }

 private:
  Mlp network_;
};

// Default classifier spec: one tanh hidden layer of width 3d.
MlpSpec default_classifier_spec(int num_features, int num_classes);

// Trains an MlpClassifier on (inputs, labels) by mini-batch SGD.
std::shared_ptr<const MlpClassifier> train_mlp(const MlpSpec& spec,
                                               const Eigen::MatrixXd& inputs,
                                               std::span<const int> labels,
                                               TrainingTrace* trace = nullptr);

struct SyntheticModelSpec {
  enum class Kind { kConstant, kLinear, kLinearPlusPairwise };

  Kind kind = Kind::kLinear;
  int num_features = 0;
  int num_classes = 2;
  // kConstant: the returned distribution.
  Eigen::VectorXd probabilities;
  // Class scores are bias(c) + linear.row(c) . x
  //   + sum_{i<j} pairwise[c](i, j) x_i x_j, followed by a softmax.
  Eigen::VectorXd bias;
  Eigen::MatrixXd linear;               // num_classes x num_features
  std::vector<Eigen::MatrixXd> pairwise;  // num_classes of d x d
};

class SyntheticModel : public Classifier {
 public:
  explicit SyntheticModel(SyntheticModelSpec spec);

  int num_features() const override { return spec_.num_features; }
  int num_classes() const override { return spec_.num_classes; }
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const override;

  const SyntheticModelSpec& spec() const { return spec_; }

 private:
  SyntheticModelSpec spec_;
};

std::shared_ptr<const SyntheticModel> make_synthetic(SyntheticModelSpec spec);

// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores);

// A trained classifier together with the standardization it expects.
struct ModelBundle {
  std::shared_ptr<const MlpClassifier> classifier;
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::vector<double> label_values;
};

// Versioned text format; reals are hexadecimal so the round trip is exact.
void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace selex

#endif  // SELEX_BLACKBOX_H_
