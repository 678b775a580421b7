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

// Amortized explainers: an MLP regressing Monte Carlo attributions, fed with
// x concatenated with a one-hot encoding of the target class.

#ifndef SELEX_AMORTIZE_H_
#define SELEX_AMORTIZE_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "selex/core.h"
#include "selex/mlp.h"

namespace selex {

class TokenReader;

// Identity of the regression targets.
struct AmortizerMeta {
  std::string target_method = "svs-12";
  uint64_t target_seed = 0;
  RngSpec training_rng;
  friend bool operator==(const AmortizerMeta&, const AmortizerMeta&) = default;
};

class AmortizedExplainer {
 public:
  AmortizedExplainer() = default;
  AmortizedExplainer(Mlp network, int num_classes, AmortizerMeta meta);

  int num_features() const { return network_.output_width(); }
  int num_classes() const { return num_classes_; }
  const Mlp& network() const { return network_; }
  const AmortizerMeta& meta() const { return meta_; }

  // Never touches the black box: inference_cost is 0.
  AttributionVector explain(const FeatureVector& x, TargetClass y) const;
  // One attribution row per input row.
  Eigen::MatrixXd explain_batch(const Eigen::MatrixXd& inputs,
                                std::span<const int> targets) const;

  void write(std::ostream& out) const;
  static AmortizedExplainer read(TokenReader& reader);

  friend bool operator==(const AmortizedExplainer&,
                         const AmortizedExplainer&) = default;

 private:
  Mlp network_;
  int num_classes_ = 0;
  AmortizerMeta meta_;
};

// [x, one_hot(y)] rows.
Eigen::MatrixXd amortizer_inputs(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets, int num_classes);

// One tanh hidden layer of width 3d.
MlpSpec default_amortizer_spec(int num_features, int num_classes);

// Fits the explainer to one Monte Carlo attribution per row (rows of
// `target_scores`). spec.seed is replaced by `rng`.
AmortizedExplainer train_amortized(const Eigen::MatrixXd& inputs,
                                   std::span<const int> targets,
                                   const Eigen::MatrixXd& target_scores,
                                   int num_classes, MlpSpec spec, RngSpec rng,
                                   const AmortizerMeta& meta = {},
                                   TrainingTrace* trace = nullptr);

struct ExplainerEnsemble {
  std::vector<AmortizedExplainer> members;

  int size() const { return static_cast<int>(members.size()); }
  // k x d matrix of member outputs for one input.
  Eigen::MatrixXd outputs(const FeatureVector& x, TargetClass y) const;

  void write(std::ostream& out) const;
  static ExplainerEnsemble read(TokenReader& reader);
};

// k members trained on streams 1..k of spec.seed.seed.
ExplainerEnsemble train_ensemble(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets,
                                 const Eigen::MatrixXd& target_scores,
                                 int num_classes, const MlpSpec& spec, int k,
                                 const AmortizerMeta& meta = {});

// One member per entry of `streams`.
ExplainerEnsemble train_ensemble(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets,
                                 const Eigen::MatrixXd& target_scores,
                                 int num_classes, const MlpSpec& spec,
                                 std::span<const RngSpec> streams,
                                 const AmortizerMeta& meta = {});

void save_amortizer(const AmortizedExplainer& explainer,
                    const std::string& path);
AmortizedExplainer load_amortizer(const std::string& path);

}  // namespace selex

#endif  // SELEX_AMORTIZE_H_
