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

// Fully connected network with a linear output layer, trained by mini-batch
// stochastic gradient descent. Used for the black-box classifier, the
// amortized explainer and the learned uncertainty regressor.

#ifndef SELEX_MLP_H_
#define SELEX_MLP_H_

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selex/core.h"

namespace selex {

class TokenReader;

enum class Activation { kTanh, kRelu };

std::string activation_name(Activation activation);
Activation parse_activation(const std::string& name);

struct MlpSpec {
  // Input width, hidden widths, output width.
  std::vector<int> layer_widths;
  Activation activation = Activation::kTanh;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  RngSpec seed;

  void validate() const;
};

enum class Loss {
  // Mean over rows of -log softmax(z)_y; targets are one-hot rows.
  kSoftmaxCrossEntropy,
  // Mean over rows of the squared L2 distance to the target row.
  kSquaredError,
};

class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd biases;   // out

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  Mlp() = default;
  // All parameters zero.
  Mlp(std::vector<int> layer_widths, Activation activation);

  // Glorot-uniform weights, zero biases.
  static Mlp initialized(std::vector<int> layer_widths, Activation activation,
                         RngSpec rng);

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return activation_; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  // Raw (pre-softmax) outputs, one row per input row.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  // Flattened parameter view, layer by layer: weights row-major then biases.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  void write(std::ostream& out) const;
  static Mlp read(TokenReader& reader);

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<int> widths_;
  Activation activation_ = Activation::kTanh;
  std::vector<Layer> layers_;
};

// Mean loss of `network` on (inputs, targets); fills `gradient` (flattened
// like Mlp::parameters) when non-null.
double loss_and_gradient(const Mlp& network, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, Loss loss,
                         Eigen::VectorXd* gradient);

struct TrainingTrace {
  // Mean loss over the full training set after each epoch.
  std::vector<double> epoch_loss;
};

// Mini-batch SGD with a fixed learning rate. Rows are reshuffled each epoch
// from spec.seed. Throws NumericalError on a non-finite loss.
Mlp train_sgd(Mlp network, const Eigen::MatrixXd& inputs,
              const Eigen::MatrixXd& targets, Loss loss, const MlpSpec& spec,
              TrainingTrace* trace = nullptr);

// Squared-error regression with targets rescaled by their root mean square
// during optimization. The scale is folded back into the output layer, so
// the returned network predicts in the original target units.
Mlp fit_regressor(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const MlpSpec& spec, TrainingTrace* trace = nullptr);

}  // namespace selex

#endif  // SELEX_MLP_H_
