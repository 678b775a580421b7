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

#include "selex/mlp.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selex/text_format.h"

namespace selex {
namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation activation) {
  switch (activation) {
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kRelu:
      return z.cwiseMax(0.0);
  }
  return z;
}

// Derivative of the activation expressed through its pre-activation `z` and
// output `a`.
Eigen::ArrayXXd activation_derivative(const Eigen::MatrixXd& z,
                                      const Eigen::MatrixXd& a,
                                      Activation activation) {
  switch (activation) {
    case Activation::kTanh:
      return 1.0 - a.array().square();
    case Activation::kRelu:
      return (z.array() > 0.0).cast<double>();
  }
  return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& inputs, const Mlp::Layer& layer) {
  Eigen::MatrixXd z = inputs * layer.weights.transpose();
  z.rowwise() += layer.biases.transpose();
  return z;
}

// Mean loss over rows; writes d(loss)/d(outputs) into `output_gradient`
// when non-null.
double output_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
                   Loss loss, Eigen::MatrixXd* output_gradient) {
  const double n = static_cast<double>(outputs.rows());
  switch (loss) {
    case Loss::kSoftmaxCrossEntropy: {
      Eigen::MatrixXd log_p = outputs;
      for (Eigen::Index r = 0; r < log_p.rows(); ++r) {
        const double max = log_p.row(r).maxCoeff();
        const double log_sum =
            max + std::log((log_p.row(r).array() - max).exp().sum());
        log_p.row(r).array() -= log_sum;
      }
      const double value = -(targets.array() * log_p.array()).sum() / n;
      if (output_gradient != nullptr) {
        *output_gradient = (log_p.array().exp().matrix() - targets) / n;
      }
      return value;
    }
    case Loss::kSquaredError: {
      const Eigen::MatrixXd diff = outputs - targets;
      if (output_gradient != nullptr) *output_gradient = 2.0 * diff / n;
      return diff.squaredNorm() / n;
    }
  }
  return 0.0;
}

// Backpropagation; `gradients` receives one entry per layer.
double backprop(const Mlp& network, const Eigen::MatrixXd& inputs,
                const Eigen::MatrixXd& targets, Loss loss,
                std::vector<Mlp::Layer>* gradients) {
  const auto& layers = network.layers();
  const size_t depth = layers.size();
  std::vector<Eigen::MatrixXd> pre(depth);
  std::vector<Eigen::MatrixXd> post(depth);
  const Eigen::MatrixXd* current = &inputs;
  for (size_t l = 0; l < depth; ++l) {
    pre[l] = affine(*current, layers[l]);
    post[l] = l + 1 < depth ? activate(pre[l], network.activation()) : pre[l];
    current = &post[l];
  }
  Eigen::MatrixXd delta;
  const double value = output_loss(post.back(), targets, loss,
                                   gradients != nullptr ? &delta : nullptr);
  if (gradients == nullptr) return value;

  gradients->resize(depth);
  for (size_t l = depth; l-- > 0;) {
    const Eigen::MatrixXd& below = l == 0 ? inputs : post[l - 1];
    (*gradients)[l].weights = delta.transpose() * below;
    (*gradients)[l].biases = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * layers[l].weights;
      delta = (back.array() * activation_derivative(pre[l - 1], post[l - 1],
                                                    network.activation()))
                  .matrix();
    }
  }
  return value;
}

}  // namespace

std::string activation_name(Activation activation) {
  return activation == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw InvalidArgumentError("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw InvalidArgumentError("an MLP needs at least input and output widths");
  }
  for (int w : layer_widths) {
    if (w <= 0) throw InvalidArgumentError("layer widths must be positive");
  }
  if (epochs <= 0 || batch_size <= 0) {
    throw InvalidArgumentError("epochs and batch_size must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgumentError("learning_rate must be finite and nonnegative");
  }
}

Mlp::Mlp(std::vector<int> layer_widths, Activation activation)
    : widths_(std::move(layer_widths)), activation_(activation) {
  if (widths_.size() < 2) {
    throw InvalidArgumentError("an MLP needs at least input and output widths");
  }
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers_.push_back(
        Layer{Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]),
              Eigen::VectorXd::Zero(widths_[l + 1])});
  }
}

Mlp Mlp::initialized(std::vector<int> layer_widths, Activation activation,
                     RngSpec rng) {
  Mlp network(std::move(layer_widths), activation);
  auto engine = rng.engine();
  for (auto& layer : network.layers_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.weights.rows() +
                                            layer.weights.cols()));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = uniform(engine);
      }
    }
  }
  return network;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_width()) {
    throw InvalidArgumentError("network expects " +
                               std::to_string(input_width()) +
                               " inputs, got " + std::to_string(inputs.cols()));
  }
  Eigen::MatrixXd current = inputs;
  for (size_t l = 0; l < layers_.size(); ++l) {
    current = affine(current, layers_[l]);
    if (l + 1 < layers_.size()) current = activate(current, activation_);
  }
  return current;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input.transpose())).row(0).transpose();
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::Index total = 0;
  for (const auto& layer : layers_) {
    total += layer.weights.size() + layer.biases.size();
  }
  Eigen::VectorXd flat(total);
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        flat(at++) = layer.weights(r, c);
      }
    }
    flat.segment(at, layer.biases.size()) = layer.biases;
    at += layer.biases.size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        if (at >= flat.size()) {
          throw InvalidArgumentError("parameter vector too short");
        }
        layer.weights(r, c) = flat(at++);
      }
    }
    if (at + layer.biases.size() > flat.size()) {
      throw InvalidArgumentError("parameter vector too short");
    }
    layer.biases = flat.segment(at, layer.biases.size());
    at += layer.biases.size();
  }
  if (at != flat.size()) throw InvalidArgumentError("parameter vector too long");
}

void Mlp::write(std::ostream& out) const {
  out << "mlp " << activation_name(activation_);
  for (int w : widths_) out << ' ' << w;
  out << '\n';
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    out << "layer " << l << ' ' << layer.weights.rows() << ' '
        << layer.weights.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      out << "w ";
      write_reals(out, layer.weights.row(r).transpose());
      out << '\n';
    }
    out << "b ";
    write_reals(out, layer.biases);
    out << '\n';
  }
  out << "end mlp\n";
}

Mlp Mlp::read(TokenReader& reader) {
  const std::vector<std::string> header = reader.expect("mlp");
  if (header.size() < 3) reader.fail("mlp header needs activation and widths");
  std::vector<int> widths;
  for (size_t i = 1; i < header.size(); ++i) {
    const long long w = reader.integer(header[i]);
    if (w <= 0) reader.fail("layer widths must be positive");
    widths.push_back(static_cast<int>(w));
  }
  Mlp network(widths, parse_activation(header[0]));
  for (size_t l = 0; l < network.layers_.size(); ++l) {
    const std::vector<std::string> shape = reader.expect("layer");
    Layer& layer = network.layers_[l];
    if (shape.size() != 3 ||
        reader.integer(shape[0]) != static_cast<long long>(l) ||
        reader.integer(shape[1]) != layer.weights.rows() ||
        reader.integer(shape[2]) != layer.weights.cols()) {
      reader.fail("layer shape does not match widths");
    }
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      const Eigen::VectorXd row = reader.reals(reader.expect("w"), 0);
      if (row.size() != layer.weights.cols()) reader.fail("bad weight row");
      layer.weights.row(r) = row.transpose();
    }
    const Eigen::VectorXd biases = reader.reals(reader.expect("b"), 0);
    if (biases.size() != layer.biases.size()) reader.fail("bad bias row");
    layer.biases = biases;
  }
  const std::vector<std::string> tail = reader.expect("end");
  if (tail.size() != 1 || tail[0] != "mlp") reader.fail("expected 'end mlp'");
  return network;
}

double loss_and_gradient(const Mlp& network, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, Loss loss,
                         Eigen::VectorXd* gradient) {
  if (gradient == nullptr) {
    return output_loss(network.forward(inputs), targets, loss, nullptr);
  }
  std::vector<Mlp::Layer> layers;
  const double value = backprop(network, inputs, targets, loss, &layers);
  Mlp shaped = network;
  shaped.mutable_layers() = std::move(layers);
  *gradient = shaped.parameters();
  return value;
}

Mlp train_sgd(Mlp network, const Eigen::MatrixXd& inputs,
              const Eigen::MatrixXd& targets, Loss loss, const MlpSpec& spec,
              TrainingTrace* trace) {
  spec.validate();
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw InvalidArgumentError("empty training set");
  if (targets.rows() != n || targets.cols() != network.output_width() ||
      inputs.cols() != network.input_width()) {
    throw InvalidArgumentError("training data shape does not match network");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto engine = spec.seed.child(0x5e5).engine();

  const Eigen::Index batch = std::min<Eigen::Index>(spec.batch_size, n);
  Eigen::MatrixXd batch_inputs(batch, inputs.cols());
  Eigen::MatrixXd batch_targets(batch, targets.cols());
  std::vector<Mlp::Layer> gradients;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), engine);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index size = std::min(batch, n - start);
      batch_inputs.resize(size, inputs.cols());
      batch_targets.resize(size, targets.cols());
      for (Eigen::Index i = 0; i < size; ++i) {
        batch_inputs.row(i) = inputs.row(order[start + i]);
        batch_targets.row(i) = targets.row(order[start + i]);
      }
      const double value =
          backprop(network, batch_inputs, batch_targets, loss, &gradients);
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch + 1) + ", batch starting "
                             "at row " + std::to_string(start));
      }
      auto& layers = network.mutable_layers();
      for (size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights -= spec.learning_rate * gradients[l].weights;
        layers[l].biases -= spec.learning_rate * gradients[l].biases;
      }
    }
    if (trace != nullptr) {
      const double epoch_loss =
          output_loss(network.forward(inputs), targets, loss, nullptr);
      if (!std::isfinite(epoch_loss)) {
        throw NumericalError("non-finite training loss after epoch " +
                             std::to_string(epoch + 1));
      }
      trace->epoch_loss.push_back(epoch_loss);
    }
  }
  return network;
}

Mlp fit_regressor(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const MlpSpec& spec, TrainingTrace* trace) {
  spec.validate();
  if (inputs.rows() == 0) throw InvalidArgumentError("empty training set");
  const double scale = std::sqrt(targets.squaredNorm() /
                                 static_cast<double>(targets.size()));
  if (!std::isfinite(scale)) throw NumericalError("non-finite regression targets");
  // All-zero targets: train in unit scale, then the zero scale folds into the
  // output layer and the fit is exactly the zero function.
  const double train_scale = scale > 0.0 ? scale : 1.0;
  Mlp network = Mlp::initialized(spec.layer_widths, spec.activation, spec.seed);
  network = train_sgd(std::move(network), inputs, targets / train_scale,
                      Loss::kSquaredError, spec, trace);
  if (trace != nullptr) {
    for (double& v : trace->epoch_loss) v *= scale * scale;
  }
  auto& last = network.mutable_layers().back();
  last.weights *= scale;
  last.biases *= scale;
  return network;
}

}  // namespace selex
