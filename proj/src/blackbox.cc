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

#include "selex/blackbox.h"

#include <cmath>
#include <fstream>

#include "selex/text_format.h"

namespace selex {
namespace {

constexpr char kModelMagic[] = "selex-model";
constexpr int kModelVersion = 1;

}  // namespace

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double max = scores.row(r).maxCoeff();
    out.row(r) = (scores.row(r).array() - max).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

MlpClassifier::MlpClassifier(Mlp network) : network_(std::move(network)) {
  if (network_.output_width() < 2) {
    throw InvalidArgumentError("a classifier needs at least two classes");
  }
}

Eigen::MatrixXd MlpClassifier::predict_batch(
    const Eigen::MatrixXd& inputs) const {
  return softmax_rows(network_.forward(inputs));
}

MlpSpec default_classifier_spec(int num_features, int num_classes) {
  MlpSpec spec;
  spec.layer_widths = {num_features, 3 * num_features, num_classes};
  spec.activation = Activation::kTanh;
  spec.epochs = 60;
  spec.batch_size = 32;
  spec.learning_rate = 0.05;
  return spec;
}

std::shared_ptr<const MlpClassifier> train_mlp(const MlpSpec& spec,
                                               const Eigen::MatrixXd& inputs,
                                               std::span<const int> labels,
                                               TrainingTrace* trace) {
  spec.validate();
  if (inputs.rows() == 0) throw InvalidArgumentError("empty training set");
  if (static_cast<size_t>(inputs.rows()) != labels.size()) {
    throw InvalidArgumentError("one label per training row is required");
  }
  if (spec.layer_widths.front() != inputs.cols()) {
    throw InvalidArgumentError("first layer width must equal the feature "
                               "count");
  }
  const int num_classes = spec.layer_widths.back();
  Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(inputs.rows(), num_classes);
  for (size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= num_classes) {
      throw InvalidArgumentError("label " + std::to_string(labels[r]) +
                                 " out of range");
    }
    one_hot(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
  }
  Mlp network = Mlp::initialized(spec.layer_widths, spec.activation, spec.seed);
  network = train_sgd(std::move(network), inputs, one_hot,
                      Loss::kSoftmaxCrossEntropy, spec, trace);
  return std::make_shared<const MlpClassifier>(std::move(network));
}

SyntheticModel::SyntheticModel(SyntheticModelSpec spec)
    : spec_(std::move(spec)) {
  const int d = spec_.num_features;
  const int k = spec_.num_classes;
  if (d <= 0 || k < 2) {
    throw InvalidArgumentError("synthetic model needs d >= 1 and >= 2 classes");
  }
  switch (spec_.kind) {
    case SyntheticModelSpec::Kind::kConstant:
      if (spec_.probabilities.size() != k ||
          spec_.probabilities.minCoeff() < 0.0 ||
          std::abs(spec_.probabilities.sum() - 1.0) > 1e-9) {
        throw InvalidArgumentError("constant model needs a probability vector "
                                   "over all classes");
      }
      break;
    case SyntheticModelSpec::Kind::kLinearPlusPairwise:
      if (static_cast<int>(spec_.pairwise.size()) != k) {
        throw InvalidArgumentError("pairwise terms needed for every class");
      }
      for (const auto& q : spec_.pairwise) {
        if (q.rows() != d || q.cols() != d) {
          throw InvalidArgumentError("pairwise coefficient dimension mismatch");
        }
      }
      [[fallthrough]];
    case SyntheticModelSpec::Kind::kLinear:
      if (spec_.linear.rows() != k || spec_.linear.cols() != d) {
        throw InvalidArgumentError("linear coefficient dimension mismatch");
      }
      if (spec_.bias.size() == 0) spec_.bias = Eigen::VectorXd::Zero(k);
      if (spec_.bias.size() != k) {
        throw InvalidArgumentError("bias dimension mismatch");
      }
      break;
  }
}

Eigen::MatrixXd SyntheticModel::predict_batch(
    const Eigen::MatrixXd& inputs) const {
  const Eigen::Index n = inputs.rows();
  if (spec_.kind == SyntheticModelSpec::Kind::kConstant) {
    return spec_.probabilities.transpose().replicate(n, 1);
  }
  Eigen::MatrixXd scores = inputs * spec_.linear.transpose();
  scores.rowwise() += spec_.bias.transpose();
  if (spec_.kind == SyntheticModelSpec::Kind::kLinearPlusPairwise) {
    const int d = spec_.num_features;
    for (int c = 0; c < spec_.num_classes; ++c) {
      for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
          const double q = spec_.pairwise[c](i, j);
          if (q == 0.0) continue;
          scores.col(c).array() +=
              q * inputs.col(i).array() * inputs.col(j).array();
        }
      }
    }
  }
  return softmax_rows(scores);
}

std::shared_ptr<const SyntheticModel> make_synthetic(SyntheticModelSpec spec) {
  return std::make_shared<const SyntheticModel>(std::move(spec));
}

void save_model(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgumentError("cannot write model file " + path);
  const Mlp& network = bundle.classifier->network();
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "features " << network.input_width();
  for (const auto& name : bundle.feature_names) out << ' ' << name;
  out << '\n';
  out << "labels " << bundle.label_values.size();
  for (double v : bundle.label_values) out << ' ' << format_real_exact(v);
  out << '\n';
  out << "mean ";
  write_reals(out, bundle.standardizer.mean);
  out << "\nscale ";
  write_reals(out, bundle.standardizer.scale);
  out << '\n';
  network.write(out);
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open model file " + path);
  TokenReader reader(in, path);
  const auto magic = reader.expect(kModelMagic);
  if (magic.size() != 1 || reader.integer(magic[0]) != kModelVersion) {
    reader.fail("unsupported model file version");
  }
  ModelBundle bundle;
  const auto features = reader.expect("features");
  if (features.empty()) reader.fail("missing feature count");
  bundle.feature_names.assign(features.begin() + 1, features.end());
  const auto labels = reader.expect("labels");
  if (labels.empty()) reader.fail("missing label count");
  for (size_t i = 1; i < labels.size(); ++i) {
    bundle.label_values.push_back(reader.real(labels[i]));
  }
  bundle.standardizer.mean = reader.reals(reader.expect("mean"), 0);
  bundle.standardizer.scale = reader.reals(reader.expect("scale"), 0);
  Mlp network = Mlp::read(reader);
  const long long d = reader.integer(features[0]);
  if (d != network.input_width() ||
      bundle.standardizer.mean.size() != d ||
      bundle.standardizer.scale.size() != d) {
    reader.fail("feature dimension is inconsistent");
  }
  if (static_cast<long long>(bundle.label_values.size()) !=
      network.output_width()) {
    reader.fail("label count does not match the output layer");
  }
  bundle.classifier = std::make_shared<const MlpClassifier>(std::move(network));
  return bundle;
}

}  // namespace selex
