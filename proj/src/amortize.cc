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

#include "selex/amortize.h"

#include <fstream>

#include "selex/text_format.h"

namespace selex {
namespace {

constexpr char kAmortizerMagic[] = "selex-amortizer";
constexpr int kAmortizerVersion = 1;

}  // namespace

AmortizedExplainer::AmortizedExplainer(Mlp network, int num_classes,
                                       AmortizerMeta meta)
    : network_(std::move(network)),
      num_classes_(num_classes),
      meta_(std::move(meta)) {
  if (num_classes_ < 1 ||
      network_.input_width() != network_.output_width() + num_classes_) {
    throw InvalidArgumentError("amortizer input must be d features plus a "
                               "one-hot class of width K");
  }
}

AttributionVector AmortizedExplainer::explain(const FeatureVector& x,
                                              TargetClass y) const {
  const int target = y.index;
  Eigen::MatrixXd row = x.transpose();
  AttributionVector out;
  out.scores = explain_batch(row, std::span<const int>(&target, 1)).row(0);
  out.target = y;
  out.inference_cost = 0;
  return out;
}

Eigen::MatrixXd AmortizedExplainer::explain_batch(
    const Eigen::MatrixXd& inputs, std::span<const int> targets) const {
  if (inputs.cols() != num_features()) {
    throw InvalidArgumentError("amortizer expects " +
                               std::to_string(num_features()) +
                               " features, got " +
                               std::to_string(inputs.cols()));
  }
  return network_.forward(amortizer_inputs(inputs, targets, num_classes_));
}

void AmortizedExplainer::write(std::ostream& out) const {
  out << kAmortizerMagic << ' ' << kAmortizerVersion << '\n';
  out << "classes " << num_classes_ << '\n';
  out << "meta " << meta_.target_method << ' ' << meta_.target_seed << ' '
      << meta_.training_rng.seed << ' ' << meta_.training_rng.stream << '\n';
  network_.write(out);
}

AmortizedExplainer AmortizedExplainer::read(TokenReader& reader) {
  const auto magic = reader.expect(kAmortizerMagic);
  if (magic.size() != 1 || reader.integer(magic[0]) != kAmortizerVersion) {
    reader.fail("unsupported amortizer version");
  }
  const auto classes = reader.expect("classes");
  if (classes.size() != 1) reader.fail("expected the class count");
  const auto meta_tokens = reader.expect("meta");
  if (meta_tokens.size() != 4) reader.fail("malformed amortizer meta line");
  AmortizerMeta meta;
  meta.target_method = meta_tokens[0];
  meta.target_seed = static_cast<uint64_t>(std::stoull(meta_tokens[1]));
  meta.training_rng.seed = static_cast<uint64_t>(std::stoull(meta_tokens[2]));
  meta.training_rng.stream = static_cast<uint64_t>(std::stoull(meta_tokens[3]));
  Mlp network = Mlp::read(reader);
  return AmortizedExplainer(std::move(network),
                            static_cast<int>(reader.integer(classes[0])),
                            std::move(meta));
}

Eigen::MatrixXd amortizer_inputs(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets,
                                 int num_classes) {
  if (static_cast<size_t>(inputs.rows()) != targets.size()) {
    throw InvalidArgumentError("one target class per row is required");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(inputs.rows(),
                                              inputs.cols() + num_classes);
  out.leftCols(inputs.cols()) = inputs;
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const int y = targets[static_cast<size_t>(r)];
    if (y < 0 || y >= num_classes) {
      throw InvalidArgumentError("target class " + std::to_string(y) +
                                 " out of range");
    }
    out(r, inputs.cols() + y) = 1.0;
  }
  return out;
}

MlpSpec default_amortizer_spec(int num_features, int num_classes) {
  MlpSpec spec;
  spec.layer_widths = {num_features + num_classes, 3 * num_features,
                       num_features};
  spec.activation = Activation::kTanh;
  spec.epochs = 150;
  spec.batch_size = 32;
  spec.learning_rate = 0.05;
  return spec;
}

AmortizedExplainer train_amortized(const Eigen::MatrixXd& inputs,
                                   std::span<const int> targets,
                                   const Eigen::MatrixXd& target_scores,
                                   int num_classes, MlpSpec spec, RngSpec rng,
                                   const AmortizerMeta& meta,
                                   TrainingTrace* trace) {
  if (inputs.rows() == 0) throw InvalidArgumentError("empty training set");
  if (target_scores.rows() != inputs.rows()) {
    throw MissingArtifactError("need one target attribution per training row");
  }
  if (target_scores.cols() != inputs.cols()) {
    throw InvalidArgumentError("target attributions must have d entries");
  }
  spec.seed = rng;
  AmortizerMeta stamped = meta;
  stamped.training_rng = rng;
  Mlp network = fit_regressor(amortizer_inputs(inputs, targets, num_classes),
                              target_scores, spec, trace);
  return AmortizedExplainer(std::move(network), num_classes, stamped);
}

Eigen::MatrixXd ExplainerEnsemble::outputs(const FeatureVector& x,
                                           TargetClass y) const {
  Eigen::MatrixXd out(size(), x.size());
  for (int i = 0; i < size(); ++i) {
    out.row(i) = members[i].explain(x, y).scores.transpose();
  }
  return out;
}

void ExplainerEnsemble::write(std::ostream& out) const {
  out << "ensemble " << members.size() << '\n';
  for (const auto& m : members) m.write(out);
  out << "end ensemble\n";
}

ExplainerEnsemble ExplainerEnsemble::read(TokenReader& reader) {
  const auto header = reader.expect("ensemble");
  if (header.size() != 1) reader.fail("expected the member count");
  const long long k = reader.integer(header[0]);
  if (k < 1) reader.fail("an ensemble needs members");
  ExplainerEnsemble ensemble;
  for (long long i = 0; i < k; ++i) {
    ensemble.members.push_back(AmortizedExplainer::read(reader));
  }
  const auto end = reader.expect("end");
  if (end.size() != 1 || end[0] != "ensemble") reader.fail("expected 'end ensemble'");
  return ensemble;
}

ExplainerEnsemble train_ensemble(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets,
                                 const Eigen::MatrixXd& target_scores,
                                 int num_classes, const MlpSpec& spec, int k,
                                 const AmortizerMeta& meta) {
  if (k < 2) throw InvalidArgumentError("a deep ensemble needs k >= 2");
  std::vector<RngSpec> streams;
  for (int i = 1; i <= k; ++i) {
    streams.push_back(RngSpec{spec.seed.seed, static_cast<uint64_t>(i)});
  }
  return train_ensemble(inputs, targets, target_scores, num_classes, spec,
                        streams, meta);
}

ExplainerEnsemble train_ensemble(const Eigen::MatrixXd& inputs,
                                 std::span<const int> targets,
                                 const Eigen::MatrixXd& target_scores,
                                 int num_classes, const MlpSpec& spec,
                                 std::span<const RngSpec> streams,
                                 const AmortizerMeta& meta) {
  if (streams.size() < 2) {
    throw InvalidArgumentError("a deep ensemble needs k >= 2");
  }
  ExplainerEnsemble ensemble;
  for (const RngSpec& stream : streams) {
    ensemble.members.push_back(train_amortized(inputs, targets, target_scores,
                                               num_classes, spec, stream,
                                               meta));
  }
  return ensemble;
}

void save_amortizer(const AmortizedExplainer& explainer,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgumentError("cannot write amortizer file " + path);
  explainer.write(out);
}

AmortizedExplainer load_amortizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open amortizer file " + path);
  TokenReader reader(in, path);
  return AmortizedExplainer::read(reader);
}

}  // namespace selex
