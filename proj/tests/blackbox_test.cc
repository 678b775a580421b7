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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "selex/blackbox.h"
#include "selex/mlp.h"
#include "selex/text_format.h"
#include "test_util.h"

namespace selex {
namespace {

using testing::random_matrix;

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

void check_gradient(Activation activation, Loss loss, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mlp net = Mlp::initialized({4, 6, 5, 3}, activation, RngSpec{seed, 1});
  // Nonzero biases keep ReLU pre-activations off the kink at 0.
  for (auto& layer : net.mutable_layers()) {
    layer.biases = testing::random_vector(static_cast<int>(layer.biases.size()), rng, 0.3);
  }
  const Eigen::MatrixXd inputs = random_matrix(7, 4, rng);
  Eigen::MatrixXd targets;
  if (loss == Loss::kSoftmaxCrossEntropy) {
    targets = Eigen::MatrixXd::Zero(7, 3);
    for (int r = 0; r < 7; ++r) targets(r, r % 3) = 1.0;
  } else {
    targets = random_matrix(7, 3, rng);
  }
  Eigen::VectorXd gradient;
  loss_and_gradient(net, inputs, targets, loss, &gradient);
  const Eigen::VectorXd theta = net.parameters();
  ASSERT_EQ(gradient.size(), theta.size());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Mlp plus = net, minus = net;
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    plus.set_parameters(tp);
    minus.set_parameters(tm);
    const double numeric =
        (loss_and_gradient(plus, inputs, targets, loss, nullptr) -
         loss_and_gradient(minus, inputs, targets, loss, nullptr)) /
        (2 * h);
    if (std::abs(numeric) < 1e-7 && std::abs(gradient(i)) < 1e-7) continue;
    EXPECT_LT(relative_error(gradient(i), numeric), 1e-4)
        << activation_name(activation) << " parameter " << i;
  }
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    check_gradient(Activation::kTanh, Loss::kSoftmaxCrossEntropy, seed);
    check_gradient(Activation::kTanh, Loss::kSquaredError, seed);
    check_gradient(Activation::kRelu, Loss::kSquaredError, seed);
  }
}

TEST(Mlp, FullBatchLossIsNonIncreasing) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd inputs = random_matrix(40, 3, rng);
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(40, 2);
  for (int r = 0; r < 40; ++r) targets(r, inputs(r, 0) + inputs(r, 1) > 0) = 1;
  MlpSpec spec;
  spec.layer_widths = {3, 9, 2};
  spec.epochs = 200;
  spec.batch_size = 40;
  spec.learning_rate = 0.05;
  TrainingTrace trace;
  train_sgd(Mlp::initialized(spec.layer_widths, spec.activation, {}), inputs,
            targets, Loss::kSoftmaxCrossEntropy, spec, &trace);
  ASSERT_EQ(trace.epoch_loss.size(), 200u);
  for (size_t e = 1; e < trace.epoch_loss.size(); ++e) {
    EXPECT_LE(trace.epoch_loss[e], trace.epoch_loss[e - 1] + 1e-6) << e;
  }
  EXPECT_LT(trace.epoch_loss.back(), trace.epoch_loss.front());
}

TEST(Mlp, WriteReadIsBitExact) {
  const Mlp net = Mlp::initialized({3, 4, 2}, Activation::kRelu, RngSpec{8, 2});
  std::stringstream buffer;
  net.write(buffer);
  TokenReader reader(buffer, "buffer");
  EXPECT_EQ(Mlp::read(reader), net);
}

TEST(Mlp, RejectsBadSpecs) {
  MlpSpec spec;
  spec.layer_widths = {3};
  EXPECT_THROW(spec.validate(), InvalidArgumentError);
  spec.layer_widths = {3, 0, 2};
  EXPECT_THROW(spec.validate(), InvalidArgumentError);
  spec.layer_widths = {3, 2};
  spec.epochs = 0;
  EXPECT_THROW(spec.validate(), InvalidArgumentError);
}

TEST(Mlp, NonFiniteLossAborts) {
  Eigen::MatrixXd inputs = Eigen::MatrixXd::Constant(4, 2, 1e200);
  Eigen::MatrixXd targets = Eigen::MatrixXd::Constant(4, 1, 1e200);
  MlpSpec spec;
  spec.layer_widths = {2, 3, 1};
  spec.learning_rate = 1.0;
  EXPECT_THROW(train_sgd(Mlp::initialized(spec.layer_widths, spec.activation, {}),
                         inputs, targets, Loss::kSquaredError, spec),
               NumericalError);
}

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs make_blobs(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.5);
  Blobs b{Eigen::MatrixXd(n, 2), {}};
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const double c = label ? 2.0 : -2.0;
    b.x(i, 0) = c + noise(rng);
    b.x(i, 1) = c + noise(rng);
    b.y.push_back(label);
  }
  return b;
}

TEST(TrainMlp, SeparableBlobs) {
  const Blobs train = make_blobs(200, 1);
  const Blobs test = make_blobs(200, 2);
  MlpSpec spec = default_classifier_spec(2, 2);
  spec.seed = RngSpec{4, 2};
  const auto model = train_mlp(spec, train.x, train.y);
  const std::vector<int> predicted = argmax_rows(model->predict_batch(test.x));
  int correct = 0;
  for (size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test.y[i];
  EXPECT_GE(correct / 200.0, 0.95);
}

TEST(TrainMlp, ZeroLearningRateKeepsInitialWeights) {
  const Blobs train = make_blobs(30, 1);
  MlpSpec spec = default_classifier_spec(2, 2);
  spec.epochs = 1;
  spec.learning_rate = 0.0;
  spec.seed = RngSpec{6, 2};
  const auto model = train_mlp(spec, train.x, train.y);
  EXPECT_EQ(model->network(),
            Mlp::initialized(spec.layer_widths, spec.activation, spec.seed));
}

TEST(TrainMlp, Deterministic) {
  const Blobs train = make_blobs(60, 3);
  MlpSpec spec = default_classifier_spec(2, 2);
  spec.seed = RngSpec{5, 2};
  EXPECT_EQ(train_mlp(spec, train.x, train.y)->network(),
            train_mlp(spec, train.x, train.y)->network());
}

TEST(TrainMlp, Errors) {
  MlpSpec spec = default_classifier_spec(2, 2);
  EXPECT_THROW(train_mlp(spec, Eigen::MatrixXd(0, 2), std::vector<int>{}),
               InvalidArgumentError);
  const Blobs train = make_blobs(4, 1);
  EXPECT_THROW(train_mlp(spec, train.x, std::vector<int>{0, 1, 2, 0}),
               InvalidArgumentError);
}

TEST(TrainMlp, SavedModelReproducesTrainingTimePredictions) {
  const Blobs train = make_blobs(100, 7);
  const Blobs held_out = make_blobs(50, 8);
  ModelBundle bundle;
  bundle.standardizer = Standardizer::fit(train.x);
  bundle.feature_names = {"u", "v"};
  bundle.label_values = {0, 1};
  MlpSpec spec = default_classifier_spec(2, 2);
  spec.seed = RngSpec{1, 2};
  bundle.classifier = train_mlp(spec, bundle.standardizer.transform(train.x), train.y);
  const Eigen::MatrixXd z = bundle.standardizer.transform(held_out.x);
  const std::vector<int> cached = argmax_rows(bundle.classifier->predict_batch(z));

  const std::string dir = testing::scratch_dir("model");
  save_model(bundle, dir + "/m.txt");
  const ModelBundle loaded = load_model(dir + "/m.txt");
  EXPECT_EQ(loaded.classifier->network(), bundle.classifier->network());
  EXPECT_EQ(loaded.standardizer.mean, bundle.standardizer.mean);
  EXPECT_EQ(loaded.standardizer.scale, bundle.standardizer.scale);
  EXPECT_EQ(loaded.feature_names, bundle.feature_names);
  CountedModel counted(loaded.classifier);
  for (int r = 0; r < 50; ++r) {
    EXPECT_EQ(predicted_class(counted, z.row(r).transpose()).index, cached[r]);
  }
  save_model(loaded, dir + "/m2.txt");
  EXPECT_EQ(sha256_file(dir + "/m.txt"), sha256_file(dir + "/m2.txt"));
}

TEST(LoadModel, Diagnostics) {
  const std::string dir = testing::scratch_dir("model_bad");
  EXPECT_THROW(load_model(dir + "/absent.txt"), MissingArtifactError);
  std::ofstream(dir + "/bad.txt") << "not-a-model 1\n";
  EXPECT_THROW(load_model(dir + "/bad.txt"), InvalidArgumentError);
}

TEST(Synthetic, ConstantIgnoresInput) {
  SyntheticModelSpec spec;
  spec.kind = SyntheticModelSpec::Kind::kConstant;
  spec.num_features = 3;
  spec.num_classes = 3;
  spec.probabilities = Eigen::Vector3d(0.2, 0.3, 0.5);
  CountedModel model(make_synthetic(spec));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd p = model.evaluate(testing::random_vector(3, rng, 5.0));
    EXPECT_TRUE(p.isApprox(spec.probabilities, 1e-15));
  }
}

TEST(Synthetic, LinearIsMonotone) {
  SyntheticModelSpec spec;
  spec.num_features = 2;
  spec.linear = Eigen::MatrixXd::Zero(2, 2);
  spec.linear(1, 0) = 1.0;
  spec.bias = Eigen::VectorXd::Zero(2);
  CountedModel model(make_synthetic(spec));
  double previous = -1.0;
  for (double x1 = -3.0; x1 <= 3.0; x1 += 0.5) {
    const double p = model.evaluate(Eigen::Vector2d(x1, 0.7))(1);
    EXPECT_GT(p, previous);
    previous = p;
  }
}

TEST(Synthetic, PairwiseMatchesClosedForm) {
  std::mt19937_64 rng(2);
  SyntheticModelSpec spec;
  spec.kind = SyntheticModelSpec::Kind::kLinearPlusPairwise;
  spec.num_features = 3;
  spec.num_classes = 2;
  spec.bias = Eigen::Vector2d(0.1, -0.2);
  spec.linear = random_matrix(2, 3, rng);
  spec.pairwise = {random_matrix(3, 3, rng), random_matrix(3, 3, rng)};
  CountedModel model(make_synthetic(spec));
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd x = testing::random_vector(3, rng);
    double s[2];
    for (int c = 0; c < 2; ++c) {
      s[c] = spec.bias(c);
      for (int i = 0; i < 3; ++i) s[c] += spec.linear(c, i) * x(i);
      for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) s[c] += spec.pairwise[c](i, j) * x(i) * x(j);
      }
    }
    const double p1 = 1.0 / (1.0 + std::exp(s[0] - s[1]));
    EXPECT_NEAR(model.evaluate(x)(1), p1, 1e-12);
  }
}

TEST(Synthetic, DimensionMismatch) {
  SyntheticModelSpec spec;
  spec.num_features = 3;
  spec.linear = Eigen::MatrixXd::Zero(2, 2);
  spec.bias = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(make_synthetic(spec), InvalidArgumentError);
}

TEST(SoftmaxRows, StableAndNormalized) {
  Eigen::MatrixXd s(2, 3);
  s << 1000, 1001, 1002, -5, 0, 5;
  const Eigen::MatrixXd p = softmax_rows(s);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.row(0).sum(), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 2) / p(0, 1), std::exp(1.0), 1e-12);
}

}  // namespace
}  // namespace selex
