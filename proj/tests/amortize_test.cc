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

#include <sstream>

#include "selex/amortize.h"
#include "selex/attribution.h"
#include "selex/evalsuite.h"
#include "selex/text_format.h"
#include "selex/uncertainty.h"
#include "test_util.h"

namespace selex {
namespace {

struct Problem {
  Eigen::MatrixXd x;
  std::vector<int> y;
  Eigen::MatrixXd targets;
};

Problem svs_problem(int rows, int d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  CountedModel model(testing::random_mlp(d, 2, seed));
  Problem p;
  p.x = testing::random_matrix(rows, d, rng);
  p.y = argmax_rows(model.evaluate_batch(p.x));
  p.targets = run_mc_rows(McMethod::parse("svs-12"), model, p.x, p.y,
                          MaskingSpec::zeros(d), RngSpec{seed, 3});
  return p;
}

double mean_mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

TEST(AmortizerInputs, FeaturesThenOneHot) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 2, 3, 4;
  const std::vector<int> y = {2, 0};
  const Eigen::MatrixXd in = amortizer_inputs(x, y, 3);
  Eigen::MatrixXd expected(2, 5);
  expected << 1, 2, 0, 0, 1, 3, 4, 1, 0, 0;
  EXPECT_EQ(in, expected);
  const std::vector<int> bad = {3, 0};
  EXPECT_THROW(amortizer_inputs(x, bad, 3), InvalidArgumentError);
}

TEST(TrainAmortized, ZeroTargetsGiveZeroOutputs) {
  Problem p = svs_problem(30, 3, 1);
  p.targets.setZero();
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 2000;
  const AmortizedExplainer a =
      train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{1, 4});
  EXPECT_LE(mean_mse(a.explain_batch(p.x, p.y), p.targets), 1e-4);
}

TEST(TrainAmortized, InterpolatesSmallTrainingSet) {
  const Problem p = svs_problem(20, 4, 2);
  MlpSpec spec = default_amortizer_spec(4, 2);
  spec.layer_widths = {6, 40, 4};
  spec.epochs = 4000;
  spec.batch_size = 20;
  spec.learning_rate = 0.1;
  const AmortizedExplainer a =
      train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{2, 4});
  EXPECT_LE(mean_mse(a.explain_batch(p.x, p.y), p.targets), 1e-3);
}

TEST(TrainAmortized, DeterministicAndMetadata) {
  const Problem p = svs_problem(40, 3, 3);
  AmortizerMeta meta;
  meta.target_method = "svs-12";
  meta.target_seed = 3;
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 20;
  const auto a = train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{3, 4}, meta);
  const auto b = train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{3, 4}, meta);
  EXPECT_EQ(a.network(), b.network());
  EXPECT_EQ(a.meta().target_method, "svs-12");
  EXPECT_EQ(a.meta().training_rng, (RngSpec{3, 4}));
}

TEST(TrainAmortized, LossDecreases) {
  const Problem p = svs_problem(64, 3, 4);
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 100;
  spec.batch_size = 64;
  spec.learning_rate = 0.02;
  TrainingTrace trace;
  train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{4, 4}, {}, &trace);
  for (size_t e = 1; e < trace.epoch_loss.size(); ++e) {
    EXPECT_LE(trace.epoch_loss[e], trace.epoch_loss[e - 1] + 1e-6);
  }
}

TEST(TrainAmortized, MissingTargets) {
  const Problem p = svs_problem(10, 3, 5);
  EXPECT_THROW(train_amortized(p.x, p.y, p.targets.topRows(9), 2,
                               default_amortizer_spec(3, 2), {}),
               MissingArtifactError);
}

TEST(AmortizedExplain, NeverTouchesTheModel) {
  const Problem p = svs_problem(30, 3, 6);
  CountedModel model(testing::random_mlp(3, 2, 6));
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 5;
  const auto a = train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{6, 4});
  for (int r = 0; r < 30; ++r) {
    const AttributionVector out = a.explain(p.x.row(r).transpose(), {p.y[r]});
    EXPECT_EQ(out.inference_cost, 0);
    EXPECT_EQ(out.scores.size(), 3);
  }
  EXPECT_EQ(model.evaluations(), 0);
}

TEST(AmortizedExplain, ZeroNetworkGivesZero) {
  const AmortizedExplainer a(Mlp({5, 9, 3}, Activation::kTanh), 2, {});
  EXPECT_TRUE(a.explain(Eigen::Vector3d(1, 2, 3), {1}).scores.isZero(0.0));
  EXPECT_THROW(a.explain(Eigen::Vector2d(1, 2), {1}), InvalidArgumentError);
}

TEST(AmortizedExplain, TrainingRowsStayNearTheirTargets) {
  const Problem p = svs_problem(100, 4, 7);
  const auto a = train_amortized(p.x, p.y, p.targets, 2, default_amortizer_spec(4, 2),
                                 RngSpec{7, 4});
  const std::vector<double> rows = row_mse(a.explain_batch(p.x, p.y), p.targets);
  double mean = 0.0;
  for (double v : rows) mean += v / rows.size();
  for (double v : rows) EXPECT_LE(v, rows.size() * mean);
  const AttributionVector single = a.explain(p.x.row(0).transpose(), {p.y[0]});
  EXPECT_NEAR(mse(single.scores, p.targets.row(0).transpose()), rows[0], 1e-15);
}

TEST(AmortizedExplainer, WriteReadRoundTrip) {
  const Problem p = svs_problem(20, 3, 8);
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 3;
  AmortizerMeta meta{"svs-4", 77, {}};
  const auto a = train_amortized(p.x, p.y, p.targets, 2, spec, RngSpec{8, 9}, meta);
  const std::string path = testing::scratch_dir("amortizer") + "/a.txt";
  save_amortizer(a, path);
  const AmortizedExplainer b = load_amortizer(path);
  EXPECT_EQ(b.network(), a.network());
  EXPECT_EQ(b.meta(), a.meta());
  EXPECT_EQ(b.num_classes(), 2);
  save_amortizer(b, path + ".2");
  EXPECT_EQ(sha256_file(path), sha256_file(path + ".2"));
  EXPECT_THROW(load_amortizer(path + ".none"), MissingArtifactError);
}

TEST(TrainEnsemble, SizesStreamsAndDiversity) {
  const Problem p = svs_problem(40, 3, 9);
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 3;
  spec.seed = RngSpec{9, 0};
  const ExplainerEnsemble e20 = train_ensemble(p.x, p.y, p.targets, 2, spec, 20);
  ASSERT_EQ(e20.size(), 20);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(e20.members[i].meta().training_rng, (RngSpec{9, uint64_t(i + 1)}));
    EXPECT_EQ(e20.members[i].network().widths(), e20.members[0].network().widths());
  }
  spec.epochs = 20;
  const ExplainerEnsemble e5 = train_ensemble(p.x, p.y, p.targets, 2, spec, 5);
  double max_distance = 0.0;
  const Eigen::VectorXd x = p.x.row(0).transpose();
  const Eigen::MatrixXd out = e5.outputs(x, {p.y[0]});
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      max_distance = std::max(max_distance, (out.row(i) - out.row(j)).norm());
    }
  }
  EXPECT_GT(max_distance, 0.0);
  EXPECT_THROW(train_ensemble(p.x, p.y, p.targets, 2, spec, 1), InvalidArgumentError);
}

TEST(TrainEnsemble, IdenticalStreamsGiveZeroVariance) {
  const Problem p = svs_problem(30, 3, 10);
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 5;
  const std::vector<RngSpec> streams = {RngSpec{4, 4}, RngSpec{4, 4}};
  const ExplainerEnsemble e = train_ensemble(p.x, p.y, p.targets, 2, spec, streams);
  ASSERT_EQ(e.size(), 2);
  EXPECT_EQ(e.members[0].network(), e.members[1].network());
  for (int r = 0; r < 30; ++r) {
    EXPECT_EQ(deep_uncertainty(e, p.x.row(r).transpose(), {p.y[r]}), 0.0);
  }
}

TEST(ExplainerEnsemble, WriteReadRoundTrip) {
  const Problem p = svs_problem(20, 3, 11);
  MlpSpec spec = default_amortizer_spec(3, 2);
  spec.epochs = 2;
  const ExplainerEnsemble e = train_ensemble(p.x, p.y, p.targets, 2, spec, 3);
  std::stringstream buffer;
  e.write(buffer);
  TokenReader reader(buffer, "buffer");
  const ExplainerEnsemble back = ExplainerEnsemble::read(reader);
  ASSERT_EQ(back.size(), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back.members[i].network(), e.members[i].network());
  }
}

}  // namespace
}  // namespace selex
