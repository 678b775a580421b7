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

#include <fstream>
#include <set>
#include <thread>

#include "selex/core.h"
#include "test_util.h"

namespace selex {
namespace {

class UniformModel : public Classifier {
 public:
  UniformModel(int d, int k) : d_(d), k_(k) {}
  int num_features() const override { return d_; }
  int num_classes() const override { return k_; }
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const override {
    return Eigen::MatrixXd::Constant(inputs.rows(), k_, 1.0 / k_);
  }

 private:
  int d_;
  int k_;
};

void expect_partition(const DatasetSplit& s, int n) {
  std::vector<int> all;
  all.insert(all.end(), s.train.begin(), s.train.end());
  all.insert(all.end(), s.cal.begin(), s.cal.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(static_cast<int>(all.size()), n);
  for (int i = 0; i < n; ++i) EXPECT_EQ(all[i], i);
}

TEST(SplitDataset, HalfQuarterQuarterSizes) {
  const DatasetSplit s = split_dataset(4000, {0.5, 0.25, 0.25}, RngSpec{1, 1});
  EXPECT_EQ(s.train.size(), 2000u);
  EXPECT_EQ(s.cal.size(), 1000u);
  EXPECT_EQ(s.test.size(), 1000u);
  expect_partition(s, 4000);
}

TEST(SplitDataset, AllTrain) {
  const DatasetSplit s = split_dataset(4, {1, 0, 0}, RngSpec{1, 1});
  EXPECT_EQ(s.train.size(), 4u);
  EXPECT_TRUE(s.cal.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(SplitDataset, RepeatedCallsAgree) {
  const auto a = split_dataset(10, {0.5, 0.3, 0.2}, RngSpec{9, 1});
  const auto b = split_dataset(10, {0.5, 0.3, 0.2}, RngSpec{9, 1});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.cal, b.cal);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.cal.size(), 3u);
  EXPECT_EQ(a.test.size(), 2u);
}

TEST(SplitDataset, RemainderGoesToTrain) {
  const auto s = split_dataset(11, {0.3, 0.3, 0.4}, RngSpec{2, 1});
  EXPECT_EQ(s.cal.size(), 3u);
  EXPECT_EQ(s.test.size(), 4u);
  EXPECT_EQ(s.train.size(), 4u);
}

TEST(SplitDataset, PartitionPropertyRandomized) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 300);
  for (int trial = 0; trial < 200; ++trial) {
    double a = u(rng), b = u(rng), c = u(rng);
    const double t = a + b + c;
    SplitFractions f{a / t, b / t, 1.0 - a / t - b / t};
    const int n = size(rng);
    expect_partition(split_dataset(n, f, RngSpec{static_cast<uint64_t>(trial), 1}), n);
  }
}

TEST(SplitDataset, RejectsBadInput) {
  EXPECT_THROW(split_dataset(0, {0.5, 0.25, 0.25}, {}), InvalidArgumentError);
  EXPECT_THROW(split_dataset(10, {0.5, 0.25, 0.3}, {}), InvalidArgumentError);
  EXPECT_THROW(split_dataset(10, {1.2, -0.1, -0.1}, {}), InvalidArgumentError);
}

TEST(CountedModel, UniformDummyModel) {
  CountedModel model(std::make_shared<UniformModel>(3, 4));
  const Eigen::VectorXd p = model.evaluate(Eigen::VectorXd::Constant(3, 7.0));
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(p(c), 0.25);
}

TEST(CountedModel, CountsSinglesAndBatches) {
  CountedModel model(testing::random_mlp(3, 2, 1));
  model.evaluate(Eigen::VectorXd::Zero(3));
  model.evaluate(Eigen::VectorXd::Ones(3));
  EXPECT_EQ(model.evaluations(), 2);
  model.evaluate_batch(Eigen::MatrixXd::Zero(17, 3));
  EXPECT_EQ(model.evaluations(), 19);
  model.reset_counter();
  EXPECT_EQ(model.evaluations(), 0);
}

TEST(CountedModel, ConcurrentCountIsExact) {
  CountedModel model(testing::random_mlp(2, 2, 3));
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&model] {
      for (int i = 0; i < 250; ++i) model.evaluate(Eigen::VectorXd::Zero(2));
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(model.evaluations(), 1000);
}

TEST(CountedModel, DimensionMismatch) {
  CountedModel model(testing::random_mlp(3, 2, 1));
  EXPECT_THROW(model.evaluate(Eigen::VectorXd::Zero(4)), InvalidArgumentError);
  EXPECT_EQ(model.evaluations(), 0);
}

TEST(CountedModel, ProbabilitiesAreValid) {
  std::mt19937_64 rng(11);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    CountedModel model(testing::random_mlp(5, 3, seed));
    const Eigen::MatrixXd p =
        model.evaluate_batch(testing::random_matrix(50, 5, rng, 3.0));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
      EXPECT_GE(p.row(r).minCoeff(), -1e-9);
    }
  }
}

TEST(Rng, IdenticalSpecsIdenticalDraws) {
  auto a = RngSpec{42, 3}.engine();
  auto b = RngSpec{42, 3}.engine();
  auto c = RngSpec{42, 4}.engine();
  const auto xa = a(), xb = b(), xc = c();
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  const RngSpec base{1, 2};
  EXPECT_EQ(base.child(5), base.child(5));
  EXPECT_NE(base.child(5).engine()(), base.child(6).engine()());
}

TEST(Csv, RoundTripAndLabelMapping) {
  const std::string dir = testing::scratch_dir("csv");
  const std::string path = dir + "/d.csv";
  {
    std::ofstream out(path);
    out << "a,target,b\n1.5,7,2\n-1,3,0.25\n0,7,1e-3\n";
  }
  const Dataset d = load_csv(path, "target");
  ASSERT_EQ(d.num_rows(), 3);
  ASSERT_EQ(d.num_features(), 2);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(d.num_classes(), 2);
  EXPECT_DOUBLE_EQ(d.features(2, 1), 1e-3);
  write_csv(d, "target", dir + "/e.csv");
  const Dataset e = load_csv(dir + "/e.csv", "target");
  EXPECT_EQ(e.features, d.features);
  EXPECT_EQ(e.labels, d.labels);
}

TEST(Csv, DiagnosticsNameLineAndColumn) {
  const std::string dir = testing::scratch_dir("csv_bad");
  {
    std::ofstream out(dir + "/bad.csv");
    out << "a,label\n1,0\nx,1\n";
  }
  try {
    load_csv(dir + "/bad.csv", "label");
    FAIL();
  } catch (const InvalidArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  try {
    load_csv(dir + "/bad.csv", "missing");
    FAIL();
  } catch (const InvalidArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
  EXPECT_THROW(load_csv(dir + "/none.csv", "label"), MissingArtifactError);
}

TEST(Standardizer, ZeroMeanUnitScale) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd rows = testing::random_matrix(200, 3, rng, 2.0);
  rows.col(1).array() += 5.0;
  rows.col(2).setConstant(1.0);
  const Standardizer s = Standardizer::fit(rows);
  const Eigen::MatrixXd z = s.transform(rows);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-12);
  EXPECT_NEAR((z.col(0).array().square().mean()), 1.0, 1e-9);
  EXPECT_TRUE(z.col(2).isZero());
}

}  // namespace
}  // namespace selex
