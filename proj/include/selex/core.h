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

// Domain types shared by every selex module: attribution vectors, the
// black-box classifier contract with inference accounting, deterministic
// random streams and dataset splitting.

#ifndef SELEX_CORE_H_
#define SELEX_CORE_H_

#include <atomic>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace selex {

// Error hierarchy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, malformed configuration or schema violations.
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// A file or artifact that a stage depends on does not exist or does not
// match its recorded digest.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses, singular systems and other numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using FeatureVector = Eigen::VectorXd;

struct TargetClass {
  int index = 0;

  friend bool operator==(TargetClass, TargetClass) = default;
};

// Per-feature importance scores for one (input, target class) pair.
struct AttributionVector {
  Eigen::VectorXd scores;
  std::string input_id;
  TargetClass target;
  // Number of black-box evaluations consumed to produce `scores`.
  int64_t inference_cost = 0;
};

// Seed plus stream identifier. Identical specs produce identical draws.
struct RngSpec {
  uint64_t seed = 0;
  uint64_t stream = 0;

  // Independent sub-stream, e.g. one per example.
  RngSpec child(uint64_t index) const;

  std::mt19937_64 engine() const;

  friend bool operator==(const RngSpec&, const RngSpec&) = default;
};

// Probabilistic classifier over standardized features. Implementations must
// be immutable after construction so that evaluation is thread-safe.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int num_features() const = 0;
  virtual int num_classes() const = 0;

  // One row per input; returns one probability row per input.
  virtual Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const = 0;
};

// Wraps a classifier and tallies every single-row evaluation.
class CountedModel {
 public:
  explicit CountedModel(std::shared_ptr<const Classifier> inner);

  CountedModel(const CountedModel&) = delete;
  CountedModel& operator=(const CountedModel&) = delete;

  int num_features() const { return inner_->num_features(); }
  int num_classes() const { return inner_->num_classes(); }

  // Costs one inference.
  Eigen::VectorXd evaluate(const FeatureVector& x) const;

  // Costs `inputs.rows()` inferences.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& inputs) const;

  int64_t evaluations() const { return count_.load(std::memory_order_relaxed); }
  void reset_counter() { count_.store(0); }

  const Classifier& inner() const { return *inner_; }
  std::shared_ptr<const Classifier> shared_inner() const { return inner_; }

 private:
  std::shared_ptr<const Classifier> inner_;
  mutable std::atomic<int64_t> count_{0};
};

// argmax of h(x); costs one inference.
TargetClass predicted_class(const CountedModel& model, const FeatureVector& x);

// argmax per row of a probability matrix.
std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities);

// Tabular data: one row per example, integer class labels in [0, K).
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  // Original label values; class index i corresponds to label_values[i].
  std::vector<double> label_values;

  int num_rows() const { return static_cast<int>(features.rows()); }
  int num_features() const { return static_cast<int>(features.cols()); }
  int num_classes() const { return static_cast<int>(label_values.size()); }

  Dataset subset(std::span<const int> rows) const;
};

// Reads a CSV file with a header row. Every column must be numeric; the
// column named `label_column` holds the class labels. Distinct label values
// are mapped to class indices in increasing order.
Dataset load_csv(const std::string& path, const std::string& label_column);

void write_csv(const Dataset& dataset, const std::string& label_column,
               const std::string& path);

struct SplitFractions {
  double train = 0.5;
  double cal = 0.25;
  double test = 0.25;
};

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> cal;
  std::vector<int> test;
};

// Shuffles [0, num_rows) and partitions it. Calibration and test receive
// floor(f * N) rows; the remainder goes to train.
DatasetSplit split_dataset(int num_rows, const SplitFractions& fractions,
                           RngSpec rng);

// z-score statistics fitted on the training split.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& rows);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const;
};

}  // namespace selex

#endif  // SELEX_CORE_H_
