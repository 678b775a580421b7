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

// Shared fixtures for the unit tests.

#ifndef SELEX_TESTS_TEST_UTIL_H_
#define SELEX_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <filesystem>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Dense>

#include "selex/blackbox.h"
#include "selex/core.h"

namespace selex::testing {

inline std::shared_ptr<const MlpClassifier> random_mlp(int d, int classes,
                                                       uint64_t seed,
                                                       int hidden = 0) {
  if (hidden == 0) hidden = 3 * d;
  Mlp net = Mlp::initialized({d, hidden, classes}, Activation::kTanh,
                             RngSpec{seed, 77});
  // Larger biases keep the masked evaluations away from a flat region.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (auto& layer : net.mutable_layers()) {
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i) {
      layer.biases(i) = normal(rng);
    }
  }
  return std::make_shared<MlpClassifier>(std::move(net));
}

inline Eigen::VectorXd random_vector(int d, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = normal(rng);
  return v;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

// Shapley values as the average marginal contribution over all d!
// orderings, evaluated directly on the classifier.
inline Eigen::VectorXd permutation_shap(const Classifier& model,
                                        const Eigen::VectorXd& x, int y,
                                        const Eigen::VectorXd& baseline) {
  const int d = static_cast<int>(x.size());
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
  long count = 0;
  do {
    Eigen::MatrixXd path(d + 1, d);
    Eigen::VectorXd current = baseline;
    path.row(0) = current.transpose();
    for (int k = 0; k < d; ++k) {
      current(order[k]) = x(order[k]);
      path.row(k + 1) = current.transpose();
    }
    const Eigen::MatrixXd p = model.predict_batch(path);
    for (int k = 0; k < d; ++k) phi(order[k]) += p(k + 1, y) - p(k, y);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / static_cast<double>(count);
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("selex_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace selex::testing

#endif  // SELEX_TESTS_TEST_UTIL_H_
