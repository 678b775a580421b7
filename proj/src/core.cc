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

#include "selex/core.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "selex/text_format.h"

namespace selex {
namespace {

constexpr double kProbabilitySumTolerance = 1e-6;
constexpr double kNegativeProbabilityTolerance = 1e-9;

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\"");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\"");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

void check_probabilities(const Eigen::MatrixXd& probabilities) {
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    const double sum = probabilities.row(r).sum();
    if (!std::isfinite(sum) ||
        std::abs(sum - 1.0) > kProbabilitySumTolerance ||
        probabilities.row(r).minCoeff() < -kNegativeProbabilityTolerance) {
      throw NumericalError("classifier returned an invalid probability vector");
    }
  }
}

}  // namespace

RngSpec RngSpec::child(uint64_t index) const {
  return RngSpec{seed, splitmix64(stream ^ splitmix64(index + 1))};
}

std::mt19937_64 RngSpec::engine() const {
  std::seed_seq sequence{static_cast<uint32_t>(seed),
                         static_cast<uint32_t>(seed >> 32),
                         static_cast<uint32_t>(stream),
                         static_cast<uint32_t>(stream >> 32)};
  return std::mt19937_64(sequence);
}

CountedModel::CountedModel(std::shared_ptr<const Classifier> inner)
    : inner_(std::move(inner)) {
  if (inner_ == nullptr) throw InvalidArgumentError("null classifier");
}

Eigen::VectorXd CountedModel::evaluate(const FeatureVector& x) const {
  if (x.size() != num_features()) {
    throw InvalidArgumentError("feature vector has " +
                               std::to_string(x.size()) + " entries, model "
                               "expects " + std::to_string(num_features()));
  }
  return evaluate_batch(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd CountedModel::evaluate_batch(
    const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != num_features()) {
    throw InvalidArgumentError("input rows have " +
                               std::to_string(inputs.cols()) +
                               " columns, model expects " +
                               std::to_string(num_features()));
  }
  count_.fetch_add(inputs.rows(), std::memory_order_relaxed);
  Eigen::MatrixXd probabilities = inner_->predict_batch(inputs);
  check_probabilities(probabilities);
  return probabilities;
}

TargetClass predicted_class(const CountedModel& model, const FeatureVector& x) {
  Eigen::Index best = 0;
  model.evaluate(x).maxCoeff(&best);
  return TargetClass{static_cast<int>(best)};
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& probabilities) {
  std::vector<int> result(probabilities.rows());
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    Eigen::Index best = 0;
    probabilities.row(r).maxCoeff(&best);
    result[r] = static_cast<int>(best);
  }
  return result;
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      features.cols());
  out.labels.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[rows[i]]);
  }
  out.feature_names = feature_names;
  out.label_values = label_values;
  return out;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidArgumentError(path + ": missing header row");
  }
  const std::vector<std::string> header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw InvalidArgumentError(path + ": label_column '" + label_column +
                               "' not found in header");
  }
  const size_t label_index = label_it - header.begin();

  Dataset dataset;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c != label_index) dataset.feature_names.push_back(header[c]);
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> raw_labels;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw InvalidArgumentError(path + ":" + std::to_string(line_number) +
                                 ": expected " +
                                 std::to_string(header.size()) +
                                 " columns, found " +
                                 std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (size_t c = 0; c < cells.size(); ++c) {
      double value = 0.0;
      if (!parse_real(cells[c], &value) || !std::isfinite(value)) {
        throw InvalidArgumentError(path + ":" + std::to_string(line_number) +
                                   ": non-numeric value '" + cells[c] +
                                   "' in column '" + header[c] + "'");
      }
      if (c == label_index) {
        raw_labels.push_back(value);
      } else {
        row.push_back(value);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgumentError(path + ": dataset is empty");

  std::map<double, int> classes;
  for (double v : raw_labels) classes.emplace(v, 0);
  int next = 0;
  for (auto& [value, index] : classes) {
    index = next++;
    dataset.label_values.push_back(value);
  }
  dataset.features.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(header.size() - 1));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      dataset.features(static_cast<Eigen::Index>(r),
                       static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    dataset.labels.push_back(classes.at(raw_labels[r]));
  }
  return dataset;
}

void write_csv(const Dataset& dataset, const std::string& label_column,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgumentError("cannot write " + path);
  for (const auto& name : dataset.feature_names) out << name << ',';
  out << label_column << '\n';
  for (int r = 0; r < dataset.num_rows(); ++r) {
    for (int c = 0; c < dataset.num_features(); ++c) {
      out << format_real_decimal(dataset.features(r, c)) << ',';
    }
    out << format_real_decimal(dataset.label_values[dataset.labels[r]])
        << '\n';
  }
}

DatasetSplit split_dataset(int num_rows, const SplitFractions& fractions,
                           RngSpec rng) {
  if (num_rows <= 0) throw InvalidArgumentError("cannot split an empty dataset");
  const double sum = fractions.train + fractions.cal + fractions.test;
  if (fractions.train < 0 || fractions.cal < 0 || fractions.test < 0 ||
      std::abs(sum - 1.0) > 1e-9) {
    throw InvalidArgumentError("split fractions must be nonnegative and sum "
                               "to 1");
  }
  std::vector<int> order(num_rows);
  std::iota(order.begin(), order.end(), 0);
  auto engine = rng.engine();
  std::shuffle(order.begin(), order.end(), engine);

  const auto n_cal = static_cast<int>(std::floor(fractions.cal * num_rows));
  const auto n_test = static_cast<int>(std::floor(fractions.test * num_rows));
  const int n_train = num_rows - n_cal - n_test;

  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.cal.assign(order.begin() + n_train, order.begin() + n_train + n_cal);
  split.test.assign(order.begin() + n_train + n_cal, order.end());
  return split;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw InvalidArgumentError("no rows to standardize");
  Standardizer s;
  s.mean = rows.colwise().mean().transpose();
  s.scale.resize(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double var =
        (rows.col(c).array() - s.mean(c)).square().sum() /
        static_cast<double>(rows.rows());
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) {
    throw InvalidArgumentError("standardizer dimension mismatch");
  }
  return (rows.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

}  // namespace selex
