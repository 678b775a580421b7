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

#include "selex/attribution.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace selex {
namespace {

constexpr int64_t kExactChunkRows = 1 << 14;

void check_inputs(const CountedModel& model, const FeatureVector& x,
                  TargetClass y, const MaskingSpec& mask) {
  const int d = model.num_features();
  if (x.size() != d) {
    throw InvalidArgumentError("feature vector has " +
                               std::to_string(x.size()) +
                               " entries, model expects " + std::to_string(d));
  }
  if (mask.baseline.size() != d || !mask.baseline.allFinite()) {
    throw InvalidArgumentError("baseline must have d finite entries");
  }
  if (y.index < 0 || y.index >= model.num_classes()) {
    throw InvalidArgumentError("target class " + std::to_string(y.index) +
                               " out of range");
  }
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return result;
}

// Writes the coalition encoded by `bits` into `row`.
void fill_masked_row(const FeatureVector& x, const MaskingSpec& mask,
                     uint64_t bits, Eigen::MatrixXd& batch, Eigen::Index row) {
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    batch(row, j) = (bits >> j) & 1U ? x(j) : mask.baseline(j);
  }
}

AttributionVector make_attribution(Eigen::VectorXd scores, TargetClass y,
                                   int64_t cost) {
  AttributionVector out;
  out.scores = std::move(scores);
  out.target = y;
  out.inference_cost = cost;
  return out;
}

// h_y for every coalition bitmask in [0, 2^d).
std::vector<double> all_coalition_values(const CountedModel& model,
                                         const FeatureVector& x, TargetClass y,
                                         const MaskingSpec& mask) {
  const int d = model.num_features();
  const int64_t total = int64_t{1} << d;
  std::vector<double> values(total);
  for (int64_t start = 0; start < total; start += kExactChunkRows) {
    const int64_t rows = std::min(kExactChunkRows, total - start);
    Eigen::MatrixXd batch(rows, d);
    for (int64_t r = 0; r < rows; ++r) {
      fill_masked_row(x, mask, static_cast<uint64_t>(start + r), batch, r);
    }
    const Eigen::MatrixXd p = model.evaluate_batch(batch);
    for (int64_t r = 0; r < rows; ++r) values[start + r] = p(r, y.index);
  }
  return values;
}

}  // namespace

MaskingSpec MaskingSpec::zeros(int num_features) {
  return MaskingSpec{Eigen::VectorXd::Zero(num_features)};
}

FeatureVector masked_input(const FeatureVector& x, std::span<const int> subset,
                           const MaskingSpec& mask) {
  if (mask.baseline.size() != x.size()) {
    throw InvalidArgumentError("baseline dimension mismatch");
  }
  FeatureVector out = mask.baseline;
  for (int j : subset) {
    if (j < 0 || j >= x.size()) {
      throw InvalidArgumentError("feature index " + std::to_string(j) +
                                 " out of range");
    }
    out(j) = x(j);
  }
  return out;
}

double masked_eval(const CountedModel& model, const FeatureVector& x,
                   std::span<const int> subset, TargetClass y,
                   const MaskingSpec& mask) {
  check_inputs(model, x, y, mask);
  return model.evaluate(masked_input(x, subset, mask))(y.index);
}

AttributionVector exact_shap(const CountedModel& model, const FeatureVector& x,
                             TargetClass y, const MaskingSpec& mask,
                             const ExactShapOptions& options) {
  check_inputs(model, x, y, mask);
  const int d = model.num_features();
  if (d > kExactShapMaxFeatures && !options.allow_large) {
    throw InvalidArgumentError(
        "exact SHAP needs 2^" + std::to_string(d) +
        " inferences; d exceeds the guard of " +
        std::to_string(kExactShapMaxFeatures) + " without an explicit override");
  }
  if (d >= 63) throw InvalidArgumentError("exact SHAP cannot enumerate d >= 63");
  const std::vector<double> values = all_coalition_values(model, x, y, mask);

  // weight[s] = s! (d - 1 - s)! / d!
  std::vector<double> weight(d);
  for (int s = 0; s < d; ++s) weight[s] = 1.0 / (d * binomial(d - 1, s));

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
  const uint64_t total = uint64_t{1} << d;
  for (uint64_t bits = 0; bits < total; ++bits) {
    const int size = std::popcount(bits);
    for (int i = 0; i < d; ++i) {
      const uint64_t bit = uint64_t{1} << i;
      if (bits & bit) continue;
      phi(i) += weight[size] * (values[bits | bit] - values[bits]);
    }
  }
  return make_attribution(std::move(phi), y, static_cast<int64_t>(total));
}

AttributionVector svs(const CountedModel& model, const FeatureVector& x,
                      TargetClass y, int num_permutations,
                      const MaskingSpec& mask, RngSpec rng) {
  check_inputs(model, x, y, mask);
  if (num_permutations < 1) {
    throw InvalidArgumentError("SVS needs at least one permutation");
  }
  const int d = model.num_features();
  const int m = num_permutations;
  auto engine = rng.engine();

  std::vector<std::vector<int>> permutations(m, std::vector<int>(d));
  // Row 0 is the empty coalition; row 1 + p*d + j is the prefix of length
  // j + 1 of permutation p.
  Eigen::MatrixXd batch(int64_t{m} * d + 1, d);
  batch.row(0) = mask.baseline.transpose();
  for (int p = 0; p < m; ++p) {
    auto& order = permutations[p];
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), engine);
    Eigen::RowVectorXd current = mask.baseline.transpose();
    for (int j = 0; j < d; ++j) {
      current(order[j]) = x(order[j]);
      batch.row(1 + int64_t{p} * d + j) = current;
    }
  }
  const Eigen::MatrixXd p = model.evaluate_batch(batch);

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
  const double empty = p(0, y.index);
  for (int q = 0; q < m; ++q) {
    double previous = empty;
    for (int j = 0; j < d; ++j) {
      const double value = p(1 + int64_t{q} * d + j, y.index);
      phi(permutations[q][j]) += value - previous;
      previous = value;
    }
  }
  phi /= static_cast<double>(m);
  return make_attribution(std::move(phi), y, batch.rows());
}

double shapley_kernel_weight(int num_features, int subset_size) {
  const int d = num_features;
  const int s = subset_size;
  if (s <= 0 || s >= d) {
    throw InvalidArgumentError("the Shapley kernel is defined for proper, "
                               "nonempty coalitions only");
  }
  return (d - 1) / (binomial(d, s) * s * (d - s));
}

Eigen::VectorXd solve_kernel_regression(std::span<const SubsetSample> samples,
                                        std::span<const double> values,
                                        double empty_value, double full_value,
                                        int num_features) {
  const int d = num_features;
  const double delta = full_value - empty_value;
  if (d == 1) return Eigen::VectorXd::Constant(1, delta);
  if (samples.size() != values.size()) {
    throw InvalidArgumentError("one value per coalition sample is required");
  }
  // Eliminating phi_d through the efficiency constraint leaves d - 1 free
  // coefficients with design entries z_j - z_d.
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, d - 1);
  Eigen::VectorXd target(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    for (int j : samples[r].subset) z(j) = 1.0;
    const double root_weight = std::sqrt(samples[r].weight);
    design.row(r) =
        root_weight * (z.head(d - 1).array() - z(d - 1)).matrix().transpose();
    target(r) = root_weight * (values[r] - empty_value - z(d - 1) * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < d - 1) {
    throw RankDeficientError("Kernel SHAP design has rank " +
                             std::to_string(qr.rank()) + " < " +
                             std::to_string(d - 1) +
                             "; increase the number of samples");
  }
  Eigen::VectorXd phi(d);
  phi.head(d - 1) = qr.solve(target);
  phi(d - 1) = delta - phi.head(d - 1).sum();
  return phi;
}

AttributionVector kernel_shap(const CountedModel& model, const FeatureVector& x,
                              TargetClass y, int num_samples,
                              const MaskingSpec& mask, RngSpec rng) {
  check_inputs(model, x, y, mask);
  const int d = model.num_features();
  if (d < 2) throw InvalidArgumentError("Kernel SHAP needs d >= 2");
  if (num_samples < d + 2) {
    throw InvalidArgumentError("Kernel SHAP needs n >= d + 2 inferences");
  }
  auto engine = rng.engine();
  std::uniform_int_distribution<int> size_dist(1, d - 1);
  std::vector<int> features(d);
  std::iota(features.begin(), features.end(), 0);

  const int sampled = num_samples - 2;
  std::vector<SubsetSample> samples(sampled);
  Eigen::MatrixXd batch(num_samples, d);
  batch.row(0) = mask.baseline.transpose();
  batch.row(1) = x.transpose();
  for (int i = 0; i < sampled; ++i) {
    const int size = size_dist(engine);
    std::shuffle(features.begin(), features.end(), engine);
    std::vector<int> subset(features.begin(), features.begin() + size);
    std::sort(subset.begin(), subset.end());
    // p(S) = 1 / ((d - 1) C(d, s)).
    const double probability = 1.0 / ((d - 1) * binomial(d, size));
    samples[i].weight = shapley_kernel_weight(d, size) / probability;
    batch.row(2 + i) = masked_input(x, subset, mask).transpose();
    samples[i].subset = std::move(subset);
  }
  const Eigen::MatrixXd p = model.evaluate_batch(batch);
  std::vector<double> values(sampled);
  for (int i = 0; i < sampled; ++i) values[i] = p(2 + i, y.index);
  Eigen::VectorXd phi = solve_kernel_regression(
      samples, values, p(0, y.index), p(1, y.index), d);
  return make_attribution(std::move(phi), y, num_samples);
}

AttributionVector kernel_shap_full(const CountedModel& model,
                                   const FeatureVector& x, TargetClass y,
                                   const MaskingSpec& mask) {
  check_inputs(model, x, y, mask);
  const int d = model.num_features();
  if (d < 2 || d > kExactShapMaxFeatures) {
    throw InvalidArgumentError("full-enumeration Kernel SHAP needs 2 <= d <= " +
                               std::to_string(kExactShapMaxFeatures));
  }
  const std::vector<double> values = all_coalition_values(model, x, y, mask);
  const uint64_t full = (uint64_t{1} << d) - 1;
  std::vector<SubsetSample> samples;
  std::vector<double> sample_values;
  for (uint64_t bits = 1; bits < full; ++bits) {
    SubsetSample sample;
    for (int j = 0; j < d; ++j) {
      if ((bits >> j) & 1U) sample.subset.push_back(j);
    }
    sample.weight =
        shapley_kernel_weight(d, static_cast<int>(sample.subset.size()));
    samples.push_back(std::move(sample));
    sample_values.push_back(values[bits]);
  }
  Eigen::VectorXd phi = solve_kernel_regression(samples, sample_values,
                                                values[0], values[full], d);
  return make_attribution(std::move(phi), y,
                          static_cast<int64_t>(values.size()));
}

McMethod McMethod::parse(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) {
    throw InvalidArgumentError("unknown Monte Carlo method '" + name +
                               "' (expected svs-M or ks-N)");
  }
  const std::string kind = name.substr(0, dash);
  const std::string number = name.substr(dash + 1);
  McMethod method;
  if (kind == "svs") {
    method.kind = Kind::kSvs;
  } else if (kind == "ks") {
    method.kind = Kind::kKernelShap;
  } else {
    throw InvalidArgumentError("unknown Monte Carlo method '" + name + "'");
  }
  char* end = nullptr;
  const long value = std::strtol(number.c_str(), &end, 10);
  if (number.empty() || *end != '\0' || value <= 0 || value > 1'000'000) {
    throw InvalidArgumentError("invalid parameter in '" + name + "'");
  }
  method.param = static_cast<int>(value);
  return method;
}

std::string McMethod::name() const {
  return (kind == Kind::kSvs ? "svs-" : "ks-") + std::to_string(param);
}

int64_t McMethod::cost(int num_features) const {
  return kind == Kind::kSvs ? int64_t{param} * num_features + 1 : param;
}

AttributionVector run_mc(const McMethod& method, const CountedModel& model,
                         const FeatureVector& x, TargetClass y,
                         const MaskingSpec& mask, RngSpec rng) {
  switch (method.kind) {
    case McMethod::Kind::kSvs:
      return svs(model, x, y, method.param, mask, rng);
    case McMethod::Kind::kKernelShap:
      return kernel_shap(model, x, y, method.param, mask, rng);
  }
  throw InvalidArgumentError("unknown Monte Carlo method");
}

Eigen::MatrixXd run_mc_rows(const McMethod& method, const CountedModel& model,
                            const Eigen::MatrixXd& inputs,
                            std::span<const int> targets,
                            const MaskingSpec& mask, RngSpec rng) {
  if (static_cast<size_t>(inputs.rows()) != targets.size()) {
    throw InvalidArgumentError("one target class per row is required");
  }
  Eigen::MatrixXd out(inputs.rows(), inputs.cols());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    out.row(r) = run_mc(method, model, inputs.row(r).transpose(),
                        TargetClass{targets[static_cast<size_t>(r)]}, mask,
                        rng.child(static_cast<uint64_t>(r)))
                     .scores.transpose();
  }
  return out;
}

Eigen::MatrixXd exact_shap_rows(const CountedModel& model,
                                const Eigen::MatrixXd& inputs,
                                std::span<const int> targets,
                                const MaskingSpec& mask) {
  if (static_cast<size_t>(inputs.rows()) != targets.size()) {
    throw InvalidArgumentError("one target class per row is required");
  }
  Eigen::MatrixXd out(inputs.rows(), inputs.cols());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    out.row(r) = exact_shap(model, inputs.row(r).transpose(),
                            TargetClass{targets[static_cast<size_t>(r)]}, mask)
                     .scores.transpose();
  }
  return out;
}

}  // namespace selex
