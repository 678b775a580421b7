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

// Shapley-value explainers for a black-box classifier.
//
// The value of a coalition S is h_y evaluated on the input whose features in
// S are taken from x and whose remaining features are replaced by a fixed
// baseline. Three estimators are provided:
//
//   exact_shap   enumerates all 2^d coalitions once (cost 2^d);
//   svs          Shapley value sampling over m random permutations, sharing
//                the empty-coalition evaluation (cost m*d + 1);
//   kernel_shap  weighted least squares over sampled coalitions with the
//                Shapley kernel (cost n).

#ifndef SELEX_ATTRIBUTION_H_
#define SELEX_ATTRIBUTION_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selex/core.h"

namespace selex {

// Feature replacement rule for absent coalition members.
struct MaskingSpec {
  FeatureVector baseline;

  // The zero vector, i.e. the train-split mean in standardized space.
  static MaskingSpec zeros(int num_features);
};

// A coalition of feature indices with its regression weight.
struct SubsetSample {
  std::vector<int> subset;
  double weight = 1.0;
};

// Input whose coordinates in `subset` come from x and the rest from the
// baseline.
FeatureVector masked_input(const FeatureVector& x, std::span<const int> subset,
                           const MaskingSpec& mask);

// h_y(x_S); costs exactly one inference.
double masked_eval(const CountedModel& model, const FeatureVector& x,
                   std::span<const int> subset, TargetClass y,
                   const MaskingSpec& mask);

struct ExactShapOptions {
  // Permits d above kExactShapMaxFeatures.
  bool allow_large = false;
};

inline constexpr int kExactShapMaxFeatures = 20;

AttributionVector exact_shap(const CountedModel& model, const FeatureVector& x,
                             TargetClass y, const MaskingSpec& mask,
                             const ExactShapOptions& options = {});

AttributionVector svs(const CountedModel& model, const FeatureVector& x,
                      TargetClass y, int num_permutations,
                      const MaskingSpec& mask, RngSpec rng);

// Shapley kernel pi(S) = (d - 1) / (C(d, s) s (d - s)) for 0 < s < d.
double shapley_kernel_weight(int num_features, int subset_size);

// Thrown when the sampled coalitions do not identify the attributions.
class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Kernel SHAP with n inferences. Two of them anchor the empty and full
// coalitions, which fix the intercept and the efficiency constraint
// sum(phi) = h_y(x) - h_y(baseline). The remaining n - 2 coalitions are drawn
// with a uniformly random size in [1, d - 1] and then uniformly within that
// size, and weighted by pi(S) / p(S) so the sampled objective is an unbiased
// estimate of the full kernel-weighted one. Requires n >= d + 2 and d >= 2.
AttributionVector kernel_shap(const CountedModel& model, const FeatureVector& x,
                              TargetClass y, int num_samples,
                              const MaskingSpec& mask, RngSpec rng);

// Kernel SHAP over every proper coalition with its exact kernel weight
// (cost 2^d). Recovers the exact Shapley values.
AttributionVector kernel_shap_full(const CountedModel& model,
                                   const FeatureVector& x, TargetClass y,
                                   const MaskingSpec& mask);

// Constrained weighted regression shared by both Kernel SHAP entry points.
Eigen::VectorXd solve_kernel_regression(std::span<const SubsetSample> samples,
                                        std::span<const double> values,
                                        double empty_value, double full_value,
                                        int num_features);

// A Monte Carlo explainer identity such as "svs-12" or "ks-32".
struct McMethod {
  enum class Kind { kSvs, kKernelShap };

  Kind kind = Kind::kSvs;
  int param = 12;

  static McMethod parse(const std::string& name);
  std::string name() const;
  // Inferences per explanation for d features.
  int64_t cost(int num_features) const;

  friend bool operator==(const McMethod&, const McMethod&) = default;
};

AttributionVector run_mc(const McMethod& method, const CountedModel& model,
                         const FeatureVector& x, TargetClass y,
                         const MaskingSpec& mask, RngSpec rng);

// One attribution row per input row. Row r draws from rng.child(r).
Eigen::MatrixXd run_mc_rows(const McMethod& method, const CountedModel& model,
                            const Eigen::MatrixXd& inputs,
                            std::span<const int> targets,
                            const MaskingSpec& mask, RngSpec rng);

Eigen::MatrixXd exact_shap_rows(const CountedModel& model,
                                const Eigen::MatrixXd& inputs,
                                std::span<const int> targets,
                                const MaskingSpec& mask);

}  // namespace selex

#endif  // SELEX_ATTRIBUTION_H_
