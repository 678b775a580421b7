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

// Selective explanations: covered inputs get the amortized attribution, the
// rest get lambda * Amor + (1 - lambda) * MC with lambda fitted per
// uncertainty bin on the calibration split.

#ifndef SELEX_COMBINE_H_
#define SELEX_COMBINE_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "selex/amortize.h"
#include "selex/attribution.h"
#include "selex/core.h"
#include "selex/uncertainty.h"

namespace selex {

inline constexpr int kDefaultNumBins = 10;
inline constexpr int kMinBinSize = 5;

// Quantized uncertainty range. Bin i holds scores in
// (edges[i], edges[i + 1]]; bin 0 also takes everything at or below edges[1]
// and the last bin everything above edges[k - 1].
struct BinTable {
  std::vector<double> edges;  // k + 1 entries, edges[0] = min cal score
  std::vector<double> lambdas;
  std::vector<int> counts;
  // True where the lambda = 0 fallback was applied.
  std::vector<bool> fallback;

  int num_bins() const { return static_cast<int>(counts.size()); }
  int bin_of(double score) const;
  double lambda_for(double score) const;
  // True when some fitted lambda lies outside [0, 1].
  bool out_of_unit_interval() const;
};

// Edges at the calibrated thresholds of alpha_i = i / k, i = 0..k.
BinTable build_bins(std::span<const double> cal_scores, int k);

class DegenerateBinError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Bin members are rows of the three matrices.
//   lambda = sum <MC - Ref, MC - Amor> / sum ||Amor - MC||^2
// Throws DegenerateBinError when the denominator is zero.
double fit_lambda(const Eigen::MatrixXd& amortized, const Eigen::MatrixXd& mc,
                  const Eigen::MatrixXd& reference);

// sum ||lambda Amor + (1 - lambda) MC - Ref||^2 over the bin.
double lambda_objective(double lambda, const Eigen::MatrixXd& amortized,
                        const Eigen::MatrixXd& mc,
                        const Eigen::MatrixXd& reference);

// The minimizer over [0, 1]; the objective is a convex quadratic so this is
// the unconstrained minimizer clamped to the interval.
double fit_lambda_unit_interval(const Eigen::MatrixXd& amortized,
                                const Eigen::MatrixXd& mc,
                                const Eigen::MatrixXd& reference);

// Fills lambdas and fallback flags. Bins smaller than `min_bin_size` or with
// a zero denominator get lambda = 0.
void fit_bin_lambdas(BinTable& bins, std::span<const double> cal_scores,
                     const Eigen::MatrixXd& amortized,
                     const Eigen::MatrixXd& mc,
                     const Eigen::MatrixXd& reference,
                     int min_bin_size = kMinBinSize);

// lambda * amortized + (1 - lambda) * mc.
Eigen::VectorXd combine_initial_guess(double lambda,
                                      const Eigen::VectorXd& amortized,
                                      const Eigen::VectorXd& mc);

struct SelectiveOutput {
  AttributionVector attribution;
  bool covered = false;
  double score = 0.0;
  // Weight on the amortized explanation (1 when covered).
  double lambda = 1.0;
};

class SelectiveExplainer {
 public:
  SelectiveExplainer() = default;
  SelectiveExplainer(std::shared_ptr<const AmortizedExplainer> amortizer,
                     std::shared_ptr<const UncertaintyMetric> metric,
                     McMethod recourse, SelectionPolicy policy, BinTable bins,
                     MaskingSpec mask, std::vector<double> cal_scores);

  const AmortizedExplainer& amortizer() const { return *amortizer_; }
  const UncertaintyMetric& metric() const { return *metric_; }
  std::shared_ptr<const AmortizedExplainer> shared_amortizer() const {
    return amortizer_;
  }
  std::shared_ptr<const UncertaintyMetric> shared_metric() const {
    return metric_;
  }
  const McMethod& recourse() const { return recourse_; }
  const SelectionPolicy& policy() const { return policy_; }
  const BinTable& bins() const { return bins_; }
  const MaskingSpec& mask() const { return mask_; }
  const std::vector<double>& cal_scores() const { return cal_scores_; }

  // Covered: amortized (cost 0). Otherwise the initial-guess explanation
  // with a fresh Monte Carlo draw from `rng` (cost n).
  SelectiveOutput explain(const CountedModel& model, const FeatureVector& x,
                          TargetClass y, RngSpec rng) const;

  AttributionVector initial_guess_explain(const CountedModel& model,
                                          const FeatureVector& x,
                                          TargetClass y, RngSpec rng) const;

  // Same components recalibrated to coverage `alpha` on the stored
  // calibration scores.
  SelectiveExplainer with_coverage(double alpha) const;
  // lambda = 0 in every bin: uncovered inputs get the plain MC explanation.
  SelectiveExplainer naive() const;
  // Same policy and bin edges with another recourse method and its lambdas.
  SelectiveExplainer with_recourse(const McMethod& method,
                                   BinTable bins) const;

 private:
  std::shared_ptr<const AmortizedExplainer> amortizer_;
  std::shared_ptr<const UncertaintyMetric> metric_;
  McMethod recourse_;
  SelectionPolicy policy_;
  BinTable bins_;
  MaskingSpec mask_;
  std::vector<double> cal_scores_;
};

struct SelectiveConfig {
  double alpha = 0.5;
  int num_bins = kDefaultNumBins;
  McMethod recourse;
  int min_bin_size = kMinBinSize;
};

// Calibration-side data. `mc` holds MC^n draws and `reference` independent
// MC^n' draws, one row per calibration input.
struct CalibrationData {
  Eigen::MatrixXd inputs;
  std::vector<int> targets;
  Eigen::MatrixXd mc;
  Eigen::MatrixXd reference;
};

// Threshold, bins and per-bin lambdas for an already trained amortizer and
// metric.
SelectiveExplainer fit_selective(
    std::shared_ptr<const AmortizedExplainer> amortizer,
    std::shared_ptr<const UncertaintyMetric> metric,
    const CalibrationData& cal, const SelectiveConfig& config,
    const MaskingSpec& mask);

// Refits the per-bin lambdas of `se` for another recourse method. The
// calibration rows must be the ones `se` was fitted on, in the same order.
SelectiveExplainer refit_recourse(const SelectiveExplainer& se,
                                  const McMethod& method,
                                  const CalibrationData& cal,
                                  int min_bin_size = kMinBinSize);

// Manifest: JSON that names the amortizer and metric files (relative to the
// manifest) with their SHA-256 digests and embeds the policy and bins.
struct ManifestFiles {
  std::string amortizer = "amortizer.txt";
  std::string metric = "metric.txt";
  std::string policy = "policy.json";
  std::string bins = "bins.json";
};

std::string bins_to_json(const BinTable& bins);

// Writes every component next to `manifest_path`.
void save_selective(const SelectiveExplainer& explainer,
                    const std::string& manifest_path,
                    const ManifestFiles& files = {},
                    const std::string& extra_json = "{}");

// Verifies every digest before loading. Throws MissingArtifactError on a
// missing file or a digest mismatch.
SelectiveExplainer load_selective(const std::string& manifest_path);

}  // namespace selex

#endif  // SELEX_COMBINE_H_
