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

// Command-line pipeline: one verb per stage, artifacts under the output
// directory, JSON configuration.

#ifndef SELEX_CLI_H_
#define SELEX_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "selex/attribution.h"
#include "selex/core.h"
#include "selex/mlp.h"

namespace selex {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumerical = 4;

struct NetworkConfig {
  // Hidden widths; empty means one layer of width 3d.
  std::vector<int> hidden;
  Activation activation = Activation::kTanh;
  int epochs = 0;
  int batch_size = 32;
  double learning_rate = 0.05;
};

struct ExperimentConfig {
  std::string config_dir;
  std::string dataset_path;
  std::string label_column;
  SplitFractions fractions;
  uint64_t seed = 0;
  std::string out_dir = "artifacts";
  NetworkConfig model{{}, Activation::kTanh, 60, 32, 0.05};
  NetworkConfig amortizer{{}, Activation::kTanh, 150, 32, 0.05};
  NetworkConfig learned_metric{{}, Activation::kTanh, 100, 32, 0.02};
  std::string train_targets = "svs-12";
  std::string recourse = "svs-12";
  std::string reference = "svs-12";
  std::string high_quality = "exact";
  std::string metric_kind = "learned";
  int ensemble_size = 20;
  std::optional<double> alpha;
  std::optional<double> budget;
  int num_bins = 10;
  // Evaluation protocol settings.
  std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> quantiles = {0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                   0.7, 0.8, 0.9, 1.0};
  std::vector<double> removal_fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                           0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::string> timeshare_levels = {"svs-1", "svs-2", "svs-4",
                                               "svs-8", "svs-16", "svs-32"};
  std::vector<std::string> ablation_methods = {"svs-2", "svs-8", "svs-32",
                                               "ks-32"};
  double worst_case_recourse = 0.2;
  int bootstrap_resamples = 1000;
  bool gold_labels = false;

  // Coverage from `alpha` or, when a budget is set, from the budget rule
  // with the recourse cost for `num_features` features.
  double coverage(int num_features) const;
  std::string resolve(const std::string& path) const;
};

// Parses a JSON config. Errors carry the file name and line.
ExperimentConfig parse_config(const std::string& text,
                              const std::string& source,
                              const std::string& config_dir);
ExperimentConfig load_config(const std::string& path);

// Runs the CLI; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace selex

#endif  // SELEX_CLI_H_
