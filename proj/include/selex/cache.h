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

// Explanation cache: JSON lines, one attribution per line. The logical key
// of a record is (input_id, method, params, seed).

#ifndef SELEX_CACHE_H_
#define SELEX_CACHE_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "selex/attribution.h"
#include "selex/core.h"

namespace selex {

struct ExplanationRecord {
  std::string input_id;
  // "exact", "svs" or "ks".
  std::string method;
  // 0 for exact, m for svs, n for ks.
  int param = 0;
  int target = 0;
  Eigen::VectorXd scores;
  int64_t inference_cost = 0;
  uint64_t seed = 0;

  std::string method_name() const;
  std::string to_json_line() const;
  static ExplanationRecord from_json_line(const std::string& line,
                                          const std::string& where);
  friend bool operator==(const ExplanationRecord&,
                         const ExplanationRecord&) = default;
};

ExplanationRecord make_record(const AttributionVector& attribution,
                              const std::string& method_name, uint64_t seed);

// "exact" or any McMethod name; returns (method, param).
std::pair<std::string, int> parse_method_name(const std::string& name);

class ExplanationCache {
 public:
  using Key = std::tuple<std::string, std::string, int, uint64_t>;

  // Returns false when an identical record is already present. Throws
  // InvalidArgumentError when a different record has the same key.
  bool insert(ExplanationRecord record);

  const std::vector<ExplanationRecord>& records() const { return records_; }

  const ExplanationRecord* find(const std::string& input_id,
                                const std::string& method_name,
                                uint64_t seed) const;

  // Scores for each id, one row per id. Throws MissingArtifactError naming
  // the first absent id.
  Eigen::MatrixXd gather(std::span<const std::string> input_ids,
                         const std::string& method_name, uint64_t seed) const;

  static ExplanationCache load(const std::string& path);

 private:
  std::vector<ExplanationRecord> records_;
  std::map<Key, size_t> by_key_;
};

// Appends records that are not already in the file. Returns how many were
// written. A conflicting duplicate aborts before anything is written.
int append_records(const std::string& path,
                   std::span<const ExplanationRecord> records);

}  // namespace selex

#endif  // SELEX_CACHE_H_
