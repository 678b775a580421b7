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

#include "selex/cache.h"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace selex {
namespace {

using nlohmann::json;

ExplanationCache::Key key_of(const ExplanationRecord& r) {
  return {r.input_id, r.method, r.param, r.seed};
}

}  // namespace

std::string ExplanationRecord::method_name() const {
  return method == "exact" ? method : method + "-" + std::to_string(param);
}

std::string ExplanationRecord::to_json_line() const {
  json params = json::object();
  if (method == "svs") params["m"] = param;
  if (method == "ks") params["n"] = param;
  json doc = {{"input_id", input_id},
              {"method", method},
              {"params", params},
              {"target", target},
              {"scores", std::vector<double>(scores.data(),
                                             scores.data() + scores.size())},
              {"inference_cost", inference_cost},
              {"seed", seed}};
  return doc.dump();
}

ExplanationRecord ExplanationRecord::from_json_line(const std::string& line,
                                                    const std::string& where) {
  ExplanationRecord r;
  try {
    const json doc = json::parse(line);
    r.input_id = doc.at("input_id").get<std::string>();
    r.method = doc.at("method").get<std::string>();
    const json& params = doc.at("params");
    if (r.method == "svs") {
      r.param = params.at("m").get<int>();
    } else if (r.method == "ks") {
      r.param = params.at("n").get<int>();
    } else if (r.method != "exact") {
      throw InvalidArgumentError(where + ": unknown method '" + r.method + "'");
    }
    r.target = doc.at("target").get<int>();
    const auto scores = doc.at("scores").get<std::vector<double>>();
    r.scores = Eigen::Map<const Eigen::VectorXd>(
        scores.data(), static_cast<Eigen::Index>(scores.size()));
    r.inference_cost = doc.at("inference_cost").get<int64_t>();
    r.seed = doc.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw InvalidArgumentError(where + ": malformed cache record: " + e.what());
  }
  return r;
}

ExplanationRecord make_record(const AttributionVector& attribution,
                              const std::string& method_name, uint64_t seed) {
  ExplanationRecord r;
  std::tie(r.method, r.param) = parse_method_name(method_name);
  r.input_id = attribution.input_id;
  r.target = attribution.target.index;
  r.scores = attribution.scores;
  r.inference_cost = attribution.inference_cost;
  r.seed = seed;
  return r;
}

std::pair<std::string, int> parse_method_name(const std::string& name) {
  if (name == "exact") return {"exact", 0};
  const McMethod method = McMethod::parse(name);
  return {method.kind == McMethod::Kind::kSvs ? "svs" : "ks", method.param};
}

bool ExplanationCache::insert(ExplanationRecord record) {
  const Key key = key_of(record);
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    if (records_[it->second] == record) return false;
    throw InvalidArgumentError("conflicting cache record for input '" +
                               record.input_id + "', method " +
                               record.method_name() + ", seed " +
                               std::to_string(record.seed));
  }
  by_key_.emplace(key, records_.size());
  records_.push_back(std::move(record));
  return true;
}

const ExplanationRecord* ExplanationCache::find(const std::string& input_id,
                                                const std::string& method_name,
                                                uint64_t seed) const {
  const auto [method, param] = parse_method_name(method_name);
  auto it = by_key_.find(Key{input_id, method, param, seed});
  return it == by_key_.end() ? nullptr : &records_[it->second];
}

Eigen::MatrixXd ExplanationCache::gather(std::span<const std::string> input_ids,
                                         const std::string& method_name,
                                         uint64_t seed) const {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < input_ids.size(); ++i) {
    const ExplanationRecord* r = find(input_ids[i], method_name, seed);
    if (r == nullptr) {
      throw MissingArtifactError("explanation cache has no " + method_name +
                                 " record with seed " + std::to_string(seed) +
                                 " for input '" + input_ids[i] + "'");
    }
    if (i == 0) out.resize(static_cast<Eigen::Index>(input_ids.size()),
                           r->scores.size());
    if (r->scores.size() != out.cols()) {
      throw InvalidArgumentError("cache record for '" + input_ids[i] +
                                 "' has the wrong dimension");
    }
    out.row(static_cast<Eigen::Index>(i)) = r->scores.transpose();
  }
  return out;
}

ExplanationCache ExplanationCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open explanation cache " + path);
  ExplanationCache cache;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    cache.insert(ExplanationRecord::from_json_line(
        line, path + ":" + std::to_string(number)));
  }
  return cache;
}

int append_records(const std::string& path,
                   std::span<const ExplanationRecord> records) {
  ExplanationCache cache;
  if (std::filesystem::exists(path)) cache = ExplanationCache::load(path);
  std::vector<const ExplanationRecord*> fresh;
  for (const auto& r : records) {
    if (cache.insert(r)) fresh.push_back(&r);
  }
  if (fresh.empty()) return 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw InvalidArgumentError("cannot write explanation cache " + path);
  for (const auto* r : fresh) out << r->to_json_line() << '\n';
  return static_cast<int>(fresh.size());
}

}  // namespace selex
