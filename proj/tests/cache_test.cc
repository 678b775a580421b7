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

#include "json.hpp"
#include "selex/cache.h"
#include "selex/text_format.h"
#include "test_util.h"

namespace selex {
namespace {

ExplanationRecord record(const std::string& id, const std::string& method,
                         uint64_t seed, double first = 0.1) {
  ExplanationRecord r;
  r.input_id = id;
  std::tie(r.method, r.param) = parse_method_name(method);
  r.target = 1;
  r.scores = Eigen::Vector3d(first, -2.5e-7, 1.0 / 3.0);
  r.inference_cost = r.method == "exact" ? 8 : 37;
  r.seed = seed;
  return r;
}

TEST(ExplanationRecord, JsonLineRoundTripIsExact) {
  std::mt19937_64 rng(1);
  ExplanationRecord r = record("row-7", "svs-12", 3);
  r.scores = testing::random_vector(9, rng, 1e-3);
  const std::string line = r.to_json_line();
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const ExplanationRecord back = ExplanationRecord::from_json_line(line, "t");
  EXPECT_EQ(back, r);
  EXPECT_EQ(back.method_name(), "svs-12");
}

TEST(ExplanationRecord, FieldsArePresent) {
  const auto doc = nlohmann::json::parse(record("a", "ks-32", 5).to_json_line());
  for (const char* key : {"input_id", "method", "params", "target", "scores",
                          "inference_cost", "seed"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["method"], "ks");
  EXPECT_EQ(doc["params"]["n"], 32);
  const auto svs_doc = nlohmann::json::parse(record("a", "svs-4", 5).to_json_line());
  EXPECT_EQ(svs_doc["params"]["m"], 4);
}

TEST(ExplanationRecord, MalformedLinesAreDiagnosed) {
  EXPECT_THROW(ExplanationRecord::from_json_line("{", "f:3"), InvalidArgumentError);
  EXPECT_THROW(ExplanationRecord::from_json_line(
                   R"({"input_id":"a","method":"lime","params":{},"target":0,)"
                   R"("scores":[1],"inference_cost":1,"seed":0})",
                   "f:4"),
               InvalidArgumentError);
}

TEST(ParseMethodName, KnownMethods) {
  EXPECT_EQ(parse_method_name("exact"), std::make_pair(std::string("exact"), 0));
  EXPECT_EQ(parse_method_name("svs-12"), std::make_pair(std::string("svs"), 12));
  EXPECT_EQ(parse_method_name("ks-20"), std::make_pair(std::string("ks"), 20));
  EXPECT_THROW(parse_method_name("shap"), InvalidArgumentError);
}

TEST(MakeRecord, CopiesAttribution) {
  AttributionVector a;
  a.scores = Eigen::Vector2d(1, 2);
  a.input_id = "x";
  a.target = {1};
  a.inference_cost = 9;
  const ExplanationRecord r = make_record(a, "svs-4", 11);
  EXPECT_EQ(r.method, "svs");
  EXPECT_EQ(r.param, 4);
  EXPECT_EQ(r.seed, 11u);
  EXPECT_EQ(r.inference_cost, 9);
  EXPECT_EQ(r.scores, a.scores);
}

TEST(ExplanationCache, DuplicatesAndConflicts) {
  ExplanationCache cache;
  EXPECT_TRUE(cache.insert(record("a", "svs-12", 1)));
  EXPECT_FALSE(cache.insert(record("a", "svs-12", 1)));
  EXPECT_TRUE(cache.insert(record("a", "svs-12", 2)));
  EXPECT_TRUE(cache.insert(record("a", "svs-4", 1)));
  EXPECT_TRUE(cache.insert(record("a", "exact", 1)));
  EXPECT_THROW(cache.insert(record("a", "svs-12", 1, 0.5)), InvalidArgumentError);
  EXPECT_EQ(cache.records().size(), 4u);
  ASSERT_NE(cache.find("a", "svs-4", 1), nullptr);
  EXPECT_EQ(cache.find("b", "svs-4", 1), nullptr);
}

TEST(ExplanationCache, GatherOrdersRowsAndNamesMissingIds) {
  ExplanationCache cache;
  cache.insert(record("a", "svs-12", 1, 1.0));
  cache.insert(record("b", "svs-12", 1, 2.0));
  const std::vector<std::string> ids = {"b", "a"};
  const Eigen::MatrixXd m = cache.gather(ids, "svs-12", 1);
  EXPECT_EQ(m(0, 0), 2.0);
  EXPECT_EQ(m(1, 0), 1.0);
  const std::vector<std::string> missing = {"a", "zz"};
  try {
    cache.gather(missing, "svs-12", 1);
    FAIL();
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(AppendRecords, IdempotentAndAppendOnly) {
  const std::string path = testing::scratch_dir("cache") + "/c.jsonl";
  const std::vector<ExplanationRecord> first = {record("a", "svs-12", 1),
                                                record("b", "svs-12", 1)};
  EXPECT_EQ(append_records(path, first), 2);
  const std::string digest = sha256_file(path);
  EXPECT_EQ(append_records(path, first), 0);
  EXPECT_EQ(sha256_file(path), digest);
  const std::vector<ExplanationRecord> more = {record("a", "svs-12", 1),
                                               record("c", "svs-12", 1)};
  EXPECT_EQ(append_records(path, more), 1);
  const ExplanationCache cache = ExplanationCache::load(path);
  ASSERT_EQ(cache.records().size(), 3u);
  EXPECT_EQ(cache.records()[2].input_id, "c");

  const std::vector<ExplanationRecord> conflict = {record("d", "svs-12", 1),
                                                   record("a", "svs-12", 1, 9.0)};
  const std::string before = sha256_file(path);
  EXPECT_THROW(append_records(path, conflict), InvalidArgumentError);
  EXPECT_EQ(sha256_file(path), before);
}

TEST(ExplanationCache, LoadReportsLineNumbers) {
  const std::string path = testing::scratch_dir("cache_bad") + "/c.jsonl";
  {
    std::ofstream out(path);
    out << record("a", "svs-12", 1).to_json_line() << "\n{oops\n";
  }
  try {
    ExplanationCache::load(path);
    FAIL();
  } catch (const InvalidArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ExplanationCache::load(path + ".none"), MissingArtifactError);
}

}  // namespace
}  // namespace selex
