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

#include "selex/cli.h"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_util.h"

namespace selex {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "selex");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

// Value after "<key>: " in CLI output.
std::string field(const std::string& text, const std::string& key) {
  const auto at = text.find(key + ": ");
  if (at == std::string::npos) return "";
  const auto start = at + key.size() + 2;
  return text.substr(start, text.find('\n', start) - start);
}

TEST(ParseConfig, Defaults) {
  const auto c = parse_config(
      R"({"dataset": {"path": "d.csv", "label_column": "y"}, "selection": {"alpha": 0.4}})",
      "c.json", "/tmp/x");
  EXPECT_EQ(c.label_column, "y");
  EXPECT_EQ(c.resolve("d.csv"), "/tmp/x/d.csv");
  EXPECT_EQ(c.coverage(8), 0.4);
  EXPECT_EQ(c.num_bins, 10);
  EXPECT_EQ(c.recourse, "svs-12");
}

TEST(ParseConfig, BudgetGivesCoverage) {
  const auto c = parse_config(
      R"({"dataset": {"path": "d.csv", "label_column": "y"}, "selection": {"budget": 98}})",
      "c.json", ".");
  EXPECT_EQ(c.coverage(8), 0.0);
}

void expect_config_error(const std::string& text, const std::string& fragment) {
  try {
    parse_config(text, "c.json", ".");
    ADD_FAILURE() << "no error for " << text;
  } catch (const InvalidArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, Errors) {
  expect_config_error(R"({"dataset": {"path": "d.csv"}, "selection": {"alpha": 0.5}})",
                      "missing required key 'dataset.label_column'");
  expect_config_error("{\n\"dataset\": {\n\"path\": \"d.csv\",\n}}", "c.json:4");
  expect_config_error(
      R"({"dataset": {"path": "d.csv", "label_column": "y"}, "selection": {"alpha": 0.5, "budget": 3}})",
      "selection");
  expect_config_error(R"({"dataset": {"path": "d.csv", "label_column": "y"}, "selection": {}})",
                      "selection");
  expect_config_error(
      R"({"dataset": {"path": "d.csv", "label_column": "y"}, "selection": {"alpha": 0.5}, "colour": 1})",
      "colour");
}

// One small pipeline per test process; the first run of every stage is kept
// for the assertions below.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(testing::scratch_dir("cli"));
    first_ = new std::map<std::string, CliRun>;
    write(*dir_ / "cfg.json", config("{\"alpha\": 0.5}"));
    auto& f = *first_;
    f["bench"] = cli({"--seed", "5", "make-benchmark", "--rows", "400", "--features", "6",
                      "--output", (*dir_ / "data.csv").string()});
    f["train-model"] = run({"train-model"});
    f["model"].out = slurp(art() / "model.txt");
    f["train svs-4"] = run({"gen-explanations", "--method", "svs-4", "--split", "train"});
    f["test exact"] = run({"gen-explanations", "--method", "exact", "--split", "test"});
    f["cal svs-8"] = run({"gen-explanations", "--method", "svs-8", "--split", "cal"});
    f["test svs-8"] = run({"gen-explanations", "--method", "svs-8", "--split", "test"});
    f["train-amortized"] = run({"train-amortized"});
    f["fit-selective"] = run({"fit-selective"});
    f["explain"] = run({"explain", "--input", (*dir_ / "data.csv").string()});
    f["explain.csv"].out = slurp(art() / "explain.csv");
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete first_;
  }

  void SetUp() override {
    for (const auto& [stage, r] : *first_) ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
  }

  static std::string config(const std::string& selection, int bins = 4) {
    return R"({
  "dataset": {"path": "data.csv", "label_column": "label"},
  "seed": 5,
  "out": "art",
  "model": {"epochs": 20},
  "amortizer": {"epochs": 40},
  "methods": {"train_targets": "svs-4", "recourse": "svs-4", "reference": "svs-8"},
  "metric": {"network": {"epochs": 40}},
  "selection": )" + selection + R"(,
  "bins": )" + std::to_string(bins) + R"(,
  "evaluation": {"bootstrap_resamples": 20, "timeshare_levels": ["svs-1", "svs-2", "svs-4"],
                 "ablation_methods": ["svs-2", "ks-32"]}
})";
  }

  static CliRun run(std::vector<std::string> args, const std::string& cfg = "cfg.json") {
    args.insert(args.begin(), {"--config", (*dir_ / cfg).string()});
    return cli(args);
  }
  static fs::path art() { return *dir_ / "art"; }
  static json split() { return json::parse(slurp(art() / "split.json")); }
  static const CliRun& first(const std::string& stage) { return first_->at(stage); }

  static fs::path* dir_;
  static std::map<std::string, CliRun>* first_;
};

fs::path* Pipeline::dir_ = nullptr;
std::map<std::string, CliRun>* Pipeline::first_ = nullptr;

TEST_F(Pipeline, Benchmark) {
  const std::string text = slurp(*dir_ / "data.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 401);
  const CliRun again = cli({"--seed", "5", "make-benchmark", "--rows", "400", "--features",
                            "6", "--output", (*dir_ / "again.csv").string()});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(*dir_ / "again.csv"), text);
}

TEST_F(Pipeline, TrainModelIsDeterministic) {
  EXPECT_NE(first("train-model").out.find("split sizes"), std::string::npos);
  const CliRun r = run({"train-model"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(art() / "model.txt"), first("model").out);
  const json s = split();
  EXPECT_EQ(s["train"].size() + s["cal"].size() + s["test"].size(), 400u);
}

TEST_F(Pipeline, ExplanationCounts) {
  const size_t train = split()["train"].size();
  const CliRun& r = first("train svs-4");
  // svs-4 costs 4 * 6 + 1 at d = 6.
  EXPECT_EQ(field(r.out, "total inferences"), std::to_string(train * 25));
  EXPECT_EQ(field(r.out, "new cache records"), std::to_string(train));
  const CliRun again = run({"gen-explanations", "--method", "svs-4", "--split", "train"});
  EXPECT_EQ(field(again.out, "new cache records"), "0");
  const size_t test = split()["test"].size();
  EXPECT_EQ(field(first("test exact").out, "total inferences"), std::to_string(test * 64));
}

TEST_F(Pipeline, NineSevenHundred) {
  // svs-12 costs 12 * 8 + 1 inferences per row at d = 8.
  const fs::path d = *dir_ / "d8";
  fs::create_directories(d);
  ASSERT_EQ(cli({"make-benchmark", "--rows", "200", "--features", "8", "--output",
                 (d / "data.csv").string()})
                .code,
            0);
  write(d / "cfg.json", R"({"dataset": {"path": "data.csv", "label_column": "label"},
    "split": {"train": 0.5, "cal": 0.25, "test": 0.25}, "model": {"epochs": 5},
    "out": "art", "selection": {"alpha": 0.5}})");
  const std::string cfg = (d / "cfg.json").string();
  ASSERT_EQ(cli({"--config", cfg, "train-model"}).code, 0);
  const CliRun r = cli({"--config", cfg, "gen-explanations", "--method", "svs-12", "--split",
                     "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "total inferences"), "9700");
}

TEST_F(Pipeline, FitAndExplain) {
  EXPECT_EQ(field(first("fit-selective").out, "coverage alpha"), "0.5");
  const CliRun& r = first("explain");
  EXPECT_EQ(field(r.out, "rows"), "400");
  const double covered = std::stod(field(r.out, "covered fraction"));
  EXPECT_GT(covered, 0.2);
  EXPECT_LT(covered, 0.8);
  // Uncovered rows cost svs-4 at d = 6.
  EXPECT_NEAR(std::stod(field(r.out, "mean inference cost")), 25 * (1 - covered), 1e-9);
  const std::string csv = first("explain.csv").out;
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "input_id,target,covered,score,lambda,inference_cost,phi_f0,phi_f1,phi_f2,"
            "phi_f3,phi_f4,phi_f5");
  const CliRun again = run({"explain", "--input", (*dir_ / "data.csv").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(art() / "explain.csv"), csv);
}

TEST_F(Pipeline, EvaluateEveryProtocol) {
  for (const std::string p :
       {"coverage", "recourse", "quantiles", "perturbation", "timeshare", "ablation"}) {
    const CliRun r = run({"evaluate", "--protocol", p});
    ASSERT_EQ(r.code, 0) << p << ": " << r.err;
    const json report = json::parse(slurp(art() / ("report_" + p + ".json")));
    EXPECT_EQ(report["schema_version"], 1);
    EXPECT_EQ(report["protocol"], p);
    EXPECT_FALSE(report["curves"].empty());
    const std::string csv = slurp(art() / ("report_" + p + ".csv"));
    EXPECT_EQ(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')),
              report["num_examples"].get<size_t>() + 1);
  }
  const CliRun bad = run({"evaluate", "--protocol", "bogus"});
  EXPECT_EQ(bad.code, kExitConfig);
  EXPECT_NE(bad.err.find("timeshare"), std::string::npos);
}

TEST_F(Pipeline, SelectionVariants) {
  // Work on a copy so the main artifacts stay intact.
  const fs::path copy = *dir_ / "variant";
  fs::copy(art(), copy, fs::copy_options::recursive);
  const auto variant = [&](const std::string& selection, int bins) {
    write(*dir_ / "v.json", config(selection, bins));
    return run({"--out", copy.string(), "fit-selective"}, "v.json");
  };
  CliRun r = variant("{\"budget\": 26}", 4);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "coverage alpha"), "0");
  EXPECT_EQ(field(r.out, "threshold"), "cover-none");

  r = variant("{\"alpha\": 0.5}", 1);
  ASSERT_EQ(r.code, 0) << r.err;
  const json bins = json::parse(slurp(copy / "bins.json"));
  EXPECT_EQ(bins["lambdas"].size(), 1u);

  r = variant("{\"alpha\": 1}", 4);
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"--out", copy.string(), "explain", "--input", (*dir_ / "data.csv").string()},
          "v.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "mean inference cost"), "0");
  EXPECT_EQ(field(r.out, "covered fraction"), "1");
}

TEST_F(Pipeline, ErrorExitCodes) {
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);

  const fs::path empty = *dir_ / "empty";
  EXPECT_EQ(run({"--out", empty.string(), "fit-selective"}).code, kExitMissingArtifact);
  EXPECT_EQ(run({"gen-explanations", "--method", "svs-3", "--split", "nowhere"}).code,
            kExitConfig);

  const fs::path copy = *dir_ / "tampered";
  fs::copy(art(), copy, fs::copy_options::recursive);
  std::ofstream(copy / "amortizer.txt", std::ios::app) << "\n";
  EXPECT_EQ(run({"--out", copy.string(), "evaluate", "--protocol", "coverage"}).code,
            kExitMissingArtifact);

  const int fd = ::open((art() / ".selex.lock").c_str(), O_RDWR | O_CREAT, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  pid_t child = ::fork();
  if (child == 0) {
    // flock is per open file description, so contend from another process.
    const CliRun r = run({"fit-selective"});
    ::_exit(r.code);
  }
  int status = 0;
  ::waitpid(child, &status, 0);
  EXPECT_EQ(WEXITSTATUS(status), kExitConfig);
  ::flock(fd, LOCK_UN);
  ::close(fd);
}

}  // namespace
}  // namespace selex
