// Copyright (c) 2026, The holofactor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "holofactor/harness.hpp"

using namespace holofactor;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.d = 256;
  c.m = 16;
  c.f = 3;
  c.activation_k = 3.0;
  c.trials = 24;
  c.master_seed = 77;
  c.workers = 1;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("holofactor_test_" + name)).string();
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = small_config();
  PcmNoise p;
  p.read_time_s = 7200.0;
  p.shared_array = true;
  c.factorizer.backend = p;
  c.factorizer.multiplex = true;
  c.n_max = 100;
  const auto back = experiment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, ParsesDocumentedSections) {
  const auto j = nlohmann::json::parse(R"({
    "problem": {"d": 512, "m": 64, "f": 3},
    "activation": {"kind": "threshold", "k": 10.3},
    "convergence": {"policy": "threshold", "ratio": 0.45},
    "noise": {"kind": "pcm", "sigma_r_us": 0.2, "scale": 2.0},
    "run": {"trials": 12, "n_max": 50, "master_seed": 9}
  })");
  const auto c = experiment_config_from_json(j);
  EXPECT_EQ(c.d, 512U);
  EXPECT_EQ(c.trials, 12U);
  const auto& p = std::get<PcmNoise>(c.factorizer.backend);
  EXPECT_DOUBLE_EQ(p.params.sigma_r_us, 0.4);
  EXPECT_DOUBLE_EQ(p.params.sigma_p_us, 2.0 * 1.1636);
  const auto fc = c.resolve();
  EXPECT_NEAR(fc.activation.t, k_to_threshold(10.3, 64, 512), 1e-15);
  EXPECT_EQ(fc.n_max, 50U);
  EXPECT_DOUBLE_EQ(fc.convergence_ratio, 0.45);
}

TEST(Config, Errors) {
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"problme": {}})")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"noise": {"kind": "laser"}})")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"problem": {"d": "x"}})")), ConfigError);
  auto c = small_config();
  c.n_max = 10000;  // 10000 * 16 * 3 > 16^3
  EXPECT_THROW(c.resolve(), ConfigError);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), IoError);
}

TEST(Config, HashChangesWithEveryField) {
  const auto base = small_config();
  const auto h = config_hash(base);
  EXPECT_EQ(h, config_hash(small_config()));
  std::vector<ExperimentConfig> variants(8, base);
  variants[0].d = 128;
  variants[1].m = 17;
  variants[2].activation_k = 3.5;
  variants[3].factorizer.convergence_ratio = 0.6;
  variants[4].factorizer.backend = AdditiveGaussianNoise{0.01};
  variants[5].trials = 25;
  variants[6].master_seed = 78;
  variants[7].corruption = 0.1;
  for (const auto& v : variants) EXPECT_NE(config_hash(v), h);
  auto w = base;
  w.workers = 8;  // scheduling only
  EXPECT_EQ(config_hash(w), h);
}

TEST(Trials, SingleCandidate) {
  auto c = small_config();
  c.m = 1;
  c.trials = 10;
  const auto s = run_trials(c);
  EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_iterations_all, 1.0);
  EXPECT_EQ(s.records.size(), 10U);
}

TEST(Trials, ReplayIsIndependentOfWorkerCount) {
  auto c = small_config();
  c.factorizer.backend = PcmNoise{};
  const auto one = run_trials(c);
  c.workers = 3;
  const auto three = run_trials(c);
  EXPECT_EQ(one.records, three.records);
  EXPECT_GE(one.accuracy, 0.5);
}

TEST(Trials, AccuracyCountsNonConvergedAsWrong) {
  std::vector<TrialRecord> recs(4);
  recs[0] = {0, 0, true, true, 10, 0, {1}, {1}};
  recs[1] = {1, 0, true, false, 20, 0, {1}, {2}};
  recs[2] = {2, 0, false, false, 100, 0, {1}, {1}};
  recs[3] = {3, 0, true, true, 30, 0, {1}, {1}};
  const auto s = summarize(recs);
  EXPECT_DOUBLE_EQ(s.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(s.convergence_rate, 0.75);
  EXPECT_DOUBLE_EQ(s.mean_iterations_all, 40.0);
  EXPECT_DOUBLE_EQ(s.mean_iterations_converged, 20.0);
  EXPECT_DOUBLE_EQ(s.median_iterations_converged, 20.0);
}

TEST(Sweeps, SinglePointCapacitySweepEqualsRun) {
  const auto c = small_config();
  const auto t = capacity_sweep(c, {16});
  ASSERT_EQ(t.points.size(), 1U);
  EXPECT_EQ(t.points[0].summary.records, run_trials(c).records);
  EXPECT_DOUBLE_EQ(t.points[0].brute_force_ops, 4096.0);
}

TEST(Sweeps, NoiseSweepNeedsPcm) {
  EXPECT_THROW(noise_sweep(small_config(), {1.0}), ConfigError);
  auto c = small_config();
  c.factorizer.backend = PcmNoise{};
  c.trials = 4;
  const auto t = noise_sweep(c, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(t.points[0].sigma_total_us, 0.0);
  EXPECT_NEAR(t.points[1].sigma_total_us, 1.0534576580622663, 1e-12);
}

TEST(Sweeps, CorruptionCurveIsNonIncreasing) {
  auto c = small_config();
  c.trials = 40;
  const auto t = corruption_sweep(c, {0.0, 0.15, 0.3, 0.45});
  for (std::size_t i = 1; i < t.points.size(); ++i) {
    EXPECT_LE(t.points[i].summary.accuracy, t.points[i - 1].summary.accuracy + 0.05);
  }
  EXPECT_LT(t.points.back().summary.accuracy, t.points.front().summary.accuracy);
}

TEST(Ingest, RoundTripReproducesGeneratorAccuracy) {
  const auto c = small_config();
  const auto cbs = experiment_codebooks(c);
  const auto qs = synthesize_queries(c, cbs);
  const auto path = temp_path("queries.txt");
  write_query_file(path, c.d, c.f, qs);
  const auto in = ingest_queries(path);
  EXPECT_EQ(in.d, c.d);
  EXPECT_EQ(in.f, c.f);
  ASSERT_EQ(in.queries.size(), qs.size());
  EXPECT_TRUE(in.warnings.empty());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(in.queries[i].product, qs[i].product);
    EXPECT_EQ(in.queries[i].truth, qs[i].truth);
  }
  EXPECT_EQ(run_queries(c, cbs, in.queries).records, run_trials(c).records);
  std::remove(path.c_str());
}

TEST(Ingest, RealValuesAreBipolarizedWithWarning) {
  std::istringstream in("#holofactor v1 d=4 f=2\n1 -1 0 0.5 | 0 1\n-1 -1 1 1\n");
  const auto r = parse_queries(in, 5);
  ASSERT_EQ(r.queries.size(), 2U);
  EXPECT_EQ(r.warnings.size(), 1U);
  EXPECT_EQ(r.queries[0].product[0], 1);
  EXPECT_EQ(r.queries[0].product[3], 1);
  EXPECT_EQ(r.queries[0].truth, (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(r.queries[1].truth.empty());
  std::istringstream again("#holofactor v1 d=4 f=2\n1 -1 0 0.5 | 0 1\n-1 -1 1 1\n");
  EXPECT_EQ(parse_queries(again, 5).queries[0].product, r.queries[0].product);
}

TEST(Ingest, ErrorsCarryLineNumbers) {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      parse_queries(in);
      ADD_FAILURE() << "no error for " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("#holofactor v1 d=3 f=2\n1 1 1\n1 x 1\n", "line 3");
  expect_error("#holofactor v1 d=3 f=2\n1 1\n", "expected 3 entries");
  expect_error("#holofactor v1 d=3 f=2\n1 1 1 | 4\n", "truth indices");
  expect_error("1 1 1\n", "header");
  EXPECT_THROW(ingest_queries("/nonexistent/q.txt"), IoError);
}

TEST(Export, CsvParsesAsNumbers) {
  auto c = small_config();
  c.trials = 6;
  const auto t = capacity_sweep(c, {8, 16});
  std::stringstream ss;
  write_csv(ss, t, c);
  const std::string text = ss.str();
  EXPECT_NE(text.find("config_hash=" + config_hash(c)), std::string::npos);
  EXPECT_NE(text.find("master_seed=77"), std::string::npos);
  std::vector<std::string> labels;
  const auto rows = read_csv_rows(ss, &labels);
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_EQ(labels[1], "m=16");
  EXPECT_DOUBLE_EQ(rows[1][0], 16.0);
  EXPECT_DOUBLE_EQ(rows[1][4], t.points[1].summary.accuracy);
  EXPECT_DOUBLE_EQ(rows[1][6], t.points[1].summary.mean_iterations_all);
}

TEST(Export, JsonlRoundTripGivesEqualSummary) {
  auto c = small_config();
  c.trials = 8;
  const auto t = capacity_sweep(c, {8, 16});
  const auto path = temp_path("out.jsonl");
  export_table(t, c, path, ExportFormat::jsonl);
  std::ifstream in(path);
  const auto back = read_jsonl(in);
  EXPECT_EQ(back.config_hash, config_hash(c));
  EXPECT_EQ(back.master_seed, 77U);
  ASSERT_EQ(back.summaries.size(), 2U);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = t.points[i].summary;
    const auto& b = back.summaries[i];
    EXPECT_EQ(a.records, b.records);
    EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
    EXPECT_DOUBLE_EQ(a.mean_iterations_all, b.mean_iterations_all);
    EXPECT_DOUBLE_EQ(a.wall_time_s, b.wall_time_s);
  }
  std::remove(path.c_str());
  EXPECT_THROW(export_table(t, c, "/nonexistent/dir/out.csv", ExportFormat::csv), IoError);
}
