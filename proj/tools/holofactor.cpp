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

// holofactor command line: trials, sweeps, ablations, tuning, brute force and
// query-file ingestion.
//
// exit codes: 0 ok, 1 usage/config error, 2 I/O error, 3 budget refusal

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "holofactor/harness.hpp"
#include "holofactor/hyperopt.hpp"
#include "holofactor/oracle.hpp"

namespace hf = holofactor;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> workers;
  std::string out;
  std::string format = "csv";
  bool full = false;
  bool shared_queries = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "master seed override");
  sub->add_option("--trials", c.trials, "trial count override");
  sub->add_option("--workers", c.workers, "worker threads (0: all cores)");
  sub->add_option("--out", c.out, "output file");
  sub->add_option("--format", c.format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  sub->add_flag("--full", c.full, "5,000 trials");
  sub->add_flag("--shared-queries", c.shared_queries, "draw queries from the master seed only");
}

hf::ExperimentConfig load(const Common& c) {
  hf::ExperimentConfig cfg = c.config.empty() ? hf::ExperimentConfig{} : hf::load_experiment_config(c.config);
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.full) cfg.trials = 5000;
  if (c.trials) cfg.trials = *c.trials;
  if (c.workers) cfg.workers = *c.workers;
  if (c.shared_queries) cfg.shared_queries = true;
  cfg.resolve();
  return cfg;
}

void print_table(const hf::SweepTable& t) {
  std::printf("%-28s %9s %9s %12s %12s %12s\n", "point", "accuracy", "conv", "iter(all)", "iter(conv)",
              "sigma_uS");
  for (const auto& p : t.points) {
    const auto& s = p.summary;
    std::printf("%-28s %9.4f %9.4f %12.1f %12.1f %12.4f\n", p.label.c_str(), s.accuracy, s.convergence_rate,
                s.mean_iterations_all, s.mean_iterations_converged, p.sigma_total_us);
  }
}

void emit(const hf::SweepTable& t, const hf::ExperimentConfig& cfg, const Common& c) {
  print_table(t);
  if (!c.out.empty()) hf::export_table(t, cfg, c.out, hf::export_format_from_string(c.format));
}

template <typename T>
std::vector<T> or_default(const std::vector<T>& v, std::vector<T> fallback) {
  return v.empty() ? fallback : v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"holofactor: stochastic resonator factorization of bipolar product vectors"};
  app.require_subcommand(1);

  Common run_c;
  std::string save_queries;
  auto* run = app.add_subcommand("run", "accuracy and iterations over random queries");
  add_common(run, run_c);
  run->add_option("--save-queries", save_queries, "also write the generated queries to this file");

  Common cap_c;
  std::vector<std::size_t> cap_ms;
  auto* cap = app.add_subcommand("sweep-capacity", "sweep the codebook size M");
  add_common(cap, cap_c);
  cap->add_option("--m", cap_ms, "codebook sizes (default 32 64 100)");

  Common noise_c;
  std::vector<double> scales;
  std::vector<double> sigmas;
  auto* noise = app.add_subcommand("sweep-noise", "scale the PCM programming and read noise");
  add_common(noise, noise_c);
  noise->add_option("--scale", scales, "noise scales");
  noise->add_option("--sigma", sigmas, "aggregated sigma points in uS (converted to scales)");

  Common abl_c;
  std::vector<double> read_sig;
  std::vector<double> prog_sig;
  auto* abl = app.add_subcommand("ablate", "activation, per-component noise and array-sharing ablations");
  add_common(abl, abl_c);
  abl->add_option("--read-sigma", read_sig, "read-noise-only points in uS");
  abl->add_option("--prog-sigma", prog_sig, "programming-noise-only points in uS");

  Common tune_c;
  std::size_t budget = 20;
  std::size_t eval_trials = 256;
  bool with_noise = false;
  auto* tune = app.add_subcommand("tune", "Bayesian optimization of T and the convergence ratio");
  add_common(tune, tune_c);
  tune->add_option("--budget", budget, "objective evaluations (>= 10)");
  tune->add_option("--eval-trials", eval_trials, "trials per evaluation");
  tune->add_flag("--with-noise", with_noise, "also tune an additive noise level");

  Common or_c;
  std::uint64_t bf_budget = hf::kDefaultBruteForceBudget;
  std::string or_queries;
  auto* orc = app.add_subcommand("oracle", "exhaustive brute-force factorization");
  add_common(orc, or_c);
  orc->add_option("--budget", bf_budget, "maximum number of combinations");
  orc->add_option("--queries", or_queries, "query file (default: random queries from the config)");

  Common ing_c;
  std::string ing_path;
  std::uint64_t tie_seed = 0;
  auto* ing = app.add_subcommand("ingest", "factorize the vectors of a query file");
  add_common(ing, ing_c);
  ing->add_option("queries", ing_path, "query file")->required();
  ing->add_option("--tie-seed", tie_seed, "seed for bipolarizing real-valued entries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      const auto cfg = load(run_c);
      const auto cbs = hf::experiment_codebooks(cfg);
      const auto qs = hf::synthesize_queries(cfg, cbs);
      if (!save_queries.empty()) hf::write_query_file(save_queries, cfg.d, cfg.f, qs);
      hf::SweepTable t{"run", {{"run", 0.0, cfg, hf::run_queries(cfg, cbs, qs)}}};
      std::printf("config_hash=%s master_seed=%llu\n", hf::config_hash(cfg).c_str(),
                  static_cast<unsigned long long>(cfg.master_seed));
      emit(t, cfg, run_c);
    } else if (cap->parsed()) {
      const auto cfg = load(cap_c);
      const auto t = hf::capacity_sweep(cfg, or_default(cap_ms, {32, 64, 100}));
      emit(t, cfg, cap_c);
      std::printf("operational capacity (largest M^F at >= 99%%): %.0f\n", hf::operational_capacity(t));
    } else if (noise->parsed()) {
      const auto cfg = load(noise_c);
      const auto* pcm = std::get_if<hf::PcmNoise>(&cfg.factorizer.backend);
      if (!pcm) throw hf::ConfigError("sweep-noise needs noise.kind = pcm");
      std::vector<double> s = scales;
      for (double sig : sigmas) s.push_back(hf::scale_for_aggregated_sigma(sig, pcm->params, pcm->read_time_s));
      if (s.empty()) s = {0.0, 0.5, 1.0, 2.0, 4.0};
      emit(hf::noise_sweep(cfg, s), cfg, noise_c);
    } else if (abl->parsed()) {
      const auto cfg = load(abl_c);
      emit(hf::ablation_suite(cfg, or_default(read_sig, {0.4, 0.921, 1.8}), or_default(prog_sig, {0.8, 1.629, 3.2})),
           cfg, abl_c);
    } else if (tune->parsed()) {
      const auto cfg = load(tune_c);
      hf::EvaluationOptions eo;
      eo.trials = eval_trials;
      eo.base = cfg.resolve();
      eo.codebook_seed = hf::split_seed(cfg.master_seed, hf::kCodebookStream);
      hf::Rng rng(cfg.master_seed);
      const hf::Problem problem{cfg.d, cfg.m, cfg.f};
      const auto res = hf::optimize(problem, hf::Box::factorizer_default(cfg.d, with_noise), budget, rng, eo);
      const auto j = hf::to_json(res);
      std::printf("T*=%.6f (K=%.3f) T_conv*=%.4f\n", res.best.t, res.activation_count, res.best.convergence_ratio);
      if (!tune_c.out.empty()) {
        std::ofstream out(tune_c.out);
        if (!out) throw hf::IoError("cannot write '" + tune_c.out + "'");
        out << j.dump(2) << "\n";
      } else {
        std::cout << j.dump(2) << "\n";
      }
    } else if (orc->parsed()) {
      const auto cfg = load(or_c);
      const auto cbs = hf::experiment_codebooks(cfg);
      std::vector<hf::QueryRecord> qs;
      if (!or_queries.empty()) {
        qs = hf::ingest_queries(or_queries).queries;
      } else {
        qs = hf::synthesize_queries(cfg, cbs);
      }
      std::size_t agree = 0;
      std::size_t with_truth = 0;
      for (const auto& q : qs) {
        const auto r = hf::brute_force(q.product, cbs, bf_budget);
        std::printf("sim=%.4f idx=", r.similarity);
        for (auto i : r.indices) std::printf("%zu ", i);
        std::printf("ops=%llu\n", static_cast<unsigned long long>(r.op_count));
        if (!q.truth.empty()) {
          ++with_truth;
          agree += r.indices == q.truth ? 1 : 0;
        }
      }
      if (with_truth > 0) std::printf("brute force matched truth on %zu/%zu queries\n", agree, with_truth);
    } else if (ing->parsed()) {
      const auto cfg = load(ing_c);
      const auto in = hf::ingest_queries(ing_path, tie_seed);
      for (const auto& w : in.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      if (in.d != cfg.d || in.f != cfg.f) {
        throw hf::ConfigError("query file has d=" + std::to_string(in.d) + " f=" + std::to_string(in.f) +
                              ", config has d=" + std::to_string(cfg.d) + " f=" + std::to_string(cfg.f));
      }
      hf::SweepTable t{"ingest", {{ing_path, 0.0, cfg, hf::run_queries(cfg, hf::experiment_codebooks(cfg), in.queries)}}};
      emit(t, cfg, ing_c);
    }
  } catch (const hf::BudgetError& e) {
    std::fprintf(stderr, "refused: %s\n", e.what());
    return 3;
  } catch (const hf::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
