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

#pragma once

// Experiment orchestration: configuration, trial batches, sweeps, query-file
// ingestion and result export.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <locale>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "holofactor/activation.hpp"
#include "holofactor/factorizer.hpp"
#include "holofactor/noise.hpp"
#include "holofactor/oracle.hpp"
#include "holofactor/rng.hpp"
#include "holofactor/vsa.hpp"

namespace holofactor {

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::size_t d = 256;
  std::size_t m = 256;
  std::size_t f = 3;

  // Activation as written in the file; `k` is converted for threshold kinds.
  ActivationKind activation = ActivationKind::threshold;
  std::optional<double> activation_k = 8.34;
  std::optional<double> activation_t;

  FactorizerConfig factorizer{};  // activation and n_max are filled by resolve()
  std::optional<std::uint64_t> n_max;  // empty: max_iterations(M, F)

  std::size_t trials = 500;
  std::uint64_t master_seed = 1;
  double corruption = 0.0;
  bool shared_queries = false;  // queries depend on the master seed only
  std::size_t workers = 0;      // 0: hardware concurrency

  /// Activation spec in normalized units.
  ActivationSpec activation_spec() const {
    switch (activation) {
      case ActivationKind::identity: return ActivationSpec::identity();
      case ActivationKind::top_k:
        if (!activation_k) throw ConfigError("top_k activation needs k");
        return ActivationSpec::top_k(static_cast<std::size_t>(*activation_k));
      case ActivationKind::threshold:
        if (activation_t) return ActivationSpec::threshold(*activation_t);
        if (!activation_k) throw ConfigError("threshold activation needs k or t");
        if (m == 1) return ActivationSpec::threshold(0.0);  // nothing to select
        return ActivationSpec::threshold(k_to_threshold(*activation_k, m, d));
    }
    throw ConfigError("unknown activation");
  }

  /// Factorizer configuration with activation and iteration cap resolved.
  FactorizerConfig resolve() const {
    if (d == 0 || m == 0 || f < 2) throw ConfigError("problem needs d >= 1, m >= 1, f >= 2");
    if (trials == 0) throw ConfigError("trials must be positive");
    if (!(corruption >= 0.0 && corruption <= 0.5)) throw ConfigError("corruption must lie in [0, 0.5]");
    FactorizerConfig c = factorizer;
    try {
      c.activation = activation_spec();
      c.n_max = n_max ? *n_max : (m >= 2 ? max_iterations(m, f) : 1);
      c.validate(m, f);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return c;
  }
};

namespace detail {

inline const char* to_string(ReadNoiseModel m) {
  return m == ReadNoiseModel::aggregated ? "aggregated" : "per_device";
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; })) {
      throw ConfigError("unknown key '" + k + "' in " + where);
    }
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json act{{"kind", to_string(c.activation)}};
  if (c.activation_k) act["k"] = *c.activation_k;
  if (c.activation_t) act["t"] = *c.activation_t;
  json noise;
  if (std::holds_alternative<ExactNoise>(c.factorizer.backend)) {
    noise = {{"kind", "exact"}};
  } else if (const auto* a = std::get_if<AdditiveGaussianNoise>(&c.factorizer.backend)) {
    noise = {{"kind", "additive"}, {"sigma_out", a->sigma_out}};
  } else {
    const auto& p = std::get<PcmNoise>(c.factorizer.backend);
    noise = {{"kind", "pcm"},
             {"g_tar_us", p.params.g_tar_us},
             {"t0_s", p.params.t0_s},
             {"sigma_p_us", p.params.sigma_p_us},
             {"sigma_r_us", p.params.sigma_r_us},
             {"sigma_nu", p.params.sigma_nu},
             {"nu", p.params.nu},
             {"read_time_s", p.read_time_s},
             {"shared_array", p.shared_array},
             {"read_model", detail::to_string(p.read_model)}};
  }
  json run{{"trials", c.trials},
           {"master_seed", c.master_seed},
           {"update", to_string(c.factorizer.update)},
           {"multiplex", c.factorizer.multiplex},
           {"corruption", c.corruption},
           {"shared_queries", c.shared_queries}};
  run["n_max"] = c.n_max ? json(*c.n_max) : json(nullptr);
  return {{"problem", {{"d", c.d}, {"m", c.m}, {"f", c.f}}},
          {"activation", act},
          {"convergence", {{"policy", to_string(c.factorizer.convergence)},
                           {"ratio", c.factorizer.convergence_ratio}}},
          {"noise", noise},
          {"run", run}};
}

/// Parses the JSON config. Missing keys keep their defaults.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown(j, {"problem", "activation", "convergence", "noise", "run"}, "config");
    if (j.contains("problem")) {
      const auto& p = j.at("problem");
      detail::reject_unknown(p, {"d", "m", "f"}, "problem");
      c.d = detail::get_or<std::size_t>(p, "d", c.d);
      c.m = detail::get_or<std::size_t>(p, "m", c.m);
      c.f = detail::get_or<std::size_t>(p, "f", c.f);
    }
    if (j.contains("activation")) {
      const auto& a = j.at("activation");
      detail::reject_unknown(a, {"kind", "k", "t"}, "activation");
      c.activation = activation_kind_from_string(detail::get_or<std::string>(a, "kind", "threshold"));
      c.activation_k = a.contains("k") ? std::optional<double>(a.at("k").get<double>()) : std::nullopt;
      c.activation_t = a.contains("t") ? std::optional<double>(a.at("t").get<double>()) : std::nullopt;
      if (c.activation_k && c.activation_t) throw ConfigError("activation: give k or t, not both");
    }
    if (j.contains("convergence")) {
      const auto& v = j.at("convergence");
      detail::reject_unknown(v, {"policy", "ratio"}, "convergence");
      c.factorizer.convergence = convergence_policy_from_string(detail::get_or<std::string>(v, "policy", "threshold"));
      c.factorizer.convergence_ratio = detail::get_or<double>(v, "ratio", 0.5);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      const auto kind = detail::get_or<std::string>(n, "kind", "exact");
      if (kind == "exact") {
        detail::reject_unknown(n, {"kind"}, "noise");
        c.factorizer.backend = ExactNoise{};
      } else if (kind == "additive") {
        detail::reject_unknown(n, {"kind", "sigma_out"}, "noise");
        c.factorizer.backend = AdditiveGaussianNoise{detail::get_or<double>(n, "sigma_out", 0.0)};
      } else if (kind == "pcm") {
        detail::reject_unknown(n, {"kind", "g_tar_us", "t0_s", "sigma_p_us", "sigma_r_us", "sigma_nu", "nu",
                                   "read_time_s", "shared_array", "read_model", "scale"},
                               "noise");
        PcmNoise p;
        p.params.g_tar_us = detail::get_or(n, "g_tar_us", p.params.g_tar_us);
        p.params.t0_s = detail::get_or(n, "t0_s", p.params.t0_s);
        p.params.sigma_p_us = detail::get_or(n, "sigma_p_us", p.params.sigma_p_us);
        p.params.sigma_r_us = detail::get_or(n, "sigma_r_us", p.params.sigma_r_us);
        p.params.sigma_nu = detail::get_or(n, "sigma_nu", p.params.sigma_nu);
        p.params.nu = detail::get_or(n, "nu", p.params.nu);
        p.params = scaled_pcm_params(detail::get_or(n, "scale", 1.0), p.params);
        p.read_time_s = detail::get_or(n, "read_time_s", p.read_time_s);
        p.shared_array = detail::get_or(n, "shared_array", p.shared_array);
        const auto model = detail::get_or<std::string>(n, "read_model", "aggregated");
        if (model == "aggregated") {
          p.read_model = ReadNoiseModel::aggregated;
        } else if (model == "per_device") {
          p.read_model = ReadNoiseModel::per_device;
        } else {
          throw ConfigError("noise: unknown read_model '" + model + "'");
        }
        c.factorizer.backend = p;
      } else {
        throw ConfigError("noise: unknown kind '" + kind + "'");
      }
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      detail::reject_unknown(r, {"trials", "n_max", "master_seed", "update", "multiplex", "corruption",
                                 "shared_queries", "workers"},
                             "run");
      c.trials = detail::get_or<std::size_t>(r, "trials", c.trials);
      if (r.contains("n_max") && !r.at("n_max").is_null()) c.n_max = r.at("n_max").get<std::uint64_t>();
      c.master_seed = detail::get_or<std::uint64_t>(r, "master_seed", c.master_seed);
      c.factorizer.update = update_policy_from_string(detail::get_or<std::string>(r, "update", "sequential"));
      c.factorizer.multiplex = detail::get_or<bool>(r, "multiplex", false);
      c.corruption = detail::get_or<double>(r, "corruption", 0.0);
      c.shared_queries = detail::get_or<bool>(r, "shared_queries", false);
      c.workers = detail::get_or<std::size_t>(r, "workers", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return experiment_config_from_json(j);
}

/// FNV-1a over the canonical (key-sorted) JSON form; hex encoded.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Stream labels for split_seed(master, .).
inline constexpr std::uint64_t kCodebookStream = 0xC0DEB00CULL;
inline constexpr std::uint64_t kProgrammingStream = 0x9806A3ULL;
inline constexpr std::uint64_t kQueryStream = 0x0DE5ULL;
inline constexpr std::uint64_t kTrialStream = 0x7121A1ULL;

/// Codebooks of an experiment; fixed by (master seed, problem, multiplex).
inline std::vector<Codebook> experiment_codebooks(const ExperimentConfig& c) {
  const std::uint64_t base = split_seed(c.master_seed, kCodebookStream);
  if (c.factorizer.multiplex) return multiplexed_codebooks(random_codebook(c.m, c.d, base, 1), c.f);
  std::vector<Codebook> cbs;
  for (std::size_t f = 0; f < c.f; ++f) cbs.push_back(random_codebook(c.m, c.d, split_seed(base, f), f + 1));
  return cbs;
}

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  bool correct = false;
  std::uint64_t iterations = 0;
  std::uint64_t op_count = 0;
  std::vector<std::size_t> truth;  // empty for ingested queries without truth
  std::vector<std::size_t> predicted;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct TrialSummary {
  std::size_t trials = 0;
  double accuracy = 0.0;  // non-converged trials count as wrong
  double convergence_rate = 0.0;
  double mean_iterations_all = 0.0;
  double median_iterations_all = 0.0;
  double mean_iterations_converged = 0.0;  // NaN if nothing converged
  double median_iterations_converged = 0.0;
  double mean_op_count = 0.0;
  double wall_time_s = 0.0;
  std::vector<TrialRecord> records;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Runs body(i) for i in [0, n) over `workers` threads.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Aggregates per-trial records (records keep their order).
inline TrialSummary summarize(std::vector<TrialRecord> records, double wall_time_s = 0.0) {
  TrialSummary s;
  s.trials = records.size();
  std::vector<double> all;
  std::vector<double> conv;
  double ops = 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    all.push_back(static_cast<double>(r.iterations));
    if (r.converged) conv.push_back(static_cast<double>(r.iterations));
    correct += r.correct ? 1 : 0;
    ops += static_cast<double>(r.op_count);
  }
  const auto n = static_cast<double>(std::max<std::size_t>(s.trials, 1));
  s.accuracy = static_cast<double>(correct) / n;
  s.convergence_rate = static_cast<double>(conv.size()) / n;
  s.mean_iterations_all = detail::mean(all);
  s.median_iterations_all = detail::median(all);
  s.mean_iterations_converged = detail::mean(conv);
  s.median_iterations_converged = detail::median(conv);
  s.mean_op_count = ops / n;
  s.wall_time_s = wall_time_s;
  s.records = std::move(records);
  return s;
}

struct QueryRecord {
  Hypervector product;
  std::vector<std::size_t> truth;  // empty when unknown
};

/// Runs the factorizer on given queries. Trial i uses split_seed(trial master, i),
/// so results do not depend on the worker count.
inline TrialSummary run_queries(const ExperimentConfig& cfg, const std::vector<Codebook>& codebooks,
                                const std::vector<QueryRecord>& queries) {
  const FactorizerConfig fc = cfg.resolve();
  const auto t0 = std::chrono::steady_clock::now();
  Rng programming(split_seed(cfg.master_seed, kProgrammingStream));
  const Factorizer engine(codebooks, fc, programming);
  const std::uint64_t trial_master = split_seed(cfg.master_seed, kTrialStream);
  std::vector<TrialRecord> records(queries.size());
  detail::parallel_for(queries.size(), cfg.workers, [&](std::size_t i) {
    TrialRecord r;
    r.index = i;
    r.seed = split_seed(trial_master, i);
    Rng rng(r.seed);
    const auto res = engine.factorize(queries[i].product, rng);
    r.converged = res.converged;
    r.iterations = res.iterations;
    r.op_count = res.op_count;
    r.predicted = res.predicted;
    r.truth = queries[i].truth;
    r.correct = res.converged && !r.truth.empty() && res.predicted == r.truth;
    records[i] = std::move(r);
  });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summarize(std::move(records), wall);
}

/// Fresh random queries (uniform truth indices) for every trial.
inline std::vector<QueryRecord> synthesize_queries(const ExperimentConfig& cfg,
                                                   const std::vector<Codebook>& codebooks) {
  std::uint64_t qmaster = split_seed(cfg.master_seed, kQueryStream);
  if (!cfg.shared_queries) qmaster = split_seed(qmaster, std::stoull(config_hash(cfg), nullptr, 16));
  std::vector<QueryRecord> qs;
  qs.reserve(cfg.trials);
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    Rng rng(split_seed(qmaster, i));
    auto q = random_query(codebooks, cfg.corruption, rng);
    qs.push_back({std::move(q.product), std::move(q.truth)});
  }
  return qs;
}

inline TrialSummary run_trials(const ExperimentConfig& cfg) {
  cfg.resolve();
  const auto cbs = experiment_codebooks(cfg);
  return run_queries(cfg, cbs, synthesize_queries(cfg, cbs));
}

struct SweepPoint {
  std::string label;
  double value = 0.0;
  ExperimentConfig config;
  TrialSummary summary;
  double sigma_total_us = std::nan("");     // noise sweeps
  double brute_force_ops = std::nan("");    // M^F dot products
};

struct SweepTable {
  std::string axis;
  std::vector<SweepPoint> points;
};

/// Accuracy and iterations per codebook size M. The iteration cap follows
/// max_iterations(M, F) unless the base config pins one.
inline SweepTable capacity_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& ms) {
  SweepTable t{"m", {}};
  for (std::size_t m : ms) {
    ExperimentConfig c = base;
    c.m = m;
    const auto total = checked_pow(m, c.f);
    if (!total) throw BudgetError("capacity_sweep: M^F overflows for M = " + std::to_string(m));
    SweepPoint p{"m=" + std::to_string(m), static_cast<double>(m), c, run_trials(c)};
    p.brute_force_ops = static_cast<double>(*total);
    t.points.push_back(std::move(p));
  }
  return t;
}

/// Largest M^F among points with accuracy >= `target`; 0 when none qualifies.
inline double operational_capacity(const SweepTable& t, double target = 0.99) {
  double best = 0.0;
  for (const auto& p : t.points) {
    if (p.summary.accuracy >= target) best = std::max(best, p.brute_force_ops);
  }
  return best;
}

/// Scales sigma_p and sigma_r of the PCM backend; reports the aggregated sigma.
inline SweepTable noise_sweep(const ExperimentConfig& base, const std::vector<double>& scales) {
  const auto* pcm = std::get_if<PcmNoise>(&base.factorizer.backend);
  if (!pcm) throw ConfigError("noise_sweep needs the pcm backend");
  SweepTable t{"scale", {}};
  for (double s : scales) {
    ExperimentConfig c = base;
    PcmNoise p = *pcm;
    p.params = scaled_pcm_params(s, pcm->params);
    c.factorizer.backend = p;
    std::ostringstream label;
    label << "scale=" << s;
    SweepPoint pt{label.str(), s, c, run_trials(c)};
    pt.sigma_total_us = aggregated_sigma(p.params, p.read_time_s);
    t.points.push_back(std::move(pt));
  }
  return t;
}

enum class NoiseComponent { read, programming };

/// Sweeps one PCM noise component with the other one switched off.
inline SweepTable component_sweep(const ExperimentConfig& base, NoiseComponent which,
                                  const std::vector<double>& sigmas_us) {
  const auto* pcm = std::get_if<PcmNoise>(&base.factorizer.backend);
  if (!pcm) throw ConfigError("component_sweep needs the pcm backend");
  SweepTable t{which == NoiseComponent::read ? "sigma_r_us" : "sigma_p_us", {}};
  for (double s : sigmas_us) {
    ExperimentConfig c = base;
    PcmNoise p = *pcm;
    p.params.sigma_r_us = which == NoiseComponent::read ? s : 0.0;
    p.params.sigma_p_us = which == NoiseComponent::programming ? s : 0.0;
    c.factorizer.backend = p;
    std::ostringstream label;
    label << t.axis << "=" << s;
    SweepPoint pt{label.str(), s, c, run_trials(c)};
    pt.sigma_total_us = aggregated_sigma(p.params, p.read_time_s);
    t.points.push_back(std::move(pt));
  }
  return t;
}

/// Accuracy against the sign-flip fraction of the queries.
inline SweepTable corruption_sweep(const ExperimentConfig& base, const std::vector<double>& fractions) {
  SweepTable t{"corruption", {}};
  for (double fr : fractions) {
    ExperimentConfig c = base;
    c.corruption = fr;
    c.shared_queries = true;
    std::ostringstream label;
    label << "corruption=" << fr;
    t.points.push_back({label.str(), fr, c, run_trials(c)});
  }
  return t;
}

/// Matched-seed comparisons: activation kinds, per-component noise, shared vs
/// separate arrays. Every row shares the base query set.
inline SweepTable ablation_suite(const ExperimentConfig& base, const std::vector<double>& read_sigmas_us,
                                 const std::vector<double>& prog_sigmas_us) {
  ExperimentConfig b = base;
  b.shared_queries = true;
  SweepTable t{"ablation", {}};
  auto add = [&](const std::string& label, double value, const ExperimentConfig& c) {
    t.points.push_back({label, value, c, run_trials(c)});
  };
  const double k = base.activation_k.value_or(8.34);
  {
    ExperimentConfig c = b;
    c.activation = ActivationKind::identity;
    add("activation=identity", 0.0, c);
    c.activation = ActivationKind::top_k;
    c.activation_k = std::max(1.0, std::round(k));
    c.activation_t.reset();
    add("activation=top_k", *c.activation_k, c);
    c.activation = ActivationKind::threshold;
    c.activation_k = k;
    add("activation=threshold", k, c);
  }
  if (const auto* pcm = std::get_if<PcmNoise>(&b.factorizer.backend)) {
    for (const auto& pt : component_sweep(b, NoiseComponent::read, read_sigmas_us).points) {
      t.points.push_back(pt);
    }
    for (const auto& pt : component_sweep(b, NoiseComponent::programming, prog_sigmas_us).points) {
      t.points.push_back(pt);
    }
    for (bool shared : {true, false}) {
      ExperimentConfig c = b;
      PcmNoise p = *pcm;
      p.shared_array = shared;
      c.factorizer.backend = p;
      add(shared ? "arrays=shared" : "arrays=separate", shared ? 1.0 : 0.0, c);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Query files

struct IngestResult {
  std::size_t d = 0;
  std::size_t f = 0;
  std::vector<QueryRecord> queries;
  std::vector<std::string> warnings;
};

/// Parses a query file. Real-valued entries are bipolarized by sign, zeros
/// broken with Rng(tie_seed); each such line adds a warning.
inline IngestResult parse_queries(std::istream& in, std::uint64_t tie_seed = 0) {
  IngestResult res;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  Rng ties(tie_seed);
  auto fail = [&](const std::string& msg) {
    throw ConfigError("query file line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header) {
      std::istringstream hs(line);
      std::string magic;
      std::string version;
      hs >> magic >> version;
      if (magic != "#holofactor" || version != "v1") fail("expected header '#holofactor v1 d=<D> f=<F>'");
      std::string kv;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail("bad header field '" + kv + "'");
        const auto key = kv.substr(0, eq);
        std::size_t value = 0;
        try {
          value = std::stoul(kv.substr(eq + 1));
        } catch (const std::exception&) {
          fail("bad header value '" + kv + "'");
        }
        if (key == "d") res.d = value;
        else if (key == "f") res.f = value;
        else fail("unknown header field '" + key + "'");
      }
      if (res.d == 0 || res.f == 0) fail("header needs positive d and f");
      header = true;
      continue;
    }
    if (line[0] == '#') continue;
    const auto bar = line.find('|');
    std::istringstream vs(line.substr(0, bar));
    std::vector<double> values;
    std::string tok;
    while (vs >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        fail("not a number: '" + tok + "'");
      }
      if (used != tok.size() || !std::isfinite(v)) fail("not a finite number: '" + tok + "'");
      values.push_back(v);
    }
    if (values.size() != res.d) {
      fail("expected " + std::to_string(res.d) + " entries, found " + std::to_string(values.size()));
    }
    QueryRecord q;
    const bool bipolar = std::all_of(values.begin(), values.end(), [](double v) { return v == 1.0 || v == -1.0; });
    if (!bipolar) {
      res.warnings.push_back("line " + std::to_string(lineno) + ": real-valued entries bipolarized (tie seed " +
                             std::to_string(tie_seed) + ")");
    }
    q.product = bipolarize(std::move(values), ties);
    if (bar != std::string::npos) {
      std::istringstream ts(line.substr(bar + 1));
      std::string t;
      while (ts >> t) {
        try {
          std::size_t used = 0;
          const auto idx = std::stoull(t, &used);
          if (used != t.size()) throw std::invalid_argument(t);
          q.truth.push_back(static_cast<std::size_t>(idx));
        } catch (const std::exception&) {
          fail("bad truth index '" + t + "'");
        }
      }
      if (q.truth.size() != res.f) {
        fail("expected " + std::to_string(res.f) + " truth indices, found " + std::to_string(q.truth.size()));
      }
    }
    res.queries.push_back(std::move(q));
  }
  if (!header) throw ConfigError("query file: missing header");
  return res;
}

inline IngestResult ingest_queries(const std::string& path, std::uint64_t tie_seed = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open query file '" + path + "'");
  return parse_queries(in, tie_seed);
}

inline void write_queries(std::ostream& out, std::size_t d, std::size_t f, const std::vector<QueryRecord>& qs) {
  out << "#holofactor v1 d=" << d << " f=" << f << "\n";
  for (const auto& q : qs) {
    detail::require_same_dim(q.product.dim(), d, "write_queries");
    for (std::size_t i = 0; i < d; ++i) out << (i ? " " : "") << static_cast<int>(q.product[i]);
    if (!q.truth.empty()) {
      out << " |";
      for (auto t : q.truth) out << " " << t;
    }
    out << "\n";
  }
}

inline void write_query_file(const std::string& path, std::size_t d, std::size_t f,
                             const std::vector<QueryRecord>& qs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write query file '" + path + "'");
  write_queries(out, d, f, qs);
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { csv, jsonl };

inline ExportFormat export_format_from_string(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "jsonl") return ExportFormat::jsonl;
  throw ConfigError("unknown format '" + s + "' (csv|jsonl)");
}

inline constexpr const char* kCsvColumns =
    "label,value,sigma_total_us,brute_force_ops,trials,accuracy,convergence_rate,mean_iterations_all,"
    "median_iterations_all,mean_iterations_converged,median_iterations_converged,mean_op_count,wall_time_s";

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v = 0.0;
  is >> v;
  if (is.fail()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

}  // namespace detail

/// CSV: two comment lines (config hash, master seed, column list), a header
/// row, then one row per sweep point.
inline void write_csv(std::ostream& out, const SweepTable& t, const ExperimentConfig& cfg) {
  out << "# holofactor sweep axis=" << t.axis << " config_hash=" << config_hash(cfg)
      << " master_seed=" << cfg.master_seed << "\n";
  out << "# columns: " << kCsvColumns << "\n";
  out << kCsvColumns << "\n";
  for (const auto& p : t.points) {
    const auto& s = p.summary;
    out << p.label << "," << detail::num(p.value) << "," << detail::num(p.sigma_total_us) << ","
        << detail::num(p.brute_force_ops) << "," << s.trials << "," << detail::num(s.accuracy) << ","
        << detail::num(s.convergence_rate) << "," << detail::num(s.mean_iterations_all) << ","
        << detail::num(s.median_iterations_all) << "," << detail::num(s.mean_iterations_converged) << ","
        << detail::num(s.median_iterations_converged) << "," << detail::num(s.mean_op_count) << ","
        << detail::num(s.wall_time_s) << "\n";
  }
}

inline nlohmann::json to_json(const TrialRecord& r) {
  return {{"index", r.index},         {"seed", r.seed},
          {"converged", r.converged}, {"correct", r.correct},
          {"iterations", r.iterations}, {"op_count", r.op_count},
          {"truth", r.truth},         {"predicted", r.predicted}};
}

inline TrialRecord trial_record_from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.converged = j.at("converged").get<bool>();
  r.correct = j.at("correct").get<bool>();
  r.iterations = j.at("iterations").get<std::uint64_t>();
  r.op_count = j.at("op_count").get<std::uint64_t>();
  r.truth = j.at("truth").get<std::vector<std::size_t>>();
  r.predicted = j.at("predicted").get<std::vector<std::size_t>>();
  return r;
}

/// JSON lines: a header record with config, hash and seed, then one record
/// per trial tagged with its sweep point label.
inline void write_jsonl(std::ostream& out, const SweepTable& t, const ExperimentConfig& cfg) {
  out << nlohmann::json{{"type", "header"},
                        {"axis", t.axis},
                        {"config_hash", config_hash(cfg)},
                        {"master_seed", cfg.master_seed},
                        {"config", to_json(cfg)}}
             .dump()
      << "\n";
  for (const auto& p : t.points) {
    out << nlohmann::json{{"type", "point"},
                          {"label", p.label},
                          {"value", p.value},
                          {"config_hash", config_hash(p.config)},
                          {"wall_time_s", p.summary.wall_time_s}}
               .dump()
        << "\n";
    for (const auto& r : p.summary.records) {
      auto j = to_json(r);
      j["type"] = "trial";
      j["label"] = p.label;
      out << j.dump() << "\n";
    }
  }
}

inline void export_table(const SweepTable& t, const ExperimentConfig& cfg, const std::string& path,
                         ExportFormat fmt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (fmt == ExportFormat::csv) {
    write_csv(out, t, cfg);
  } else {
    write_jsonl(out, t, cfg);
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct ImportedTable {
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string axis;
  std::vector<std::string> labels;
  std::vector<TrialSummary> summaries;  // per point, rebuilt from trial records
};

/// Reads a JSON-lines export back and re-aggregates the trial records.
inline ImportedTable read_jsonl(std::istream& in) {
  ImportedTable t;
  std::string line;
  std::vector<std::vector<TrialRecord>> recs;
  std::vector<double> walls;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        t.config_hash = j.at("config_hash").get<std::string>();
        t.master_seed = j.at("master_seed").get<std::uint64_t>();
        t.axis = j.at("axis").get<std::string>();
      } else if (type == "point") {
        t.labels.push_back(j.at("label").get<std::string>());
        walls.push_back(j.at("wall_time_s").get<double>());
        recs.emplace_back();
      } else if (type == "trial") {
        if (recs.empty()) throw ConfigError("trial record before any point record");
        recs.back().push_back(trial_record_from_json(j));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("jsonl line " + std::to_string(lineno) + ": " + e.what());
  }
  for (std::size_t i = 0; i < recs.size(); ++i) t.summaries.push_back(summarize(std::move(recs[i]), walls[i]));
  return t;
}

/// Reads the CSV rows back (summary columns only).
inline std::vector<std::vector<double>> read_csv_rows(std::istream& in, std::vector<std::string>* labels = nullptr) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != kCsvColumns) throw ConfigError("unexpected CSV header");
      seen_header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    if (labels) labels->push_back(cell);
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(detail::parse_num(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace holofactor
