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

// Bayesian optimization of factorizer hyperparameters: a Gaussian-process
// surrogate (RBF kernel) with expected-improvement acquisition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "holofactor/activation.hpp"
#include "holofactor/factorizer.hpp"
#include "holofactor/oracle.hpp"
#include "holofactor/rng.hpp"

namespace holofactor {

/// h = [T, T_convergence_ratio, (sigma_out)].
struct HyperPoint {
  double t = 0.0;
  double convergence_ratio = 0.5;
  std::optional<double> sigma_out;

  std::vector<double> to_vector() const {
    std::vector<double> v{t, convergence_ratio};
    if (sigma_out) v.push_back(*sigma_out);
    return v;
  }

  static HyperPoint from_vector(std::span<const double> v) {
    if (v.size() != 2 && v.size() != 3) throw std::invalid_argument("HyperPoint: need 2 or 3 coordinates");
    HyperPoint h{v[0], v[1], std::nullopt};
    if (v.size() == 3) h.sigma_out = v[2];
    return h;
  }

  friend bool operator==(const HyperPoint&, const HyperPoint&) = default;
};

struct Observation {
  HyperPoint point;
  double error_rate = 1.0;
  std::size_t trials = 0;
  std::uint64_t n_used = 0;
};

/// Axis-aligned search box.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dims() const noexcept { return lo.size(); }

  void validate() const {
    if (lo.empty() || lo.size() != hi.size()) throw std::invalid_argument("box: bad bounds");
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || !(lo[j] < hi[j])) {
        throw std::invalid_argument("box: need finite lo < hi in every dimension");
      }
    }
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dims()) return false;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!(x[j] >= lo[j] && x[j] <= hi[j])) return false;
    }
    return true;
  }

  /// T in [0, 4/sqrt(D)], ratio in [0.1, 0.9], optionally sigma_out in [0, 8/sqrt(D)].
  static Box factorizer_default(std::size_t d, bool with_noise) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    Box b{{0.0, 0.1}, {4.0 * s, 0.9}};
    if (with_noise) {
      b.lo.push_back(0.0);
      b.hi.push_back(8.0 * s);
    }
    return b;
  }
};

/// Minimization EI: (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma.
inline double expected_improvement(double mu, double sigma, double best) {
  const double gain = best - mu;
  if (!(sigma > 0.0)) return std::max(gain, 0.0);
  const double z = gain / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(gain * normal_cdf(z) + sigma * pdf, 0.0);
}

struct GpOptions {
  // Observation noise variance relative to the signal variance. Empty: pick
  // it together with the length-scales by marginal likelihood.
  std::optional<double> noise_ratio;
  std::vector<double> length_scale_grid{0.05, 0.1, 0.2, 0.35, 0.6, 1.0, 2.0};
  std::vector<double> noise_ratio_grid{1e-6, 1e-3, 1e-2, 0.05, 0.2};
  double jitter = 1e-8;
};

struct GpPrediction {
  double mean = 0.0;
  double stddev = 0.0;
};

/// GP regression with an RBF kernel on box-normalized inputs. The signal
/// variance is profiled out analytically; one length-scale per dimension and
/// the noise ratio come from a grid search on the log marginal likelihood.
class GaussianProcess {
 public:
  GaussianProcess(std::vector<std::vector<double>> x, std::vector<double> y, Box box, GpOptions opt = {})
      : box_(std::move(box)), opt_(std::move(opt)) {
    box_.validate();
    if (x.size() < 2 || x.size() != y.size()) {
      throw std::invalid_argument("gp_fit: need at least 2 observations with matching targets");
    }
    const std::size_t n = x.size();
    const std::size_t dims = box_.dims();
    x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i].size() != dims) throw std::invalid_argument("gp_fit: input dimension mismatch");
      const auto u = normalize(x[i]);
      for (std::size_t j = 0; j < dims; ++j) x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u[j];
    }
    y_mean_ = 0.0;
    for (double v : y) y_mean_ += v;
    y_mean_ /= static_cast<double>(n);
    y_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) y_(static_cast<Eigen::Index>(i)) = y[i] - y_mean_;
    select_hyperparameters();
  }

  GpPrediction predict(std::span<const double> x) const {
    const auto u = normalize(x);
    const Eigen::Index n = x_.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel_unit(x_.row(i), u, scales_);
    const double mean = y_mean_ + k.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    double var = signal_var_ * (1.0 - v.squaredNorm());
    if (var < 0.0) var = 0.0;
    return {mean, std::sqrt(var)};
  }

  double expected_improvement(std::span<const double> x, double best) const {
    const auto p = predict(x);
    return holofactor::expected_improvement(p.mean, p.stddev, best);
  }

  const std::vector<double>& length_scales() const noexcept { return scales_; }
  double signal_variance() const noexcept { return signal_var_; }
  double noise_ratio() const noexcept { return noise_ratio_; }
  double log_marginal_likelihood() const noexcept { return lml_; }

 private:
  std::vector<double> normalize(std::span<const double> x) const {
    std::vector<double> u(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) u[j] = (x[j] - box_.lo[j]) / (box_.hi[j] - box_.lo[j]);
    return u;
  }

  template <typename Row>
  static double kernel_unit(const Row& a, std::span<const double> b, const std::vector<double>& ls) {
    double s = 0.0;
    for (std::size_t j = 0; j < ls.size(); ++j) {
      const double dlt = (a(static_cast<Eigen::Index>(j)) - b[j]) / ls[j];
      s += dlt * dlt;
    }
    return std::exp(-0.5 * s);
  }

  // Unit-variance correlation matrix plus noise ratio and jitter.
  Eigen::MatrixXd correlation(const std::vector<double>& ls, double ratio, double jitter) const {
    const Eigen::Index n = x_.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < ls.size(); ++d) {
          const auto c = static_cast<Eigen::Index>(d);
          const double dlt = (x_(i, c) - x_(j, c)) / ls[d];
          s += dlt * dlt;
        }
        k(i, j) = k(j, i) = std::exp(-0.5 * s);
      }
      k(i, i) += ratio + jitter;
    }
    return k;
  }

  struct Fit {
    Eigen::LLT<Eigen::MatrixXd> chol;
    Eigen::VectorXd alpha;  // K^{-1} y, K the unit-variance correlation
    double signal_var = 1.0;
    double lml = -std::numeric_limits<double>::infinity();
  };

  // Factor with escalating jitter; empty when the matrix stays singular.
  std::optional<Fit> try_fit(const std::vector<double>& ls, double ratio) const {
    const auto n = static_cast<double>(x_.rows());
    for (double jitter = opt_.jitter; jitter <= 1e-2; jitter *= 10.0) {
      Fit f;
      f.chol.compute(correlation(ls, ratio, jitter));
      if (f.chol.info() != Eigen::Success) continue;
      f.alpha = f.chol.solve(y_);
      const double quad = y_.dot(f.alpha);
      f.signal_var = std::max(quad / n, 1e-12);
      double logdet = 0.0;
      const Eigen::MatrixXd l = f.chol.matrixL();
      for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
      f.lml = -0.5 * n * std::log(f.signal_var) - 0.5 * logdet - 0.5 * n;
      return f;
    }
    return std::nullopt;
  }

  void select_hyperparameters() {
    const std::size_t dims = box_.dims();
    std::vector<double> ratios = opt_.noise_ratio ? std::vector<double>{*opt_.noise_ratio}
                                                  : opt_.noise_ratio_grid;
    const std::size_t g = opt_.length_scale_grid.size();
    std::size_t combos = 1;
    for (std::size_t j = 0; j < dims; ++j) combos *= g;
    bool found = false;
    std::vector<double> ls(dims);
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t rem = c;
      for (std::size_t j = 0; j < dims; ++j) {
        ls[j] = opt_.length_scale_grid[rem % g];
        rem /= g;
      }
      for (double r : ratios) {
        auto f = try_fit(ls, r);
        if (!f || !(f->lml > lml_)) continue;
        found = true;
        lml_ = f->lml;
        scales_ = ls;
        noise_ratio_ = r;
        signal_var_ = f->signal_var;
        alpha_ = f->alpha;
        chol_ = std::move(f->chol);
      }
    }
    if (!found) throw std::runtime_error("gp_fit: kernel matrix singular even after jitter escalation");
  }

  Box box_;
  GpOptions opt_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double y_mean_ = 0.0;
  std::vector<double> scales_;
  double noise_ratio_ = 0.0;
  double signal_var_ = 1.0;
  double lml_ = -std::numeric_limits<double>::infinity();
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

struct OptimizerOptions {
  std::size_t initial_points = 8;
  std::size_t acquisition_samples = 1024;
  std::size_t average_best = 5;
  GpOptions gp{};
};

struct OptimizationRecord {
  std::vector<double> x;
  double value = 0.0;
};

struct OptimizationResult {
  std::vector<double> best;  // field-wise mean of the lowest-valued observations
  std::vector<OptimizationRecord> history;
};

/// Radical inverse in base `b`, the Halton building block.
inline double radical_inverse(std::uint64_t i, std::uint64_t b) {
  double f = 1.0;
  double r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(b);
    r += f * static_cast<double>(i % b);
    i /= b;
  }
  return r;
}

/// Minimizes `objective` over `box` with `budget` evaluations: a randomly
/// shifted Halton initial design, then GP fit and EI maximization over random
/// box samples. Returns the field-wise average of the best observations.
inline OptimizationResult minimize(const std::function<double(std::span<const double>)>& objective,
                                   const Box& box, std::size_t budget, Rng& rng,
                                   const OptimizerOptions& opt = {}) {
  box.validate();
  if (budget < 10) throw std::invalid_argument("optimize: budget must be at least 10");
  static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  const std::size_t dims = box.dims();
  if (dims > std::size(primes)) throw std::invalid_argument("optimize: at most 10 dimensions");

  OptimizationResult res;
  auto eval = [&](std::vector<double> x) {
    const double v = objective(x);
    res.history.push_back({std::move(x), v});
  };

  std::vector<double> shift(dims);
  for (auto& s : shift) s = rng.uniform();
  const std::size_t n_init = std::min(opt.initial_points, budget);
  for (std::size_t i = 0; i < n_init; ++i) {
    std::vector<double> x(dims);
    for (std::size_t j = 0; j < dims; ++j) {
      double u = radical_inverse(i + 1, primes[j]) + shift[j];
      u -= std::floor(u);
      x[j] = box.lo[j] + u * (box.hi[j] - box.lo[j]);
    }
    eval(std::move(x));
  }

  while (res.history.size() < budget) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : res.history) {
      xs.push_back(r.x);
      ys.push_back(r.value);
      best = std::min(best, r.value);
    }
    const GaussianProcess gp(std::move(xs), std::move(ys), box, opt.gp);
    std::vector<double> arg;
    double best_ei = -1.0;
    std::vector<double> x(dims);
    for (std::size_t s = 0; s < opt.acquisition_samples; ++s) {
      for (std::size_t j = 0; j < dims; ++j) x[j] = box.lo[j] + rng.uniform() * (box.hi[j] - box.lo[j]);
      const double ei = gp.expected_improvement(x, best);
      if (ei > best_ei) {
        best_ei = ei;
        arg = x;
      }
    }
    eval(std::move(arg));
  }

  std::vector<std::size_t> order(res.history.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return res.history[a].value < res.history[b].value;
  });
  const std::size_t k = std::min(opt.average_best, order.size());
  res.best.assign(dims, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < dims; ++j) res.best[j] += res.history[order[i]].x[j] / static_cast<double>(k);
  }
  return res;
}

struct Problem {
  std::size_t d = 256;
  std::size_t m = 256;
  std::size_t f = 3;
};

/// Reduced evaluation protocol.
struct EvaluationOptions {
  std::size_t trials = 256;
  std::uint64_t n_prime = 0;  // 0: max_iterations(M, F) / 10
  FactorizerConfig base{};    // activation, ratio and (with sigma_out) backend are overridden
  std::uint64_t codebook_seed = 1;
};

/// Error rate of the factorizer at `h` over `trials` random queries with the
/// iteration cap N'.
inline Observation evaluate(const HyperPoint& h, const Problem& problem, const EvaluationOptions& opt, Rng& rng) {
  if (opt.trials == 0) throw std::invalid_argument("evaluate: trials must be >= 1");
  FactorizerConfig cfg = opt.base;
  cfg.activation = ActivationSpec::threshold(h.t);
  cfg.convergence_ratio = h.convergence_ratio;
  if (h.sigma_out) cfg.backend = AdditiveGaussianNoise{*h.sigma_out};
  std::uint64_t n = opt.n_prime;
  if (n == 0) n = problem.m >= 2 ? std::max<std::uint64_t>(max_iterations(problem.m, problem.f) / 10, 1) : 1;
  cfg.n_max = n;
  std::vector<Codebook> cbs;
  for (std::size_t f = 0; f < problem.f; ++f) {
    cbs.push_back(random_codebook(problem.m, problem.d, split_seed(opt.codebook_seed, f), f + 1));
  }
  if (cfg.multiplex) cbs = multiplexed_codebooks(cbs.front(), problem.f);
  Rng programming(rng());
  const Factorizer engine(std::move(cbs), cfg, programming);
  const std::uint64_t master = rng();
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < opt.trials; ++i) {
    Rng trial(split_seed(master, i));
    const auto q = random_query(engine.codebooks(), 0.0, trial);
    const auto r = engine.factorize(q.product, trial);
    if (!r.converged || r.predicted != q.truth) ++wrong;
  }
  return {h, static_cast<double>(wrong) / static_cast<double>(opt.trials), opt.trials, n};
}

struct TuningResult {
  HyperPoint best;
  double activation_count = 0.0;  // threshold_to_k(best.t)
  std::vector<Observation> observations;
  Box box;
  Problem problem;
};

/// Bayesian optimization of h over `box` (2-D without noise level, 3-D with).
inline TuningResult optimize(const Problem& problem, const Box& box, std::size_t budget, Rng& rng,
                             const EvaluationOptions& eval_opt = {}, const OptimizerOptions& opt = {}) {
  TuningResult out;
  out.box = box;
  out.problem = problem;
  auto objective = [&](std::span<const double> x) {
    const auto obs = evaluate(HyperPoint::from_vector(x), problem, eval_opt, rng);
    out.observations.push_back(obs);
    return obs.error_rate;
  };
  const auto r = minimize(objective, box, budget, rng, opt);
  out.best = HyperPoint::from_vector(r.best);
  out.activation_count = threshold_to_k(out.best.t, problem.m, problem.d);
  return out;
}

inline nlohmann::json to_json(const HyperPoint& h) {
  nlohmann::json j{{"t", h.t}, {"convergence_ratio", h.convergence_ratio}};
  j["sigma_out"] = h.sigma_out ? nlohmann::json(*h.sigma_out) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const TuningResult& r) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : r.observations) {
    obs.push_back({{"point", to_json(o.point)},
                   {"error_rate", o.error_rate},
                   {"trials", o.trials},
                   {"n_used", o.n_used}});
  }
  return {{"problem", {{"d", r.problem.d}, {"m", r.problem.m}, {"f", r.problem.f}}},
          {"box", {{"lo", r.box.lo}, {"hi", r.box.hi}}},
          {"best", to_json(r.best)},
          {"activation_count", r.activation_count},
          {"observations", obs}};
}

}  // namespace holofactor
