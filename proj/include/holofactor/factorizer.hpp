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

// Resonator-style iterative factorizer.
//
// Each factor f keeps a bipolar estimate x^f. One iteration visits the factors
// in ascending order and, for each one,
//
//   1. unbinds the other factors' latest estimates from the product p,
//   2. (multiplexed crossbar) rotates the unbound vector by shift(f),
//   3. computes similarities alpha^f against codebook f (MVM),
//   4. applies the activation (identity, top-K or threshold),
//   5. projects back through the transposed codebook, undoes the rotation
//      and takes the sign.
//
// With the identity activation, the exact backend and fixed-point convergence
// this is the classic resonator network; sparse activations plus a stochastic
// backend give the in-memory variant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "holofactor/activation.hpp"
#include "holofactor/noise.hpp"
#include "holofactor/rng.hpp"
#include "holofactor/vsa.hpp"

namespace holofactor {

enum class UpdatePolicy { sequential, parallel };

// threshold:     every factor has a similarity above the convergence ratio
// threshold_any: at least one factor does
// fixed_point:   two consecutive estimate sets are identical
enum class ConvergencePolicy { threshold, threshold_any, fixed_point };

inline const char* to_string(UpdatePolicy p) {
  return p == UpdatePolicy::sequential ? "sequential" : "parallel";
}

inline const char* to_string(ConvergencePolicy p) {
  switch (p) {
    case ConvergencePolicy::threshold: return "threshold";
    case ConvergencePolicy::threshold_any: return "threshold_any";
    case ConvergencePolicy::fixed_point: return "fixed_point";
  }
  return "?";
}

inline ConvergencePolicy convergence_policy_from_string(const std::string& s) {
  if (s == "threshold") return ConvergencePolicy::threshold;
  if (s == "threshold_any") return ConvergencePolicy::threshold_any;
  if (s == "fixed_point") return ConvergencePolicy::fixed_point;
  throw std::invalid_argument("unknown convergence policy '" + s + "'");
}

inline UpdatePolicy update_policy_from_string(const std::string& s) {
  if (s == "sequential") return UpdatePolicy::sequential;
  if (s == "parallel") return UpdatePolicy::parallel;
  throw std::invalid_argument("unknown update policy '" + s + "'");
}

/// M^F with overflow reported as nullopt.
inline std::optional<std::uint64_t> checked_pow(std::uint64_t m, std::size_t f) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < f; ++i) {
    if (m != 0 && r > std::numeric_limits<std::uint64_t>::max() / m) return std::nullopt;
    r *= m;
  }
  return r;
}

/// Largest N with N * M * F < M^F, i.e. N < M^(F-1) / F.
inline std::uint64_t max_iterations(std::uint64_t m, std::size_t f) {
  if (m < 2 || f < 2) throw std::invalid_argument("max_iterations: need M >= 2 and F >= 2");
  const auto p = checked_pow(m, f - 1);
  if (!p) throw std::invalid_argument("max_iterations: M^(F-1) overflows 64 bits");
  const std::uint64_t q = *p / f;
  return (*p % f == 0) ? q - 1 : q;
}

/// N * M * F < M^F. Always true when M^F exceeds 64 bits and N*M*F does not.
inline bool within_iteration_budget(std::uint64_t n, std::uint64_t m, std::size_t f) {
  const auto total = checked_pow(m, f);
  const unsigned __int128 used = static_cast<unsigned __int128>(n) * m * f;
  if (!total) return used <= std::numeric_limits<std::uint64_t>::max();
  return used < *total;
}

/// Rotation applied to factor f (1-based) on a multiplexed crossbar.
inline std::ptrdiff_t shift_for_factor(std::size_t f) {
  if (f < 1) throw std::invalid_argument("shift_for_factor: factors are 1-based");
  return static_cast<std::ptrdiff_t>(f - 1);
}

/// Logical codebooks served by one physical crossbar holding `base`: factor f
/// sees every codevector rotated by -shift(f), so that rotating the query by
/// +shift(f) and searching `base` is the same similarity search.
inline std::vector<Codebook> multiplexed_codebooks(const Codebook& base, std::size_t num_factors) {
  std::vector<Codebook> out;
  out.reserve(num_factors);
  for (std::size_t f = 1; f <= num_factors; ++f) {
    std::vector<Hypervector> rows;
    rows.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      rows.push_back(circular_shift(base.vector(i), -shift_for_factor(f)));
    }
    out.emplace_back(std::move(rows), f, base.seed());
  }
  return out;
}

struct FactorizerConfig {
  ActivationSpec activation{};
  double convergence_ratio = 0.5;  // fraction of D, i.e. normalized similarity
  NoiseBackend backend = ExactNoise{};
  std::uint64_t n_max = 1000;
  UpdatePolicy update = UpdatePolicy::sequential;
  ConvergencePolicy convergence = ConvergencePolicy::threshold;
  bool multiplex = false;
  // Diagnostics.
  bool record_trace = false;
  std::size_t cycle_lmax = 0;  // > 0: keep an estimate history and look for limit cycles

  /// Checks ranges and the iteration budget N * M * F < M^F (problems with a
  /// single candidate per factor are exempt: there is nothing to search).
  void validate(std::size_t m, std::size_t f) const {
    activation.validate();
    holofactor::validate(backend);
    if (!(convergence_ratio >= 0.0 && convergence_ratio <= 1.0)) {
      throw std::invalid_argument("convergence ratio must lie in [0, 1]");
    }
    if (n_max == 0) throw std::invalid_argument("n_max must be positive");
    if (m >= 2 && !within_iteration_budget(n_max, m, f)) {
      throw std::invalid_argument("n_max = " + std::to_string(n_max) +
                                  " violates N*M*F < M^F for M = " + std::to_string(m) +
                                  ", F = " + std::to_string(f));
    }
  }
};

struct FactorizerState {
  std::vector<Hypervector> estimates;
  std::vector<Hypervector> previous;  // estimates before the last step
  std::vector<SimilarityVector> similarities;
  std::uint64_t iteration = 0;
  std::uint64_t op_count = 0;
};

struct FactorizationResult {
  bool converged = false;
  std::vector<std::size_t> predicted;
  std::uint64_t iterations = 0;
  std::uint64_t op_count = 0;
  std::vector<std::vector<double>> trace;  // per iteration, max similarity per factor
  std::optional<std::size_t> limit_cycle;
};

/// Superposition of every codevector, one estimate per factor.
inline std::vector<Hypervector> init_estimates(std::span<const Codebook> codebooks, Rng& rng) {
  if (codebooks.size() < 2) throw std::invalid_argument("init_estimates: need F >= 2");
  std::vector<Hypervector> out;
  out.reserve(codebooks.size());
  for (const auto& cb : codebooks) {
    const auto vs = cb.vectors();
    out.push_back(bundle(vs, rng));
  }
  return out;
}

/// p unbound from every estimate except factor f (0-based).
inline Hypervector unbind_estimate(const Hypervector& p, std::span<const Hypervector> estimates,
                                   std::size_t f) {
  if (f >= estimates.size()) throw std::invalid_argument("unbind_estimate: factor out of range");
  std::vector<std::int8_t> out(p.elements().begin(), p.elements().end());
  for (std::size_t g = 0; g < estimates.size(); ++g) {
    if (g == f) continue;
    detail::require_same_dim(estimates[g].dim(), out.size(), "unbind_estimate");
    const auto e = estimates[g].elements();
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = static_cast<std::int8_t>(out[d] * e[d]);
  }
  return Hypervector(std::move(out));
}

/// Convergence test on the similarities of the last sweep.
inline bool check_convergence(const FactorizerState& state, const FactorizerConfig& config) {
  if (state.iteration == 0) return false;
  switch (config.convergence) {
    case ConvergencePolicy::fixed_point:
      return state.previous == state.estimates;
    case ConvergencePolicy::threshold:
    case ConvergencePolicy::threshold_any: {
      const bool need_all = config.convergence == ConvergencePolicy::threshold;
      for (const auto& alpha : state.similarities) {
        const bool hit = std::any_of(alpha.begin(), alpha.end(),
                                     [&](double a) { return a > config.convergence_ratio; });
        if (need_all && !hit) return false;
        if (!need_all && hit) return true;
      }
      return need_all;
    }
  }
  return false;
}

/// Smallest l in [2, l_max] such that the last l entries repeat the l entries
/// before them and no shorter period does. A history ending in a fixed point
/// (last two entries equal) is not a cycle.
template <typename T>
std::optional<std::size_t> detect_limit_cycle(std::span<const T> history, std::size_t l_max) {
  const std::size_t n = history.size();
  if (n >= 2 && history[n - 1] == history[n - 2]) return std::nullopt;
  for (std::size_t l = 2; l <= l_max && 2 * l <= n; ++l) {
    bool periodic = true;
    for (std::size_t j = 0; j < l && periodic; ++j) {
      periodic = history[n - 1 - j] == history[n - 1 - j - l];
    }
    if (periodic) return l;
  }
  return std::nullopt;
}

template <typename T>
std::optional<std::size_t> detect_limit_cycle(const std::vector<T>& history, std::size_t l_max) {
  return detect_limit_cycle(std::span<const T>(history), l_max);
}

/// Compact fingerprint of a full estimate set, used for cycle bookkeeping.
inline std::uint64_t estimates_fingerprint(std::span<const Hypervector> estimates) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& e : estimates) {
    std::uint64_t word = 0;
    std::size_t bit = 0;
    for (const auto v : e.elements()) {
      word |= static_cast<std::uint64_t>(v < 0) << bit;
      if (++bit == 64) {
        h = mix64(h ^ word);
        word = 0;
        bit = 0;
      }
    }
    h = mix64(h ^ word ^ (bit << 56U));
  }
  return h;
}

/// Iterative factorizer bound to a fixed set of codebooks and programmed
/// crossbars. Immutable after construction; each call takes its own Rng, so
/// one instance may serve concurrent queries.
class Factorizer {
 public:
  /// Programs the backend's arrays from `programming_rng`. With
  /// `config.multiplex` the codebooks must come from multiplexed_codebooks()
  /// and a single crossbar holding codebooks[0] serves every factor.
  Factorizer(std::vector<Codebook> codebooks, FactorizerConfig config, Rng& programming_rng)
      : codebooks_(std::move(codebooks)), config_(std::move(config)) {
    if (codebooks_.size() < 2) throw std::invalid_argument("factorizer: need F >= 2 codebooks");
    m_ = codebooks_.front().size();
    d_ = codebooks_.front().dim();
    for (const auto& cb : codebooks_) {
      detail::require_same_dim(cb.dim(), d_, "factorizer codebooks");
      if (cb.size() != m_) throw std::invalid_argument("factorizer: codebooks must share M");
    }
    config_.validate(m_, codebooks_.size());
    if (config_.multiplex) {
      const auto expected = multiplexed_codebooks(codebooks_.front(), codebooks_.size());
      for (std::size_t f = 0; f < codebooks_.size(); ++f) {
        if (!(expected[f] == codebooks_[f])) {
          throw std::invalid_argument("factorizer: multiplex needs codebooks from multiplexed_codebooks()");
        }
      }
      crossbars_.push_back(make_crossbar(codebooks_.front(), config_.backend, programming_rng));
    } else {
      for (const auto& cb : codebooks_) {
        crossbars_.push_back(make_crossbar(cb, config_.backend, programming_rng));
      }
    }
  }

  std::size_t num_factors() const noexcept { return codebooks_.size(); }
  std::size_t codebook_size() const noexcept { return m_; }
  std::size_t dim() const noexcept { return d_; }
  const std::vector<Codebook>& codebooks() const noexcept { return codebooks_; }
  const FactorizerConfig& config() const noexcept { return config_; }

  FactorizerState initial_state(Rng& rng) const {
    FactorizerState s;
    s.estimates = init_estimates(codebooks_, rng);
    s.previous = s.estimates;
    s.similarities.assign(num_factors(), SimilarityVector(m_, 0.0));
    return s;
  }

  /// One full sweep over all factors.
  void step(FactorizerState& state, const Hypervector& p, Rng& rng) const {
    detail::require_same_dim(p.dim(), d_, "factorizer query");
    Workspace ws(m_, d_);
    step_impl(state, p, ws, rng);
  }

  bool converged(const FactorizerState& state) const { return check_convergence(state, config_); }

  FactorizationResult factorize(const Hypervector& p, Rng& rng) const {
    detail::require_same_dim(p.dim(), d_, "factorizer query");
    FactorizationResult result;
    FactorizerState state = initial_state(rng);
    Workspace ws(m_, d_);
    std::vector<std::uint64_t> history;
    while (state.iteration < config_.n_max) {
      step_impl(state, p, ws, rng);
      if (config_.record_trace) {
        std::vector<double> row;
        for (const auto& a : state.similarities) row.push_back(*std::max_element(a.begin(), a.end()));
        result.trace.push_back(std::move(row));
      }
      if (config_.cycle_lmax > 0) history.push_back(estimates_fingerprint(state.estimates));
      if (check_convergence(state, config_)) {
        result.converged = true;
        break;
      }
    }
    result.iterations = state.iteration;
    result.op_count = state.op_count;
    for (const auto& a : state.similarities) result.predicted.push_back(argmax(a));
    if (!result.converged && config_.cycle_lmax > 0) {
      result.limit_cycle = detect_limit_cycle(history, config_.cycle_lmax);
    }
    return result;
  }

 private:
  struct Workspace {
    Workspace(std::size_t m, std::size_t d)
        : unbound(d), shifted(d), alpha(m), activated(m), projection(d), unshifted(d) {}
    std::vector<std::int8_t> unbound;
    std::vector<std::int8_t> shifted;
    std::vector<double> alpha;
    std::vector<double> activated;
    std::vector<double> projection;
    std::vector<double> unshifted;
  };

  const Crossbar& crossbar_for(std::size_t f) const {
    return config_.multiplex ? crossbars_.front() : crossbars_[f];
  }

  // Computes the next estimate of factor f from `estimates` and records alpha^f.
  Hypervector update_factor(std::size_t f, const Hypervector& p, std::span<const Hypervector> estimates,
                            FactorizerState& state, Workspace& ws, Rng& rng) const {
    const auto pe = p.elements();
    std::copy(pe.begin(), pe.end(), ws.unbound.begin());
    for (std::size_t g = 0; g < estimates.size(); ++g) {
      if (g == f) continue;
      const auto e = estimates[g].elements();
      for (std::size_t d = 0; d < d_; ++d) ws.unbound[d] = static_cast<std::int8_t>(ws.unbound[d] * e[d]);
    }
    const std::ptrdiff_t shift = config_.multiplex ? shift_for_factor(f + 1) : 0;
    std::span<const std::int8_t> query = ws.unbound;
    if (shift != 0) {
      rotate_right<std::int8_t>(ws.unbound, ws.shifted, shift);
      query = ws.shifted;
    }
    const Crossbar& xbar = crossbar_for(f);
    xbar.similarities(query, ws.alpha, rng);
    apply_activation(config_.activation, ws.alpha, ws.activated);
    xbar.project(ws.activated, ws.projection, rng);
    state.op_count += 2 * m_;
    std::span<const double> proj = ws.projection;
    if (shift != 0) {
      rotate_right<double>(ws.projection, ws.unshifted, -shift);
      proj = ws.unshifted;
    }
    std::copy(ws.alpha.begin(), ws.alpha.end(), state.similarities[f].begin());
    return bipolarize(proj, rng);
  }

  void step_impl(FactorizerState& state, const Hypervector& p, Workspace& ws, Rng& rng) const {
    state.previous = state.estimates;
    if (config_.update == UpdatePolicy::sequential) {
      for (std::size_t f = 0; f < num_factors(); ++f) {
        state.estimates[f] = update_factor(f, p, state.estimates, state, ws, rng);
      }
    } else {
      for (std::size_t f = 0; f < num_factors(); ++f) {
        state.estimates[f] = update_factor(f, p, state.previous, state, ws, rng);
      }
    }
    ++state.iteration;
  }

  std::vector<Codebook> codebooks_;
  FactorizerConfig config_;
  std::size_t m_ = 0;
  std::size_t d_ = 0;
  std::vector<Crossbar> crossbars_;
};

/// One-shot convenience wrapper: programs the backend from `rng`, then runs.
inline FactorizationResult factorize(const Hypervector& p, std::vector<Codebook> codebooks,
                                     const FactorizerConfig& config, Rng& rng) {
  const Factorizer engine(std::move(codebooks), config, rng);
  return engine.factorize(p, rng);
}

}  // namespace holofactor
