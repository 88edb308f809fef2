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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "holofactor/factorizer.hpp"
#include "holofactor/oracle.hpp"

using namespace holofactor;

namespace {

std::vector<Codebook> codebooks(std::size_t m, std::size_t d, std::size_t f, std::uint64_t seed) {
  std::vector<Codebook> cbs;
  for (std::size_t i = 0; i < f; ++i) cbs.push_back(random_codebook(m, d, split_seed(seed, i), i + 1));
  return cbs;
}

FactorizerConfig sparse_config(std::size_t m, std::size_t d, std::size_t f, double k) {
  FactorizerConfig c;
  c.activation = ActivationSpec::threshold(k_to_threshold(k, m, d));
  c.n_max = max_iterations(m, f);
  return c;
}

// Directly coded baseline resonator (identity activation, sequential update,
// fixed-point stop) with scalar loops. Consumes the Rng in the same order as
// the engine: one bundle per codebook, then one bipolarize per factor update.
FactorizationResult reference_resonator(const Hypervector& p, const std::vector<Codebook>& cbs,
                                        std::uint64_t n_max, Rng& rng) {
  const std::size_t nf = cbs.size();
  const std::size_t d = p.dim();
  std::vector<Hypervector> est;
  for (const auto& cb : cbs) {
    const auto vs = cb.vectors();
    est.push_back(bundle(vs, rng));
  }
  std::vector<std::vector<double>> alpha(nf);
  FactorizationResult r;
  while (r.iterations < n_max) {
    const auto before = est;
    for (std::size_t f = 0; f < nf; ++f) {
      std::vector<int> u(d);
      for (std::size_t k = 0; k < d; ++k) {
        int v = p[k];
        for (std::size_t g = 0; g < nf; ++g) {
          if (g != f) v *= est[g][k];
        }
        u[k] = v;
      }
      alpha[f].assign(cbs[f].size(), 0.0);
      for (std::size_t i = 0; i < cbs[f].size(); ++i) {
        int dot = 0;
        for (std::size_t k = 0; k < d; ++k) dot += u[k] * cbs[f].row(i)[k];
        alpha[f][i] = static_cast<double>(dot) / static_cast<double>(d);
      }
      std::vector<double> proj(d, 0.0);
      for (std::size_t i = 0; i < cbs[f].size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) proj[k] += alpha[f][i] * cbs[f].row(i)[k];
      }
      est[f] = bipolarize(proj, rng);
    }
    ++r.iterations;
    if (est == before) {
      r.converged = true;
      break;
    }
  }
  for (const auto& a : alpha) r.predicted.push_back(argmax(a));
  return r;
}

}  // namespace

TEST(Budget, MaxIterations) {
  EXPECT_EQ(max_iterations(256, 3), 21845U);
  EXPECT_EQ(max_iterations(4, 2), 1U);
  EXPECT_EQ(max_iterations(512, 3), 87381U);
  EXPECT_EQ(max_iterations(3, 3), 2U);  // 9/3 = 3 exactly, strict bound
  EXPECT_THROW(max_iterations(1, 3), std::invalid_argument);
  EXPECT_THROW(max_iterations(1U << 20U, 5), std::invalid_argument);
}

TEST(Budget, LawHoldsAtTheCap) {
  for (std::uint64_t m : {2U, 3U, 7U, 16U, 100U, 256U, 512U}) {
    for (std::size_t f : {2U, 3U, 4U}) {
      const auto n = max_iterations(m, f);
      EXPECT_TRUE(within_iteration_budget(n, m, f));
      EXPECT_FALSE(within_iteration_budget(n + 1, m, f));
    }
  }
}

TEST(Config, ValidateEnforcesBudgetAndRanges) {
  FactorizerConfig c;
  c.n_max = 21846;
  EXPECT_THROW(c.validate(256, 3), std::invalid_argument);
  c.n_max = 21845;
  EXPECT_NO_THROW(c.validate(256, 3));
  c.convergence_ratio = 1.5;
  EXPECT_THROW(c.validate(256, 3), std::invalid_argument);
  FactorizerConfig single;
  single.n_max = 10;
  EXPECT_NO_THROW(single.validate(1, 3));
}

TEST(Multiplex, Shifts) {
  EXPECT_EQ(shift_for_factor(1), 0);
  EXPECT_EQ(shift_for_factor(3), 2);
  EXPECT_THROW(shift_for_factor(0), std::invalid_argument);
  const auto base = random_codebook(4, 32, 1);
  const auto cbs = multiplexed_codebooks(base, 3);
  EXPECT_EQ(cbs[0], base);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(circular_shift(cbs[2].vector(i), 2), base.vector(i));
}

TEST(Multiplex, EngineRejectsForeignCodebooks) {
  FactorizerConfig c;
  c.multiplex = true;
  c.n_max = 1;
  Rng rng(1);
  EXPECT_THROW(Factorizer(codebooks(4, 32, 2, 1), c, rng), std::invalid_argument);
  EXPECT_NO_THROW(Factorizer(multiplexed_codebooks(random_codebook(4, 32, 1), 2), c, rng));
}

TEST(Init, SingleCodevectorAndSuperpositionSimilarity) {
  Rng rng(2);
  const auto one = codebooks(1, 64, 2, 3);
  const auto e = init_estimates(one, rng);
  EXPECT_EQ(e[0], one[0].vector(0));
  EXPECT_THROW(init_estimates(std::span<const Codebook>(one).first(1), rng), std::invalid_argument);

  // Odd M: similarity of the majority to each member is C(M-1, (M-1)/2) / 2^(M-1).
  const auto cbs = codebooks(21, 8192, 2, 4);
  const auto est = init_estimates(cbs, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < 21; ++i) mean += similarity(est[0], cbs[0].vector(i)) / 21.0;
  EXPECT_NEAR(mean, 0.17619705200195312, 0.01);
  EXPECT_NEAR(mean, std::sqrt(2.0 / (3.141592653589793 * 21.0)), 0.01);
}

TEST(Unbind, RecoversFactorWhenOthersAreCorrect) {
  const auto cbs = codebooks(5, 256, 3, 5);
  const std::vector<std::size_t> truth{1, 4, 2};
  Rng rng(6);
  const auto q = make_query(cbs, truth, 0.0, rng);
  const std::vector<Hypervector> est{Hypervector::random(256, rng), cbs[1].vector(4), cbs[2].vector(2)};
  EXPECT_EQ(unbind_estimate(q.product, est, 0), cbs[0].vector(1));
  const std::vector<Hypervector> wrong{Hypervector::random(256, rng), Hypervector::random(256, rng),
                                      cbs[2].vector(2)};
  const auto u = unbind_estimate(q.product, wrong, 0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LT(std::abs(similarity(u, cbs[0].vector(i))), 0.3);
}

TEST(Step, IdentityRecoversFactorInOneStep) {
  const auto cbs = codebooks(4, 64, 2, 7);
  Rng rng(8);
  const std::vector<std::size_t> truth{1, 0};
  const auto q = make_query(cbs, truth, 0.0, rng);
  FactorizerConfig c;
  c.n_max = 1;
  const Factorizer eng(cbs, c, rng);
  auto st = eng.initial_state(rng);
  st.estimates[1] = cbs[1].vector(0);
  eng.step(st, q.product, rng);
  EXPECT_EQ(st.estimates[0], cbs[0].vector(1));
  EXPECT_EQ(st.iteration, 1U);
}

TEST(Step, OpCountAccounting) {
  const auto cbs = codebooks(16, 128, 3, 9);
  Rng rng(10);
  const auto q = random_query(cbs, 0.0, rng);
  const Factorizer eng(cbs, sparse_config(16, 128, 3, 3.0), rng);
  auto st = eng.initial_state(rng);
  for (int n = 1; n <= 7; ++n) {
    eng.step(st, q.product, rng);
    EXPECT_EQ(st.op_count, 2U * n * 16U * 3U);
    for (const auto& e : st.estimates) {
      for (auto v : e.elements()) ASSERT_TRUE(v == 1 || v == -1);
    }
  }
}

TEST(Convergence, Policies) {
  FactorizerState st;
  st.iteration = 1;
  st.similarities = {{0.1, 1.0}, {1.0, 0.0}, {0.2, 1.0}};
  FactorizerConfig c;
  c.convergence_ratio = 0.8;
  EXPECT_TRUE(check_convergence(st, c));
  st.similarities[1] = {0.5, 0.7};
  EXPECT_FALSE(check_convergence(st, c));
  c.convergence = ConvergencePolicy::threshold_any;
  EXPECT_TRUE(check_convergence(st, c));
  c.convergence = ConvergencePolicy::fixed_point;
  st.estimates = {Hypervector{1, -1}, Hypervector{1, 1}};
  st.previous = st.estimates;
  EXPECT_TRUE(check_convergence(st, c));
  st.previous[0] = Hypervector{-1, -1};
  EXPECT_FALSE(check_convergence(st, c));
  st.iteration = 0;
  c.convergence = ConvergencePolicy::threshold;
  EXPECT_FALSE(check_convergence(st, c));
}

TEST(LimitCycle, Detection) {
  const std::vector<int> constant(10, 3);
  EXPECT_FALSE(detect_limit_cycle(constant, 8).has_value());
  std::vector<int> period4;
  for (int i = 0; i < 20; ++i) period4.push_back(i % 4);
  EXPECT_EQ(detect_limit_cycle(period4, 8), 4U);
  EXPECT_FALSE(detect_limit_cycle(period4, 3).has_value());
  std::vector<int> period2{5, 1, 2, 1, 2};
  EXPECT_EQ(detect_limit_cycle(period2, 8), 2U);
  const std::vector<int> drifting{1, 2, 3, 4, 5, 6};
  EXPECT_FALSE(detect_limit_cycle(drifting, 3).has_value());
}

TEST(Factorize, SingleCandidateConvergesAtOnce) {
  for (std::size_t f : {2U, 3U, 4U}) {
    const auto cbs = codebooks(1, 128, f, 11);
    Rng rng(12);
    const auto q = random_query(cbs, 0.0, rng);
    FactorizerConfig c;
    c.n_max = 5;
    const auto r = factorize(q.product, cbs, c, rng);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1U);
    EXPECT_EQ(r.predicted, std::vector<std::size_t>(f, 0));
  }
}

TEST(Factorize, BaselineMatchesDirectReference) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const std::size_t m = 3 + seed % 4;
    const auto cbs = codebooks(m, 96, 3, seed);
    Rng qrng(seed + 100);
    const auto q = random_query(cbs, 0.0, qrng);
    FactorizerConfig c;
    c.convergence = ConvergencePolicy::fixed_point;
    c.n_max = max_iterations(m, 3);
    Rng prog(0);
    const Factorizer eng(cbs, c, prog);
    Rng a(seed);
    Rng b(seed);
    const auto got = eng.factorize(q.product, a);
    const auto ref = reference_resonator(q.product, cbs, c.n_max, b);
    EXPECT_EQ(got.converged, ref.converged) << seed;
    EXPECT_EQ(got.iterations, ref.iterations) << seed;
    EXPECT_EQ(got.predicted, ref.predicted) << seed;
  }
}

TEST(Factorize, DeterministicGivenSeed) {
  const auto cbs = codebooks(32, 256, 3, 13);
  Rng qr(1);
  const auto q = random_query(cbs, 0.0, qr);
  FactorizerConfig c = sparse_config(32, 256, 3, 4.0);
  c.backend = PcmNoise{};
  c.record_trace = true;
  Rng p1(5);
  Rng p2(5);
  const Factorizer e1(cbs, c, p1);
  const Factorizer e2(cbs, c, p2);
  Rng a(9);
  Rng b(9);
  const auto r1 = e1.factorize(q.product, a);
  const auto r2 = e2.factorize(q.product, b);
  EXPECT_EQ(r1.iterations, r2.iterations);
  EXPECT_EQ(r1.predicted, r2.predicted);
  EXPECT_EQ(r1.trace, r2.trace);
}

TEST(Factorize, RelabelingInvariance) {
  const std::size_t m = 8;
  auto cbs = codebooks(m, 256, 3, 14);
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  std::vector<Codebook> permuted;
  for (const auto& cb : cbs) {
    std::vector<Hypervector> vs;
    for (std::size_t i = 0; i < m; ++i) vs.push_back(cb.vector(perm[i]));
    permuted.emplace_back(std::move(vs));
  }
  const auto c = sparse_config(m, 256, 3, 2.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng qr(s);
    const auto q = random_query(cbs, 0.0, qr);
    Rng p(0);
    Rng a(s + 50);
    Rng b(s + 50);
    const auto r1 = Factorizer(cbs, c, p).factorize(q.product, a);
    const auto r2 = Factorizer(permuted, c, p).factorize(q.product, b);
    EXPECT_EQ(r1.iterations, r2.iterations);
    ASSERT_EQ(r1.predicted.size(), 3U);
    for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(perm[r2.predicted[f]], r1.predicted[f]);
  }
}

TEST(Factorize, ConvergedAnswersAgreeWithBruteForce) {
  int converged = 0;
  int agree = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t m = 4 + s % 5;
    const auto cbs = codebooks(m, 256, 3, s + 1000);
    Rng rng(s);
    const auto q = random_query(cbs, 0.0, rng);
    FactorizerConfig c = sparse_config(m, 256, 3, 1.5);
    c.backend = PcmNoise{};
    const auto r = factorize(q.product, cbs, c, rng);
    if (!r.converged) continue;
    ++converged;
    agree += r.predicted == brute_force(q.product, cbs).indices;
  }
  EXPECT_GT(converged, 50);
  EXPECT_GE(agree, converged * 99 / 100);
}

TEST(Factorize, ParallelPolicyAndMultiplexRun) {
  // Multiplexed codebooks are rotations of one base; they should do as well as
  // independently drawn ones.
  const auto base = random_codebook(16, 256, 15);
  const auto cbs = multiplexed_codebooks(base, 3);
  const auto independent = codebooks(16, 256, 3, 15);
  FactorizerConfig c = sparse_config(16, 256, 3, 4.0);
  int ok_mux = 0;
  int ok_ind = 0;
  for (std::uint64_t s = 0; s < 80; ++s) {
    Rng rng(s);
    c.multiplex = true;
    const auto q = random_query(cbs, 0.0, rng);
    const auto r = factorize(q.product, cbs, c, rng);
    ok_mux += r.converged && r.predicted == q.truth;
    c.multiplex = false;
    const auto qi = random_query(independent, 0.0, rng);
    const auto ri = factorize(qi.product, independent, c, rng);
    ok_ind += ri.converged && ri.predicted == qi.truth;
  }
  EXPECT_GE(ok_mux, 48);
  EXPECT_LE(std::abs(ok_mux - ok_ind), 16);
  c.multiplex = false;
  c.update = UpdatePolicy::parallel;
  Rng rng(99);
  const auto q = random_query(cbs, 0.0, rng);
  const auto r = factorize(q.product, codebooks(16, 256, 3, 16), c, rng);
  EXPECT_LE(r.iterations, c.n_max);
}

TEST(Factorize, TraceAndCycleDiagnostics) {
  const auto cbs = codebooks(64, 64, 3, 17);
  FactorizerConfig c;
  c.n_max = 300;
  c.convergence = ConvergencePolicy::threshold;
  c.record_trace = true;
  c.cycle_lmax = 64;
  Rng rng(18);
  const auto q = random_query(cbs, 0.0, rng);
  const auto r = factorize(q.product, cbs, c, rng);
  EXPECT_EQ(r.trace.size(), r.iterations);
  EXPECT_EQ(r.predicted.size(), 3U);
  if (r.converged) {
    EXPECT_FALSE(r.limit_cycle.has_value());
  }
}
