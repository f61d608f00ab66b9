#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "mlmpc/ga.hpp"

using namespace mlmpc;

namespace {

GaConfig base_config(std::size_t d_u = 1) {
  GaConfig cfg;
  cfg.bounds.assign(d_u, {-1.0, 1.0});
  cfg.seed = 5;
  return cfg;
}

double sum_sq_from(const Chromosome& c, double target) {
  double cost = 0.0;
  for (std::size_t t = 0; t < c.genes.rows(); ++t) {
    for (std::size_t j = 0; j < c.genes.cols(); ++j) {
      const double d = c.genes(t, j) - target;
      cost += d * d;
    }
  }
  return cost;
}

}  // namespace

TEST_SUITE_BEGIN("ga");

TEST_CASE("tournament over the whole population returns the global best") {
  const std::vector<double> costs{3.0, 1.0, 2.0};
  Rng rng(1);
  for (int i = 0; i < 200; ++i) CHECK(tournament_select(costs, 3, rng) == 1);
  // Oversized tournaments clamp to the population.
  for (int i = 0; i < 50; ++i) CHECK(tournament_select(costs, 10, rng) == 1);
}

TEST_CASE("tournament with k=1 picks uniformly") {
  const std::vector<double> costs{3.0, 1.0, 2.0, 5.0};
  Rng rng(2);
  std::map<std::size_t, int> hits;
  for (int i = 0; i < 4000; ++i) ++hits[tournament_select(costs, 1, rng)];
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(hits[i] > 800);
    CHECK(hits[i] < 1200);
  }
}

TEST_CASE("tournament on a single-member population always returns it") {
  const std::vector<double> costs{42.0};
  Rng rng(3);
  for (int i = 0; i < 20; ++i) CHECK(tournament_select(costs, 1, rng) == 0);
}

TEST_CASE("crossover: idempotence, p=0 copy, p=1 mixing statistics") {
  Rng rng(4);
  Chromosome a{Matrix(2, 1)}, b{Matrix(2, 1)};
  a.genes(0, 0) = 0.25;
  a.genes(1, 0) = -0.5;
  b = a;
  const Chromosome same = crossover(a, b, 1.0, rng);
  CHECK(same.genes == a.genes);

  b.genes(0, 0) = 0.9;
  b.genes(1, 0) = 0.9;
  const Chromosome copy = crossover(a, b, 0.0, rng);
  CHECK(copy.genes == a.genes);

  // p=1, parent a all zeros, parent b all ones: gene mean -> 0.5.
  Chromosome zeros{Matrix(1, 1)}, ones{Matrix(1, 1)};
  zeros.genes(0, 0) = 0.0;
  ones.genes(0, 0) = 1.0;
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += crossover(zeros, ones, 1.0, rng).genes(0, 0);
  CHECK(std::fabs(sum / 10000.0 - 0.5) < 0.02);

  Chromosome wide{Matrix(3, 1)};
  CHECK_THROWS_AS(crossover(a, wide, 0.5, rng), ConfigError);
}

TEST_CASE("mutate: identity at probability 0, clipping, perturbation scale") {
  GaConfig cfg = base_config();
  cfg.mutation_prob = 0.0;
  Rng rng(6);
  Chromosome c{Matrix(4, 1)};
  for (std::size_t t = 0; t < 4; ++t) c.genes(t, 0) = 0.1 * static_cast<double>(t);
  CHECK(mutate(c, cfg, rng).genes == c.genes);

  // All genes at the upper bound stay within bounds after mutation.
  cfg.mutation_prob = 1.0;
  cfg.mutation_scale = 0.5;
  Chromosome top{Matrix(50, 1)};
  for (std::size_t t = 0; t < 50; ++t) top.genes(t, 0) = 1.0;
  for (int i = 0; i < 50; ++i) {
    const Chromosome m = mutate(top, cfg, rng);
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(m.genes(t, 0) <= 1.0);
      CHECK(m.genes(t, 0) >= -1.0);
    }
  }

  // Scale 0.1 on range [-10,10]: empirical sigma of the applied perturbation
  // is 2.0 within 5% (bounds wide enough that clipping is negligible).
  GaConfig wide = base_config();
  wide.bounds = {{-10.0, 10.0}};
  wide.mutation_prob = 1.0;
  wide.mutation_scale = 0.1;
  Chromosome origin{Matrix(1, 1)};
  double sq_sum = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const double d = mutate(origin, wide, rng).genes(0, 0);
    sq_sum += d * d;
  }
  const double sigma = std::sqrt(sq_sum / draws);
  CHECK(std::fabs(sigma - 2.0) / 2.0 < 0.05);
}

TEST_CASE("ga_run keeps a warm-started optimum under zero mutation") {
  GaConfig cfg = base_config();
  cfg.population = 16;
  cfg.generations = 20;
  cfg.elite = 2;
  cfg.mutation_prob = 0.0;
  Chromosome optimum{Matrix(2, 1)};
  optimum.genes(0, 0) = 0.3;
  optimum.genes(1, 0) = 0.3;
  const FitnessFn fitness = [](const Chromosome& c) { return sum_sq_from(c, 0.3); };
  const GaResult r = ga_run_seeded(fitness, 2, cfg, &optimum);
  CHECK(r.cost == 0.0);
  CHECK(r.best.genes == optimum.genes);
}

TEST_CASE("ga_run solves a separable quadratic") {
  GaConfig cfg = base_config();
  cfg.population = 64;
  cfg.generations = 100;
  const FitnessFn fitness = [](const Chromosome& c) { return sum_sq_from(c, 0.3); };
  const GaResult r = ga_run(fitness, 2, cfg);
  CHECK(r.cost < 1e-2);
  CHECK(std::fabs(r.best.genes(0, 0) - 0.3) < 1e-2);
  CHECK(std::fabs(r.best.genes(1, 0) - 0.3) < 1e-2);
  REQUIRE(r.history.size() == 100);
}

TEST_CASE("ga_run history is monotone and genes stay in bounds") {
  GaConfig cfg = base_config();
  cfg.population = 24;
  cfg.generations = 60;
  cfg.seed = 77;
  // Rugged multimodal fitness to stress the operators.
  const FitnessFn fitness = [](const Chromosome& c) {
    double cost = 0.0;
    for (std::size_t t = 0; t < c.genes.rows(); ++t) {
      const double x = c.genes(t, 0);
      cost += x * x + 0.3 * std::cos(25.0 * x);
    }
    return cost;
  };
  const GaResult r = ga_run(fitness, 3, cfg);
  for (std::size_t g = 1; g < r.history.size(); ++g) CHECK(r.history[g] <= r.history[g - 1]);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(r.best.genes(t, 0) >= -1.0);
    CHECK(r.best.genes(t, 0) <= 1.0);
  }
}

TEST_CASE("ga_run is bit-deterministic per seed") {
  GaConfig cfg = base_config();
  cfg.population = 16;
  cfg.generations = 30;
  cfg.seed = 123;
  const FitnessFn fitness = [](const Chromosome& c) { return sum_sq_from(c, -0.4); };
  const GaResult a = ga_run(fitness, 2, cfg);
  const GaResult b = ga_run(fitness, 2, cfg);
  CHECK(a.best.genes == b.best.genes);
  CHECK(a.cost == b.cost);
  CHECK(a.history == b.history);
  cfg.seed = 124;
  const GaResult c = ga_run(fitness, 2, cfg);
  CHECK(!(c.best.genes == a.best.genes));
}

TEST_CASE("ga_run maps non-finite fitness to +inf and aborts if all are") {
  GaConfig cfg = base_config();
  cfg.population = 8;
  cfg.generations = 5;
  int calls = 0;
  const FitnessFn sometimes = [&calls](const Chromosome& c) {
    ++calls;
    return calls % 2 == 0 ? std::numeric_limits<double>::quiet_NaN() : sum_sq_from(c, 0.0);
  };
  const GaResult r = ga_run(sometimes, 1, cfg);
  CHECK(r.non_finite > 0);
  CHECK(std::isfinite(r.cost));

  const FitnessFn all_bad = [](const Chromosome&) {
    return std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(ga_run(all_bad, 1, cfg), OptimizerError);
}

TEST_CASE("ga config validation") {
  GaConfig cfg = base_config();
  cfg.population = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.elite = cfg.population;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.crossover = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = base_config();
  cfg.bounds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("brute force recovers a grid-aligned optimum exactly") {
  // 9 points over [-1, 1]: the grid contains 0.5 exactly.
  const FitnessFn fitness = [](const Chromosome& c) { return sum_sq_from(c, 0.5); };
  const std::vector<ChannelRange> bounds{{-1.0, 1.0}};
  const BruteForceResult r = brute_force_best(fitness, bounds, 2, 1, 9);
  CHECK(r.best.genes(0, 0) == 0.5);
  CHECK(r.best.genes(1, 0) == 0.5);
  CHECK(r.cost == 0.0);
}

TEST_CASE("brute force degenerate grid and budget guard") {
  const FitnessFn fitness = [](const Chromosome& c) { return sum_sq_from(c, 0.0); };
  const std::vector<ChannelRange> bounds{{-1.0, 3.0}};
  const BruteForceResult r = brute_force_best(fitness, bounds, 1, 1, 1);
  CHECK(r.best.genes(0, 0) == 1.0);  // single point: the midpoint

  int evaluations = 0;
  const FitnessFn counting = [&](const Chromosome&) {
    ++evaluations;
    return 0.0;
  };
  // 10^7 grid nodes exceed the budget; no evaluation may happen.
  CHECK_THROWS_AS(brute_force_best(counting, bounds, 7, 1, 10), ConfigError);
  CHECK(evaluations == 0);
}

TEST_CASE("ga reaches at least the 9-point-grid optimum on quadratics") {
  // Desk-scale oracle-gap check on random quadratic instances.
  Rng rng(31);
  for (int instance = 0; instance < 5; ++instance) {
    const double t0 = rng.uniform(-0.8, 0.8);
    const double t1 = rng.uniform(-0.8, 0.8);
    const FitnessFn fitness = [&](const Chromosome& c) {
      const double a = c.genes(0, 0) - t0;
      const double b = c.genes(1, 0) - t1;
      return a * a + 2.0 * b * b;
    };
    const std::vector<ChannelRange> bounds{{-1.0, 1.0}};
    const BruteForceResult oracle = brute_force_best(fitness, bounds, 2, 1, 9);
    GaConfig cfg = base_config();
    cfg.population = 64;
    cfg.generations = 100;
    cfg.seed = 1000 + static_cast<std::uint64_t>(instance);
    const GaResult ga = ga_run(fitness, 2, cfg);
    CHECK(ga.cost <= 1.05 * oracle.cost + 1e-12);
  }
}

TEST_SUITE_END();
