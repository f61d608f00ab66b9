#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mlmpc/dataset.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/matrix.hpp"
#include "mlmpc/rng.hpp"

namespace mlmpc {

// A candidate input sequence over the prediction horizon: genes(t, c) is the
// value of input channel c at future step t.
struct Chromosome {
  Matrix genes;  // horizon x d_u
};

// lower cost is better; must be deterministic for a fixed prediction context
using FitnessFn = std::function<double(const Chromosome&)>;

struct GaConfig {
  std::size_t population = 64;
  std::size_t generations = 100;
  std::size_t elite = 2;
  std::size_t tournament = 3;
  double crossover = 0.9;       // probability of mixing the two parents at all
  double mutation_prob = 0.15;  // per-gene perturbation probability
  double mutation_scale = 0.1;  // Gaussian sigma as a fraction of the channel range
  std::vector<ChannelRange> bounds;  // one per input channel
  std::uint64_t seed = 0;

  void validate() const {
    if (population < 2) throw ConfigError("ga config: population must be >= 2");
    if (generations < 1) throw ConfigError("ga config: generations must be >= 1");
    if (elite >= population) throw ConfigError("ga config: elite must be < population");
    if (tournament < 1) throw ConfigError("ga config: tournament must be >= 1");
    for (double p : {crossover, mutation_prob}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ga config: probabilities must lie in [0, 1]");
    }
    if (!(mutation_scale >= 0.0)) throw ConfigError("ga config: mutation scale must be >= 0");
    if (bounds.empty()) throw ConfigError("ga config: bounds missing");
    for (const auto& b : bounds) b.validate();
  }
};

// Lowest cost among k distinct uniform draws (so a tournament over the whole
// population always returns the global best); ties keep the earliest drawn
// index. k is clamped to the population size.
inline std::size_t tournament_select(std::span<const double> costs, std::size_t k, Rng& rng) {
  const std::size_t n = costs.size();
  if (k < 1 || n == 0) throw ConfigError("tournament_select: need k >= 1 and a population");
  if (k >= n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (costs[i] < costs[best]) best = i;
    }
    return best;
  }
  // Rejection sampling keeps the draws distinct; k is small relative to n in
  // practice so collisions are rare.
  thread_local std::vector<std::size_t> drawn;
  drawn.clear();
  std::size_t best = rng.below(n);
  drawn.push_back(best);
  while (drawn.size() < k) {
    const std::size_t candidate = rng.below(n);
    bool fresh = true;
    for (std::size_t seen : drawn) fresh = fresh && seen != candidate;
    if (!fresh) continue;
    drawn.push_back(candidate);
    if (costs[candidate] < costs[best]) best = candidate;
  }
  return best;
}

// Uniform crossover: with probability p each gene comes independently from
// either parent, otherwise the child is a copy of parent a.
inline Chromosome crossover(const Chromosome& a, const Chromosome& b, double p, Rng& rng) {
  if (a.genes.rows() != b.genes.rows() || a.genes.cols() != b.genes.cols()) {
    throw ConfigError("crossover: parent shapes differ");
  }
  Chromosome child = a;
  if (rng.uniform01() < p) {
    for (std::size_t t = 0; t < child.genes.rows(); ++t) {
      for (std::size_t c = 0; c < child.genes.cols(); ++c) {
        if (rng.uniform01() < 0.5) child.genes(t, c) = b.genes(t, c);
      }
    }
  }
  return child;
}

// Per-gene Gaussian perturbation with sigma = scale * channel range, clipped
// back into bounds.
inline Chromosome mutate(const Chromosome& chromosome, const GaConfig& cfg, Rng& rng) {
  Chromosome result = chromosome;
  for (std::size_t t = 0; t < result.genes.rows(); ++t) {
    for (std::size_t c = 0; c < result.genes.cols(); ++c) {
      if (rng.uniform01() < cfg.mutation_prob) {
        const ChannelRange& b = cfg.bounds[c];
        const double sigma = cfg.mutation_scale * (b.hi - b.lo);
        result.genes(t, c) =
            std::clamp(result.genes(t, c) + sigma * rng.gaussian(), b.lo, b.hi);
      }
    }
  }
  return result;
}

struct GaResult {
  Chromosome best;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<double> history;    // best-so-far cost after each generation
  std::size_t non_finite = 0;     // candidates whose fitness came back non-finite
};

// Seeded real-coded GA: uniform initialization within bounds, elitism,
// tournament selection, uniform crossover, clipped Gaussian mutation.
// Non-finite fitness values are treated as +infinity so the loop stays total.
// `warm_start`, when given, replaces the first population member (used by the
// controller's optional shift-and-reuse mode).
inline GaResult ga_run_seeded(const FitnessFn& fitness, std::size_t horizon, const GaConfig& cfg,
                              const Chromosome* warm_start) {
  cfg.validate();
  if (horizon < 1) throw ConfigError("ga_run: horizon must be >= 1");
  const std::size_t d_u = cfg.bounds.size();
  Rng rng(cfg.seed);

  std::vector<Chromosome> population(cfg.population, Chromosome{Matrix(horizon, d_u)});
  for (Chromosome& member : population) {
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t c = 0; c < d_u; ++c) {
        member.genes(t, c) = rng.uniform(cfg.bounds[c].lo, cfg.bounds[c].hi);
      }
    }
  }
  if (warm_start != nullptr) {
    if (warm_start->genes.rows() != horizon || warm_start->genes.cols() != d_u) {
      throw ConfigError("ga_run: warm-start shape mismatch");
    }
    population.front() = *warm_start;
  }

  GaResult result;
  std::vector<double> costs(cfg.population);
  std::vector<std::size_t> ranking(cfg.population);
  std::vector<Chromosome> next;
  next.reserve(cfg.population);
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    std::size_t finite = 0;
    for (std::size_t i = 0; i < cfg.population; ++i) {
      const double cost = fitness(population[i]);
      if (std::isfinite(cost)) {
        costs[i] = cost;
        ++finite;
      } else {
        costs[i] = std::numeric_limits<double>::infinity();
        ++result.non_finite;
      }
      if (costs[i] < result.cost) {
        result.cost = costs[i];
        result.best = population[i];
      }
    }
    if (finite == 0) {
      throw OptimizerError("ga_run: entire generation " + std::to_string(gen) +
                           " evaluated to non-finite cost");
    }
    result.history.push_back(result.cost);
    if (gen + 1 == cfg.generations) break;

    // Elites survive untouched; ties resolve to the lower index.
    std::iota(ranking.begin(), ranking.end(), std::size_t{0});
    std::stable_sort(ranking.begin(), ranking.end(),
                     [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    next.clear();
    for (std::size_t i = 0; i < cfg.elite; ++i) next.push_back(population[ranking[i]]);
    while (next.size() < cfg.population) {
      const Chromosome& parent_a = population[tournament_select(costs, cfg.tournament, rng)];
      const Chromosome& parent_b = population[tournament_select(costs, cfg.tournament, rng)];
      next.push_back(mutate(crossover(parent_a, parent_b, cfg.crossover, rng), cfg, rng));
    }
    population.swap(next);
  }
  return result;
}

inline GaResult ga_run(const FitnessFn& fitness, std::size_t horizon, const GaConfig& cfg) {
  return ga_run_seeded(fitness, horizon, cfg, nullptr);
}

struct BruteForceResult {
  Chromosome best;
  double cost = std::numeric_limits<double>::infinity();
};

// Exhaustive grid search used as a desk-scale optimality oracle. Each gene
// takes points_per_gene values evenly spaced across its channel bounds
// (endpoints included; a single point degenerates to the midpoint). First
// encountered argmin wins.
inline BruteForceResult brute_force_best(const FitnessFn& fitness,
                                         std::span<const ChannelRange> bounds,
                                         std::size_t horizon, std::size_t d_u,
                                         std::size_t points_per_gene) {
  if (points_per_gene < 1) throw ConfigError("brute_force_best: need at least one point per gene");
  if (d_u != bounds.size()) throw ConfigError("brute_force_best: bounds/d_u mismatch");
  const std::size_t genes = horizon * d_u;
  double budget = 1.0;
  for (std::size_t g = 0; g < genes; ++g) {
    budget *= static_cast<double>(points_per_gene);
    if (budget > 1e6) {
      throw ConfigError("brute_force_best: grid exceeds the 10^6 evaluation budget");
    }
  }

  auto grid_value = [&](std::size_t channel, std::size_t index) {
    const ChannelRange& b = bounds[channel];
    if (points_per_gene == 1) return 0.5 * (b.lo + b.hi);
    return b.lo + (b.hi - b.lo) * static_cast<double>(index) /
                      static_cast<double>(points_per_gene - 1);
  };

  std::vector<std::size_t> odometer(genes, 0);
  Chromosome candidate{Matrix(horizon, d_u)};
  BruteForceResult result;
  while (true) {
    for (std::size_t g = 0; g < genes; ++g) {
      candidate.genes(g / d_u, g % d_u) = grid_value(g % d_u, odometer[g]);
    }
    const double cost = fitness(candidate);
    if (cost < result.cost) {
      result.cost = cost;
      result.best = candidate;
    }
    std::size_t g = 0;
    for (; g < genes; ++g) {
      if (++odometer[g] < points_per_gene) break;
      odometer[g] = 0;
    }
    if (g == genes) break;
  }
  return result;
}

}  // namespace mlmpc
