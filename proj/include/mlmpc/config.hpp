#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlmpc/dataset.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/ga.hpp"
#include "mlmpc/mlp.hpp"
#include "mlmpc/mpc.hpp"
#include "mlmpc/plant.hpp"

namespace mlmpc {

// One experiment configuration drives every command: data generation,
// training, control sessions and comparisons. Files contain JSON overrides on
// top of a per-plant preset; every cross-field rule is checked up front so a
// config that validates cannot fail on dimension grounds later.
struct ExperimentConfig {
  PlantKind kind = PlantKind::pendulum;
  PendulumParams pendulum;
  CartpoleParams cartpole;
  ThreeTankParams tanks;

  std::vector<ChannelRange> input_ranges;   // actuator ranges, one per input channel
  std::vector<ChannelRange> output_ranges;  // observable ranges, one per output channel

  GeneratorConfig data;  // input_ranges mirrored in at load time
  std::size_t lookback = 3;
  bool normalize = false;
  SplitConfig split_cfg;

  MlpConfig network;
  TrainConfig training;
  ControllerConfig controller;  // controller.ga carries the optimizer settings
  ReferenceTrajectory reference;

  std::size_t demo_steps = 200;  // predict-demo excitation length
  std::uint64_t demo_seed = 9;
  std::size_t demo_hold = 1;

  std::string out_dir = "out";

  Plant make_plant() const {
    switch (kind) {
      case PlantKind::pendulum: return Plant::pendulum(pendulum);
      case PlantKind::cartpole: return Plant::cartpole(cartpole);
      case PlantKind::three_tank: return Plant::three_tank(tanks);
    }
    throw ConfigError("unknown plant kind");
  }

  std::size_t d_u() const { return kind == PlantKind::three_tank ? 2 : 1; }
  std::size_t d_y() const {
    return kind == PlantKind::pendulum ? 1 : (kind == PlantKind::cartpole ? 2 : 3);
  }
  std::size_t feature_dim() const { return (lookback + 1) * (d_u() + d_y()); }

  std::optional<Normalizer> normalizer() const {
    if (!normalize) return std::nullopt;
    return Normalizer{input_ranges, output_ranges};
  }

  void validate() const {
    switch (kind) {
      case PlantKind::pendulum: pendulum.validate(); break;
      case PlantKind::cartpole: cartpole.validate(); break;
      case PlantKind::three_tank: tanks.validate(); break;
    }
    if (input_ranges.size() != d_u()) {
      throw ConfigError("config: need " + std::to_string(d_u()) + " input range(s)");
    }
    if (output_ranges.size() != d_y()) {
      throw ConfigError("config: need " + std::to_string(d_y()) + " output range(s)");
    }
    for (const auto& r : input_ranges) r.validate();
    for (const auto& r : output_ranges) r.validate();

    data.validate(d_u());
    if (data.steps < lookback + 2) {
      throw ConfigError("config: episode steps must be at least lookback+2 (" +
                        std::to_string(lookback + 2) + ")");
    }
    if (!(split_cfg.test_fraction > 0 && split_cfg.test_fraction < 1)) {
      throw ConfigError("config: test fraction must lie in (0, 1)");
    }

    network.validate();
    if (network.widths.front() != feature_dim()) {
      throw ConfigError("config: network input width " + std::to_string(network.widths.front()) +
                        " does not match (L+1)*(d_u+d_y) = " + std::to_string(feature_dim()));
    }
    if (network.widths.back() != d_y()) {
      throw ConfigError("config: network output width " + std::to_string(network.widths.back()) +
                        " does not match d_y = " + std::to_string(d_y()));
    }
    training.validate();

    controller.validate(d_u(), d_y());
    controller.ga.validate();
    reference.validate(d_y());
    for (const auto& sp : reference.setpoints) {
      for (std::size_t j = 0; j < sp.value.size(); ++j) {
        if (sp.value[j] < output_ranges[j].lo || sp.value[j] > output_ranges[j].hi) {
          throw ConfigError("config: reference setpoint outside the declared output range");
        }
      }
    }
    if (demo_steps < lookback + 2) {
      throw ConfigError("config: demo steps must be at least lookback+2");
    }
    if (demo_hold < 1) throw ConfigError("config: demo hold must be >= 1");
  }

  static ExperimentConfig preset(PlantKind kind);
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json echo() const;
};

inline ExperimentConfig ExperimentConfig::preset(PlantKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.controller.ga = GaConfig{};
  switch (kind) {
    case PlantKind::pendulum:
      c.input_ranges = {{-10.0, 10.0}};
      c.output_ranges = {{-8.0, 8.0}};
      c.data = {1056, 34, c.input_ranges, 1, 1};
      c.lookback = 3;
      c.normalize = false;
      c.network = {{8, 16, 12, 8, 4, 1}, 0};
      c.training.epochs = 64;
      c.controller.horizon = 5;
      c.controller.output_weights = {1.0};
      c.controller.input_bounds = c.input_ranges;
      c.controller.warmup_input = {0.0};
      c.reference.length = 300;
      c.reference.setpoints = {{0, {0.5}}, {100, {-0.5}}, {200, {1.0}}};
      c.out_dir = "out/pendulum";
      break;
    case PlantKind::cartpole:
      c.input_ranges = {{-20.0, 20.0}};
      c.output_ranges = {{-8.0, 8.0}, {-11.0, 11.0}};
      c.data = {7012, 12, c.input_ranges, 1, 1};
      c.lookback = 5;
      c.normalize = false;
      c.network = {{18, 64, 64, 64, 64, 64, 64, 2}, 0};
      c.training.epochs = 150;
      c.controller.horizon = 5;
      c.controller.output_weights = {1.0, 1.0};
      c.controller.input_bounds = c.input_ranges;
      c.controller.warmup_input = {0.0};
      c.reference.length = 300;
      c.reference.setpoints = {{0, {1.0, 0.0}}, {100, {-1.0, 0.0}}, {200, {0.5, 0.0}}};
      c.out_dir = "out/cartpole";
      break;
    case PlantKind::three_tank:
      c.tanks.tau = 3.0;  // 1 s sampling is too fine for the tank time constants
      c.input_ranges = {{0.0, 1e-4}, {0.0, 1e-4}};
      c.output_ranges = {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}};
      c.data = {806, 24, c.input_ranges, 1, 1};
      c.lookback = 3;
      c.normalize = true;
      c.network = {{20, 24, 24, 16, 12, 3}, 0};
      c.training.epochs = 80;
      c.controller.horizon = 10;
      c.controller.output_weights = {0.0, 1.0, 0.0};  // level 2 is the controlled output
      c.controller.input_bounds = c.input_ranges;
      c.controller.warmup_input = {5e-5, 5e-5};
      c.reference.length = 480;
      c.reference.setpoints = {{0, {0.0, 0.2, 0.0}},
                               {120, {0.0, 0.5, 0.0}},
                               {240, {0.0, 0.3, 0.0}},
                               {360, {0.0, 0.6, 0.0}}};
      c.out_dir = "out/tanks";
      break;
  }
  return c;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("config: unknown key '" + key + "' in " + context);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_ranges(const nlohmann::json& j, const char* key,
                        std::vector<ChannelRange>& out) {
  if (!j.contains(key)) return;
  out.clear();
  for (const auto& r : j.at(key)) out.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"plant", "ranges", "data", "pipeline", "network", "training", "ga",
                      "controller", "reference", "demo", "out_dir"},
                     "top level");
  if (!j.contains("plant") || !j.at("plant").contains("kind")) {
    throw ConfigError("config: plant.kind is required");
  }
  const std::string kind_name = j.at("plant").at("kind").get<std::string>();
  PlantKind kind;
  if (kind_name == "pendulum") kind = PlantKind::pendulum;
  else if (kind_name == "cartpole") kind = PlantKind::cartpole;
  else if (kind_name == "tanks" || kind_name == "three-tank") kind = PlantKind::three_tank;
  else throw ConfigError("config: unknown plant kind '" + kind_name + "'");

  ExperimentConfig c = preset(kind);

  const auto& plant = j.at("plant");
  detail::check_keys(plant, {"kind", "pendulum", "cartpole", "tanks"}, "plant");
  if (plant.contains("pendulum")) {
    const auto& p = plant.at("pendulum");
    detail::check_keys(p, {"mass", "length", "friction", "gravity", "tau"}, "plant.pendulum");
    detail::read(p, "mass", c.pendulum.mass);
    detail::read(p, "length", c.pendulum.length);
    detail::read(p, "friction", c.pendulum.friction);
    detail::read(p, "gravity", c.pendulum.gravity);
    detail::read(p, "tau", c.pendulum.tau);
  }
  if (plant.contains("cartpole")) {
    const auto& p = plant.at("cartpole");
    detail::check_keys(
        p, {"cart_mass", "pole_mass", "pole_length", "gravity", "tau", "denominator"},
        "plant.cartpole");
    detail::read(p, "cart_mass", c.cartpole.cart_mass);
    detail::read(p, "pole_mass", c.cartpole.pole_mass);
    detail::read(p, "pole_length", c.cartpole.pole_length);
    detail::read(p, "gravity", c.cartpole.gravity);
    detail::read(p, "tau", c.cartpole.tau);
    if (p.contains("denominator")) {
      const std::string d = p.at("denominator").get<std::string>();
      if (d == "total_mass") c.cartpole.denominator = CartpoleDenominator::total_mass;
      else if (d == "product") c.cartpole.denominator = CartpoleDenominator::product;
      else throw ConfigError("config: cartpole denominator must be total_mass or product");
    }
  }
  if (plant.contains("tanks")) {
    const auto& p = plant.at("tanks");
    detail::check_keys(p,
                       {"area1", "area2", "area3", "pipe12", "pipe23", "pipe_out", "outflow12",
                        "outflow23", "outflow_out", "gravity", "tau"},
                       "plant.tanks");
    detail::read(p, "area1", c.tanks.area1);
    detail::read(p, "area2", c.tanks.area2);
    detail::read(p, "area3", c.tanks.area3);
    detail::read(p, "pipe12", c.tanks.pipe12);
    detail::read(p, "pipe23", c.tanks.pipe23);
    detail::read(p, "pipe_out", c.tanks.pipe_out);
    detail::read(p, "outflow12", c.tanks.outflow12);
    detail::read(p, "outflow23", c.tanks.outflow23);
    detail::read(p, "outflow_out", c.tanks.outflow_out);
    detail::read(p, "gravity", c.tanks.gravity);
    detail::read(p, "tau", c.tanks.tau);
  }

  if (j.contains("ranges")) {
    detail::check_keys(j.at("ranges"), {"inputs", "outputs"}, "ranges");
    detail::read_ranges(j.at("ranges"), "inputs", c.input_ranges);
    detail::read_ranges(j.at("ranges"), "outputs", c.output_ranges);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::check_keys(d, {"samples", "steps", "seed", "hold"}, "data");
    detail::read(d, "samples", c.data.samples);
    detail::read(d, "steps", c.data.steps);
    detail::read(d, "seed", c.data.seed);
    detail::read(d, "hold", c.data.hold);
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    detail::check_keys(p, {"lookback", "normalize", "test_fraction", "split_seed"}, "pipeline");
    detail::read(p, "lookback", c.lookback);
    detail::read(p, "normalize", c.normalize);
    detail::read(p, "test_fraction", c.split_cfg.test_fraction);
    detail::read(p, "split_seed", c.split_cfg.seed);
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    detail::check_keys(n, {"widths", "seed"}, "network");
    detail::read(n, "widths", c.network.widths);
    detail::read(n, "seed", c.network.seed);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    detail::check_keys(t, {"epochs", "batch", "rate", "beta1", "beta2", "epsilon", "seed"},
                       "training");
    detail::read(t, "epochs", c.training.epochs);
    detail::read(t, "batch", c.training.batch);
    detail::read(t, "rate", c.training.rate);
    detail::read(t, "beta1", c.training.beta1);
    detail::read(t, "beta2", c.training.beta2);
    detail::read(t, "epsilon", c.training.epsilon);
    detail::read(t, "seed", c.training.seed);
  }
  if (j.contains("ga")) {
    const auto& g = j.at("ga");
    detail::check_keys(g,
                       {"population", "generations", "elite", "tournament", "crossover",
                        "mutation_prob", "mutation_scale", "seed"},
                       "ga");
    GaConfig& ga = c.controller.ga;
    detail::read(g, "population", ga.population);
    detail::read(g, "generations", ga.generations);
    detail::read(g, "elite", ga.elite);
    detail::read(g, "tournament", ga.tournament);
    detail::read(g, "crossover", ga.crossover);
    detail::read(g, "mutation_prob", ga.mutation_prob);
    detail::read(g, "mutation_scale", ga.mutation_scale);
    detail::read(g, "seed", ga.seed);
  }
  if (j.contains("controller")) {
    const auto& ct = j.at("controller");
    detail::check_keys(
        ct, {"horizon", "output_weights", "move_penalty", "warmup_input", "warm_start"},
        "controller");
    detail::read(ct, "horizon", c.controller.horizon);
    detail::read(ct, "output_weights", c.controller.output_weights);
    detail::read(ct, "move_penalty", c.controller.move_penalty);
    detail::read(ct, "warmup_input", c.controller.warmup_input);
    detail::read(ct, "warm_start", c.controller.warm_start);
  }
  if (j.contains("reference")) {
    const auto& r = j.at("reference");
    detail::check_keys(r, {"length", "setpoints"}, "reference");
    detail::read(r, "length", c.reference.length);
    if (r.contains("setpoints")) {
      c.reference.setpoints.clear();
      for (const auto& sp : r.at("setpoints")) {
        detail::check_keys(sp, {"step", "value"}, "reference.setpoints");
        c.reference.setpoints.push_back(
            {sp.at("step").get<std::size_t>(), sp.at("value").get<std::vector<double>>()});
      }
    }
  }
  if (j.contains("demo")) {
    const auto& d = j.at("demo");
    detail::check_keys(d, {"steps", "seed", "hold"}, "demo");
    detail::read(d, "steps", c.demo_steps);
    detail::read(d, "seed", c.demo_seed);
    detail::read(d, "hold", c.demo_hold);
  }
  detail::read(j, "out_dir", c.out_dir);

  // Data generation and control search share the declared actuator ranges.
  c.data.input_ranges = c.input_ranges;
  c.controller.input_bounds = c.input_ranges;
  c.controller.ga.bounds = c.input_ranges;
  c.validate();
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Canonical re-serialization, echoed into every output directory so results
// carry their provenance.
inline nlohmann::json ExperimentConfig::echo() const {
  nlohmann::json j;
  j["plant"]["kind"] = kind == PlantKind::pendulum
                           ? "pendulum"
                           : (kind == PlantKind::cartpole ? "cartpole" : "tanks");
  switch (kind) {
    case PlantKind::pendulum:
      j["plant"]["pendulum"] = {{"mass", pendulum.mass},
                                {"length", pendulum.length},
                                {"friction", pendulum.friction},
                                {"gravity", pendulum.gravity},
                                {"tau", pendulum.tau}};
      break;
    case PlantKind::cartpole:
      j["plant"]["cartpole"] = {
          {"cart_mass", cartpole.cart_mass},
          {"pole_mass", cartpole.pole_mass},
          {"pole_length", cartpole.pole_length},
          {"gravity", cartpole.gravity},
          {"tau", cartpole.tau},
          {"denominator",
           cartpole.denominator == CartpoleDenominator::total_mass ? "total_mass" : "product"}};
      break;
    case PlantKind::three_tank:
      j["plant"]["tanks"] = {{"area1", tanks.area1},       {"area2", tanks.area2},
                             {"area3", tanks.area3},       {"pipe12", tanks.pipe12},
                             {"pipe23", tanks.pipe23},     {"pipe_out", tanks.pipe_out},
                             {"outflow12", tanks.outflow12}, {"outflow23", tanks.outflow23},
                             {"outflow_out", tanks.outflow_out}, {"gravity", tanks.gravity},
                             {"tau", tanks.tau}};
      break;
  }
  for (const auto& r : input_ranges) j["ranges"]["inputs"].push_back({r.lo, r.hi});
  for (const auto& r : output_ranges) j["ranges"]["outputs"].push_back({r.lo, r.hi});
  j["data"] = {{"samples", data.samples},
               {"steps", data.steps},
               {"seed", data.seed},
               {"hold", data.hold}};
  j["pipeline"] = {{"lookback", lookback},
                   {"normalize", normalize},
                   {"test_fraction", split_cfg.test_fraction},
                   {"split_seed", split_cfg.seed}};
  j["network"] = {{"widths", network.widths}, {"seed", network.seed}};
  j["training"] = {{"epochs", training.epochs}, {"batch", training.batch},
                   {"rate", training.rate},     {"beta1", training.beta1},
                   {"beta2", training.beta2},   {"epsilon", training.epsilon},
                   {"seed", training.seed}};
  const GaConfig& ga = controller.ga;
  j["ga"] = {{"population", ga.population},       {"generations", ga.generations},
             {"elite", ga.elite},                 {"tournament", ga.tournament},
             {"crossover", ga.crossover},         {"mutation_prob", ga.mutation_prob},
             {"mutation_scale", ga.mutation_scale}, {"seed", ga.seed}};
  j["controller"] = {{"horizon", controller.horizon},
                     {"output_weights", controller.output_weights},
                     {"move_penalty", controller.move_penalty},
                     {"warmup_input", controller.warmup_input},
                     {"warm_start", controller.warm_start}};
  j["reference"]["length"] = reference.length;
  for (const auto& sp : reference.setpoints) {
    j["reference"]["setpoints"].push_back({{"step", sp.start}, {"value", sp.value}});
  }
  j["demo"] = {{"steps", demo_steps}, {"seed", demo_seed}, {"hold", demo_hold}};
  j["out_dir"] = out_dir;
  return j;
}

}  // namespace mlmpc
