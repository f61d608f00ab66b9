#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlmpc/csv.hpp"
#include "mlmpc/dataset.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/ga.hpp"
#include "mlmpc/matrix.hpp"
#include "mlmpc/mlp.hpp"
#include "mlmpc/plant.hpp"
#include "mlmpc/rng.hpp"

namespace mlmpc {

// Applied inputs and observed plant outputs since session start, step-aligned:
// outputs.row(t) is the plant's response to inputs.row(t).
struct History {
  Matrix inputs;
  Matrix outputs;

  std::size_t size() const { return inputs.rows(); }

  void append(std::span<const double> input, std::span<const double> output) {
    inputs.append_row(input);
    outputs.append_row(output);
  }
};

// Piecewise-constant setpoint sequence: each entry holds from its start step
// until the next entry.
struct ReferenceTrajectory {
  struct Setpoint {
    std::size_t start = 0;
    std::vector<double> value;
  };
  std::vector<Setpoint> setpoints;
  std::size_t length = 0;

  void validate(std::size_t d_y) const {
    if (setpoints.empty()) throw ConfigError("reference: no setpoints");
    if (setpoints.front().start != 0) throw ConfigError("reference: first setpoint must start at 0");
    for (std::size_t i = 0; i < setpoints.size(); ++i) {
      if (setpoints[i].value.size() != d_y) {
        throw ConfigError("reference: setpoint " + std::to_string(i) + " has " +
                          std::to_string(setpoints[i].value.size()) + " channels, expected " +
                          std::to_string(d_y));
      }
      if (i > 0 && setpoints[i].start <= setpoints[i - 1].start) {
        throw ConfigError("reference: setpoint starts must be strictly increasing");
      }
    }
  }

  std::span<const double> at(std::size_t step) const {
    std::size_t active = 0;
    while (active + 1 < setpoints.size() && setpoints[active + 1].start <= step) ++active;
    return setpoints[active].value;
  }
};

struct ControllerConfig {
  std::size_t horizon = 5;
  std::vector<double> output_weights;      // tracking weight per output channel
  double move_penalty = 0.0;               // lambda on squared input moves
  std::vector<ChannelRange> input_bounds;  // actuator box, also the GA search box
  std::vector<double> warmup_input;        // applied while history is too short
  GaConfig ga;
  bool warm_start = false;  // seed each step's population with the previous best, shifted

  void validate(std::size_t d_u, std::size_t d_y) const {
    if (horizon < 1) throw ConfigError("controller: horizon must be >= 1");
    if (output_weights.size() != d_y) {
      throw ConfigError("controller: need one output weight per output channel");
    }
    bool any_positive = false;
    for (double w : output_weights) {
      if (w < 0) throw ConfigError("controller: output weights must be >= 0");
      any_positive = any_positive || w > 0;
    }
    if (!any_positive) throw ConfigError("controller: at least one output weight must be > 0");
    if (!(move_penalty >= 0)) throw ConfigError("controller: move penalty must be >= 0");
    if (input_bounds.size() != d_u) {
      throw ConfigError("controller: need one input bound per input channel");
    }
    for (const auto& b : input_bounds) b.validate();
    if (warmup_input.size() != d_u) {
      throw ConfigError("controller: warmup input needs one value per input channel");
    }
    for (std::size_t c = 0; c < d_u; ++c) {
      if (warmup_input[c] < input_bounds[c].lo || warmup_input[c] > input_bounds[c].hi) {
        throw ConfigError("controller: warmup input outside actuator bounds");
      }
    }
  }
};

// A prediction model maps a candidate input sequence to a predicted output
// sequence, given the session history. Rollouts must never touch the live
// plant's state.
class PredictionModel {
 public:
  virtual ~PredictionModel() = default;
  virtual const char* name() const = 0;
  // History entries required before rollouts can start; shorter histories put
  // the controller into warmup.
  virtual std::size_t min_history() const = 0;
  // Returns false if a prediction went non-finite (the optimizer treats that
  // candidate as infinitely bad).
  virtual bool rollout(const History& history, const Matrix& candidates, Matrix& out) = 0;
};

// Steps the plant itself through the candidate sequence and puts it back,
// bit-identically, via snapshot/restore.
inline Matrix perfect_rollout(Plant& plant, const Matrix& candidates) {
  Matrix out(candidates.rows(), plant.output_dim());
  const Plant::Snapshot snap = plant.snapshot();
  try {
    for (std::size_t t = 0; t < candidates.rows(); ++t) {
      plant.apply(candidates.row(t));
      plant.observe_into(out.row(t));
    }
  } catch (...) {
    plant.restore(snap);
    throw;
  }
  plant.restore(snap);
  return out;
}

// The comparison controller's model: the controlled system itself, mirrored
// state-for-state. Predictions are perfect by construction.
class PerfectModel final : public PredictionModel {
 public:
  explicit PerfectModel(Plant& plant) : plant_(&plant) {}
  const char* name() const override { return "perfect"; }
  std::size_t min_history() const override { return 0; }
  bool rollout(const History&, const Matrix& candidates, Matrix& out) override {
    out = perfect_rollout(*plant_, candidates);
    return true;
  }

 private:
  Plant* plant_;
};

// Builds the network input row for the next prediction: the last `lookback`
// (input, previous output) pairs from the recorded history plus the pair
// (next_input, newest recorded output). Only true plant outputs enter the row,
// which is what stops prediction errors from accumulating across control
// iterations.
inline std::vector<double> build_corrected_features(const History& history, std::size_t lookback,
                                                    std::span<const double> next_input,
                                                    const std::optional<Normalizer>& normalizer) {
  const std::size_t n = history.size();
  if (n < lookback + 1) {
    throw ConfigError("build_corrected_features: need history of at least " +
                      std::to_string(lookback + 1) + " steps, have " + std::to_string(n));
  }
  const std::size_t d_u = history.inputs.cols();
  const std::size_t d_y = history.outputs.cols();
  Matrix window(lookback + 1, d_u + d_y);
  for (std::size_t j = 0; j < lookback; ++j) {
    const std::size_t s = n - lookback + j;  // history row donating the input
    auto row = window.row(j);
    const auto in = history.inputs.row(s);
    const auto out = history.outputs.row(s - 1);
    std::copy(in.begin(), in.end(), row.begin());
    std::copy(out.begin(), out.end(), row.begin() + d_u);
  }
  auto last = window.row(lookback);
  std::copy(next_input.begin(), next_input.end(), last.begin());
  const auto newest = history.outputs.row(n - 1);
  std::copy(newest.begin(), newest.end(), last.begin() + d_u);

  std::vector<double> features((lookback + 1) * (d_u + d_y));
  flatten_window(window, lookback, lookback, features);
  if (normalizer) normalizer->normalize_feature_row(features);
  return features;
}

// One-step predictor in the (possibly normalized) feature space.
using RawPredictor = std::function<void(std::span<const double> features, std::span<double> out)>;

// Rolls the predictor forward over the candidate inputs. The first step uses
// the state-corrected feature row; later steps shift the window, feeding the
// predictor's own previous output back in (errors do accumulate inside the
// horizon, by design of the scheme). Returns false on a non-finite prediction.
inline bool dnn_rollout(const RawPredictor& predictor, const History& history,
                        const Matrix& candidates, std::size_t lookback,
                        const std::optional<Normalizer>& normalizer, Matrix& out) {
  const std::size_t d_u = history.inputs.cols();
  const std::size_t d_y = history.outputs.cols();
  const std::size_t horizon = candidates.rows();
  out = Matrix(horizon, d_y);

  // Raw-valued rolling window of merged (input, output) pairs.
  Matrix window(lookback + 1, d_u + d_y);
  {
    const std::size_t n = history.size();
    if (n < lookback + 1) {
      throw ConfigError("dnn_rollout: insufficient history (" + std::to_string(n) + " < " +
                        std::to_string(lookback + 1) + ")");
    }
    for (std::size_t j = 0; j < lookback; ++j) {
      const std::size_t s = n - lookback + j;
      auto row = window.row(j);
      const auto in = history.inputs.row(s);
      const auto prev_out = history.outputs.row(s - 1);
      std::copy(in.begin(), in.end(), row.begin());
      std::copy(prev_out.begin(), prev_out.end(), row.begin() + d_u);
    }
    auto last = window.row(lookback);
    const auto c0 = candidates.row(0);
    std::copy(c0.begin(), c0.end(), last.begin());
    const auto newest = history.outputs.row(n - 1);
    std::copy(newest.begin(), newest.end(), last.begin() + d_u);
  }

  std::vector<double> features((lookback + 1) * (d_u + d_y));
  std::vector<double> prediction(d_y);
  for (std::size_t t = 0; t < horizon; ++t) {
    flatten_window(window, lookback, lookback, features);
    if (normalizer) normalizer->normalize_feature_row(features);
    predictor(features, prediction);
    if (normalizer) normalizer->denormalize_output_row(prediction);
    for (double v : prediction) {
      if (!std::isfinite(v)) return false;
    }
    out.set_row(t, prediction);
    if (t + 1 < horizon) {
      // Shift the window one step: newest pair is the next candidate input
      // together with the prediction just made.
      for (std::size_t j = 0; j < lookback; ++j) window.set_row(j, window.row(j + 1));
      auto last = window.row(lookback);
      const auto c = candidates.row(t + 1);
      std::copy(c.begin(), c.end(), last.begin());
      std::copy(prediction.begin(), prediction.end(), last.begin() + d_u);
    }
  }
  return true;
}

// The learned prediction model: an MLP over lookback windows, with the
// injectable predictor kept separate so tests can swap in a simulator-backed
// stub and validate the rollout mechanics exactly.
class DnnModel final : public PredictionModel {
 public:
  DnnModel(MlpWeights weights, std::size_t lookback)
      : weights_(std::move(weights)), lookback_(lookback) {
    predictor_ = [this](std::span<const double> x, std::span<double> y) {
      mlp_forward(weights_, x, scratch_);
      std::copy(scratch_.act.back().begin(), scratch_.act.back().end(), y.begin());
    };
    normalizer_ = weights_.normalizer;
  }

  DnnModel(RawPredictor predictor, std::size_t lookback, std::optional<Normalizer> normalizer)
      : predictor_(std::move(predictor)), lookback_(lookback), normalizer_(std::move(normalizer)) {}

  // Checks the network's input width against the plant's channel layout
  // before any control work starts.
  void validate_for(const Plant& plant) const {
    if (!weights_.layers.empty()) {
      const std::size_t expected = (lookback_ + 1) * (plant.input_dim() + plant.output_dim());
      if (weights_.input_dim() != expected) {
        throw ConfigError("weights expect " + std::to_string(weights_.input_dim()) +
                          " features but a " + std::string(to_string(plant.kind())) +
                          " plant with lookback " + std::to_string(lookback_) + " produces " +
                          std::to_string(expected));
      }
      if (weights_.output_dim() != plant.output_dim()) {
        throw ConfigError("weights emit " + std::to_string(weights_.output_dim()) +
                          " outputs but the plant has " + std::to_string(plant.output_dim()));
      }
    }
  }

  const char* name() const override { return "ml"; }
  std::size_t min_history() const override { return lookback_ + 1; }
  bool rollout(const History& history, const Matrix& candidates, Matrix& out) override {
    return dnn_rollout(predictor_, history, candidates, lookback_, normalizer_, out);
  }

  std::size_t lookback() const { return lookback_; }

 private:
  MlpWeights weights_;
  RawPredictor predictor_;
  std::size_t lookback_ = 0;
  std::optional<Normalizer> normalizer_;
  MlpScratch scratch_;
};

// Quadratic tracking cost plus an optional penalty on input moves; the first
// move is measured against the previously applied input.
inline double tracking_cost(const Matrix& predicted, const Matrix& reference,
                            const Matrix& inputs, std::span<const double> previous_input,
                            const ControllerConfig& cfg) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols()) {
    throw ConfigError("tracking_cost: prediction/reference shape mismatch");
  }
  double cost = 0.0;
  for (std::size_t t = 0; t < predicted.rows(); ++t) {
    for (std::size_t j = 0; j < predicted.cols(); ++j) {
      const double err = predicted(t, j) - reference(t, j);
      cost += cfg.output_weights[j] * err * err;
    }
  }
  if (cfg.move_penalty > 0.0) {
    for (std::size_t t = 0; t < inputs.rows(); ++t) {
      for (std::size_t c = 0; c < inputs.cols(); ++c) {
        const double prev = t == 0 ? previous_input[c] : inputs(t - 1, c);
        const double move = inputs(t, c) - prev;
        cost += cfg.move_penalty * move * move;
      }
    }
  }
  return cost;
}

struct ControlDecision {
  std::vector<double> input;
  std::vector<double> predicted;  // first-step prediction of the chosen sequence
  double cost = std::numeric_limits<double>::quiet_NaN();
  bool warmup = false;
  Chromosome best;  // full optimized sequence (empty during warmup)
};

// One receding-horizon iteration: search the input sequence minimizing the
// predicted tracking cost against the currently active setpoint (zero-order
// held across the horizon; the controller does not anticipate jumps), then
// return the first input of the best sequence.
inline ControlDecision control_step(PredictionModel& pm, const History& history,
                                    const ReferenceTrajectory& ref, std::size_t step,
                                    const ControllerConfig& cfg,
                                    const Chromosome* warm_start = nullptr) {
  ControlDecision decision;
  if (history.size() < pm.min_history()) {
    decision.input = cfg.warmup_input;
    decision.warmup = true;
    return decision;
  }

  const std::size_t d_u = cfg.input_bounds.size();
  const std::size_t d_y = cfg.output_weights.size();
  Matrix ref_slice(cfg.horizon, d_y);
  const auto setpoint = ref.at(step);
  for (std::size_t t = 0; t < cfg.horizon; ++t) ref_slice.set_row(t, setpoint);

  std::vector<double> previous_input(d_u, 0.0);
  if (history.size() > 0) {
    const auto last = history.inputs.row(history.size() - 1);
    previous_input.assign(last.begin(), last.end());
  }

  Matrix predicted;
  const FitnessFn fitness = [&](const Chromosome& candidate) {
    if (!pm.rollout(history, candidate.genes, predicted)) {
      return std::numeric_limits<double>::infinity();
    }
    return tracking_cost(predicted, ref_slice, candidate.genes, previous_input, cfg);
  };

  GaConfig ga = cfg.ga;
  ga.bounds = cfg.input_bounds;
  ga.seed = derive_seed(cfg.ga.seed, step);  // fresh, step-specific optimizer stream
  const GaResult result = ga_run_seeded(fitness, cfg.horizon, ga, warm_start);

  decision.best = result.best;
  decision.cost = result.cost;
  decision.input.assign(result.best.genes.row(0).begin(), result.best.genes.row(0).end());
  for (std::size_t c = 0; c < d_u; ++c) {
    decision.input[c] = std::clamp(decision.input[c], cfg.input_bounds[c].lo,
                                   cfg.input_bounds[c].hi);
  }
  if (pm.rollout(history, result.best.genes, predicted)) {
    decision.predicted.assign(predicted.row(0).begin(), predicted.row(0).end());
  } else {
    decision.predicted.assign(d_y, std::numeric_limits<double>::quiet_NaN());
  }
  return decision;
}

// Per step: reference, applied input, plant output, the model's one-step
// prediction, realized optimizer cost, wall time. The wall-time column is
// pinned to zero so logs stay byte-reproducible run to run; timing is
// reported by the harness separately.
struct SessionStep {
  std::vector<double> reference;
  std::vector<double> input;
  std::vector<double> output;
  std::vector<double> predicted;
  double cost = std::numeric_limits<double>::quiet_NaN();
  double ms = 0.0;
};

struct SessionLog {
  std::size_t d_u = 0;
  std::size_t d_y = 0;
  std::vector<SessionStep> steps;
  bool valid = true;
  std::string fault;
};

// Receding-horizon shift for warm starts: drop the first row, duplicate the
// last.
inline Chromosome shift_chromosome(const Chromosome& c) {
  Chromosome shifted = c;
  for (std::size_t t = 0; t + 1 < c.genes.rows(); ++t) {
    shifted.genes.set_row(t, c.genes.row(t + 1));
  }
  if (c.genes.rows() > 1) {
    shifted.genes.set_row(c.genes.rows() - 1, c.genes.row(c.genes.rows() - 1));
  }
  return shifted;
}

// Runs a full closed-loop session from the plant's current state. Faults end
// the session early with the partial log flagged invalid.
inline SessionLog run_session(Plant& plant, PredictionModel& pm, const ReferenceTrajectory& ref,
                              const ControllerConfig& cfg) {
  const std::size_t d_u = plant.input_dim();
  const std::size_t d_y = plant.output_dim();
  cfg.validate(d_u, d_y);
  ref.validate(d_y);

  SessionLog log;
  log.d_u = d_u;
  log.d_y = d_y;
  History history;
  history.inputs = Matrix(0, d_u);
  history.outputs = Matrix(0, d_y);
  Chromosome previous_best;
  for (std::size_t step = 0; step < ref.length; ++step) {
    SessionStep entry;
    const auto setpoint = ref.at(step);
    entry.reference.assign(setpoint.begin(), setpoint.end());
    try {
      const Chromosome* warm =
          cfg.warm_start && previous_best.genes.rows() > 0 ? &previous_best : nullptr;
      ControlDecision decision = control_step(pm, history, ref, step, cfg, warm);
      entry.input = decision.input;
      entry.cost = decision.cost;
      entry.predicted = decision.warmup
                            ? std::vector<double>(d_y, std::numeric_limits<double>::quiet_NaN())
                            : decision.predicted;
      if (cfg.warm_start && !decision.warmup) {
        previous_best = shift_chromosome(decision.best);
      }
      plant.apply(entry.input);
      entry.output = plant.observe();
      history.append(entry.input, entry.output);
    } catch (const std::exception& e) {
      log.valid = false;
      log.fault = e.what();
      break;
    }
    log.steps.push_back(std::move(entry));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Session log CSV: step,r*,u*,y*,yhat*,cost,ms
// ---------------------------------------------------------------------------

inline void save_session_csv(const SessionLog& log, const std::string& path) {
  std::string out = "step";
  for (std::size_t c = 0; c < log.d_y; ++c) out += ",r" + std::to_string(c);
  for (std::size_t c = 0; c < log.d_u; ++c) out += ",u" + std::to_string(c);
  for (std::size_t c = 0; c < log.d_y; ++c) out += ",y" + std::to_string(c);
  for (std::size_t c = 0; c < log.d_y; ++c) out += ",yhat" + std::to_string(c);
  out += ",cost,ms\n";
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const SessionStep& s = log.steps[t];
    out += std::to_string(t);
    for (double v : s.reference) out += ',' + fmt_double(v);
    for (double v : s.input) out += ',' + fmt_double(v);
    for (double v : s.output) out += ',' + fmt_double(v);
    for (double v : s.predicted) out += ',' + fmt_double(v);
    out += ',' + fmt_double(s.cost) + ',' + fmt_double(s.ms) + '\n';
  }
  if (!log.valid) out += "# invalid: " + log.fault + "\n";
  write_file(path, out);
}

inline SessionLog load_session_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file");
  const auto header = split(lines.front(), ',');
  SessionLog log;
  for (const std::string& name : header) {
    if (name.rfind('u', 0) == 0 && name != "u") ++log.d_u;
    if (name.rfind('y', 0) == 0 && name.rfind("yhat", 0) != 0) ++log.d_y;
  }
  if (log.d_u == 0 || log.d_y == 0) throw ParseError(path + ":1: unrecognized header");
  const std::size_t expected = 1 + 3 * log.d_y + log.d_u + 2;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string context = path + ":" + std::to_string(i + 1);
    if (lines[i].rfind("# invalid:", 0) == 0) {
      log.valid = false;
      log.fault = lines[i].substr(11);
      break;
    }
    if (lines[i].empty() && i + 1 == lines.size()) break;
    const auto fields = split(lines[i], ',');
    if (fields.size() != expected) {
      throw ParseError(context + ": expected " + std::to_string(expected) + " fields, got " +
                       std::to_string(fields.size()));
    }
    SessionStep s;
    std::size_t f = 1;
    for (std::size_t c = 0; c < log.d_y; ++c) s.reference.push_back(parse_double(fields[f++], context));
    for (std::size_t c = 0; c < log.d_u; ++c) s.input.push_back(parse_double(fields[f++], context));
    for (std::size_t c = 0; c < log.d_y; ++c) s.output.push_back(parse_double(fields[f++], context));
    for (std::size_t c = 0; c < log.d_y; ++c) s.predicted.push_back(parse_double(fields[f++], context));
    s.cost = parse_double(fields[f++], context);
    s.ms = parse_double(fields[f++], context);
    log.steps.push_back(std::move(s));
  }
  return log;
}

}  // namespace mlmpc
