#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlmpc/dataset.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/matrix.hpp"
#include "mlmpc/rng.hpp"

namespace mlmpc {

// Dense feed-forward regressor: ReLU hidden layers, identity output layer
// (the targets of two of the three plants are signed).

struct MlpConfig {
  std::vector<std::size_t> widths;  // input, hidden..., output
  std::uint64_t seed = 0;

  void validate() const {
    if (widths.size() < 2) throw ConfigError("mlp config: need at least input and output widths");
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError("mlp config: zero-width layer");
    }
  }
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct Layer {
  Matrix weights;            // out x in, row-major
  std::vector<double> bias;  // out
};

struct MlpWeights {
  MlpConfig config;
  std::optional<Normalizer> normalizer;  // present when trained on scaled data
  std::vector<Layer> layers;

  std::size_t input_dim() const { return config.widths.front(); }
  std::size_t output_dim() const { return config.widths.back(); }
};

// Seeded uniform He-style initialization: weights uniform within
// +-sqrt(6*2/fan_in), biases zero.
inline MlpWeights mlp_init(const MlpConfig& config) {
  config.validate();
  MlpWeights w;
  w.config = config;
  Rng rng(config.seed);
  for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
    const std::size_t fan_in = config.widths[l];
    const std::size_t fan_out = config.widths[l + 1];
    const double limit = std::sqrt(6.0 * 2.0 / static_cast<double>(fan_in));
    Layer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    for (std::size_t j = 0; j < fan_out; ++j) {
      for (std::size_t i = 0; i < fan_in; ++i) layer.weights(j, i) = rng.uniform(-limit, limit);
    }
    w.layers.push_back(std::move(layer));
  }
  return w;
}

// Reusable activation/delta buffers so the hot loops never allocate.
struct MlpScratch {
  std::vector<std::vector<double>> act;    // act[l]: output of layer l (act[0] = input)
  std::vector<std::vector<double>> delta;  // delta[l]: dLoss/dz of layer l+1's input

  void resize(const MlpConfig& config) {
    act.resize(config.widths.size());
    delta.resize(config.widths.size() - 1);
    for (std::size_t l = 0; l < config.widths.size(); ++l) act[l].resize(config.widths[l]);
    for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
      delta[l].resize(config.widths[l + 1]);
    }
  }
};

namespace detail {

inline void affine_relu(const Layer& layer, std::span<const double> x, std::span<double> y,
                        bool relu) {
  const std::size_t out = layer.weights.rows();
  const std::size_t in = layer.weights.cols();
  const double* w = layer.weights.data();
  for (std::size_t j = 0; j < out; ++j) {
    const double* row = w + j * in;
    double sum = layer.bias[j];
    for (std::size_t i = 0; i < in; ++i) sum += row[i] * x[i];
    y[j] = (relu && sum < 0.0) ? 0.0 : sum;
  }
}

}  // namespace detail

inline void mlp_forward(const MlpWeights& w, std::span<const double> x, MlpScratch& scratch) {
  if (x.size() != w.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(x.size()) + " values, expected " +
                      std::to_string(w.input_dim()));
  }
  scratch.resize(w.config);
  std::copy(x.begin(), x.end(), scratch.act[0].begin());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    detail::affine_relu(w.layers[l], scratch.act[l], scratch.act[l + 1],
                        /*relu=*/l + 1 < w.layers.size());
  }
}

inline std::vector<double> mlp_forward(const MlpWeights& w, std::span<const double> x) {
  MlpScratch scratch;
  mlp_forward(w, x, scratch);
  return scratch.act.back();
}

struct MlpGradient {
  std::vector<Layer> layers;

  void resize_like(const MlpWeights& w) {
    layers.resize(w.layers.size());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      layers[l].weights = Matrix(w.layers[l].weights.rows(), w.layers[l].weights.cols());
      layers[l].bias.assign(w.layers[l].bias.size(), 0.0);
    }
  }
  void zero() {
    for (Layer& l : layers) {
      std::fill(l.weights.data(), l.weights.data() + l.weights.rows() * l.weights.cols(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }
};

namespace detail {

// Backpropagates one row, accumulating into `grad`. The output delta must
// already sit in scratch.delta.back(); activations come from a prior forward.
// ReLU subgradient at exactly 0 is taken as 0 (gated on act > 0).
inline void backprop_row(const MlpWeights& w, MlpScratch& scratch, MlpGradient& grad) {
  for (std::size_t l = w.layers.size(); l-- > 0;) {
    const std::size_t out = w.layers[l].weights.rows();
    const std::size_t in = w.layers[l].weights.cols();
    const std::vector<double>& input = scratch.act[l];
    const std::vector<double>& delta = scratch.delta[l];
    double* dw = grad.layers[l].weights.data();
    for (std::size_t j = 0; j < out; ++j) {
      const double d = delta[j];
      if (d != 0.0) {
        double* dw_row = dw + j * in;
        for (std::size_t i = 0; i < in; ++i) dw_row[i] += d * input[i];
      }
      grad.layers[l].bias[j] += d;
    }
    if (l > 0) {
      std::vector<double>& prev = scratch.delta[l - 1];
      std::fill(prev.begin(), prev.end(), 0.0);
      const double* wdata = w.layers[l].weights.data();
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta[j];
        if (d == 0.0) continue;
        const double* w_row = wdata + j * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += w_row[i] * d;
      }
      for (std::size_t i = 0; i < in; ++i) {
        if (!(scratch.act[l][i] > 0.0)) prev[i] = 0.0;
      }
    }
  }
}

// Accumulates the exact MSE gradient of the given rows and returns the summed
// squared error. Loss = (1/(n*K)) * sum ||forward(x) - y||^2 with n the total
// row count used for scaling (callers pass the batch size).
inline double accumulate_gradient(const MlpWeights& w, const Matrix& features,
                                  const Matrix& labels, std::span<const std::size_t> rows,
                                  std::size_t scale_rows, MlpScratch& scratch,
                                  MlpGradient& grad) {
  const std::size_t k = w.output_dim();
  const double delta_scale = 2.0 / (static_cast<double>(scale_rows) * static_cast<double>(k));
  double sq_err = 0.0;
  for (const std::size_t r : rows) {
    mlp_forward(w, features.row(r), scratch);
    std::vector<double>& out_delta = scratch.delta.back();
    for (std::size_t c = 0; c < k; ++c) {
      const double err = scratch.act.back()[c] - labels(r, c);
      sq_err += err * err;
      out_delta[c] = delta_scale * err;
    }
    backprop_row(w, scratch, grad);
  }
  return sq_err;
}

}  // namespace detail

// Exact gradient of (1/(n*K)) * sum ||forward(x)-y||^2 over the whole batch.
inline MlpGradient mlp_gradient(const MlpWeights& w, const Matrix& features,
                                const Matrix& labels) {
  if (features.rows() == 0) throw ConfigError("mlp_gradient: empty batch");
  if (features.cols() != w.input_dim() || labels.cols() != w.output_dim() ||
      labels.rows() != features.rows()) {
    throw ConfigError("mlp_gradient: batch shape mismatch");
  }
  MlpGradient grad;
  grad.resize_like(w);
  grad.zero();
  MlpScratch scratch;
  std::vector<std::size_t> rows(features.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  detail::accumulate_gradient(w, features, labels, rows, features.rows(), scratch, grad);
  return grad;
}

inline double mlp_evaluate(const MlpWeights& w, const Dataset& ds) {
  if (ds.rows() == 0) throw ConfigError("mlp_evaluate: empty dataset");
  if (ds.feature_dim() != w.input_dim() || ds.label_dim() != w.output_dim()) {
    throw ConfigError("mlp_evaluate: dataset shape mismatch");
  }
  MlpScratch scratch;
  double sq_err = 0.0;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    mlp_forward(w, ds.features.row(r), scratch);
    for (std::size_t c = 0; c < ds.label_dim(); ++c) {
      const double err = scratch.act.back()[c] - ds.labels(r, c);
      sq_err += err * err;
    }
  }
  return sq_err / (static_cast<double>(ds.rows()) * static_cast<double>(ds.label_dim()));
}

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch = 32;
  double rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train config: batch must be >= 1");
    if (!(rate > 0)) throw ConfigError("train config: rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      throw ConfigError("train config: moment parameters must lie in [0, 1)");
    }
    if (!(epsilon > 0)) throw ConfigError("train config: epsilon must be > 0");
  }
};

struct TrainReport {
  std::vector<double> train_mse;  // per epoch: mean of mini-batch losses
  std::vector<double> test_mse;   // per epoch: full pass over the test set
  double wall_seconds = 0.0;
};

struct TrainDivergence : OptimizerError {
  TrainDivergence(const std::string& msg, TrainReport partial)
      : OptimizerError(msg), report(std::move(partial)) {}
  TrainReport report;
};

// Mini-batch Adam over seeded shuffles; the last partial batch is kept.
// Deterministic for fixed seeds: init, shuffle order and update order are all
// driven by the project Rng.
inline std::pair<MlpWeights, TrainReport> mlp_train(MlpWeights w, const Dataset& train,
                                                    const Dataset& test, const TrainConfig& cfg) {
  cfg.validate();
  if (train.rows() == 0) throw ConfigError("mlp_train: empty training set");
  if (train.feature_dim() != w.input_dim() || train.label_dim() != w.output_dim()) {
    throw ConfigError("mlp_train: dataset dimensions do not match the network");
  }
  if (!w.normalizer) w.normalizer = train.normalizer;

  MlpGradient grad, m, v;
  grad.resize_like(w);
  m.resize_like(w);
  v.resize_like(w);
  grad.zero();
  m.zero();
  v.zero();
  MlpScratch scratch;

  std::vector<std::size_t> order(train.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);

  TrainReport report;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t updates = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sq_err = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t size = std::min(cfg.batch, order.size() - begin);
      grad.zero();
      epoch_sq_err += detail::accumulate_gradient(
          w, train.features, train.labels, {order.data() + begin, size}, size, scratch, grad);
      ++updates;
      const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(updates));
      const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(updates));
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::size_t n = w.layers[l].weights.rows() * w.layers[l].weights.cols();
        auto adam = [&](double* param, const double* g, double* m1, double* m2,
                        std::size_t count) {
          for (std::size_t i = 0; i < count; ++i) {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            param[i] -= cfg.rate * (m1[i] / bias1) / (std::sqrt(m2[i] / bias2) + cfg.epsilon);
          }
        };
        adam(w.layers[l].weights.data(), grad.layers[l].weights.data(),
             m.layers[l].weights.data(), v.layers[l].weights.data(), n);
        adam(w.layers[l].bias.data(), grad.layers[l].bias.data(), m.layers[l].bias.data(),
             v.layers[l].bias.data(), w.layers[l].bias.size());
      }
    }
    const double train_mse =
        epoch_sq_err / (static_cast<double>(train.rows()) * static_cast<double>(w.output_dim()));
    report.train_mse.push_back(train_mse);
    report.test_mse.push_back(test.rows() > 0 ? mlp_evaluate(w, test) : train_mse);
    if (!std::isfinite(report.train_mse.back()) || !std::isfinite(report.test_mse.back())) {
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      throw TrainDivergence("mlp_train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                "; learning rate too high?",
                            std::move(report));
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(w), std::move(report)};
}

// ---------------------------------------------------------------------------
// Persistence: JSON with config, normalizer and row-major layer matrices.
// ---------------------------------------------------------------------------

inline void save_weights(const MlpWeights& w, const std::string& path) {
  nlohmann::json j;
  j["config"] = {{"widths", w.config.widths}, {"seed", w.config.seed}};
  j["normalizer"] = w.normalizer ? to_json(*w.normalizer) : nlohmann::json(nullptr);
  for (const Layer& layer : w.layers) {
    nlohmann::json lj;
    lj["rows"] = layer.weights.rows();
    lj["cols"] = layer.weights.cols();
    lj["w"] = std::vector<double>(layer.weights.data(),
                                  layer.weights.data() + layer.weights.rows() * layer.weights.cols());
    lj["b"] = layer.bias;
    j["layers"].push_back(std::move(lj));
  }
  write_file(path, j.dump(2) + "\n");
}

inline MlpWeights load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  MlpWeights w;
  try {
    w.config.widths = j.at("config").at("widths").get<std::vector<std::size_t>>();
    w.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    w.config.validate();
    if (!j.at("normalizer").is_null()) w.normalizer = normalizer_from_json(j.at("normalizer"));
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != w.config.widths.size()) {
      throw ParseError(path + ": expected " + std::to_string(w.config.widths.size() - 1) +
                       " layers, found " + std::to_string(layers.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string name = "layer " + std::to_string(l);
      const auto rows = layers[l].at("rows").get<std::size_t>();
      const auto cols = layers[l].at("cols").get<std::size_t>();
      if (rows != w.config.widths[l + 1] || cols != w.config.widths[l]) {
        throw ParseError(path + ": " + name + " shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " does not match widths");
      }
      const auto values = layers[l].at("w").get<std::vector<double>>();
      const auto bias = layers[l].at("b").get<std::vector<double>>();
      if (values.size() != rows * cols) {
        throw ParseError(path + ": " + name + " has " + std::to_string(values.size()) +
                         " weights, expected " + std::to_string(rows * cols));
      }
      if (bias.size() != rows) {
        throw ParseError(path + ": " + name + " has " + std::to_string(bias.size()) +
                         " biases, expected " + std::to_string(rows));
      }
      Layer layer{Matrix(rows, cols), bias};
      std::copy(values.begin(), values.end(), layer.weights.data());
      for (double value : values) {
        if (!std::isfinite(value)) throw ParseError(path + ": " + name + ": non-finite weight");
      }
      w.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return w;
}

}  // namespace mlmpc
