#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlmpc/csv.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/matrix.hpp"
#include "mlmpc/plant.hpp"
#include "mlmpc/rng.hpp"

namespace mlmpc {

struct ChannelRange {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError("channel range: need finite hi > lo");
    }
  }
  friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

// Min-max scaling of inputs and outputs to [0, 1] using declared channel
// ranges (not data-dependent statistics, so the mapping is portable between
// the training pipeline and the controller).
struct Normalizer {
  std::vector<ChannelRange> inputs;
  std::vector<ChannelRange> outputs;

  void validate() const {
    for (const auto& r : inputs) r.validate();
    for (const auto& r : outputs) r.validate();
  }

  static double scale(double v, const ChannelRange& r) { return (v - r.lo) / (r.hi - r.lo); }
  static double unscale(double v, const ChannelRange& r) { return r.lo + v * (r.hi - r.lo); }

  // Feature rows repeat the merged-step layout [inputs..., outputs...] once
  // per lookback slot, so the channel of a column is its index modulo the
  // merged width.
  void normalize_features(Matrix& features) const {
    const std::size_t width = inputs.size() + outputs.size();
    for (std::size_t r = 0; r < features.rows(); ++r) {
      for (std::size_t c = 0; c < features.cols(); ++c) {
        features(r, c) = scale(features(r, c), channel_range(c % width));
      }
    }
  }

  void normalize_labels(Matrix& labels) const {
    for (std::size_t r = 0; r < labels.rows(); ++r) {
      for (std::size_t c = 0; c < labels.cols(); ++c) {
        labels(r, c) = scale(labels(r, c), outputs[c]);
      }
    }
  }

  void normalize_feature_row(std::span<double> row) const {
    const std::size_t width = inputs.size() + outputs.size();
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = scale(row[c], channel_range(c % width));
    }
  }

  void denormalize_output_row(std::span<double> row) const {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = unscale(row[c], outputs[c]);
  }

  const ChannelRange& channel_range(std::size_t merged_column) const {
    return merged_column < inputs.size() ? inputs[merged_column]
                                         : outputs[merged_column - inputs.size()];
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline nlohmann::json to_json(const Normalizer& n) {
  nlohmann::json j;
  for (const auto& r : n.inputs) j["inputs"].push_back({r.lo, r.hi});
  for (const auto& r : n.outputs) j["outputs"].push_back({r.lo, r.hi});
  return j;
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
  Normalizer n;
  for (const auto& r : j.at("inputs")) n.inputs.push_back({r.at(0), r.at(1)});
  for (const auto& r : j.at("outputs")) n.outputs.push_back({r.at(0), r.at(1)});
  n.validate();
  return n;
}

// ---------------------------------------------------------------------------
// Episodes and excitation.
// ---------------------------------------------------------------------------

// One recorded measurement session: inputs (steps x d_u) and the outputs the
// plant produced after each input (steps x d_y).
struct Episode {
  Matrix inputs;
  Matrix outputs;

  std::size_t steps() const { return inputs.rows(); }
};

struct GeneratorConfig {
  std::size_t samples = 1;
  std::size_t steps = 2;
  std::vector<ChannelRange> input_ranges;  // one per input channel
  std::uint64_t seed = 0;
  std::size_t hold = 1;  // redraw the input every `hold` steps (1 = every step)

  void validate(std::size_t d_u) const {
    if (samples < 1) throw ConfigError("generator: samples must be >= 1");
    if (hold < 1) throw ConfigError("generator: hold must be >= 1");
    if (input_ranges.size() != d_u) {
      throw ConfigError("generator: need one input range per input channel");
    }
    for (const auto& r : input_ranges) r.validate();
  }
};

struct GenerateResult {
  std::vector<Episode> episodes;
  std::size_t rejected = 0;  // episodes regenerated after a non-finite state
};

// Drives the plant from its default initial state with seeded random inputs,
// once per episode. An episode whose simulation faults is discarded and drawn
// again with a fresh sub-seed.
inline GenerateResult generate_episodes(Plant& plant, const GeneratorConfig& cfg) {
  const std::size_t d_u = plant.input_dim();
  const std::size_t d_y = plant.output_dim();
  cfg.validate(d_u);

  GenerateResult result;
  result.episodes.reserve(cfg.samples);
  for (std::size_t e = 0; e < cfg.samples; ++e) {
    const std::uint64_t episode_seed = derive_seed(cfg.seed, e);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt == 100) {
        throw SimulationError("generate_episodes: episode " + std::to_string(e) +
                              " rejected 100 times; check plant parameters");
      }
      Rng rng(derive_seed(episode_seed, attempt));
      plant.reset();
      Episode ep{Matrix(cfg.steps, d_u), Matrix(cfg.steps, d_y)};
      try {
        std::vector<double> input(d_u);
        for (std::size_t t = 0; t < cfg.steps; ++t) {
          if (t % cfg.hold == 0) {
            for (std::size_t c = 0; c < d_u; ++c) {
              input[c] = rng.uniform(cfg.input_ranges[c].lo, cfg.input_ranges[c].hi);
            }
          }
          ep.inputs.set_row(t, input);
          plant.apply(input);
          plant.observe_into(ep.outputs.row(t));
        }
      } catch (const SimulationError&) {
        ++result.rejected;
        continue;
      }
      result.episodes.push_back(std::move(ep));
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pipeline transforms.
// ---------------------------------------------------------------------------

inline std::size_t merged_width(const Episode& ep) {
  return ep.inputs.cols() + ep.outputs.cols();
}

// Merges inputs with the previous step's outputs: row t of the result is
// (input[t+1], output[t]). The episode's first input and last output do not
// appear (the last output survives only as a label source).
inline Matrix merge_and_shift(const Episode& ep) {
  const std::size_t n = ep.steps();
  if (n < 2) throw ConfigError("merge_and_shift: episode needs at least 2 steps");
  Matrix merged(n - 1, merged_width(ep));
  for (std::size_t t = 0; t + 1 < n; ++t) {
    auto row = merged.row(t);
    const auto in = ep.inputs.row(t + 1);
    const auto out = ep.outputs.row(t);
    std::copy(in.begin(), in.end(), row.begin());
    std::copy(out.begin(), out.end(), row.begin() + in.size());
  }
  return merged;
}

// The single window layout used by both the training pipeline and the
// controller's state correction: L+1 consecutive merged rows, oldest first,
// flattened. `newest` is the index of the window's last merged row.
inline void flatten_window(const Matrix& merged, std::size_t newest, std::size_t lookback,
                           std::span<double> out) {
  const std::size_t width = merged.cols();
  const std::size_t rows = lookback + 1;
  if (newest + 1 < rows || newest >= merged.rows()) {
    throw ConfigError("flatten_window: window out of range");
  }
  if (out.size() != rows * width) throw ConfigError("flatten_window: output size mismatch");
  const double* src = merged.data() + (newest + 1 - rows) * width;
  std::copy(src, src + rows * width, out.begin());
}

// Windows the merged series with lookback L and aligns each window with the
// episode output one step after the window's newest merged row. Yields
// steps-1-L rows of width (L+1)*(d_u+d_y).
inline std::pair<Matrix, Matrix> window_and_label(const Matrix& merged, const Episode& ep,
                                                  std::size_t lookback) {
  const std::size_t width = merged.cols();
  const std::size_t d = (lookback + 1) * width;
  if (merged.rows() <= lookback) return {Matrix(0, d), Matrix(0, ep.outputs.cols())};
  const std::size_t rows = merged.rows() - lookback;
  Matrix features(rows, d);
  Matrix labels(rows, ep.outputs.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t newest = lookback + i;
    flatten_window(merged, newest, lookback, features.row(i));
    labels.set_row(i, ep.outputs.row(newest + 1));
  }
  return {std::move(features), std::move(labels)};
}

struct Dataset {
  Matrix features;
  Matrix labels;
  std::size_t lookback = 0;
  std::optional<Normalizer> normalizer;

  std::size_t rows() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t label_dim() const { return labels.cols(); }
};

inline Dataset assemble_dataset(std::span<const Episode> episodes, std::size_t lookback,
                                std::optional<Normalizer> normalizer = std::nullopt) {
  if (episodes.empty()) throw ConfigError("assemble_dataset: no episodes");
  const std::size_t steps = episodes.front().steps();
  const std::size_t width = merged_width(episodes.front());
  if (steps < lookback + 2) {
    throw ConfigError("assemble_dataset: episodes need at least lookback+2 steps");
  }
  Dataset ds;
  ds.lookback = lookback;
  ds.features = Matrix(0, (lookback + 1) * width);
  ds.labels = Matrix(0, episodes.front().outputs.cols());
  for (const Episode& ep : episodes) {
    if (ep.steps() != steps || merged_width(ep) != width ||
        ep.outputs.cols() != ds.labels.cols()) {
      throw ConfigError("assemble_dataset: episodes have mixed layouts");
    }
    auto [features, labels] = window_and_label(merge_and_shift(ep), ep, lookback);
    for (std::size_t r = 0; r < features.rows(); ++r) {
      ds.features.append_row(features.row(r));
      ds.labels.append_row(labels.row(r));
    }
  }
  if (normalizer) {
    normalizer->validate();
    normalizer->normalize_features(ds.features);
    normalizer->normalize_labels(ds.labels);
    ds.normalizer = std::move(normalizer);
  }
  return ds;
}

struct SplitConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

// Seeded permutation, then partition: first ceil((1-f)*rows) rows train, the
// rest test.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError("split: test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(ds.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  rng.shuffle(order);

  const auto n_train =
      static_cast<std::size_t>(std::ceil((1.0 - cfg.test_fraction) * static_cast<double>(ds.rows())));
  Dataset train{Matrix(0, ds.feature_dim()), Matrix(0, ds.label_dim()), ds.lookback,
                ds.normalizer};
  Dataset test{Matrix(0, ds.feature_dim()), Matrix(0, ds.label_dim()), ds.lookback,
               ds.normalizer};
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& target = i < n_train ? train : test;
    target.features.append_row(ds.features.row(order[i]));
    target.labels.append_row(ds.labels.row(order[i]));
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// File formats.
// ---------------------------------------------------------------------------

// Dataset CSV: one header line
//   # D=<int> K=<int> L=<int> norm=<none|minmax> ranges=<json>
// then one `f0,...,f{D-1},l0,...,l{K-1}` row per sample.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::string out = "# D=" + std::to_string(ds.feature_dim()) +
                    " K=" + std::to_string(ds.label_dim()) +
                    " L=" + std::to_string(ds.lookback) +
                    " norm=" + (ds.normalizer ? "minmax" : "none") + " ranges=" +
                    (ds.normalizer ? to_json(*ds.normalizer).dump() : std::string("null")) + "\n";
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
      if (c) out += ',';
      out += fmt_double(ds.features(r, c));
    }
    for (std::size_t c = 0; c < ds.label_dim(); ++c) {
      out += ',';
      out += fmt_double(ds.labels(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

inline Matrix resized_copy(const Matrix& m, std::size_t rows) {
  Matrix out(rows, m.cols());
  for (std::size_t r = 0; r < rows; ++r) out.set_row(r, m.row(r));
  return out;
}

inline Dataset load_dataset(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file");
  const std::string& header = lines.front();
  if (header.rfind("# ", 0) != 0) throw ParseError(path + ":1: missing '# ' header");

  std::size_t dim = 0, labels = 0;
  Dataset ds;
  std::string norm_mode, ranges_json;
  for (const std::string& token : split(header.substr(2), ' ')) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ParseError(path + ":1: malformed header token " + token);
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "D") dim = static_cast<std::size_t>(parse_long(value, path + ":1: D"));
    else if (key == "K") labels = static_cast<std::size_t>(parse_long(value, path + ":1: K"));
    else if (key == "L") ds.lookback = static_cast<std::size_t>(parse_long(value, path + ":1: L"));
    else if (key == "norm") norm_mode = value;
    else if (key == "ranges") ranges_json = value;
    else throw ParseError(path + ":1: unknown header key " + key);
  }
  if (dim == 0 || labels == 0) throw ParseError(path + ":1: header needs D and K");
  if (norm_mode == "minmax") {
    ds.normalizer = normalizer_from_json(nlohmann::json::parse(ranges_json));
  } else if (norm_mode != "none") {
    throw ParseError(path + ":1: unknown norm mode '" + norm_mode + "'");
  }

  ds.features = Matrix(lines.size() - 1, dim);
  ds.labels = Matrix(lines.size() - 1, labels);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty() && i + 1 == lines.size()) {
      ds.features = resized_copy(ds.features, i - 1);
      ds.labels = resized_copy(ds.labels, i - 1);
      break;
    }
    const std::string context = path + ":" + std::to_string(i + 1);
    const auto fields = split(lines[i], ',');
    if (fields.size() != dim + labels) {
      throw ParseError(context + ": expected " + std::to_string(dim + labels) + " fields, got " +
                       std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < dim; ++c) ds.features(i - 1, c) = parse_double(fields[c], context);
    for (std::size_t c = 0; c < labels; ++c) {
      ds.labels(i - 1, c) = parse_double(fields[dim + c], context);
    }
  }
  if (ds.rows() == 0) throw ParseError(path + ": no data rows");
  return ds;
}

// Raw episode recordings: `episode,step,u0,...,y0,...`.
inline void save_episodes(std::span<const Episode> episodes, const std::string& path) {
  std::string out = "episode,step";
  if (!episodes.empty()) {
    for (std::size_t c = 0; c < episodes.front().inputs.cols(); ++c) {
      out += ",u" + std::to_string(c);
    }
    for (std::size_t c = 0; c < episodes.front().outputs.cols(); ++c) {
      out += ",y" + std::to_string(c);
    }
  }
  out += '\n';
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    for (std::size_t t = 0; t < ep.steps(); ++t) {
      out += std::to_string(e) + ',' + std::to_string(t);
      for (double v : ep.inputs.row(t)) out += ',' + fmt_double(v);
      for (double v : ep.outputs.row(t)) out += ',' + fmt_double(v);
      out += '\n';
    }
  }
  write_file(path, out);
}

}  // namespace mlmpc
