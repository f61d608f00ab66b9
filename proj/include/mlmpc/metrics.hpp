#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlmpc/csv.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/mpc.hpp"

namespace mlmpc {

// Session quality numbers, computed identically for both controllers from
// their logs alone. Reference segments (and therefore jumps) are recovered
// from the logged reference columns, so metrics recomputed from an emitted
// CSV match the in-process values exactly.
struct Metrics {
  double mse = 0.0;           // weighted mean squared tracking error
  double mae = 0.0;           // weighted mean absolute tracking error
  double mean_step_ms = 0.0;  // mean of the per-step wall-time column
  struct Settling {
    std::size_t jump_step = 0;
    std::optional<std::size_t> settled_at;  // first step of a 10-step in-band run

    friend bool operator==(const Settling&, const Settling&) = default;
  };
  std::vector<Settling> settling;  // one entry per reference segment
  bool valid = true;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// band_fraction: settling band as a fraction of each channel's jump size.
// weights: per-output-channel tracking weights (empty = all ones); channels
// whose reference never moves still contribute to MSE/MAE via their weight
// but are excluded from the settling check.
inline Metrics compute_metrics(const SessionLog& log, double band_fraction = 0.05,
                               std::span<const double> weights = {}) {
  Metrics m;
  m.valid = log.valid;
  if (log.steps.empty()) return m;

  const std::size_t d_y = log.d_y;
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(d_y, 1.0);
  if (w.size() != d_y) throw ConfigError("compute_metrics: weight count mismatch");
  double w_sum = 0.0;
  for (double v : w) w_sum += v;
  if (!(w_sum > 0)) throw ConfigError("compute_metrics: weights sum to zero");

  double sq = 0.0, abs = 0.0, ms = 0.0;
  for (const SessionStep& s : log.steps) {
    for (std::size_t j = 0; j < d_y; ++j) {
      const double err = s.output[j] - s.reference[j];
      sq += w[j] * err * err;
      abs += w[j] * std::fabs(err);
    }
    ms += s.ms;
  }
  const double denom = static_cast<double>(log.steps.size()) * w_sum;
  m.mse = sq / denom;
  m.mae = abs / denom;
  m.mean_step_ms = ms / static_cast<double>(log.steps.size());

  // Segment boundaries: steps where the logged reference vector changes.
  std::vector<std::size_t> starts{0};
  for (std::size_t t = 1; t < log.steps.size(); ++t) {
    if (log.steps[t].reference != log.steps[t - 1].reference) starts.push_back(t);
  }
  for (std::size_t seg = 0; seg < starts.size(); ++seg) {
    const std::size_t begin = starts[seg];
    const std::size_t end = seg + 1 < starts.size() ? starts[seg + 1] : log.steps.size();
    Metrics::Settling entry;
    entry.jump_step = begin;

    // Jump size per channel: against the previous setpoint, or against the
    // session's first output for the initial segment.
    std::vector<double> bands(d_y, 0.0);
    bool any_jump = false;
    for (std::size_t j = 0; j < d_y; ++j) {
      const double previous = seg == 0 ? log.steps.front().output[j]
                                       : log.steps[starts[seg] - 1].reference[j];
      const double jump = std::fabs(log.steps[begin].reference[j] - previous);
      bands[j] = band_fraction * jump;
      any_jump = any_jump || jump > 0.0;
    }
    if (!any_jump) {
      entry.settled_at = begin;  // nothing moved
      m.settling.push_back(entry);
      continue;
    }
    for (std::size_t q = begin; q + 10 <= end; ++q) {
      bool in_band = true;
      for (std::size_t t = q; t < q + 10 && in_band; ++t) {
        for (std::size_t j = 0; j < d_y; ++j) {
          if (bands[j] == 0.0) continue;
          if (!(std::fabs(log.steps[t].output[j] - log.steps[t].reference[j]) < bands[j])) {
            in_band = false;
            break;
          }
        }
      }
      if (in_band) {
        entry.settled_at = q;
        break;
      }
    }
    m.settling.push_back(entry);
  }
  return m;
}

// Metrics table CSV: one row per controller.
inline std::string metrics_csv_header(std::size_t segments) {
  std::string h = "controller,mse,mae,mean_step_ms";
  for (std::size_t i = 0; i < segments; ++i) h += ",settle" + std::to_string(i);
  return h + "\n";
}

inline std::string metrics_csv_row(const std::string& controller, const Metrics& m) {
  std::string row = controller + ',' + fmt_double(m.mse) + ',' + fmt_double(m.mae) + ',' +
                    fmt_double(m.mean_step_ms);
  for (const auto& s : m.settling) {
    row += ',';
    row += s.settled_at ? std::to_string(*s.settled_at) : std::string("not_settled");
  }
  return row + "\n";
}

struct NamedMetrics {
  std::string controller;
  Metrics metrics;
};

inline std::vector<NamedMetrics> load_metrics_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file");
  const auto header = split(lines.front(), ',');
  if (header.size() < 4) throw ParseError(path + ":1: malformed metrics header");
  std::vector<NamedMetrics> all;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string context = path + ":" + std::to_string(i + 1);
    const auto fields = split(lines[i], ',');
    if (fields.size() != header.size()) {
      throw ParseError(context + ": expected " + std::to_string(header.size()) + " fields");
    }
    NamedMetrics nm;
    nm.controller = fields[0];
    nm.metrics.mse = parse_double(fields[1], context);
    nm.metrics.mae = parse_double(fields[2], context);
    nm.metrics.mean_step_ms = parse_double(fields[3], context);
    for (std::size_t f = 4; f < fields.size(); ++f) {
      Metrics::Settling s;
      if (fields[f] != "not_settled") {
        s.settled_at = static_cast<std::size_t>(parse_long(fields[f], context));
      }
      nm.metrics.settling.push_back(s);
    }
    all.push_back(std::move(nm));
  }
  return all;
}

}  // namespace mlmpc
