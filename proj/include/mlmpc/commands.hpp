#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mlmpc/config.hpp"
#include "mlmpc/csv.hpp"
#include "mlmpc/dataset.hpp"
#include "mlmpc/errors.hpp"
#include "mlmpc/metrics.hpp"
#include "mlmpc/mlp.hpp"
#include "mlmpc/mpc.hpp"
#include "mlmpc/svg.hpp"

namespace mlmpc {

// The five commands behind the CLI, exposed as library calls so tests drive
// the same code paths. Each writes its artifacts under cfg.out_dir and prints
// a short summary to `out`.

namespace detail {

inline std::string ensure_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

inline const char* const kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#9467bd", "#ff7f0e", "#8c564b"};

inline std::vector<double> column(const SessionLog& log,
                                  const std::vector<double> SessionStep::* field,
                                  std::size_t channel) {
  std::vector<double> v;
  v.reserve(log.steps.size());
  for (const auto& s : log.steps) v.push_back((s.*field)[channel]);
  return v;
}

}  // namespace detail

struct GenDataResult {
  std::string episodes_csv;
  std::string dataset_csv;
  std::size_t rows = 0;
  std::size_t rejected = 0;
};

// gen-data: excite the plant, build the lookback dataset, write both CSVs.
inline GenDataResult cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  const std::string dir = detail::ensure_out_dir(cfg);
  Plant plant = cfg.make_plant();
  GenerateResult gen = generate_episodes(plant, cfg.data);
  Dataset ds = assemble_dataset(gen.episodes, cfg.lookback, cfg.normalizer());

  GenDataResult result;
  result.episodes_csv = dir + "/episodes.csv";
  result.dataset_csv = dir + "/dataset.csv";
  result.rows = ds.rows();
  result.rejected = gen.rejected;
  save_episodes(gen.episodes, result.episodes_csv);
  save_dataset(ds, result.dataset_csv);

  const std::size_t expected_rows = cfg.data.samples * (cfg.data.steps - 1 - cfg.lookback);
  out << "episodes: " << gen.episodes.size() << " x " << cfg.data.steps << " steps";
  if (gen.rejected > 0) out << " (" << gen.rejected << " rejected and redrawn)";
  out << "\ndataset: " << ds.rows() << " rows (expected " << expected_rows << "), D="
      << ds.feature_dim() << ", K=" << ds.label_dim() << ", L=" << ds.lookback << "\n";
  if (ds.rows() != expected_rows || ds.feature_dim() != cfg.feature_dim()) {
    throw SimulationError("gen-data: dataset dimensions disagree with the configuration");
  }
  return result;
}

struct TrainOutcome {
  std::string weights_json;
  std::string report_csv;
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  TrainReport report;
};

inline void save_train_report(const TrainReport& report, const std::string& path) {
  std::string csv = "epoch,train_mse,test_mse\n";
  for (std::size_t e = 0; e < report.train_mse.size(); ++e) {
    csv += std::to_string(e + 1) + ',' + fmt_double(report.train_mse[e]) + ',' +
           fmt_double(report.test_mse[e]) + '\n';
  }
  write_file(path, csv);
}

// train: fit the configured network on a dataset file, write weights and the
// loss curves. A diverging run still writes the partial report.
inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
                              std::ostream& out) {
  cfg.validate();
  const std::string dir = detail::ensure_out_dir(cfg);
  Dataset ds = load_dataset(dataset_path);
  if (ds.feature_dim() != cfg.feature_dim() || ds.label_dim() != cfg.d_y() ||
      ds.lookback != cfg.lookback) {
    throw ConfigError("train: dataset " + dataset_path + " has D=" +
                      std::to_string(ds.feature_dim()) + " K=" + std::to_string(ds.label_dim()) +
                      " L=" + std::to_string(ds.lookback) + ", config expects D=" +
                      std::to_string(cfg.feature_dim()) + " K=" + std::to_string(cfg.d_y()) +
                      " L=" + std::to_string(cfg.lookback));
  }
  if (cfg.normalize != ds.normalizer.has_value()) {
    throw ConfigError("train: dataset normalization does not match the configuration");
  }

  auto [train_set, test_set] = split(ds, cfg.split_cfg);
  TrainOutcome result;
  result.weights_json = dir + "/weights.json";
  result.report_csv = dir + "/train_report.csv";

  MlpWeights weights = mlp_init(cfg.network);
  try {
    auto [trained, report] = mlp_train(std::move(weights), train_set, test_set, cfg.training);
    result.report = std::move(report);
    save_weights(trained, result.weights_json);
  } catch (const TrainDivergence& e) {
    save_train_report(e.report, result.report_csv);
    throw;
  }
  save_train_report(result.report, result.report_csv);
  result.final_train_mse = result.report.train_mse.back();
  result.final_test_mse = result.report.test_mse.back();
  out << "trained " << cfg.training.epochs << " epochs on " << train_set.rows() << " rows ("
      << test_set.rows() << " held out) in " << fmt_double(result.report.wall_seconds)
      << " s\nfinal train mse: " << fmt_double(result.final_train_mse)
      << "\nfinal test mse:  " << fmt_double(result.final_test_mse) << "\n";
  return result;
}

inline void save_session_svg(const SessionLog& log, const ExperimentConfig& cfg,
                             const std::string& title, const std::string& path) {
  std::vector<SvgSeries> series;
  for (std::size_t c = 0; c < log.d_y; ++c) {
    if (cfg.controller.output_weights[c] == 0.0) continue;
    series.push_back({"reference y" + std::to_string(c),
                      detail::column(log, &SessionStep::reference, c), "#555555", true});
    series.push_back({"output y" + std::to_string(c), detail::column(log, &SessionStep::output, c),
                      detail::kSeriesColors[c % 6], false});
  }
  write_line_chart(path, title, "step", "output", series);
}

struct ControlOutcome {
  std::string session_csv;
  std::string session_svg;
  SessionLog log;
  Metrics metrics;
};

// control: one closed-loop session, either with the trained network
// (weights_path set) or with the plant itself as its own prediction model.
inline ControlOutcome cmd_control(const ExperimentConfig& cfg,
                                  const std::optional<std::string>& weights_path,
                                  std::ostream& out) {
  cfg.validate();
  const std::string dir = detail::ensure_out_dir(cfg);
  Plant plant = cfg.make_plant();

  std::optional<DnnModel> dnn;
  std::optional<PerfectModel> perfect;
  PredictionModel* pm = nullptr;
  if (weights_path) {
    MlpWeights w = load_weights(*weights_path);
    dnn.emplace(std::move(w), cfg.lookback);
    dnn->validate_for(plant);
    pm = &*dnn;
  } else {
    perfect.emplace(plant);
    pm = &*perfect;
  }

  ControlOutcome result;
  result.log = run_session(plant, *pm, cfg.reference, cfg.controller);
  result.metrics = compute_metrics(result.log, 0.05, cfg.controller.output_weights);
  const std::string name = pm->name();
  result.session_csv = dir + "/session_" + name + ".csv";
  result.session_svg = dir + "/session_" + name + ".svg";
  save_session_csv(result.log, result.session_csv);
  save_session_svg(result.log, cfg, name + " control session", result.session_svg);

  out << "session (" << name << "): " << result.log.steps.size() << " steps, mse "
      << fmt_double(result.metrics.mse) << ", mae " << fmt_double(result.metrics.mae) << "\n";
  if (!result.log.valid) {
    out << "session aborted: " << result.log.fault << "\n";
    throw SimulationError("control: session invalid: " + result.log.fault);
  }
  return result;
}

struct CompareOutcome {
  std::string ml_csv;
  std::string perfect_csv;
  std::string metrics_csv;
  std::string overlay_svg;
  std::string echo_json;
  SessionLog ml_log;
  SessionLog perfect_log;
  Metrics ml_metrics;
  Metrics perfect_metrics;
};

// compare: both controllers under the identical configuration (reference,
// plant parameters, optimizer settings and seeds); only the prediction model
// differs.
inline CompareOutcome cmd_compare(const ExperimentConfig& cfg, const std::string& weights_path,
                                  std::ostream& out) {
  cfg.validate();
  const std::string dir = detail::ensure_out_dir(cfg);

  CompareOutcome result;
  {
    Plant plant = cfg.make_plant();
    MlpWeights w = load_weights(weights_path);
    DnnModel dnn(std::move(w), cfg.lookback);
    dnn.validate_for(plant);
    result.ml_log = run_session(plant, dnn, cfg.reference, cfg.controller);
  }
  {
    Plant plant = cfg.make_plant();
    PerfectModel perfect(plant);
    result.perfect_log = run_session(plant, perfect, cfg.reference, cfg.controller);
  }
  result.ml_metrics = compute_metrics(result.ml_log, 0.05, cfg.controller.output_weights);
  result.perfect_metrics = compute_metrics(result.perfect_log, 0.05, cfg.controller.output_weights);

  result.ml_csv = dir + "/session_ml.csv";
  result.perfect_csv = dir + "/session_perfect.csv";
  result.metrics_csv = dir + "/metrics.csv";
  result.overlay_svg = dir + "/compare.svg";
  result.echo_json = dir + "/config_echo.json";
  save_session_csv(result.ml_log, result.ml_csv);
  save_session_csv(result.perfect_log, result.perfect_csv);
  write_file(result.metrics_csv, metrics_csv_header(result.ml_metrics.settling.size()) +
                                     metrics_csv_row("ml", result.ml_metrics) +
                                     metrics_csv_row("perfect", result.perfect_metrics));
  write_file(result.echo_json, cfg.echo().dump(2) + "\n");

  std::vector<SvgSeries> series;
  for (std::size_t c = 0; c < result.ml_log.d_y; ++c) {
    if (cfg.controller.output_weights[c] == 0.0) continue;
    series.push_back({"reference y" + std::to_string(c),
                      detail::column(result.ml_log, &SessionStep::reference, c), "#555555", true});
    series.push_back({"perfect y" + std::to_string(c),
                      detail::column(result.perfect_log, &SessionStep::output, c), "#1f77b4",
                      false});
    series.push_back({"ml y" + std::to_string(c),
                      detail::column(result.ml_log, &SessionStep::output, c), "#d62728", false});
  }
  write_line_chart(result.overlay_svg, "ml vs perfect prediction model", "step", "output",
                   series);

  out << "mse (ml):      " << fmt_double(result.ml_metrics.mse)
      << "\nmse (perfect): " << fmt_double(result.perfect_metrics.mse) << "\nmse ratio ml/perfect: "
      << fmt_double(result.ml_metrics.mse / result.perfect_metrics.mse) << "\n";
  if (!result.ml_log.valid || !result.perfect_log.valid) {
    throw SimulationError("compare: a session ended invalid");
  }
  return result;
}

struct PredictDemoOutcome {
  std::string csv;
  std::string svg;
  double corrected_mean_abs_err = 0.0;
  double uncorrected_mean_abs_err = 0.0;
  double corrected_first_quarter = 0.0;
  double corrected_final_quarter = 0.0;
};

// predict-demo: drive the plant with a seeded excitation and predict the whole
// session twice; once re-anchored to the true outputs at every step, once as a
// free run that never sees an output after its first window.
inline PredictDemoOutcome cmd_predict_demo(const ExperimentConfig& cfg,
                                           const std::string& weights_path, std::ostream& out) {
  cfg.validate();
  const std::string dir = detail::ensure_out_dir(cfg);
  Plant plant = cfg.make_plant();
  MlpWeights w = load_weights(weights_path);
  DnnModel dnn(std::move(w), cfg.lookback);
  dnn.validate_for(plant);

  // Seeded excitation, recorded open loop.
  const std::size_t n = cfg.demo_steps;
  const std::size_t d_u = plant.input_dim();
  const std::size_t d_y = plant.output_dim();
  Matrix inputs(n, d_u), outputs(n, d_y);
  {
    Rng rng(cfg.demo_seed);
    std::vector<double> u(d_u);
    plant.reset();
    for (std::size_t t = 0; t < n; ++t) {
      if (t % cfg.demo_hold == 0) {
        for (std::size_t c = 0; c < d_u; ++c) {
          u[c] = rng.uniform(cfg.input_ranges[c].lo, cfg.input_ranges[c].hi);
        }
      }
      inputs.set_row(t, u);
      plant.apply(u);
      plant.observe_into(outputs.row(t));
    }
  }

  const std::size_t first = cfg.lookback + 1;  // first predictable step
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix corrected(n, d_y, nan), freerun(n, d_y, nan);

  // Corrected: one-step prediction, window rebuilt from true history each step.
  {
    History h;
    h.inputs = Matrix(0, d_u);
    h.outputs = Matrix(0, d_y);
    Matrix candidate(1, d_u), predicted;
    for (std::size_t t = 0; t < n; ++t) {
      if (t >= first) {
        candidate.set_row(0, inputs.row(t));
        if (dnn.rollout(h, candidate, predicted)) corrected.set_row(t, predicted.row(0));
      }
      h.append(inputs.row(t), outputs.row(t));
    }
  }
  // Free run: one long rollout from the first valid window, feeding its own
  // predictions forward and never re-reading the plant.
  {
    History h;
    h.inputs = Matrix(0, d_u);
    h.outputs = Matrix(0, d_y);
    for (std::size_t t = 0; t < first; ++t) h.append(inputs.row(t), outputs.row(t));
    Matrix candidates(n - first, d_u), predicted;
    for (std::size_t t = first; t < n; ++t) candidates.set_row(t - first, inputs.row(t));
    if (dnn.rollout(h, candidates, predicted)) {
      for (std::size_t t = first; t < n; ++t) freerun.set_row(t, predicted.row(t - first));
    }
  }

  // Error statistics over the predictable range.
  PredictDemoOutcome result;
  {
    double corr_sum = 0.0, free_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = first; t < n; ++t) {
      for (std::size_t c = 0; c < d_y; ++c) {
        corr_sum += std::fabs(corrected(t, c) - outputs(t, c));
        free_sum += std::fabs(freerun(t, c) - outputs(t, c));
        ++count;
      }
    }
    result.corrected_mean_abs_err = corr_sum / static_cast<double>(count);
    result.uncorrected_mean_abs_err = free_sum / static_cast<double>(count);

    const std::size_t span = n - first;
    const std::size_t quarter = span / 4;
    double first_q = 0.0, last_q = 0.0;
    for (std::size_t i = 0; i < quarter; ++i) {
      for (std::size_t c = 0; c < d_y; ++c) {
        first_q += std::fabs(corrected(first + i, c) - outputs(first + i, c));
        last_q += std::fabs(corrected(n - quarter + i, c) - outputs(n - quarter + i, c));
      }
    }
    result.corrected_first_quarter = first_q / static_cast<double>(quarter * d_y);
    result.corrected_final_quarter = last_q / static_cast<double>(quarter * d_y);
  }

  // CSV: step,u*,y*,corr*,free*
  result.csv = dir + "/predict_demo.csv";
  {
    std::string csv = "step";
    for (std::size_t c = 0; c < d_u; ++c) csv += ",u" + std::to_string(c);
    for (std::size_t c = 0; c < d_y; ++c) csv += ",y" + std::to_string(c);
    for (std::size_t c = 0; c < d_y; ++c) csv += ",corr" + std::to_string(c);
    for (std::size_t c = 0; c < d_y; ++c) csv += ",free" + std::to_string(c);
    csv += '\n';
    for (std::size_t t = 0; t < n; ++t) {
      csv += std::to_string(t);
      for (std::size_t c = 0; c < d_u; ++c) csv += ',' + fmt_double(inputs(t, c));
      for (std::size_t c = 0; c < d_y; ++c) csv += ',' + fmt_double(outputs(t, c));
      for (std::size_t c = 0; c < d_y; ++c) csv += ',' + fmt_double(corrected(t, c));
      for (std::size_t c = 0; c < d_y; ++c) csv += ',' + fmt_double(freerun(t, c));
      csv += '\n';
    }
    write_file(result.csv, csv);
  }

  result.svg = dir + "/predict_demo.svg";
  {
    std::vector<SvgSeries> series;
    for (std::size_t c = 0; c < d_y; ++c) {
      std::vector<double> y(n), corr(n), fr(n);
      for (std::size_t t = 0; t < n; ++t) {
        y[t] = outputs(t, c);
        corr[t] = corrected(t, c);
        fr[t] = freerun(t, c);
      }
      series.push_back({"true y" + std::to_string(c), y, "#555555", false});
      series.push_back({"corrected y" + std::to_string(c), corr,
                        detail::kSeriesColors[(2 * c) % 6], false});
      series.push_back({"free-run y" + std::to_string(c), fr,
                        detail::kSeriesColors[(2 * c + 1) % 6], true});
    }
    write_line_chart(result.svg, "prediction with and without state correction", "step", "output",
                     series);
  }

  out << "corrected mean |err|:   " << fmt_double(result.corrected_mean_abs_err)
      << "\nuncorrected mean |err|: " << fmt_double(result.uncorrected_mean_abs_err)
      << "\ncorrected first/final quarter: " << fmt_double(result.corrected_first_quarter) << " / "
      << fmt_double(result.corrected_final_quarter) << "\n";
  return result;
}

}  // namespace mlmpc
