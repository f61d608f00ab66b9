#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "mlmpc/dataset.hpp"
#include "mlmpc/plant.hpp"

using namespace mlmpc;

namespace {

// Episodes with per-step markers: input at step t encodes to 1000+t, output to
// 2000+t (1-based), so window layout and label alignment can be read off the
// values themselves.
Episode symbolic_episode(std::size_t steps, std::size_t d_u = 1, std::size_t d_y = 1) {
  Episode ep{Matrix(steps, d_u), Matrix(steps, d_y)};
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < d_u; ++c) ep.inputs(t, c) = 1000.0 + static_cast<double>(t + 1);
    for (std::size_t c = 0; c < d_y; ++c) ep.outputs(t, c) = 2000.0 + static_cast<double>(t + 1);
  }
  return ep;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("merge_and_shift pairs each input with the previous output") {
  const Episode ep = symbolic_episode(5);
  const Matrix merged = merge_and_shift(ep);
  REQUIRE(merged.rows() == 4);
  REQUIRE(merged.cols() == 2);
  // Rows: (i2,o1), (i3,o2), (i4,o3), (i5,o4).
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(merged(t, 0) == 1000.0 + static_cast<double>(t + 2));
    CHECK(merged(t, 1) == 2000.0 + static_cast<double>(t + 1));
  }
}

TEST_CASE("merge_and_shift minimal and invalid episodes") {
  const Matrix merged = merge_and_shift(symbolic_episode(2));
  REQUIRE(merged.rows() == 1);
  CHECK(merged(0, 0) == 1002.0);
  CHECK(merged(0, 1) == 2001.0);
  CHECK_THROWS_AS(merge_and_shift(symbolic_episode(1)), ConfigError);
}

TEST_CASE("window_and_label layout, row count and label alignment") {
  const std::size_t lookback = 3;
  const Episode ep = symbolic_episode(8);
  const Matrix merged = merge_and_shift(ep);
  const auto [features, labels] = window_and_label(merged, ep, lookback);
  CHECK(features.cols() == (lookback + 1) * 2);
  CHECK(features.rows() == ep.steps() - 1 - lookback);  // 8-1-3 = 4
  REQUIRE(labels.rows() == features.rows());

  for (std::size_t r = 0; r < features.rows(); ++r) {
    // Window rows oldest-first; each is (input, previous output).
    double max_output_index = 0.0;
    for (std::size_t slot = 0; slot <= lookback; ++slot) {
      const double in = features(r, 2 * slot);
      const double out = features(r, 2 * slot + 1);
      CHECK(in == 1002.0 + static_cast<double>(r + slot));
      CHECK(out == 2001.0 + static_cast<double>(r + slot));
      max_output_index = std::max(max_output_index, out - 2000.0);
    }
    // No leakage: the label's time index is strictly beyond every output
    // embedded in the row, and one past the newest.
    const double label_index = labels(r, 0) - 2000.0;
    CHECK(label_index == max_output_index + 1.0);
  }
}

TEST_CASE("window_and_label with too-short series yields no rows") {
  const Episode ep = symbolic_episode(4);
  const Matrix merged = merge_and_shift(ep);  // 3 rows
  const auto [features, labels] = window_and_label(merged, ep, 3);
  CHECK(features.rows() == 0);
  CHECK(labels.rows() == 0);
}

TEST_CASE("feature width law reproduces the per-plant input dimensions") {
  // d_u=1, d_y=1, L=3 -> 8; d_u=1, d_y=2, L=5 -> 18; d_u=2, d_y=3, L=3 -> 20.
  struct Case {
    std::size_t d_u, d_y, lookback, expected;
  };
  for (const Case c : {Case{1, 1, 3, 8}, Case{1, 2, 5, 18}, Case{2, 3, 3, 20}}) {
    const Episode ep = symbolic_episode(c.lookback + 4, c.d_u, c.d_y);
    const auto [features, labels] = window_and_label(merge_and_shift(ep), ep, c.lookback);
    CHECK(features.cols() == c.expected);
    CHECK(labels.cols() == c.d_y);
  }
}

TEST_CASE("assemble_dataset concatenates episodes in order") {
  std::vector<Episode> eps;
  for (int e = 0; e < 3; ++e) {
    Episode ep = symbolic_episode(8);
    for (std::size_t t = 0; t < ep.steps(); ++t) ep.inputs(t, 0) += 10000.0 * (e + 1);
    eps.push_back(std::move(ep));
  }
  const Dataset ds = assemble_dataset(eps, 3);
  CHECK(ds.rows() == 12);  // 3 episodes x 4 usable rows
  // Episode order preserved: the first window slot's input carries the marker.
  CHECK(ds.features(0, 0) > 10000.0);
  CHECK(ds.features(0, 0) < 20000.0);
  CHECK(ds.features(4, 0) > 20000.0);
  CHECK(ds.features(11, 0) > 30000.0);

  Episode other = symbolic_episode(9);
  eps.push_back(std::move(other));
  CHECK_THROWS_AS(assemble_dataset(eps, 3), ConfigError);
}

TEST_CASE("assemble_dataset rejects episodes shorter than lookback+2") {
  std::vector<Episode> eps;
  eps.push_back(symbolic_episode(4));  // lookback 3 needs at least 5 steps
  CHECK_THROWS_AS(assemble_dataset(eps, 3), ConfigError);
}

TEST_CASE("normalization maps declared ranges onto [0,1] and round-trips") {
  const Normalizer norm{{{0.0, 1e-4}, {0.0, 1e-4}}, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}};
  CHECK(Normalizer::scale(5e-5, norm.inputs[0]) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(Normalizer::scale(0.5, norm.outputs[0]) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(Normalizer::scale(0.0, norm.inputs[0]) == 0.0);
  CHECK(Normalizer::scale(1e-4, norm.inputs[0]) == 1.0);

  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const ChannelRange r{rng.uniform(-5, 0), rng.uniform(0.1, 5)};
    const double v = rng.uniform(r.lo, r.hi);
    CHECK(Normalizer::unscale(Normalizer::scale(v, r), r) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("assemble_dataset applies the normalizer to features and labels") {
  Episode ep{Matrix(6, 2), Matrix(6, 3)};
  Rng rng(32);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t c = 0; c < 2; ++c) ep.inputs(t, c) = rng.uniform(0, 1e-4);
    for (std::size_t c = 0; c < 3; ++c) ep.outputs(t, c) = rng.uniform(0, 1.0);
  }
  std::vector<Episode> eps{ep};
  const Normalizer norm{{{0.0, 1e-4}, {0.0, 1e-4}}, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}};
  const Dataset ds = assemble_dataset(eps, 3, norm);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
      CHECK(ds.features(r, c) >= 0.0);
      CHECK(ds.features(r, c) <= 1.0);
    }
  }
  CHECK(ds.normalizer.has_value());
}

TEST_CASE("split partitions the rows per the configured fraction") {
  Dataset ds;
  ds.features = Matrix(10, 2);
  ds.labels = Matrix(10, 1);
  for (std::size_t r = 0; r < 10; ++r) {
    ds.features(r, 0) = static_cast<double>(r);
    ds.labels(r, 0) = static_cast<double>(r);
  }
  const auto [train, test] = split(ds, {0.2, 7});
  CHECK(train.rows() == 8);
  CHECK(test.rows() == 2);

  // Disjoint and covering: the label column carries the original row ids.
  std::vector<bool> seen(10, false);
  for (std::size_t r = 0; r < train.rows(); ++r) {
    seen[static_cast<std::size_t>(train.labels(r, 0))] = true;
  }
  for (std::size_t r = 0; r < test.rows(); ++r) {
    const auto id = static_cast<std::size_t>(test.labels(r, 0));
    CHECK(!seen[id]);
    seen[id] = true;
  }
  for (bool b : seen) CHECK(b);

  // Same seed, same partition.
  const auto [train2, test2] = split(ds, {0.2, 7});
  CHECK(train.features == train2.features);
  CHECK(test.labels == test2.labels);

  CHECK_THROWS_AS(split(ds, {0.0, 7}), ConfigError);
  CHECK_THROWS_AS(split(ds, {1.0, 7}), ConfigError);
}

TEST_CASE("generate_episodes is deterministic and draws fresh sub-seeds") {
  Plant plant = Plant::pendulum();
  GeneratorConfig cfg{4, 10, {{-10.0, 10.0}}, 42, 1};
  const GenerateResult a = generate_episodes(plant, cfg);
  const GenerateResult b = generate_episodes(plant, cfg);
  REQUIRE(a.episodes.size() == 4);
  CHECK(a.rejected == 0);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(a.episodes[e].inputs == b.episodes[e].inputs);
    CHECK(a.episodes[e].outputs == b.episodes[e].outputs);
    CHECK(a.episodes[e].steps() == 10);
  }
  CHECK(a.episodes[0].inputs != a.episodes[1].inputs);
}

TEST_CASE("generate_episodes hold mode repeats inputs for k steps") {
  Plant plant = Plant::three_tank();
  GeneratorConfig cfg{1, 9, {{0.0, 1e-4}, {0.0, 1e-4}}, 5, 3};
  const GenerateResult r = generate_episodes(plant, cfg);
  const Episode& ep = r.episodes.front();
  for (std::size_t t = 0; t < 9; ++t) {
    const std::size_t block = (t / 3) * 3;
    CHECK(ep.inputs(t, 0) == ep.inputs(block, 0));
    CHECK(ep.inputs(t, 1) == ep.inputs(block, 1));
  }
  CHECK(ep.inputs(0, 0) != ep.inputs(3, 0));
}

TEST_CASE("dataset CSV round-trips losslessly") {
  Episode ep = symbolic_episode(8, 2, 3);
  Rng rng(33);
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t c = 0; c < 2; ++c) ep.inputs(t, c) = rng.uniform(0, 1e-4);
    for (std::size_t c = 0; c < 3; ++c) ep.outputs(t, c) = rng.uniform(0, 1);
  }
  std::vector<Episode> eps{ep};
  const Normalizer norm{{{0.0, 1e-4}, {0.0, 1e-4}}, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}};
  const Dataset ds = assemble_dataset(eps, 3, norm);

  const std::string path = temp_path("mlmpc_ds_roundtrip.csv");
  save_dataset(ds, path);
  const Dataset loaded = load_dataset(path);
  CHECK(loaded.features == ds.features);  // 17 significant digits: bit-exact
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.lookback == ds.lookback);
  CHECK(loaded.normalizer == ds.normalizer);
  std::remove(path.c_str());
}

TEST_CASE("dataset CSV loader reports malformed files with line numbers") {
  const std::string path = temp_path("mlmpc_ds_malformed.csv");

  write_file(path, "");
  CHECK_THROWS_AS(load_dataset(path), ParseError);

  write_file(path, "# D=8 K=1 L=3 norm=none ranges=null\n");
  CHECK_THROWS_AS(load_dataset(path), ParseError);  // header but no rows

  write_file(path, "# D=3 K=1 L=0 norm=none ranges=null\n1,2,3\n");
  CHECK_THROWS_AS(load_dataset(path), ParseError);  // row has 3 fields, needs 4

  try {
    write_file(path, "# D=3 K=1 L=0 norm=none ranges=null\n1,2,3,4\n1,2,3\n");
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("episode CSV has one row per step") {
  Plant plant = Plant::pendulum();
  GeneratorConfig cfg{2, 5, {{-10.0, 10.0}}, 1, 1};
  const GenerateResult r = generate_episodes(plant, cfg);
  const std::string path = temp_path("mlmpc_episodes.csv");
  save_episodes(r.episodes, path);
  const auto lines = read_lines(path);
  CHECK(lines.front() == "episode,step,u0,y0");
  CHECK(lines.size() == 1 + 2 * 5);
  std::remove(path.c_str());
}

TEST_CASE("pipeline is bit-reproducible end to end for a fixed seed") {
  auto build = [] {
    Plant plant = Plant::cartpole();
    GeneratorConfig cfg{6, 12, {{-20.0, 20.0}}, 99, 1};
    const GenerateResult r = generate_episodes(plant, cfg);
    return assemble_dataset(r.episodes, 5);
  };
  const Dataset a = build();
  const Dataset b = build();
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
}

TEST_SUITE_END();
