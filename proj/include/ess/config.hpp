#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ess/augment.hpp"
#include "ess/core.hpp"
#include "ess/env.hpp"
#include "ess/eval.hpp"
#include "ess/nn.hpp"

namespace ess::app {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EnvSection {
  env::PlanParams plan;
  int steps = 2000;
  env::MotionParams motion;
  int resolution = 32;
  std::string lighting = "uniform";  // "uniform" | "fixed"
  int lighting_id = 0;
  int palette_size = 10;
  std::string trajectory_file;  // recorded trajectory to replay instead of a random walk
};

struct TrainSection {
  int epochs = 30;
  std::size_t batch_size = 64;
  std::size_t queue_size = 512;
  double momentum = 0.999;
  nn::SgdConfig sgd;
  nn::TinyConvArch arch;
  // Empty: train on the manifest images. Otherwise each draw re-renders the
  // frame under a lighting id picked uniformly from this list.
  std::vector<int> lighting_ids;
  bool independent_lighting_views = false;
  double calibrate_positives = 0.0;  // > 0: rescale thresholds to this mean
};

struct EvalSection {
  std::vector<std::string> tasks;
  eval::ProbeConfig probe;
  eval::LocalizationConfig localization;
  bool cluster_pca2 = false;
  std::size_t cluster_max_points = 400;
};

struct ReportSection {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> modes{"baseline", "mb"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string dataset_dir = "dataset";
  std::string run_dir = "runs/default";
  EnvSection env;
  augment::AugmentConfig augment;
  core::LossConfig loss;  // null threshold components in the file are unbounded
  TrainSection train;
  EvalSection eval;
  ReportSection report;

  // Canonical JSON of every key, defaults included.
  std::string resolved_json;
};

// Full default configuration as JSON text.
std::string default_config_text();

// Defaults, overlaid by the optional file, then by "key.path=value"
// overrides. Unknown keys and type mismatches raise ConfigError.
RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
RunConfig config_from_text(const std::string& json_text, const std::vector<std::string>& overrides = {});

// Output root: ESS_LAB_DATA_DIR if set, otherwise ./ess_lab_data.
std::filesystem::path data_root();
// Relative paths resolve against data_root().
std::filesystem::path resolve_path(const std::string& p);

core::TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed);

}  // namespace ess::app
