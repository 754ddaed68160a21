#include "ess/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ess::app {

using json = nlohmann::ordered_json;

namespace {

// Desk-scale defaults keep queue/batch = 8 (512/64) as at full scale (4096/256).
constexpr const char* kDefaults = R"({
  "seed": 0,
  "dataset_dir": "dataset",
  "run_dir": "runs/default",
  "env": {
    "rooms": 4,
    "grid_width": 32,
    "grid_height": 32,
    "cell_size": 0.5,
    "object_density": 0.03,
    "steps": 2000,
    "step_length": 0.1,
    "turn_increment_deg": 5.0,
    "turn_probability": 0.15,
    "resolution": 32,
    // "uniform": per-frame draw over the palette; "fixed": lighting_id for all
    "lighting": "uniform",
    "lighting_id": 0,
    "palette_size": 10,
    // non-empty: replay this recorded trajectory instead of a random walk
    "trajectory_file": ""
  },
  "augment": {
    "crop_scale_min": 0.2,
    "crop_scale_max": 1.0,
    "crop_ratio_min": 0.75,
    "crop_ratio_max": 1.3333333333333333,
    "flip_p": 0.5,
    "jitter_p": 0.8,
    "brightness": 0.4,
    "contrast": 0.4,
    "saturation": 0.4,
    "hue": 0.1,
    "grayscale_p": 0.2,
    "blur_p": 0.5,
    "blur_sigma_min": 0.1,
    "blur_sigma_max": 2.0
  },
  "loss": {
    // "baseline" | "mb" | "mw"
    "mode": "mb",
    "temperature": 0.2,
    // null leaves a component unbounded
    "threshold_position": 0.8,
    "threshold_rotation": 12.0,
    "alpha": 2.0,
    "beta": 0.016666666666666666,
    // "first" | "last"
    "enqueue": "first"
  },
  "train": {
    "epochs": 30,
    "batch_size": 64,
    "queue_size": 512,
    "momentum": 0.999,
    "lr": 0.05,
    "sgd_momentum": 0.9,
    "weight_decay": 0.0001,
    "architecture": "tinyconv:in=3x32x32,conv=16-32,feature=128,proj=64,embedding=32",
    // empty: manifest images; otherwise re-render each draw under one of these ids
    "lighting_ids": [],
    "independent_lighting_views": false,
    // > 0: scale the thresholds so the expected positives per query match
    "calibrate_positives": 0.0
  },
  "eval": {
    "tasks": ["room-probe", "room-probe-lighting-holdout", "localization", "cluster-metrics"],
    "probe_epochs": 20,
    "probe_lr": 0.1,
    "probe_batch_size": 32,
    "train_fraction": 0.8,
    "holdout": [7, 8],
    "localization_epochs": 20,
    "localization_lr": 0.01,
    "localization_momentum": 0.9,
    "localization_batch_size": 32,
    "localization_alpha": 0.002777777777777778,
    "localization_finetune": true,
    // global gradient-norm clip for the localization fine-tune; 0 disables
    "localization_clip_norm": 1.0,
    "cluster_pca2": false,
    "cluster_max_points": 400
  },
  "report": {
    "seeds": [0, 1, 2],
    "modes": ["baseline", "mb"]
  }
})";

const std::set<std::string> kNullable = {"loss.threshold_position", "loss.threshold_rotation"};

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

bool compatible(const json& def, const json& val, const std::string& key) {
  if (val.is_null()) return kNullable.contains(key);
  if (def.is_null()) return val.is_number();
  if (def.is_number_float()) return val.is_number();
  if (def.is_number_integer()) return val.is_number_integer();
  return def.type() == val.type();
}

void overlay(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value(), key)) {
        throw ConfigError("config: key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                          it.value().type_name());
      }
      slot = it.value();
    }
  }
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    json wrapped = json::object();
    wrapped[*it] = std::move(patch);
    patch = std::move(wrapped);
  }
  overlay(tree, patch, "");
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

ThresholdBound bound(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

RunConfig typed(const json& t) {
  RunConfig c;
  c.seed = get<std::uint64_t>(t, "seed");
  c.dataset_dir = get<std::string>(t, "dataset_dir");
  c.run_dir = get<std::string>(t, "run_dir");

  const auto& e = t.at("env");
  c.env.plan.rooms = get<int>(e, "rooms");
  c.env.plan.grid_width = get<int>(e, "grid_width");
  c.env.plan.grid_height = get<int>(e, "grid_height");
  c.env.plan.cell_size = get<double>(e, "cell_size");
  c.env.plan.object_density = get<double>(e, "object_density");
  c.env.steps = get<int>(e, "steps");
  c.env.motion.step_length = get<double>(e, "step_length");
  c.env.motion.turn_increment_deg = get<double>(e, "turn_increment_deg");
  c.env.motion.turn_probability = get<double>(e, "turn_probability");
  c.env.resolution = get<int>(e, "resolution");
  c.env.lighting = get<std::string>(e, "lighting");
  c.env.lighting_id = get<int>(e, "lighting_id");
  c.env.palette_size = get<int>(e, "palette_size");
  c.env.trajectory_file = get<std::string>(e, "trajectory_file");
  if (c.env.lighting != "uniform" && c.env.lighting != "fixed") {
    throw ConfigError("config: env.lighting must be 'uniform' or 'fixed'");
  }
  if (c.env.steps < 1) throw ConfigError("config: env.steps must be >= 1");
  if (c.env.resolution < 8) throw ConfigError("config: env.resolution must be >= 8");
  const int palette_max = static_cast<int>(env::default_lighting_palette().size());
  if (c.env.palette_size < 1 || c.env.palette_size > palette_max) {
    throw ConfigError("config: env.palette_size must lie in [1, " + std::to_string(palette_max) + "]");
  }
  if (c.env.lighting_id < 0 || c.env.lighting_id >= c.env.palette_size) {
    throw ConfigError("config: env.lighting_id outside the palette");
  }

  const auto& a = t.at("augment");
  auto& ag = c.augment;
  ag.crop_scale_min = get<double>(a, "crop_scale_min");
  ag.crop_scale_max = get<double>(a, "crop_scale_max");
  ag.crop_ratio_min = get<double>(a, "crop_ratio_min");
  ag.crop_ratio_max = get<double>(a, "crop_ratio_max");
  ag.flip_p = get<double>(a, "flip_p");
  ag.jitter_p = get<double>(a, "jitter_p");
  ag.brightness = get<double>(a, "brightness");
  ag.contrast = get<double>(a, "contrast");
  ag.saturation = get<double>(a, "saturation");
  ag.hue = get<double>(a, "hue");
  ag.grayscale_p = get<double>(a, "grayscale_p");
  ag.blur_p = get<double>(a, "blur_p");
  ag.blur_sigma_min = get<double>(a, "blur_sigma_min");
  ag.blur_sigma_max = get<double>(a, "blur_sigma_max");

  const auto& l = t.at("loss");
  c.loss.mode = core::parse_loss_mode(get<std::string>(l, "mode"));
  c.loss.temperature = get<double>(l, "temperature");
  c.loss.policy = core::parse_enqueue_policy(get<std::string>(l, "enqueue"));
  if (c.loss.mode != core::LossMode::Baseline) {
    c.loss.threshold = SimilarityThreshold(bound(l, "threshold_position"), bound(l, "threshold_rotation"));
  }
  if (c.loss.mode == core::LossMode::MW) c.loss.weights = WeightParams{get<double>(l, "alpha"), get<double>(l, "beta")};

  const auto& tr = t.at("train");
  c.train.epochs = get<int>(tr, "epochs");
  c.train.batch_size = get<std::size_t>(tr, "batch_size");
  c.train.queue_size = get<std::size_t>(tr, "queue_size");
  c.train.momentum = get<double>(tr, "momentum");
  c.train.sgd = nn::SgdConfig{get<double>(tr, "lr"), get<double>(tr, "sgd_momentum"), get<double>(tr, "weight_decay")};
  c.train.arch = nn::TinyConvArch::parse(get<std::string>(tr, "architecture"));
  c.train.lighting_ids = get<std::vector<int>>(tr, "lighting_ids");
  c.train.independent_lighting_views = get<bool>(tr, "independent_lighting_views");
  c.train.calibrate_positives = get<double>(tr, "calibrate_positives");
  if (c.train.epochs < 0) throw ConfigError("config: train.epochs must be >= 0");
  for (int id : c.train.lighting_ids) {
    if (id < 0 || id >= c.env.palette_size) throw ConfigError("config: train.lighting_ids outside the palette");
  }
  if (c.train.arch.in_size != static_cast<std::size_t>(c.env.resolution)) {
    throw ConfigError("config: architecture input size " + std::to_string(c.train.arch.in_size) +
                      " does not match env.resolution " + std::to_string(c.env.resolution));
  }

  const auto& ev = t.at("eval");
  c.eval.tasks = get<std::vector<std::string>>(ev, "tasks");
  static const std::set<std::string> known = {"room-probe", "room-probe-lighting-holdout", "localization",
                                              "cluster-metrics"};
  for (const auto& task : c.eval.tasks) {
    if (!known.contains(task)) throw ConfigError("config: unknown eval task '" + task + "'");
  }
  c.eval.probe.epochs = get<int>(ev, "probe_epochs");
  c.eval.probe.lr = get<double>(ev, "probe_lr");
  c.eval.probe.batch_size = get<std::size_t>(ev, "probe_batch_size");
  c.eval.probe.train_fraction = get<double>(ev, "train_fraction");
  const auto holdout = get<std::vector<int>>(ev, "holdout");
  if (holdout.size() != 2) throw ConfigError("config: eval.holdout must list exactly two lighting ids");
  c.eval.probe.holdout = eval::LightingHoldout{holdout[0], holdout[1]};
  c.eval.localization.epochs = get<int>(ev, "localization_epochs");
  c.eval.localization.lr = get<double>(ev, "localization_lr");
  c.eval.localization.momentum = get<double>(ev, "localization_momentum");
  c.eval.localization.batch_size = get<std::size_t>(ev, "localization_batch_size");
  c.eval.localization.alpha = get<double>(ev, "localization_alpha");
  c.eval.localization.finetune = get<bool>(ev, "localization_finetune");
  c.eval.localization.clip_norm = get<double>(ev, "localization_clip_norm");
  c.eval.cluster_pca2 = get<bool>(ev, "cluster_pca2");
  c.eval.cluster_max_points = get<std::size_t>(ev, "cluster_max_points");

  const auto& r = t.at("report");
  c.report.seeds = get<std::vector<std::uint64_t>>(r, "seeds");
  c.report.modes = get<std::vector<std::string>>(r, "modes");
  if (c.report.seeds.empty() || c.report.modes.empty()) throw ConfigError("config: report needs seeds and modes");
  for (const auto& m : c.report.modes) core::parse_loss_mode(m);

  try {
    c.augment.validate();
    c.loss.validate();
    c.train.sgd.validate();
    c.eval.probe.validate(static_cast<std::size_t>(c.env.palette_size));
    c.eval.localization.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  c.resolved_json = t.dump(2) + "\n";
  return c;
}

}  // namespace

std::string default_config_text() { return std::string(kDefaults) + "\n"; }

RunConfig config_from_text(const std::string& json_text, const std::vector<std::string>& overrides) {
  json tree = parse_json(kDefaults, "defaults");
  overlay(tree, parse_json(json_text, "config"), "");
  for (const auto& o : overrides) apply_override(tree, o);
  try {
    return typed(tree);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  if (!file) return config_from_text("{}", overrides);
  std::ifstream is(*file, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + file->string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_text(ss.str(), overrides);
}

std::filesystem::path data_root() {
  if (const char* env = std::getenv("ESS_LAB_DATA_DIR"); env && *env) return env;
  return std::filesystem::current_path() / "ess_lab_data";
}

std::filesystem::path resolve_path(const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : data_root() / path;
}

core::TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed) {
  core::TrainConfig tc;
  tc.batch_size = cfg.train.batch_size;
  tc.queue_size = cfg.train.queue_size;
  tc.momentum = cfg.train.momentum;
  tc.sgd = cfg.train.sgd;
  tc.loss = cfg.loss;
  tc.augment = cfg.augment;
  tc.independent_lighting_views = cfg.train.independent_lighting_views;
  tc.seed = seed;
  return tc;
}

}  // namespace ess::app
