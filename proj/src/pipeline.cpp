#include "ess/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ess::app {

using json = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::vector<env::LightingCondition> lighting_palette(const RunConfig& cfg) {
  auto p = env::default_lighting_palette();
  p.resize(static_cast<std::size_t>(cfg.env.palette_size));
  return p;
}

GenerateResult run_generate(const RunConfig& cfg, std::ostream* log) {
  const fs::path dir = resolve_path(cfg.dataset_dir);
  fs::create_directories(dir / kFramesDir);
  for (const auto& entry : fs::directory_iterator(dir / kFramesDir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm") fs::remove(entry.path());
  }

  const auto plan = env::generate_floorplan(cfg.seed, cfg.env.plan);
  env::Trajectory traj;
  if (cfg.env.trajectory_file.empty()) {
    traj = env::random_walk(plan, cfg.env.steps, cfg.env.motion, derive_seed(cfg.seed, "walk"));
  } else {
    traj = env::load_trajectory(resolve_path(cfg.env.trajectory_file));
    try {
      env::validate_trajectory(plan, traj);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("recorded trajectory is invalid for this plan: ") + e.what());
    }
  }
  const auto palette = lighting_palette(cfg);
  env::LightingPolicy policy = env::FixedLighting{cfg.env.lighting_id};
  if (cfg.env.lighting == "uniform") policy = env::UniformLighting{derive_seed(cfg.seed, "replay-lighting"), {}};
  const auto frames = env::replay(plan, traj, policy, palette, cfg.env.resolution, cfg.env.resolution);

  std::vector<env::ManifestRecord> records;
  records.reserve(frames.size());
  for (const auto& f : frames) {
    const std::string rel = std::string(kFramesDir) + "/" + env::frame_filename(f.step);
    write_ppm(dir / rel, f.image);
    records.push_back({f.step, f.pose, f.lighting_id, rel, env::room_label(plan, f.pose)});
  }
  env::save_plan(dir / kPlanFile, plan);
  env::save_trajectory(dir / kTrajectoryFile, traj);
  env::save_manifest(dir / kManifestFile, records);
  write_text(dir / kConfigEcho, cfg.resolved_json);
  if (log) *log << "generate: " << records.size() << " frames -> " << dir.string() << "\n";
  return {dir, records.size()};
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / kManifestFile)) {
    throw std::runtime_error("no dataset manifest at " + (dir / kManifestFile).string() + " (run generate first)");
  }
  Dataset ds;
  ds.dir = dir;
  ds.plan = env::load_plan(dir / kPlanFile);
  ds.records = env::load_manifest(dir / kManifestFile);
  if (ds.records.empty()) throw std::runtime_error("dataset manifest is empty");
  ds.images.reserve(ds.records.size());
  for (const auto& r : ds.records) ds.images.push_back(read_ppm(dir / r.image_path));
  return ds;
}

core::TrainDataset training_data(const Dataset& ds, const RunConfig& cfg) {
  std::vector<Pose> poses;
  std::vector<std::int64_t> ids;
  for (const auto& r : ds.records) {
    poses.push_back(r.pose);
    ids.push_back(r.step);
  }
  if (cfg.train.lighting_ids.empty()) return core::dataset_from_images(ds.images, std::move(poses), std::move(ids));

  // Each draw renders the frame under a uniformly chosen lighting id; renders
  // are cached per (frame, id).
  struct Renderer {
    env::FloorPlan plan;
    std::vector<env::LightingCondition> palette;
    std::vector<int> lighting_ids;
    std::vector<Pose> poses;
    int width, height;
    std::map<std::pair<std::size_t, int>, Image> cache;
  };
  auto r = std::make_shared<Renderer>();
  r->plan = ds.plan;
  r->palette = lighting_palette(cfg);
  r->lighting_ids = cfg.train.lighting_ids;
  r->poses = poses;
  r->width = ds.images.front().width;
  r->height = ds.images.front().height;
  core::TrainDataset out;
  out.frame_ids = std::move(ids);
  out.poses = std::move(poses);
  out.source = [r](std::size_t i, Rng& rng) {
    const int id = r->lighting_ids[rng.below(r->lighting_ids.size())];
    auto key = std::make_pair(i, id);
    auto it = r->cache.find(key);
    if (it == r->cache.end()) {
      it = r->cache.emplace(key, env::render(r->plan, r->poses[i], r->palette[static_cast<std::size_t>(id)],
                                             r->width, r->height)).first;
    }
    return it->second;
  };
  return out;
}

TrainResult run_train(const RunConfig& cfg, const fs::path& run_dir, std::uint64_t seed, std::ostream* log) {
  const Dataset ds = load_dataset(resolve_path(cfg.dataset_dir));
  if (ds.images.front().width != static_cast<int>(cfg.train.arch.in_size) ||
      ds.images.front().height != static_cast<int>(cfg.train.arch.in_size)) {
    throw ConfigError("dataset frames are " + std::to_string(ds.images.front().width) + "x" +
                      std::to_string(ds.images.front().height) + " but the architecture expects " +
                      std::to_string(cfg.train.arch.in_size));
  }
  fs::create_directories(run_dir);
  write_text(run_dir / kConfigEcho, cfg.resolved_json);

  auto tc = train_config(cfg, seed);
  auto data = training_data(ds, cfg);
  TrainResult result;
  result.run_dir = run_dir;
  if (tc.loss.threshold && cfg.train.calibrate_positives > 0.0) {
    const double s = core::calibrate_threshold_scale(data.poses, *tc.loss.threshold, tc.queue_size,
                                                     cfg.train.calibrate_positives);
    tc.loss.threshold = tc.loss.threshold->scaled(s);
  }
  result.threshold = tc.loss.threshold;

  core::Trainer trainer(tc, cfg.train.arch, std::move(data));
  const std::string descriptor = cfg.train.arch.descriptor();
  const std::string mode = core::to_string(tc.loss.mode);
  std::string run_log;
  auto last_good = trainer.encoders().query.clone(false);
  for (int e = 0; e < cfg.train.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    core::EpochMetrics m;
    try {
      m = trainer.train_epoch();
    } catch (const ad::NumericError&) {
      nn::save_checkpoint(run_dir / kCheckpointFile, descriptor, last_good);
      write_text(run_dir / kRunLogFile, run_log);
      throw;
    }
    const auto wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    json rec;
    rec["epoch"] = m.epoch;
    rec["mode"] = mode;
    rec["loss"] = m.loss;
    rec["pretext_acc"] = m.pretext_acc;
    rec["mean_positives"] = m.mean_positives;
    rec["fallbacks"] = m.fallbacks;
    rec["wall_ms"] = wall;
    run_log += rec.dump() + "\n";
    if (log) {
      *log << "epoch " << m.epoch << "/" << cfg.train.epochs << " mode=" << mode << " loss=" << fmt(m.loss)
           << " pretext_acc=" << fmt(m.pretext_acc) << " mean_positives=" << fmt(m.mean_positives)
           << " fallbacks=" << m.fallbacks << " (" << wall << " ms)\n";
    }
    result.epochs.push_back(std::move(m));
    last_good = trainer.encoders().query.clone(false);
  }
  nn::save_checkpoint(run_dir / kCheckpointFile, descriptor, trainer.encoders().query);
  write_text(run_dir / kRunLogFile, run_log);

  json summary;
  summary["mode"] = mode;
  summary["seed"] = seed;
  summary["epochs"] = cfg.train.epochs;
  if (result.threshold) {
    const auto& p = result.threshold->position();
    const auto& r = result.threshold->rotation();
    summary["threshold_position"] = p ? json(*p) : json(nullptr);
    summary["threshold_rotation"] = r ? json(*r) : json(nullptr);
  }
  summary["final_loss"] = result.epochs.empty() ? json(nullptr) : json(result.epochs.back().loss);
  write_text(run_dir / kTrainSummaryFile, summary.dump(2) + "\n");
  return result;
}

namespace {

std::vector<Image> pick_images(const Dataset& ds, const std::vector<eval::SplitItem>& items) {
  std::vector<Image> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(ds.images[it.record]);
  return out;
}

std::vector<Image> render_items(const Dataset& ds, const std::vector<eval::SplitItem>& items,
                                const std::vector<env::LightingCondition>& palette) {
  std::vector<Image> out;
  out.reserve(items.size());
  const int w = ds.images.front().width, h = ds.images.front().height;
  for (const auto& it : items) {
    out.push_back(env::render(ds.plan, ds.records[it.record].pose, palette[static_cast<std::size_t>(it.lighting_id)],
                              w, h));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<eval::SplitItem>& items) {
  std::vector<int> out;
  for (const auto& it : items) out.push_back(it.label);
  return out;
}

std::vector<Pose> poses_of(const Dataset& ds, const std::vector<eval::SplitItem>& items) {
  std::vector<Pose> out;
  for (const auto& it : items) out.push_back(ds.records[it.record].pose);
  return out;
}

std::string model_name(const fs::path& run_dir) {
  const auto summary = run_dir / kTrainSummaryFile;
  if (fs::exists(summary)) {
    std::ifstream is(summary);
    try {
      const auto j = json::parse(is);
      return j.at("mode").get<std::string>() + "-s" + std::to_string(j.at("seed").get<std::uint64_t>());
    } catch (const json::exception&) {
    }
  }
  return run_dir.filename().string();
}

}  // namespace

std::vector<EvalRecord> run_eval(const RunConfig& cfg, const fs::path& run_dir,
                                 const std::optional<fs::path>& checkpoint, std::ostream* log) {
  const fs::path ckpt = checkpoint ? *checkpoint : run_dir / kCheckpointFile;
  if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint not found: " + ckpt.string());
  const auto info = nn::read_checkpoint_info(ckpt);
  const std::string expected = cfg.train.arch.descriptor();
  if (info.descriptor != expected) {
    throw ConfigError("checkpoint architecture '" + info.descriptor + "' does not match configured '" + expected +
                      "'");
  }
  const auto params = nn::load_checkpoint<float>(ckpt);
  const auto reference = nn::init_tiny_conv<float>(cfg.train.arch, 0);
  params.require_aligned(reference, "checkpoint");

  const Dataset ds = load_dataset(resolve_path(cfg.dataset_dir));
  const auto palette = lighting_palette(cfg);
  const std::string model = model_name(run_dir);
  const std::string dataset = ds.dir.filename().string();
  const auto& arch = cfg.train.arch;
  std::vector<EvalRecord> records;

  for (const auto& task : cfg.eval.tasks) {
    EvalRecord rec{model, dataset, task, {}};
    if (task == "room-probe" || task == "room-probe-lighting-holdout") {
      const bool holdout = task == "room-probe-lighting-holdout";
      auto pc = cfg.eval.probe;
      pc.seed = cfg.seed;
      if (!holdout) pc.holdout.reset();
      const auto split = eval::split_dataset(ds.records, pc.train_fraction, cfg.seed, pc.holdout, palette.size());
      const auto tr_img = holdout ? render_items(ds, split.train, palette) : pick_images(ds, split.train);
      const auto te_img = holdout ? render_items(ds, split.test, palette) : pick_images(ds, split.test);
      const auto r = eval::room_probe(params, arch, tr_img, labels_of(split.train), te_img, labels_of(split.test),
                                      split.classes.size(), pc);
      rec.metrics = {{"train_loss", r.train_loss},
                     {"test_loss", r.test_loss},
                     {"train_accuracy", r.train_accuracy},
                     {"accuracy", r.test_accuracy}};
    } else if (task == "localization") {
      auto lc = cfg.eval.localization;
      lc.seed = cfg.seed;
      const auto split =
          eval::split_dataset(ds.records, cfg.eval.probe.train_fraction, cfg.seed, std::nullopt, palette.size(), false);
      const auto r = eval::localization_train_eval(params, arch, pick_images(ds, split.train), poses_of(ds, split.train),
                                                   pick_images(ds, split.test), poses_of(ds, split.test), lc);
      rec.metrics = {{"train_loss", r.train_loss},
                     {"test_loss", r.test_loss},
                     {"position_error", r.position_error},
                     {"rotation_error", r.rotation_error},
                     {"position_drop", r.position_drop},
                     {"rotation_drop", r.rotation_drop}};
    } else if (task == "cluster-metrics") {
      const auto split =
          eval::split_dataset(ds.records, cfg.eval.probe.train_fraction, cfg.seed, std::nullopt, palette.size());
      auto items = split.test;
      if (items.size() > cfg.eval.cluster_max_points) items.resize(cfg.eval.cluster_max_points);
      const auto imgs = pick_images(ds, items);
      const auto frozen = params.clone(false);
      const auto emb = nn::embed(frozen, arch, nn::images_to_tensor<float>(imgs));
      const std::vector<double> pts(emb.data().begin(), emb.data().end());
      const auto r = eval::cluster_metrics(pts, arch.embedding_dim, labels_of(items), cfg.eval.cluster_pca2);
      rec.metrics = {{"silhouette", r.silhouette},
                     {"calinski_harabasz", r.calinski_harabasz},
                     {"davies_bouldin", r.davies_bouldin},
                     {"samples", static_cast<double>(r.samples)}};
    }
    if (log) {
      *log << "eval " << task << ":";
      for (const auto& [k, v] : rec.metrics) *log << " " << k << "=" << fmt(v);
      *log << "\n";
    }
    records.push_back(std::move(rec));
  }

  fs::create_directories(run_dir);
  std::string lines;
  for (const auto& r : records) {
    json j;
    j["model"] = r.model;
    j["dataset"] = r.dataset;
    j["task"] = r.task;
    for (const auto& [k, v] : r.metrics) j[k] = v;
    lines += j.dump() + "\n";
  }
  write_text(run_dir / kEvalReportFile, lines);
  write_text(run_dir / kEvalSummaryFile, format_eval_table(records));
  return records;
}

std::string format_eval_table(const std::vector<EvalRecord>& records) {
  static const char* cols[] = {"train_loss",     "test_loss",     "accuracy",      "position_error",
                               "rotation_error", "position_drop", "rotation_drop", "silhouette",
                               "calinski_harabasz", "davies_bouldin"};
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-14s %-12s %-28s", "model", "dataset", "task");
  os << buf;
  for (const char* c : cols) {
    std::snprintf(buf, sizeof(buf), " %14s", c);
    os << buf;
  }
  os << "\n";
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%-14s %-12s %-28s", r.model.c_str(), r.dataset.c_str(), r.task.c_str());
    os << buf;
    for (const char* c : cols) {
      const auto it = r.metrics.find(c);
      if (it == r.metrics.end()) {
        std::snprintf(buf, sizeof(buf), " %14s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %14.4f", it->second);
      }
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

Report run_report(const RunConfig& cfg, std::ostream* log) {
  const fs::path dataset = resolve_path(cfg.dataset_dir);
  if (!fs::exists(dataset / kManifestFile)) run_generate(cfg, log);
  const fs::path root = resolve_path(cfg.run_dir);
  fs::create_directories(root);
  write_text(root / kConfigEcho, cfg.resolved_json);

  Report report;
  for (const auto& mode : cfg.report.modes) {
    for (const auto seed : cfg.report.seeds) {
      // Per-run config: same file, seed and mode replaced.
      auto run_cfg = config_from_text(cfg.resolved_json, {"seed=" + std::to_string(seed), "loss.mode=\"" + mode + "\""});
      const fs::path dir = root / (mode + "-s" + std::to_string(seed));
      if (log) *log << "report: training " << mode << " seed " << seed << "\n";
      const auto tr = run_train(run_cfg, dir, seed, log);
      const auto ev = run_eval(run_cfg, dir, std::nullopt, log);
      auto& slot = report[mode];
      if (!tr.epochs.empty()) {
        slot["pretext.loss"].values.push_back(tr.epochs.back().loss);
        slot["pretext.pretext_acc"].values.push_back(tr.epochs.back().pretext_acc);
        slot["pretext.mean_positives"].values.push_back(tr.epochs.back().mean_positives);
      }
      for (const auto& r : ev) {
        for (const auto& [k, v] : r.metrics) slot[r.task + "." + k].values.push_back(v);
      }
    }
  }
  std::string lines;
  for (auto& [mode, metrics] : report) {
    for (auto& [name, s] : metrics) {
      s.mean = mean_of(s.values);
      s.sem = standard_error(s.values);
      json j;
      j["mode"] = mode;
      j["metric"] = name;
      j["mean"] = s.mean;
      j["sem"] = s.sem;
      j["values"] = s.values;
      lines += j.dump() + "\n";
    }
  }
  write_text(root / kReportFile, lines);
  write_text(root / kReportTable, format_report_table(report));
  if (log) *log << format_report_table(report);
  return report;
}

std::string format_report_table(const Report& report) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-44s %24s\n", "mode", "metric", "mean +- sem");
  os << buf;
  for (const auto& [mode, metrics] : report) {
    for (const auto& [name, s] : metrics) {
      std::snprintf(buf, sizeof(buf), "%-10s %-44s %12.4f +- %8.4f\n", mode.c_str(), name.c_str(), s.mean, s.sem);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace ess::app
