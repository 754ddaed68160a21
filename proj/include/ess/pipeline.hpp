#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ess/config.hpp"
#include "ess/core.hpp"
#include "ess/env.hpp"

namespace ess::app {

namespace fs = std::filesystem;

// Fixed file names inside dataset and run directories.
inline constexpr const char* kPlanFile = "plan.json";
inline constexpr const char* kTrajectoryFile = "trajectory.csv";
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kFramesDir = "frames";
inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kRunLogFile = "run_log.jsonl";
inline constexpr const char* kTrainSummaryFile = "train_summary.json";
inline constexpr const char* kEvalReportFile = "eval_report.jsonl";
inline constexpr const char* kEvalSummaryFile = "eval_summary.txt";
inline constexpr const char* kReportFile = "report.jsonl";
inline constexpr const char* kReportTable = "report.txt";

// First env.palette_size entries of the default lighting palette.
std::vector<env::LightingCondition> lighting_palette(const RunConfig& cfg);

struct GenerateResult {
  fs::path dataset_dir;
  std::size_t frames = 0;
};

// plan -> trajectory (random walk or recorded file) -> replay -> PPM frames
// and manifest. Writes the resolved config next to the data.
GenerateResult run_generate(const RunConfig& cfg, std::ostream* log = nullptr);

struct Dataset {
  fs::path dir;
  env::FloorPlan plan;
  std::vector<env::ManifestRecord> records;
  std::vector<Image> images;
};

Dataset load_dataset(const fs::path& dir);

// Training data built from a dataset per the config: manifest images, or
// per-draw re-rendering under train.lighting_ids.
core::TrainDataset training_data(const Dataset& ds, const RunConfig& cfg);

struct TrainResult {
  fs::path run_dir;
  std::vector<core::EpochMetrics> epochs;
  std::optional<SimilarityThreshold> threshold;  // after calibration
};

// Runs cfg.train.epochs epochs with the given seed. Writes config echo,
// run log, summary, and the query-encoder checkpoint. On a non-finite loss
// the last good checkpoint is written and the error rethrown.
TrainResult run_train(const RunConfig& cfg, const fs::path& run_dir, std::uint64_t seed, std::ostream* log = nullptr);

struct EvalRecord {
  std::string model;
  std::string dataset;
  std::string task;
  std::map<std::string, double> metrics;
};

// Loads the checkpoint (default run_dir/checkpoint.ckpt) and runs the
// configured tasks; writes eval_report.jsonl and eval_summary.txt into run_dir.
std::vector<EvalRecord> run_eval(const RunConfig& cfg, const fs::path& run_dir,
                                 const std::optional<fs::path>& checkpoint = std::nullopt,
                                 std::ostream* log = nullptr);

std::string format_eval_table(const std::vector<EvalRecord>& records);

struct MetricSummary {
  std::vector<double> values;
  double mean = 0;
  double sem = 0;
};

// mode -> "task.metric" -> summary across seeds.
using Report = std::map<std::string, std::map<std::string, MetricSummary>>;

double mean_of(const std::vector<double>& v);
// Sample standard deviation over sqrt(n); 0 for a single value.
double standard_error(const std::vector<double>& v);

// Trains and evaluates every mode x seed under run_dir/<mode>-s<seed>,
// generating the dataset first when missing. Writes report.jsonl and
// report.txt into run_dir.
Report run_report(const RunConfig& cfg, std::ostream* log = nullptr);

std::string format_report_table(const Report& report);

}  // namespace ess::app
