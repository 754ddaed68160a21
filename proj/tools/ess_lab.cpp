#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ess/config.hpp"
#include "ess/gradcheck.hpp"
#include "ess/pipeline.hpp"
#include "ess/server.hpp"
#include "ess/walkthrough.hpp"

namespace {

using namespace ess;
using namespace ess::app;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "JSON config file (comments allowed)")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override, e.g. --set train.epochs=5 (repeatable)");
  cmd->add_option("--seed", c.seed, "experiment seed");
}

RunConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  for (auto& e : extra) overrides.push_back(std::move(e));
  std::optional<std::filesystem::path> file;
  if (!c.config_file.empty()) file = c.config_file;
  return load_config(file, overrides);
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

WalkthroughServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ESS contrastive learning lab: data generation, training, evaluation, walkthrough service"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, serve_c, report_c;
  std::string trajectory, dataset_dir, run_dir, checkpoint, plan_file, ui_dir, address = "127.0.0.1";
  int port = 8080, size = 128;
  std::optional<double> step_length, turn_deg;
  int lighting = 0;
  bool inject_fault = false;

  auto* gen = app.add_subcommand("generate", "build a floor plan, trajectory, frames and manifest");
  add_common(gen, gen_c);
  gen->add_option("--trajectory", trajectory, "replay a recorded trajectory instead of a random walk");
  gen->add_option("--dataset-dir", dataset_dir, "output directory (relative to the data root)");

  auto* train = app.add_subcommand("train", "contrastive pretraining on a generated dataset");
  add_common(train, train_c);
  train->add_option("--dataset-dir", dataset_dir, "dataset directory");
  train->add_option("--run-dir", run_dir, "run output directory");

  auto* ev = app.add_subcommand("eval", "downstream evaluation of a trained checkpoint");
  add_common(ev, eval_c);
  ev->add_option("--dataset-dir", dataset_dir, "dataset directory");
  ev->add_option("--run-dir", run_dir, "run directory holding the checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file (default: <run-dir>/checkpoint.ckpt)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite in 64-bit");
  gc->add_flag("--inject-fault", inject_fault, "use a relu with a sign-flipped gradient (must fail)");

  auto* serve = app.add_subcommand("serve", "interactive walkthrough: static UI over HTTP and WebSocket at /ws");
  add_common(serve, serve_c);
  serve->add_option("--plan", plan_file, "plan file (default: <dataset-dir>/plan.json, else generated from the seed)");
  serve->add_option("--dataset-dir", dataset_dir, "dataset directory");
  serve->add_option("--port", port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--address", address, "bind address");
  serve->add_option("--ui-dir", ui_dir, "static UI bundle directory");
  serve->add_option("--size", size, "render resolution in pixels")->check(CLI::Range(8, 1024));
  serve->add_option("--step", step_length, "meters per forward/back input");
  serve->add_option("--turn", turn_deg, "degrees per turn input");
  serve->add_option("--lighting", lighting, "initial lighting id");

  auto* report = app.add_subcommand("report", "train and evaluate every mode x seed; mean and SEM table");
  add_common(report, report_c);
  report->add_option("--run-dir", run_dir, "report root directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto dir_overrides = [&]() {
    std::vector<std::string> o;
    if (!dataset_dir.empty()) o.push_back("dataset_dir=" + json_string(dataset_dir));
    if (!run_dir.empty()) o.push_back("run_dir=" + json_string(run_dir));
    return o;
  };

  try {
    if (*gen) {
      auto extra = dir_overrides();
      if (!trajectory.empty()) extra.push_back("env.trajectory_file=" + json_string(trajectory));
      run_generate(resolve(gen_c, extra), &std::cout);
    } else if (*train) {
      const auto cfg = resolve(train_c, dir_overrides());
      run_train(cfg, resolve_path(cfg.run_dir), cfg.seed, &std::cout);
    } else if (*ev) {
      const auto cfg = resolve(eval_c, dir_overrides());
      std::optional<std::filesystem::path> ckpt;
      if (!checkpoint.empty()) ckpt = resolve_path(checkpoint);
      const auto records = run_eval(cfg, resolve_path(cfg.run_dir), ckpt, nullptr);
      std::cout << format_eval_table(records);
    } else if (*gc) {
      gradcheck::SuiteOptions opts;
      opts.inject_sign_flip = inject_fault;
      const auto results = gradcheck::run_suite(opts);
      return gradcheck::print_report(results, std::cout) ? 0 : 1;
    } else if (*serve) {
      const auto cfg = resolve(serve_c, dir_overrides());
      env::FloorPlan plan;
      const auto default_plan = resolve_path(cfg.dataset_dir) / kPlanFile;
      if (!plan_file.empty()) {
        plan = env::load_plan(resolve_path(plan_file));
      } else if (std::filesystem::exists(default_plan)) {
        plan = env::load_plan(default_plan);
      } else {
        plan = env::generate_floorplan(cfg.seed, cfg.env.plan);
      }
      SessionConfig sc;
      sc.width = sc.height = size;
      sc.lighting_id = lighting;
      if (step_length) sc.step_length = *step_length;
      if (turn_deg) sc.turn_deg = *turn_deg;
      WalkthroughSession session(std::move(plan), lighting_palette(cfg), sc);
      WalkthroughServer server(session, {address, static_cast<unsigned short>(port), ui_dir});
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on http://" << address << ":" << server.port() << "/ (WebSocket /ws)" << std::endl;
      server.run();
      g_server = nullptr;
    } else if (*report) {
      auto extra = dir_overrides();
      const auto cfg = resolve(report_c, extra);
      const auto rep = run_report(cfg, &std::cout);
      std::cout << format_report_table(rep);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
