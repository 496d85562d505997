#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dkmpc/bench.hpp"
#include "dkmpc/errors.hpp"

namespace fs = std::filesystem;
using namespace dkmpc;

namespace {

using Timings = std::vector<std::pair<std::string, double>>;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::array<Scalar, 3> split_fractions(const Config& config) {
  const auto v = config.get_scalars("data.fractions", {0.7, 0.15, 0.15});
  if (v.size() != 3) throw Error("data.fractions needs 3 values");
  return {v[0], v[1], v[2]};
}

std::vector<FlightRecord> load_flights(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("not a flight directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw EmptyDataset("no .csv flights in " + dir);
  std::vector<FlightRecord> records;
  records.reserve(paths.size());
  for (const auto& p : paths) records.push_back(load_csv(p));
  return records;
}

std::uint64_t config_seed(const Config& config) {
  return static_cast<std::uint64_t>(config.get_int("seed", 0));
}

int cmd_generate(const Config& config, const fs::path& out) {
  const PlantParams params = load_plant_params(config);
  const ExcitationConfig excitation = load_excitation_config(config);

  Timings timings;
  Stopwatch watch;
  const auto flights = generate_flights(params, excitation, config_seed(config));
  timings.emplace_back("generate", watch.seconds());

  const fs::path dir = out / "flights";
  fs::create_directories(dir);
  for (std::size_t i = 0; i < flights.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "flight_%03zu.csv", i);
    write_csv(flights[i], (dir / name).string());
  }
  write_manifest(config, config_seed(config), timings,
                 (out / "manifest.json").string());
  std::printf("wrote %zu flights under %s\n", flights.size(), dir.c_str());
  return 0;
}

int cmd_train(const Config& config, const fs::path& out) {
  const auto records = load_flights(config.get_string("io.data_dir"));
  const Normalizer normalizer = fit_normalizer(records);
  const auto splits = segment(records, normalizer, split_fractions(config));

  TrainSettings settings = load_train_settings(config);
  const auto latent = static_cast<Index>(config.get_int("model.latent", 8));
  std::vector<Index> hidden;
  for (const Scalar v : config.get_scalars("model.hidden", {64, 64}))
    hidden.push_back(static_cast<Index>(v));

  std::mt19937_64 rng(settings.seed);
  KoopmanModel init =
      make_koopman_model(records.front().state_dim(),
                         records.front().input_dim(), latent, hidden,
                         normalizer, rng);

  Timings timings;
  Stopwatch watch;
  const TrainResult result = train(std::move(init), splits[0], splits[1], settings);
  timings.emplace_back("train", watch.seconds());

  CheckpointMeta meta;
  meta.seed = settings.seed;
  meta.epoch = result.best_epoch;
  if (result.best_epoch >= 1 &&
      static_cast<std::size_t>(result.best_epoch) <= result.log.size()) {
    const EpochLog& best = result.log[static_cast<std::size_t>(result.best_epoch - 1)];
    meta.train_total = best.train.total;
    meta.val_total = best.val_total;
  }
  fs::create_directories(out);
  save_checkpoint(result.best_model, meta, (out / "model.json").string());
  write_loss_log(result.log, (out / "loss_log.csv").string());
  write_manifest(config, settings.seed, timings,
                 (out / "manifest.json").string());
  std::printf("trained %ld epochs, best epoch %ld (val %.6g), model at %s\n",
              settings.epochs, result.best_epoch, meta.val_total,
              (out / "model.json").c_str());
  return 0;
}

int cmd_eval(const Config& config, const fs::path& out) {
  const auto [model, meta] = load_checkpoint(config.get_string("io.model"));
  const auto records = load_flights(config.get_string("io.data_dir"));
  const auto steps = static_cast<Index>(config.get_int("eval.steps", 100));

  Timings timings;
  Stopwatch watch;
  const OpenLoopEval eval =
      eval_open_loop(model, records, split_fractions(config), steps);
  timings.emplace_back("eval", watch.seconds());

  nlohmann::ordered_json j;
  for (std::size_t c = 0; c < kReportChannelNames.size(); ++c) {
    j["r2"][kReportChannelNames[c]] = eval.r2[static_cast<Index>(c)];
    j["mse"][kReportChannelNames[c]] = eval.mse[static_cast<Index>(c)];
  }
  j["r2"]["mean"] = eval.r2.mean();
  j["windows"] = eval.windows;
  j["steps"] = steps;
  fs::create_directories(out);
  {
    std::ofstream f(out / "metrics.json");
    if (!f) throw Error("cannot open metrics.json for writing");
    f << j.dump(2) << '\n';
  }
  write_manifest(config, config_seed(config), timings,
                 (out / "manifest.json").string());
  std::printf("open-loop R2 mean %.4f over %ld windows of %ld steps\n",
              eval.r2.mean(), eval.windows, static_cast<long>(steps));
  return 0;
}

int cmd_run(const Config& config, const fs::path& out, bool track_mode) {
  const PlantParams params = load_plant_params(config);
  const auto [model, meta] = load_checkpoint(config.get_string("io.model"));

  Mat refs;
  Scalar dt = 0;
  if (track_mode) {
    const LissajousConfig cfg = load_lissajous_config(config);
    refs = lissajous_reference(cfg);
    dt = cfg.dt;
  } else {
    const StepScheduleConfig cfg = load_step_schedule_config(config);
    refs = step_schedule(cfg);
    dt = cfg.dt;
  }

  const std::string controller = config.get_string("controller", "dk-mpc");
  const auto horizon = static_cast<Index>(config.get_int("mpc.horizon", 25));
  Vec x0 = Vec::Zero(kStateDim);
  x0.segment<3>(0) = refs.row(0).segment<3>(0).transpose();
  x0[8] = refs(0, 8);

  Timings timings;
  Stopwatch watch;
  RunResult run;
  if (controller == "dk-mpc") {
    DkMpcController dk(model, load_mpc_config(config, model));
    run = run_closed_loop(params, as_control_fn(dk), refs, x0, dt, horizon);
  } else if (controller == "nmpc") {
    NmpcController nm(make_quad_model(params, dt),
                      load_nmpc_config(config, model.normalizer));
    run = run_closed_loop(params, as_control_fn(nm), refs, x0, dt, horizon);
  } else {
    throw Error("controller must be dk-mpc or nmpc, got: " + controller);
  }
  timings.emplace_back(track_mode ? "track" : "stabilize", watch.seconds());

  fs::create_directories(out);
  write_trajectory_csv(run, dt, plant_state_names(), plant_input_names(),
                       (out / "trajectory.csv").string());
  std::vector<DiagnosticsRow> diag;
  diag.reserve(run.steps.size());
  for (std::size_t k = 0; k < run.steps.size(); ++k)
    diag.push_back({dt * static_cast<Scalar>(k), run.steps[k]});
  write_diagnostics_csv(diag, (out / "diagnostics.csv").string());
  const Metrics metrics =
      compute_run_metrics(run, 10, (horizon + 1) * kInputDim);
  save_metrics(metrics, (out / "metrics.json").string());
  write_manifest(config, config_seed(config), timings,
                 (out / "manifest.json").string());

  if (run.aborted)
    throw Error("closed loop aborted after " +
                std::to_string(run.states.rows()) + " of " +
                std::to_string(refs.rows()) + " steps; partial logs kept");
  std::printf("%s %s: R2 mean %.4f, solve median %.3f ms, p95 %.3f ms\n",
              track_mode ? "track" : "stabilize", controller.c_str(),
              metrics.r2_mean, metrics.median_ms, metrics.p95_ms);
  return 0;
}

int cmd_sweep(const Config& config, const fs::path& out) {
  const PlantParams params = load_plant_params(config);
  const auto [model, meta] = load_checkpoint(config.get_string("io.model"));

  const LissajousConfig track_cfg = load_lissajous_config(config);
  const Mat refs = lissajous_reference(track_cfg);
  const Scalar dt = track_cfg.dt;
  Vec x0 = Vec::Zero(kStateDim);
  x0.segment<3>(0) = refs.row(0).segment<3>(0).transpose();
  x0[8] = refs(0, 8);

  std::vector<long> horizons;
  for (const Scalar v : config.get_scalars("sweep.horizons", {5, 10, 15, 20, 25}))
    horizons.push_back(static_cast<long>(v));

  Timings timings;
  Stopwatch total;
  std::vector<SweepRow> rows;
  for (const long h : horizons) {
    for (const char* name : {"dk-mpc", "nmpc"}) {
      SweepRow row;
      row.horizon = h;
      row.controller = name;
      row.r2 = row.median_ms = row.p95_ms =
          std::numeric_limits<Scalar>::quiet_NaN();
      try {
        RunResult run;
        if (std::string(name) == "dk-mpc") {
          MpcConfig cfg = load_mpc_config(config, model);
          cfg.horizon = h;
          DkMpcController dk(model, cfg);
          run = run_closed_loop(params, as_control_fn(dk), refs, x0, dt, h);
        } else {
          NmpcConfig cfg = load_nmpc_config(config, model.normalizer);
          cfg.horizon = h;
          NmpcController nm(make_quad_model(params, dt), cfg);
          run = run_closed_loop(params, as_control_fn(nm), refs, x0, dt, h);
        }
        if (run.aborted)
          throw Error("aborted after " + std::to_string(run.states.rows()) +
                      " steps");
        const Metrics m =
            compute_run_metrics(run, 10, (h + 1) * kInputDim);
        row.r2 = m.r2_mean;
        row.median_ms = m.median_ms;
        row.p95_ms = m.p95_ms;
      } catch (const Error& e) {
        std::fprintf(stderr, "sweep cell H=%ld %s failed: %s\n", h, name,
                     e.what());
      }
      rows.push_back(std::move(row));
    }
  }
  timings.emplace_back("sweep", total.seconds());

  fs::create_directories(out);
  write_sweep_csv(rows, (out / "sweep.csv").string());
  write_manifest(config, config_seed(config), timings,
                 (out / "manifest.json").string());
  for (const auto& row : rows)
    std::printf("H=%-3ld %-7s R2 %.4f median %.3f ms\n", row.horizon,
                row.controller.c_str(), row.r2, row.median_ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep Koopman model predictive control quadrotor toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  long seed = 0;
  long epochs = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--set", overrides,
                    "override one config entry as key=value");
    sub->add_option("--out", out_dir, "run directory for all outputs");
  };

  CLI::App* generate = app.add_subcommand(
      "generate-data", "fly excitation episodes and write flight CSVs");
  CLI::App* train_cmd =
      app.add_subcommand("train", "fit the latent model, write a checkpoint");
  CLI::App* eval_cmd = app.add_subcommand(
      "eval-model", "score open-loop rollouts on the held-out tails");
  CLI::App* stabilize =
      app.add_subcommand("stabilize", "closed-loop step schedule run");
  CLI::App* track =
      app.add_subcommand("track", "closed-loop smooth trajectory run");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "accuracy and latency over prediction horizons");
  for (CLI::App* sub : {generate, train_cmd, eval_cmd, stabilize, track, sweep})
    add_common(sub);
  train_cmd->add_option("--epochs", epochs, "override train.epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* active = app.get_subcommands().front();
  Config config;
  try {
    if (!config_path.empty()) config = Config::from_file(config_path);
    for (const auto& assignment : overrides)
      config.set_from_assignment(assignment);
    if (active->count("--seed") > 0)
      config.set("seed", std::to_string(seed));
    if (active == train_cmd && train_cmd->count("--epochs") > 0)
      config.set("train.epochs", std::to_string(epochs));
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  const fs::path out =
      out_dir.empty() ? fs::path("runs") / active->get_name() : fs::path(out_dir);
  try {
    fs::create_directories(out);
    if (active == generate) return cmd_generate(config, out);
    if (active == train_cmd) return cmd_train(config, out);
    if (active == eval_cmd) return cmd_eval(config, out);
    if (active == stabilize) return cmd_run(config, out, false);
    if (active == track) return cmd_run(config, out, true);
    return cmd_sweep(config, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
