#include "dkmpc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dkmpc/errors.hpp"

namespace dkmpc {

const std::array<Index, 4> kReportChannels = {0, 1, 2, 6};
const std::array<const char*, 4> kReportChannelNames = {"x", "y", "z", "roll"};

Scalar r_squared(const Vec& truth, const Vec& pred) {
  if (truth.size() != pred.size())
    throw DimensionMismatch("r_squared: series lengths differ");
  if (truth.size() < 2)
    throw DimensionMismatch("r_squared: need at least two samples");
  const Scalar mean = truth.mean();
  const Scalar ss_tot = (truth.array() - mean).square().sum();
  if (!(ss_tot > 0)) throw ConstantTruth("r_squared: truth series is constant");
  const Scalar ss_res = (truth - pred).squaredNorm();
  return 1 - ss_res / ss_tot;
}

Vec r_squared_columns(const Mat& truth, const Mat& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw DimensionMismatch("r_squared: series shapes differ");
  Vec out(truth.cols());
  for (Index c = 0; c < truth.cols(); ++c)
    out[c] = r_squared(truth.col(c), pred.col(c));
  return out;
}

namespace {

void append_number(std::string& out, Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

std::string metrics_to_json(const Metrics& metrics) {
  nlohmann::ordered_json j;
  for (std::size_t c = 0; c < kReportChannelNames.size(); ++c) {
    j["r2"][kReportChannelNames[c]] = metrics.r2[static_cast<Index>(c)];
    j["mse"][kReportChannelNames[c]] = metrics.mse[static_cast<Index>(c)];
  }
  j["r2"]["mean"] = metrics.r2_mean;
  j["solve_ms"]["median"] = metrics.median_ms;
  j["solve_ms"]["p95"] = metrics.p95_ms;
  j["saturation_rate"] = metrics.saturation_rate;
  return j.dump(2);
}

void save_metrics(const Metrics& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << metrics_to_json(metrics) << '\n';
}

Mat step_schedule(const StepScheduleConfig& cfg) {
  if (!(cfg.dt > 0 && cfg.settle > 0 && cfg.hold > 0 && cfg.tail > 0))
    throw Error("step schedule durations must be positive");
  const Index samples =
      static_cast<Index>(std::lround(cfg.duration() / cfg.dt)) + 1;
  Mat refs = Mat::Zero(samples, kStateDim);

  const Scalar t1 = cfg.settle;             // step in x
  const Scalar t2 = t1 + cfg.hold;          // step in y
  const Scalar t3 = t2 + cfg.hold;          // step in z
  const Scalar t4 = t3 + cfg.hold;          // step in roll
  const Scalar t5 = t4 + cfg.hold;          // roll released, hover tail
  for (Index k = 0; k < samples; ++k) {
    const Scalar t = k * cfg.dt;
    Eigen::Vector3d p = cfg.start;
    Scalar roll = 0;
    if (t >= t1) p.x() += cfg.step_x;
    if (t >= t2) p.y() += cfg.step_y;
    if (t >= t3) p.z() += cfg.step_z;
    if (t >= t4 && t < t5) roll = cfg.step_roll;
    refs.row(k).segment<3>(0) = p.transpose();
    refs(k, 6) = roll;
  }
  return refs;
}

Mat lissajous_reference(const LissajousConfig& cfg) {
  if (!(cfg.duration > 0 && cfg.dt > 0 && cfg.ramp_tau > 0))
    throw Error("trajectory durations must be positive");
  const Index samples =
      static_cast<Index>(std::lround(cfg.duration / cfg.dt)) + 1;

  Mat pos(samples, 3);
  Vec yaw(samples);
  for (Index k = 0; k < samples; ++k) {
    const Scalar t = k * cfg.dt;
    const Scalar env = 1 - std::exp(-(t / cfg.ramp_tau) * (t / cfg.ramp_tau));
    for (int i = 0; i < 3; ++i) {
      const Scalar w = 2 * M_PI * cfg.freq[i];
      pos(k, i) =
          cfg.center[i] + env * cfg.amp[i] * std::sin(w * t + cfg.phase[i]);
    }
    yaw[k] = env * cfg.yaw_amp * std::sin(2 * M_PI * cfg.yaw_freq * t);
  }

  // Central differences give velocity and acceleration consistent with the
  // sampled path; the edges reuse their neighbors.
  auto derivative = [&](const Mat& series) {
    Mat d(series.rows(), series.cols());
    for (Index k = 1; k + 1 < series.rows(); ++k)
      d.row(k) = (series.row(k + 1) - series.row(k - 1)) / (2 * cfg.dt);
    d.row(0) = d.row(1);
    d.row(samples - 1) = d.row(samples - 2);
    return d;
  };
  const Mat vel = derivative(pos);
  const Mat acc = derivative(vel);

  Mat refs = Mat::Zero(samples, kStateDim);
  Mat euler(samples, 3);
  for (Index k = 0; k < samples; ++k) {
    refs.row(k).segment<3>(0) = pos.row(k);
    refs.row(k).segment<3>(3) = vel.row(k);
    const Scalar cpsi = std::cos(yaw[k]), spsi = std::sin(yaw[k]);
    euler(k, 0) = (acc(k, 0) * spsi - acc(k, 1) * cpsi) / cfg.gravity;
    euler(k, 1) = (acc(k, 0) * cpsi + acc(k, 1) * spsi) / cfg.gravity;
    euler(k, 2) = yaw[k];
  }
  const Mat euler_rate = derivative(euler);
  refs.middleCols(6, 3) = euler;
  refs.middleCols(9, 3) = euler_rate;
  return refs;
}

ControlFn as_control_fn(DkMpcController& controller) {
  return [&controller](const Vec& x, const Mat& window, StepDiagnostics* d) {
    return controller.step(x, window, d);
  };
}

ControlFn as_control_fn(NmpcController& controller) {
  return [&controller](const Vec& x, const Mat& window, StepDiagnostics* d) {
    return controller.step(x, window, d);
  };
}

RunResult run_closed_loop(const PlantParams& params, const ControlFn& control,
                          const Mat& refs, const Vec& x0, Scalar dt,
                          Index horizon) {
  if (refs.rows() < 2 || refs.cols() != kStateDim)
    throw DimensionMismatch("reference must have state columns and 2+ rows");
  if (x0.size() != kStateDim)
    throw DimensionMismatch("initial state must have 12 entries");
  const Index samples = refs.rows();

  RunResult run;
  run.states = Mat(samples, kStateDim);
  run.inputs = Mat(samples, kInputDim);
  run.steps.reserve(samples);

  Vec x = x0;
  Index flown = 0;
  for (Index k = 0; k < samples; ++k) {
    run.states.row(k) = x.transpose();
    const Index window = std::min<Index>(horizon + 1, samples - k);
    StepDiagnostics diag;
    const Vec u = control(x, refs.middleRows(k, window), &diag);
    run.inputs.row(k) = u.transpose();
    run.steps.push_back(diag);
    flown = k + 1;
    if (k + 1 == samples) break;
    try {
      x = step_rk4(params, x, u, dt);
    } catch (const EulerSingularity&) {
      run.aborted = true;
      break;
    }
    if (!x.allFinite()) {
      run.aborted = true;
      break;
    }
  }
  run.refs = refs.topRows(flown);
  run.states.conservativeResize(flown, kStateDim);
  run.inputs.conservativeResize(flown, kInputDim);
  return run;
}

Metrics compute_run_metrics(const RunResult& run, long warmup,
                            Index sequence_entries) {
  const Index rows = run.states.rows();
  if (rows < 2) throw DimensionMismatch("run too short for metrics");

  Metrics m;
  m.r2 = Vec(static_cast<Index>(kReportChannels.size()));
  m.mse = Vec(static_cast<Index>(kReportChannels.size()));
  for (std::size_t c = 0; c < kReportChannels.size(); ++c) {
    const Vec truth = run.refs.col(kReportChannels[c]);
    const Vec pred = run.states.col(kReportChannels[c]);
    try {
      m.r2[static_cast<Index>(c)] = r_squared(truth, pred);
    } catch (const ConstantTruth&) {
      m.r2[static_cast<Index>(c)] = std::numeric_limits<Scalar>::quiet_NaN();
    }
    m.mse[static_cast<Index>(c)] = (truth - pred).squaredNorm() / rows;
  }
  Scalar r2_sum = 0;
  Index r2_n = 0;
  for (Index c = 0; c < m.r2.size(); ++c)
    if (std::isfinite(m.r2[c])) {
      r2_sum += m.r2[c];
      ++r2_n;
    }
  m.r2_mean =
      r2_n > 0 ? r2_sum / r2_n : std::numeric_limits<Scalar>::quiet_NaN();

  std::vector<double> times;
  double saturated = 0;
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    saturated += run.steps[k].saturated_count;
    if (static_cast<long>(k) >= warmup) times.push_back(run.steps[k].solve_ms);
  }
  if (times.empty())
    for (const auto& s : run.steps) times.push_back(s.solve_ms);
  std::sort(times.begin(), times.end());
  m.median_ms = times[times.size() / 2];
  const auto p95_idx = static_cast<std::size_t>(std::clamp<double>(
      std::ceil(0.95 * times.size()) - 1, 0.0, times.size() - 1.0));
  m.p95_ms = times[p95_idx];
  m.saturation_rate =
      saturated / (static_cast<double>(run.steps.size()) * sequence_entries);
  return m;
}

OpenLoopEval eval_open_loop(const KoopmanModel& model,
                            const std::vector<FlightRecord>& records,
                            const std::array<Scalar, 3>& fractions,
                            Index steps) {
  if (steps < 1) throw DimensionMismatch("rollout needs at least one step");
  std::vector<Mat> truths, preds;
  long windows = 0;
  for (const auto& rec : records) {
    const Index m = rec.length() - 1;
    const Index start = segment_cuts(m, fractions)[1];
    if (start + steps > m) continue;  // held-out tail shorter than the window
    const Vec x0 = rec.states.row(start).transpose();
    const Mat inputs = rec.inputs.middleRows(start, steps + 1);
    const Mat rollout = predict_rollout(model, x0, inputs);
    truths.push_back(rec.states.middleRows(start + 1, steps));
    preds.push_back(rollout.bottomRows(steps));
    ++windows;
  }
  if (windows == 0) throw EmptyDataset("no record has a long enough tail");

  Mat truth(windows * steps, kStateDim), pred(windows * steps, kStateDim);
  for (long w = 0; w < windows; ++w) {
    truth.middleRows(w * steps, steps) = truths[static_cast<std::size_t>(w)];
    pred.middleRows(w * steps, steps) = preds[static_cast<std::size_t>(w)];
  }

  OpenLoopEval eval;
  eval.windows = windows;
  eval.r2 = Vec(static_cast<Index>(kReportChannels.size()));
  eval.mse = Vec(static_cast<Index>(kReportChannels.size()));
  for (std::size_t c = 0; c < kReportChannels.size(); ++c) {
    eval.r2[static_cast<Index>(c)] =
        r_squared(truth.col(kReportChannels[c]), pred.col(kReportChannels[c]));
    eval.mse[static_cast<Index>(c)] =
        (truth.col(kReportChannels[c]) - pred.col(kReportChannels[c]))
            .squaredNorm() /
        truth.rows();
  }
  return eval;
}

void write_trajectory_csv(const RunResult& run, Scalar dt,
                          const std::vector<std::string>& state_names,
                          const std::vector<std::string>& input_names,
                          const std::string& path) {
  if (state_names.size() != static_cast<std::size_t>(run.states.cols()) ||
      input_names.size() != static_cast<std::size_t>(run.inputs.cols()))
    throw DimensionMismatch("trajectory names do not match the run");
  std::string out = "t";
  for (const auto& n : state_names) out += ",ref_" + n;
  for (const auto& n : state_names) out += ",state_" + n;
  for (const auto& n : input_names) out += "," + n;
  out += ",solve_ms\n";
  for (Index k = 0; k < run.states.rows(); ++k) {
    append_number(out, k * dt);
    for (Index c = 0; c < run.refs.cols(); ++c) {
      out += ',';
      append_number(out, run.refs(k, c));
    }
    for (Index c = 0; c < run.states.cols(); ++c) {
      out += ',';
      append_number(out, run.states(k, c));
    }
    for (Index c = 0; c < run.inputs.cols(); ++c) {
      out += ',';
      append_number(out, run.inputs(k, c));
    }
    out += ',';
    append_number(out, run.steps[static_cast<std::size_t>(k)].solve_ms);
    out += '\n';
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

Scalar parse_cell(const std::string& cell, long line_no) {
  try {
    std::size_t used = 0;
    const Scalar v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad numeric cell '" + cell + "'", line_no);
  }
}

}  // namespace

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trajectory file", 1);
  const auto header = split_line(line);
  if (header.size() < 4 || header.front() != "t" ||
      header.back() != "solve_ms")
    throw ParseError("trajectory header must run t,...,solve_ms", 1);

  Index n_ref = 0, n_state = 0;
  for (std::size_t c = 1; c < header.size() - 1; ++c) {
    if (header[c].rfind("ref_", 0) == 0)
      ++n_ref;
    else if (header[c].rfind("state_", 0) == 0)
      ++n_state;
  }
  if (n_ref == 0 || n_ref != n_state)
    throw ParseError("trajectory needs matching ref_/state_ columns", 1);
  const Index n_input =
      static_cast<Index>(header.size()) - 2 - n_ref - n_state;
  if (n_input < 1) throw ParseError("trajectory has no input columns", 1);

  std::vector<Scalar> flat;
  long rows = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("row width differs from header", line_no);
    for (const auto& cell : cells) flat.push_back(parse_cell(cell, line_no));
    ++rows;
  }
  if (rows == 0) throw ParseError("trajectory has no data rows", 2);

  Trajectory tr;
  tr.t = Vec(rows);
  tr.refs = Mat(rows, n_ref);
  tr.states = Mat(rows, n_state);
  tr.inputs = Mat(rows, n_input);
  tr.solve_ms = Vec(rows);
  const Index width = static_cast<Index>(header.size());
  for (long r = 0; r < rows; ++r) {
    const Scalar* row = flat.data() + r * width;
    tr.t[r] = row[0];
    for (Index c = 0; c < n_ref; ++c) tr.refs(r, c) = row[1 + c];
    for (Index c = 0; c < n_state; ++c)
      tr.states(r, c) = row[1 + n_ref + c];
    for (Index c = 0; c < n_input; ++c)
      tr.inputs(r, c) = row[1 + n_ref + n_state + c];
    tr.solve_ms[r] = row[width - 1];
  }
  return tr;
}

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path) {
  std::string out = "H,controller,r2,median_ms,p95_ms\n";
  for (const auto& row : rows) {
    out += std::to_string(row.horizon) + ',' + row.controller + ',';
    append_number(out, row.r2);
    out += ',';
    append_number(out, row.median_ms);
    out += ',';
    append_number(out, row.p95_ms);
    out += '\n';
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << out;
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "H,controller,r2,median_ms,p95_ms")
    throw ParseError("bad sweep header", 1);
  std::vector<SweepRow> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 5) throw ParseError("sweep row needs 5 cells", line_no);
    SweepRow row;
    row.horizon = static_cast<long>(parse_cell(cells[0], line_no));
    row.controller = cells[1];
    row.r2 = parse_cell(cells[2], line_no);
    row.median_ms = parse_cell(cells[3], line_no);
    row.p95_ms = parse_cell(cells[4], line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const Config& config, std::uint64_t seed,
                    const std::vector<std::pair<std::string, double>>& timings,
                    const std::string& path) {
  nlohmann::ordered_json j;
  for (const auto& [key, value] : config.entries()) j["config"][key] = value;
  j["seed"] = seed;
  j["versions"]["toolkit"] = "0.1.0";
  j["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                           std::to_string(EIGEN_MAJOR_VERSION) + "." +
                           std::to_string(EIGEN_MINOR_VERSION);
  for (const auto& [phase, seconds] : timings) j["timings_s"][phase] = seconds;
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

PlantParams load_plant_params(const Config& config) {
  PlantParams p;
  p.mass = config.get_scalar("plant.mass", p.mass);
  p.arm = config.get_scalar("plant.arm", p.arm);
  p.inertia.x() = config.get_scalar("plant.inertia_x", p.inertia.x());
  p.inertia.y() = config.get_scalar("plant.inertia_y", p.inertia.y());
  p.inertia.z() = config.get_scalar("plant.inertia_z", p.inertia.z());
  p.k_f = config.get_scalar("plant.k_f", p.k_f);
  p.k_m = config.get_scalar("plant.k_m", p.k_m);
  p.gravity = config.get_scalar("plant.gravity", p.gravity);
  p.u_min = config.get_scalar("plant.u_min", p.u_min);
  p.u_max = config.get_scalar("plant.u_max", p.u_max);
  p.validate();
  return p;
}

namespace {

Eigen::Vector3d get_vec3(const Config& config, const std::string& key,
                         const Eigen::Vector3d& fallback) {
  if (!config.has(key)) return fallback;
  const auto v = config.get_scalars(key);
  if (v.size() != 3) throw Error("config key " + key + " needs 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace

ExcitationConfig load_excitation_config(const Config& config) {
  ExcitationConfig e;
  e.episodes = config.get_int("excitation.episodes", e.episodes);
  e.duration = config.get_scalar("excitation.duration", e.duration);
  e.dt = config.get_scalar("excitation.dt", e.dt);
  e.center = get_vec3(config, "excitation.center", e.center);
  e.box = get_vec3(config, "excitation.box", e.box);
  e.hold_min = config.get_scalar("excitation.hold_min", e.hold_min);
  e.hold_max = config.get_scalar("excitation.hold_max", e.hold_max);
  e.yaw_range = config.get_scalar("excitation.yaw_range", e.yaw_range);
  e.sinusoid_fraction =
      config.get_scalar("excitation.sinusoid_fraction", e.sinusoid_fraction);
  e.freq_min = config.get_scalar("excitation.freq_min", e.freq_min);
  e.freq_max = config.get_scalar("excitation.freq_max", e.freq_max);
  e.perturbation = config.get_scalar("excitation.perturbation", e.perturbation);
  e.attempt_cap = config.get_int("excitation.attempt_cap", e.attempt_cap);
  e.gains.kp_pos = config.get_scalar("excitation.kp_pos", e.gains.kp_pos);
  e.gains.kd_pos = config.get_scalar("excitation.kd_pos", e.gains.kd_pos);
  e.gains.kp_att = config.get_scalar("excitation.kp_att", e.gains.kp_att);
  e.gains.kd_att = config.get_scalar("excitation.kd_att", e.gains.kd_att);
  e.gains.kp_yaw = config.get_scalar("excitation.kp_yaw", e.gains.kp_yaw);
  e.gains.kd_yaw = config.get_scalar("excitation.kd_yaw", e.gains.kd_yaw);
  return e;
}

TrainSettings load_train_settings(const Config& config) {
  TrainSettings t;
  t.epochs = config.get_int("train.epochs", t.epochs);
  t.batch_size = config.get_int("train.batch_size", t.batch_size);
  t.lr = config.get_scalar("train.lr", t.lr);
  t.weights.recon = config.get_scalar("train.lambda_recon", t.weights.recon);
  t.weights.linear = config.get_scalar("train.lambda_linear", t.weights.linear);
  t.weights.stability =
      config.get_scalar("train.lambda_stability", t.weights.stability);
  t.weights.l2_reg = config.get_scalar("train.lambda_l2", t.weights.l2_reg);
  t.seed = static_cast<std::uint64_t>(config.get_int("seed", 0));
  return t;
}

Vec state_weights(const Config& config, Index n_x) {
  Vec w = Vec::Ones(n_x);
  if (n_x == kStateDim) {
    const Scalar wv = config.get_scalar("mpc.w_velocity", 1.0);
    const Scalar wa = config.get_scalar("mpc.w_attitude", 1.0);
    const Scalar ww = config.get_scalar("mpc.w_rates", 1.0);
    w.segment(3, 3).setConstant(wv);
    w.segment(6, 2).setConstant(wa);
    w.segment(9, 3).setConstant(ww);
  }
  return config.get_scalar("mpc.q_scale", 1.0) * w;
}

Mat latent_weight_matrix(const KoopmanModel& model, const Vec& x_ref,
                         const Vec& w_state) {
  if (w_state.size() != model.n_x)
    throw DimensionMismatch("latent_weight_matrix: weight size");
  if (w_state.minCoeff() < 0)
    throw NotPsd("latent_weight_matrix: negative channel weight");
  const Vec z = encode(model, x_ref);
  const Mat c = model.decoder.jacobian(z.transpose());
  const Mat q = c.transpose() * w_state.asDiagonal() * c;
  return ((q + q.transpose()) / 2).eval();
}

MpcConfig load_mpc_config(const Config& config, const KoopmanModel& model) {
  MpcConfig m;
  m.horizon = config.get_int("mpc.horizon", m.horizon);
  const Vec mid = (model.normalizer.state_min + model.normalizer.state_max) / 2;
  m.Q = latent_weight_matrix(model, mid, state_weights(config, model.n_x));
  m.R = config.get_scalar("mpc.r_scale", 0.1) *
        Mat::Identity(model.n_u, model.n_u);
  m.u_min = Vec::Constant(model.n_u, -1);
  m.u_max = Vec::Constant(model.n_u, 1);
  m.tol = config.get_scalar("mpc.tol", m.tol);
  m.max_iterations = config.get_int("mpc.max_iterations", m.max_iterations);
  return m;
}

NmpcConfig load_nmpc_config(const Config& config,
                            const Normalizer& normalizer) {
  NmpcConfig n = make_nmpc_config(
      normalizer, config.get_int("mpc.horizon", 25), 1.0,
      config.get_scalar("mpc.r_scale", 0.1));
  n.Q = state_weights(config, n.Q.rows()).asDiagonal() * n.Q;
  n.tol = config.get_scalar("nmpc.tol", n.tol);
  n.max_outer = config.get_int("nmpc.max_outer", n.max_outer);
  n.max_inner = config.get_int("nmpc.max_inner", n.max_inner);
  return n;
}

StepScheduleConfig load_step_schedule_config(const Config& config) {
  StepScheduleConfig s;
  s.dt = config.get_scalar("stabilize.dt", s.dt);
  s.settle = config.get_scalar("stabilize.settle", s.settle);
  s.hold = config.get_scalar("stabilize.hold", s.hold);
  s.tail = config.get_scalar("stabilize.tail", s.tail);
  s.start = get_vec3(config, "stabilize.start", s.start);
  s.step_x = config.get_scalar("stabilize.step_x", s.step_x);
  s.step_y = config.get_scalar("stabilize.step_y", s.step_y);
  s.step_z = config.get_scalar("stabilize.step_z", s.step_z);
  s.step_roll = config.get_scalar("stabilize.step_roll", s.step_roll);
  return s;
}

LissajousConfig load_lissajous_config(const Config& config) {
  LissajousConfig l;
  l.duration = config.get_scalar("track.duration", l.duration);
  l.dt = config.get_scalar("track.dt", l.dt);
  l.center = get_vec3(config, "track.center", l.center);
  l.amp = get_vec3(config, "track.amp", l.amp);
  l.freq = get_vec3(config, "track.freq", l.freq);
  l.phase = get_vec3(config, "track.phase", l.phase);
  l.yaw_amp = config.get_scalar("track.yaw_amp", l.yaw_amp);
  l.yaw_freq = config.get_scalar("track.yaw_freq", l.yaw_freq);
  l.ramp_tau = config.get_scalar("track.ramp_tau", l.ramp_tau);
  l.gravity = config.get_scalar("plant.gravity", l.gravity);
  return l;
}

}  // namespace dkmpc
