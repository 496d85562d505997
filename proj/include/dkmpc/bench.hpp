#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dkmpc/config.hpp"
#include "dkmpc/dataset.hpp"
#include "dkmpc/koopman.hpp"
#include "dkmpc/mpc.hpp"
#include "dkmpc/nmpc.hpp"
#include "dkmpc/plant.hpp"
#include "dkmpc/types.hpp"

namespace dkmpc {

// Coefficient of determination, 1 - SS_res / SS_tot about the truth mean.
// Negative values mean the prediction is worse than the mean predictor.
Scalar r_squared(const Vec& truth, const Vec& pred);

// Per-column scores for equally shaped series.
Vec r_squared_columns(const Mat& truth, const Mat& pred);

// The four channels reported everywhere: x, y, z, roll.
extern const std::array<Index, 4> kReportChannels;
extern const std::array<const char*, 4> kReportChannelNames;

struct Metrics {
  Vec r2;                 // per report channel; NaN where the truth is constant
  Vec mse;                // per report channel
  Scalar r2_mean = 0;     // mean over the finite entries
  Scalar median_ms = 0;
  Scalar p95_ms = 0;
  Scalar saturation_rate = 0;  // saturated entries over all solved sequences
};

std::string metrics_to_json(const Metrics& metrics);
void save_metrics(const Metrics& metrics, const std::string& path);

// Piecewise-constant setpoint sequence: hold the start, then step x, y, z,
// and roll one at a time, then settle back to a consistent hover so the
// closing stretch is a true equilibrium.
struct StepScheduleConfig {
  Scalar dt = 0.01;
  Scalar settle = 1.5;   // s at the start point
  Scalar hold = 2.0;     // s per step segment
  Scalar tail = 1.5;     // s of consistent hover at the end
  Eigen::Vector3d start{0.0, 0.0, 1.6};
  Scalar step_x = 0.8, step_y = 0.8, step_z = 0.6;  // m
  Scalar step_roll = 0.15;                          // rad
  Scalar duration() const { return settle + 4 * hold + tail; }
};

Mat step_schedule(const StepScheduleConfig& cfg);

// Smooth three-axis Lissajous figure with a slow heading sweep. A ramp
// envelope grows the amplitude from zero so the path leaves the hover start
// without a jump; attitude references come from the small-angle force
// balance and velocities from differentiating the path.
struct LissajousConfig {
  Scalar duration = 10.0;
  Scalar dt = 0.01;
  Eigen::Vector3d center{0.0, 0.0, 1.6};
  Eigen::Vector3d amp{0.8, 0.8, 0.3};      // m
  Eigen::Vector3d freq{0.20, 0.25, 0.15};  // Hz
  Eigen::Vector3d phase{0.0, 1.5707963267948966, 0.0};
  Scalar yaw_amp = 0.3;                    // rad
  Scalar yaw_freq = 0.05;                  // Hz
  Scalar ramp_tau = 1.5;                   // s
  Scalar gravity = 9.81;
};

Mat lissajous_reference(const LissajousConfig& cfg);

// Any receding-horizon controller viewed as a function of the current state
// and the upcoming reference rows.
using ControlFn =
    std::function<Vec(const Vec& x, const Mat& ref_window, StepDiagnostics*)>;

ControlFn as_control_fn(DkMpcController& controller);
ControlFn as_control_fn(NmpcController& controller);

struct RunResult {
  Mat refs;      // rows actually flown
  Mat states;
  Mat inputs;
  std::vector<StepDiagnostics> steps;
  bool aborted = false;
};

// Alternates controller and plant strictly at the sample rate: at every row
// the controller sees the reference window starting there, its input is
// applied for one step. Aborting on a plant guard keeps the partial logs.
RunResult run_closed_loop(const PlantParams& params, const ControlFn& control,
                          const Mat& refs, const Vec& x0, Scalar dt,
                          Index horizon);

// Tracking metrics over the report channels plus solve-time statistics with
// the first `warmup` steps excluded; `sequence_entries` is the solved input
// sequence length used to turn saturation counts into a rate.
Metrics compute_run_metrics(const RunResult& run, long warmup,
                            Index sequence_entries);

// Decoded open-loop rollouts over each record's held-out tail: encode the
// first test state, roll the latent model forward `steps` inputs, and score
// the decoded prediction against the recorded truth, pooled per channel.
struct OpenLoopEval {
  Vec r2;   // per report channel
  Vec mse;
  long windows = 0;
};

OpenLoopEval eval_open_loop(const KoopmanModel& model,
                            const std::vector<FlightRecord>& records,
                            const std::array<Scalar, 3>& fractions,
                            Index steps);

// trajectory.csv: `t,ref_*,state_*,u_*,solve_ms` with 17 significant
// digits, readable back by read_trajectory_csv.
struct Trajectory {
  Vec t;
  Mat refs, states, inputs;
  Vec solve_ms;
};

void write_trajectory_csv(const RunResult& run, Scalar dt,
                          const std::vector<std::string>& state_names,
                          const std::vector<std::string>& input_names,
                          const std::string& path);
Trajectory read_trajectory_csv(const std::string& path);

// sweep.csv: `H,controller,r2,median_ms,p95_ms`, one row per sweep cell.
struct SweepRow {
  long horizon = 0;
  std::string controller;
  Scalar r2 = 0;
  Scalar median_ms = 0;
  Scalar p95_ms = 0;
};

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path);
std::vector<SweepRow> read_sweep_csv(const std::string& path);

// Run provenance: config snapshot, seed, library versions, phase timings.
void write_manifest(const Config& config, std::uint64_t seed,
                    const std::vector<std::pair<std::string, double>>& timings,
                    const std::string& path);

// Per-channel state weights in normalized units: position and yaw at
// q_scale, velocity / roll-pitch / body-rate groups scaled by their
// mpc.w_* keys. Both controllers share this vector so their costs measure
// the same error geometry.
Vec state_weights(const Config& config, Index n_x);

// Pulls per-channel state weights back into the latent space through the
// decoder linearization at the encoded reference point: Q = C' diag(w) C
// with C the decoder Jacobian, so latent error is priced by its decoded
// normalized-state consequence.
Mat latent_weight_matrix(const KoopmanModel& model, const Vec& x_ref,
                         const Vec& w_state);

// Typed views over the flat key-value config, prefix per module.
PlantParams load_plant_params(const Config& config);
ExcitationConfig load_excitation_config(const Config& config);
TrainSettings load_train_settings(const Config& config);
MpcConfig load_mpc_config(const Config& config, const KoopmanModel& model);
NmpcConfig load_nmpc_config(const Config& config, const Normalizer& normalizer);
StepScheduleConfig load_step_schedule_config(const Config& config);
LissajousConfig load_lissajous_config(const Config& config);

}  // namespace dkmpc
