#pragma once

#include <cstdint>
#include <vector>

#include "dkmpc/dataset.hpp"
#include "dkmpc/types.hpp"

namespace dkmpc {

// Rigid-body quadrotor state. World frame is z-up, body frame x-forward
// y-left z-up, attitude as Z-Y-X Euler angles (roll about body x, pitch
// about body y, yaw about world z). The flat layout used everywhere else is
// (x, y, z, vx, vy, vz, roll, pitch, yaw, wx, wy, wz).
struct PlantState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();   // m, world
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();   // m/s, world
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();      // rad, (roll, pitch, yaw)
  Eigen::Vector3d rates = Eigen::Vector3d::Zero();      // rad/s, body

  Vec to_vector() const;
  static PlantState from_vector(const Vec& x);

  // All entries finite and pitch clear of the Euler singularity.
  void validate() const;
};

constexpr Index kStateDim = 12;
constexpr Index kInputDim = 4;

// Pitch magnitude at which the Euler kinematics are declared singular.
constexpr Scalar kPitchGuard = 1.5697963267948966;  // pi/2 - 1e-3

struct PlantParams {
  Scalar mass = 1.6;                                   // kg
  Scalar arm = 0.425;                                  // m, center to rotor
  Eigen::Vector3d inertia{0.05, 0.05, 0.09};           // kg m^2, diagonal
  Scalar k_f = 15.696;                                 // N per unit command^2
  Scalar k_m = 0.25;                                   // N m per unit command^2
  Scalar gravity = 9.81;                               // m/s^2
  Scalar u_min = 0.0;                                  // rotor command range
  Scalar u_max = 1.0;

  // All physical constants strictly positive, command range ordered.
  void validate() const;
};

// Command that balances gravity when applied to all four rotors.
Scalar hover_input(const PlantParams& params);

// State derivative of the rigid body under four rotor commands. Commands
// outside the rotor range are clamped first; `clamped` reports whether any
// were. Rotors sit in an X configuration: 0 front-right, 1 rear-left,
// 2 front-left, 3 rear-right, with the 0/1 diagonal producing positive yaw
// torque. Throws EulerSingularity when pitch reaches the guard.
Vec quad_dynamics(const PlantParams& params, const Vec& x, const Vec& u,
                  bool* clamped = nullptr);

// Jacobians of quad_dynamics with respect to state and (clamped) input.
void quad_dynamics_jacobians(const PlantParams& params, const Vec& x,
                             const Vec& u, Mat& fx, Mat& fu);

// Classical fourth-order Runge-Kutta step with the input held constant
// across the interval.
Vec step_rk4(const PlantParams& params, const Vec& x, const Vec& u, Scalar dt);

// Same step, also returning the sensitivities of the next state via the
// chain rule through all four stages.
Vec step_rk4_jacobians(const PlantParams& params, const Vec& x, const Vec& u,
                       Scalar dt, Mat& a_mat, Mat& b_mat);

// Cascade gains for the excitation autopilot: an outer position loop
// commanding accelerations, converted to attitude targets and a thrust, and
// an inner attitude loop commanding torques.
struct PdGains {
  Scalar kp_pos = 2.0;
  Scalar kd_pos = 2.8;
  Scalar kp_att = 40.0;
  Scalar kd_att = 8.0;
  Scalar kp_yaw = 10.0;
  Scalar kd_yaw = 3.0;
};

// One autopilot evaluation: rotor commands that steer toward the position,
// velocity, and heading targets from state x.
Vec pd_control(const PlantParams& params, const PdGains& gains, const Vec& x,
               const Eigen::Vector3d& p_ref, const Eigen::Vector3d& v_ref,
               Scalar yaw_ref);

struct ExcitationConfig {
  long episodes = 30;
  Scalar duration = 7.0;        // s per episode
  Scalar dt = 0.01;             // s
  Eigen::Vector3d center{0.0, 0.0, 1.6};   // m, middle of the maneuver box
  Eigen::Vector3d box{1.2, 1.2, 0.8};      // m, half extents around center
  Scalar hold_min = 1.5;        // s, waypoint dwell range
  Scalar hold_max = 3.0;
  Scalar yaw_range = 0.6;       // rad, heading targets in [-range, range]
  Scalar sinusoid_fraction = 0.5;  // share of episodes flying smooth orbits
  Scalar freq_min = 0.08;       // Hz, sinusoid frequency range
  Scalar freq_max = 0.30;
  Scalar perturbation = 0.005;  // std of the per-rotor command noise
  long attempt_cap = 600;       // total simulation attempts before giving up
  PdGains gains;
};

// Canonical column names matching the state and input layout.
const std::vector<std::string>& plant_state_names();
const std::vector<std::string>& plant_input_names();

// Simulated flight campaign: each episode tracks either randomized
// waypoints or a randomized sinusoid under the PD autopilot, with smoothed
// per-rotor command noise for excitation. Episodes that leave the safe
// envelope are discarded and redrawn, so every returned record respects the
// rotor limits and the pitch guard. Fixed seed, fixed output.
std::vector<FlightRecord> generate_flights(const PlantParams& params,
                                           const ExcitationConfig& cfg,
                                           std::uint64_t seed);

}  // namespace dkmpc
