#include "dkmpc/plant.hpp"

#include <cmath>
#include <random>

#include "dkmpc/errors.hpp"

namespace dkmpc {

namespace {

// Thrust direction in the world frame, the body z axis of Rz(psi) Ry(theta)
// Rx(phi).
Eigen::Vector3d thrust_axis(Scalar phi, Scalar theta, Scalar psi) {
  const Scalar cphi = std::cos(phi), sphi = std::sin(phi);
  const Scalar cth = std::cos(theta), sth = std::sin(theta);
  const Scalar cpsi = std::cos(psi), spsi = std::sin(psi);
  return {cpsi * sth * cphi + spsi * sphi, spsi * sth * cphi - cpsi * sphi,
          cth * cphi};
}

// Maps body rates to Euler angle rates.
Eigen::Matrix3d euler_kinematics(Scalar phi, Scalar theta) {
  const Scalar cphi = std::cos(phi), sphi = std::sin(phi);
  const Scalar cth = std::cos(theta), tth = std::tan(theta);
  Eigen::Matrix3d e;
  e << 1, sphi * tth, cphi * tth,
       0, cphi, -sphi,
       0, sphi / cth, cphi / cth;
  return e;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0, -a.z(), a.y(),
       a.z(), 0, -a.x(),
       -a.y(), a.x(), 0;
  return s;
}

// Signs of each rotor's contribution to (roll, pitch, yaw) torque in the
// X configuration, rotor order front-right, rear-left, front-left,
// rear-right. Left rotors roll positive, rear rotors pitch positive, the
// front-right/rear-left diagonal yaws positive.
constexpr Scalar kRollSign[4] = {-1, 1, 1, -1};
constexpr Scalar kPitchSign[4] = {-1, 1, -1, 1};
constexpr Scalar kYawSign[4] = {1, 1, -1, -1};

Vec clamp_commands(const PlantParams& params, const Vec& u, bool* clamped) {
  Vec out = u;
  bool hit = false;
  for (Index i = 0; i < kInputDim; ++i) {
    if (out[i] < params.u_min) {
      out[i] = params.u_min;
      hit = true;
    } else if (out[i] > params.u_max) {
      out[i] = params.u_max;
      hit = true;
    }
  }
  if (clamped != nullptr) *clamped = hit;
  return out;
}

void check_shapes(const Vec& x, const Vec& u) {
  if (x.size() != kStateDim)
    throw DimensionMismatch("plant state must have 12 entries");
  if (u.size() != kInputDim)
    throw DimensionMismatch("plant input must have 4 entries");
}

// Total thrust and body torque produced by clamped rotor commands.
void rotor_wrench(const PlantParams& params, const Vec& u, Scalar& thrust,
                  Eigen::Vector3d& torque) {
  const Scalar lever = params.arm / std::sqrt(Scalar(2));
  thrust = 0;
  torque.setZero();
  for (Index i = 0; i < kInputDim; ++i) {
    const Scalar force = params.k_f * u[i] * u[i];
    thrust += force;
    torque.x() += kRollSign[i] * lever * force;
    torque.y() += kPitchSign[i] * lever * force;
    torque.z() += kYawSign[i] * params.k_m * u[i] * u[i];
  }
}

// Rotor commands realizing a requested thrust and torque. The mixing matrix
// in squared-command space has orthogonal rows, so its inverse is its
// transpose over four; negative squares are floored at zero before the
// root.
Vec mix_inverse(const PlantParams& params, Scalar thrust,
                const Eigen::Vector3d& torque) {
  const Scalar lever = params.arm / std::sqrt(Scalar(2));
  const Scalar f = thrust / params.k_f;
  const Scalar r = torque.x() / (lever * params.k_f);
  const Scalar p = torque.y() / (lever * params.k_f);
  const Scalar y = torque.z() / params.k_m;
  Vec u(kInputDim);
  for (Index i = 0; i < kInputDim; ++i) {
    const Scalar sq =
        (f + kRollSign[i] * r + kPitchSign[i] * p + kYawSign[i] * y) / 4;
    u[i] = std::sqrt(std::max(sq, Scalar(0)));
  }
  return u;
}

}  // namespace

Vec PlantState::to_vector() const {
  Vec x(kStateDim);
  x << position, velocity, euler, rates;
  return x;
}

PlantState PlantState::from_vector(const Vec& x) {
  if (x.size() != kStateDim)
    throw DimensionMismatch("plant state must have 12 entries");
  PlantState s;
  s.position = x.segment<3>(0);
  s.velocity = x.segment<3>(3);
  s.euler = x.segment<3>(6);
  s.rates = x.segment<3>(9);
  return s;
}

void PlantState::validate() const {
  if (!to_vector().allFinite()) throw NonFinite("plant state is not finite");
  if (std::abs(euler.y()) >= kPitchGuard)
    throw EulerSingularity("pitch magnitude too close to pi/2");
}

void PlantParams::validate() const {
  if (!(mass > 0 && arm > 0 && k_f > 0 && k_m > 0 && gravity > 0))
    throw Error("plant parameters must be strictly positive");
  if (!(inertia.minCoeff() > 0))
    throw Error("inertia diagonal must be strictly positive");
  if (!(u_min >= 0 && u_max > u_min))
    throw Error("rotor command range must satisfy 0 <= u_min < u_max");
}

Scalar hover_input(const PlantParams& params) {
  return std::sqrt(params.mass * params.gravity / (4 * params.k_f));
}

Vec quad_dynamics(const PlantParams& params, const Vec& x, const Vec& u,
                  bool* clamped) {
  check_shapes(x, u);
  const Scalar phi = x[6], theta = x[7], psi = x[8];
  if (std::abs(theta) >= kPitchGuard)
    throw EulerSingularity("pitch magnitude too close to pi/2");
  const Vec uc = clamp_commands(params, u, clamped);

  Scalar thrust;
  Eigen::Vector3d torque;
  rotor_wrench(params, uc, thrust, torque);

  const Eigen::Vector3d omega = x.segment<3>(9);
  const Eigen::Vector3d j_omega = params.inertia.cwiseProduct(omega);

  Vec dx(kStateDim);
  dx.segment<3>(0) = x.segment<3>(3);
  dx.segment<3>(3) = (thrust / params.mass) * thrust_axis(phi, theta, psi);
  dx[5] -= params.gravity;
  dx.segment<3>(6) = euler_kinematics(phi, theta) * omega;
  dx.segment<3>(9) =
      (torque - omega.cross(j_omega)).cwiseQuotient(params.inertia);
  return dx;
}

void quad_dynamics_jacobians(const PlantParams& params, const Vec& x,
                             const Vec& u, Mat& fx, Mat& fu) {
  check_shapes(x, u);
  const Scalar phi = x[6], theta = x[7], psi = x[8];
  if (std::abs(theta) >= kPitchGuard)
    throw EulerSingularity("pitch magnitude too close to pi/2");
  const Vec uc = clamp_commands(params, u, nullptr);

  const Scalar cphi = std::cos(phi), sphi = std::sin(phi);
  const Scalar cth = std::cos(theta), sth = std::sin(theta);
  const Scalar tth = std::tan(theta);
  const Scalar cpsi = std::cos(psi), spsi = std::sin(psi);

  Scalar thrust;
  Eigen::Vector3d torque;
  rotor_wrench(params, uc, thrust, torque);
  const Eigen::Vector3d omega = x.segment<3>(9);

  fx = Mat::Zero(kStateDim, kStateDim);
  fu = Mat::Zero(kStateDim, kInputDim);

  fx.block<3, 3>(0, 3).setIdentity();

  // Velocity rows: thrust direction sensitivities to the three angles.
  Eigen::Matrix3d dt_de;
  dt_de.col(0) << -cpsi * sth * sphi + spsi * cphi,
      -spsi * sth * sphi - cpsi * cphi, -cth * sphi;
  dt_de.col(1) << cpsi * cth * cphi, spsi * cth * cphi, -sth * cphi;
  dt_de.col(2) << -spsi * sth * cphi + cpsi * sphi,
      cpsi * sth * cphi + spsi * sphi, 0;
  fx.block<3, 3>(3, 6) = (thrust / params.mass) * dt_de;

  const Eigen::Vector3d axis = thrust_axis(phi, theta, psi);
  for (Index i = 0; i < kInputDim; ++i)
    fu.block<3, 1>(3, i) = (2 * params.k_f * uc[i] / params.mass) * axis;

  // Euler rows: kinematics matrix and its angle sensitivities.
  const Eigen::Matrix3d e_mat = euler_kinematics(phi, theta);
  Eigen::Matrix3d de_dphi = Eigen::Matrix3d::Zero();
  de_dphi(0, 1) = cphi * tth;
  de_dphi(0, 2) = -sphi * tth;
  de_dphi(1, 1) = -sphi;
  de_dphi(1, 2) = -cphi;
  de_dphi(2, 1) = cphi / cth;
  de_dphi(2, 2) = -sphi / cth;
  Eigen::Matrix3d de_dth = Eigen::Matrix3d::Zero();
  const Scalar sec2 = 1 / (cth * cth);
  de_dth(0, 1) = sphi * sec2;
  de_dth(0, 2) = cphi * sec2;
  de_dth(2, 1) = sphi * tth / cth;
  de_dth(2, 2) = cphi * tth / cth;
  fx.block<3, 1>(6, 6) = de_dphi * omega;
  fx.block<3, 1>(6, 7) = de_dth * omega;
  fx.block<3, 3>(6, 9) = e_mat;

  // Rate rows: gyroscopic coupling and the torque map.
  const Eigen::Vector3d j_omega = params.inertia.cwiseProduct(omega);
  const Eigen::Matrix3d gyro =
      skew(j_omega) - skew(omega) * params.inertia.asDiagonal();
  fx.block<3, 3>(9, 9) = params.inertia.cwiseInverse().asDiagonal() * gyro;

  const Scalar lever = params.arm / std::sqrt(Scalar(2));
  for (Index i = 0; i < kInputDim; ++i) {
    Eigen::Vector3d dtau;
    dtau << kRollSign[i] * lever * params.k_f, kPitchSign[i] * lever * params.k_f,
        kYawSign[i] * params.k_m;
    fu.block<3, 1>(9, i) = (2 * uc[i]) * dtau.cwiseQuotient(params.inertia);
  }
}

Vec step_rk4(const PlantParams& params, const Vec& x, const Vec& u,
             Scalar dt) {
  if (!(dt > 0)) throw Error("integration step must be positive");
  const Vec k1 = quad_dynamics(params, x, u);
  const Vec k2 = quad_dynamics(params, Vec(x + (dt / 2) * k1), u);
  const Vec k3 = quad_dynamics(params, Vec(x + (dt / 2) * k2), u);
  const Vec k4 = quad_dynamics(params, Vec(x + dt * k3), u);
  return x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

Vec step_rk4_jacobians(const PlantParams& params, const Vec& x, const Vec& u,
                       Scalar dt, Mat& a_mat, Mat& b_mat) {
  if (!(dt > 0)) throw Error("integration step must be positive");
  const Mat eye = Mat::Identity(kStateDim, kStateDim);

  Mat fx1, fu1, fx2, fu2, fx3, fu3, fx4, fu4;
  const Vec k1 = quad_dynamics(params, x, u);
  quad_dynamics_jacobians(params, x, u, fx1, fu1);

  const Vec x2 = x + (dt / 2) * k1;
  const Vec k2 = quad_dynamics(params, x2, u);
  quad_dynamics_jacobians(params, x2, u, fx2, fu2);
  const Mat dk2_dx = fx2 * (eye + (dt / 2) * fx1);
  const Mat dk2_du = fx2 * ((dt / 2) * fu1) + fu2;

  const Vec x3 = x + (dt / 2) * k2;
  const Vec k3 = quad_dynamics(params, x3, u);
  quad_dynamics_jacobians(params, x3, u, fx3, fu3);
  const Mat dk3_dx = fx3 * (eye + (dt / 2) * dk2_dx);
  const Mat dk3_du = fx3 * ((dt / 2) * dk2_du) + fu3;

  const Vec x4 = x + dt * k3;
  const Vec k4 = quad_dynamics(params, x4, u);
  quad_dynamics_jacobians(params, x4, u, fx4, fu4);
  const Mat dk4_dx = fx4 * (eye + dt * dk3_dx);
  const Mat dk4_du = fx4 * (dt * dk3_du) + fu4;

  a_mat = eye + (dt / 6) * (fx1 + 2 * dk2_dx + 2 * dk3_dx + dk4_dx);
  b_mat = (dt / 6) * (fu1 + 2 * dk2_du + 2 * dk3_du + dk4_du);
  return x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

Vec pd_control(const PlantParams& params, const PdGains& gains, const Vec& x,
               const Eigen::Vector3d& p_ref, const Eigen::Vector3d& v_ref,
               Scalar yaw_ref) {
  check_shapes(x, Vec::Zero(kInputDim));
  const Eigen::Vector3d pos = x.segment<3>(0);
  const Eigen::Vector3d vel = x.segment<3>(3);
  const Scalar phi = x[6], theta = x[7], psi = x[8];
  const Eigen::Vector3d omega = x.segment<3>(9);

  Eigen::Vector3d a_des =
      gains.kp_pos * (p_ref - pos) + gains.kd_pos * (v_ref - vel);
  a_des = a_des.cwiseMax(-4.0).cwiseMin(4.0);

  // The thrust carries weight plus vertical demand through the tilt; the
  // lateral demand maps to attitude targets by the small-angle force
  // balance at the current heading.
  const Scalar tilt = std::max(std::cos(phi) * std::cos(theta), Scalar(0.5));
  const Scalar thrust = params.mass * (params.gravity + a_des.z()) / tilt;
  const Scalar g = params.gravity;
  Scalar phi_ref = (a_des.x() * std::sin(psi) - a_des.y() * std::cos(psi)) / g;
  Scalar theta_ref = (a_des.x() * std::cos(psi) + a_des.y() * std::sin(psi)) / g;
  phi_ref = std::clamp(phi_ref, -0.35, 0.35);
  theta_ref = std::clamp(theta_ref, -0.35, 0.35);

  Eigen::Vector3d torque;
  torque.x() = params.inertia.x() *
               (gains.kp_att * (phi_ref - phi) - gains.kd_att * omega.x());
  torque.y() = params.inertia.y() *
               (gains.kp_att * (theta_ref - theta) - gains.kd_att * omega.y());
  torque.z() = params.inertia.z() * (gains.kp_yaw * std::remainder(yaw_ref - psi,
                                                                   2 * M_PI) -
                                     gains.kd_yaw * omega.z());

  Vec u = mix_inverse(params, std::max(thrust, Scalar(0)), torque);
  return clamp_commands(params, u, nullptr);
}

namespace {

struct Maneuver {
  bool sinusoid = false;
  // Waypoint mode: target positions with dwell times; heading per segment.
  std::vector<Eigen::Vector3d> waypoints;
  std::vector<Scalar> holds;
  std::vector<Scalar> headings;
  // Sinusoid mode: per-axis amplitude, frequency, phase around a center.
  Eigen::Vector3d center, amp, freq, phase;
  Scalar yaw_amp = 0, yaw_freq = 0;

  void sample(Scalar t, Eigen::Vector3d& p_ref, Eigen::Vector3d& v_ref,
              Scalar& yaw_ref) const {
    if (sinusoid) {
      for (int i = 0; i < 3; ++i) {
        const Scalar w = 2 * M_PI * freq[i];
        p_ref[i] = center[i] + amp[i] * std::sin(w * t + phase[i]);
        v_ref[i] = amp[i] * w * std::cos(w * t + phase[i]);
      }
      yaw_ref = yaw_amp * std::sin(2 * M_PI * yaw_freq * t);
      return;
    }
    Scalar elapsed = 0;
    std::size_t seg = 0;
    while (seg + 1 < waypoints.size() && t >= elapsed + holds[seg]) {
      elapsed += holds[seg];
      ++seg;
    }
    p_ref = waypoints[seg];
    v_ref.setZero();
    yaw_ref = headings[seg];
  }
};

Maneuver draw_maneuver(const ExcitationConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> unit(0, 1);
  Maneuver m;
  m.sinusoid = unit(rng) < cfg.sinusoid_fraction;
  if (m.sinusoid) {
    std::uniform_real_distribution<Scalar> phase(0, 2 * M_PI);
    std::uniform_real_distribution<Scalar> freq(cfg.freq_min, cfg.freq_max);
    std::uniform_real_distribution<Scalar> offset(-1, 1);
    // Orbit sizes down to near-hover wobbles, each around its own center
    // inside the box: slow passes and station keeping then occupy every
    // position, instead of the box center coinciding with peak speed.
    for (int i = 0; i < 3; ++i) {
      m.amp[i] = cfg.box[i] * (0.1 + 0.9 * unit(rng));
      m.center[i] =
          cfg.center[i] + (cfg.box[i] - m.amp[i]) * offset(rng);
      m.freq[i] = freq(rng);
      m.phase[i] = phase(rng);
    }
    m.yaw_amp = cfg.yaw_range * unit(rng);
    m.yaw_freq = 0.5 * freq(rng);
    return m;
  }
  std::uniform_real_distribution<Scalar> hold(cfg.hold_min, cfg.hold_max);
  std::uniform_real_distribution<Scalar> offset(-1, 1);
  Scalar covered = 0;
  while (covered < cfg.duration) {
    Eigen::Vector3d p = cfg.center;
    for (int i = 0; i < 3; ++i) p[i] += cfg.box[i] * offset(rng);
    m.waypoints.push_back(p);
    m.headings.push_back(cfg.yaw_range * offset(rng));
    m.holds.push_back(hold(rng));
    covered += m.holds.back();
  }
  return m;
}

}  // namespace

const std::vector<std::string>& plant_state_names() {
  static const std::vector<std::string> names = {
      "x",    "y",     "z",   "vx", "vy", "vz",
      "roll", "pitch", "yaw", "wx", "wy", "wz"};
  return names;
}

const std::vector<std::string>& plant_input_names() {
  static const std::vector<std::string> names = {"u0", "u1", "u2", "u3"};
  return names;
}

std::vector<FlightRecord> generate_flights(const PlantParams& params,
                                           const ExcitationConfig& cfg,
                                           std::uint64_t seed) {
  params.validate();
  if (cfg.episodes < 1 || !(cfg.duration > 0) || !(cfg.dt > 0))
    throw Error("excitation config must request at least one episode");

  const long steps = std::lround(cfg.duration / cfg.dt);
  const Index samples = steps + 1;
  // Command noise is a random telegraph per rotor: levels held for a
  // quarter second or so give the fit a sustained input offset that the
  // position loop cannot have produced, which is what pins down the input
  // map, while the attitude loop keeps the response a small trim shift.
  const Scalar hold_prob = cfg.dt / Scalar(0.25);

  std::vector<FlightRecord> records;
  long attempts = 0;
  for (long episode = 0; episode < cfg.episodes; ++episode) {
    bool accepted = false;
    while (!accepted) {
      if (++attempts > cfg.attempt_cap)
        throw GenerationFailed("episode regeneration attempt cap exhausted");
      std::seed_seq seq{static_cast<std::uint64_t>(seed),
                        static_cast<std::uint64_t>(episode),
                        static_cast<std::uint64_t>(attempts)};
      std::mt19937_64 rng(seq);
      const Maneuver plan = draw_maneuver(cfg, rng);

      Eigen::Vector3d p_ref, v_ref;
      Scalar yaw_ref;
      plan.sample(0, p_ref, v_ref, yaw_ref);

      Vec x = Vec::Zero(kStateDim);
      x.segment<3>(0) = p_ref;
      x.segment<3>(3) = v_ref;
      x[8] = yaw_ref;

      FlightRecord rec;
      rec.dt = cfg.dt;
      rec.t0 = 0;
      rec.state_names = plant_state_names();
      rec.input_names = plant_input_names();
      rec.states = Mat(samples, kStateDim);
      rec.inputs = Mat(samples, kInputDim);

      std::uniform_real_distribution<Scalar> unit(0, 1);
      std::uniform_real_distribution<Scalar> level(-cfg.perturbation,
                                                   cfg.perturbation);
      Vec noise(kInputDim);
      for (Index i = 0; i < kInputDim; ++i) noise[i] = level(rng);
      bool ok = true;
      for (long k = 0; k <= steps; ++k) {
        plan.sample(k * cfg.dt, p_ref, v_ref, yaw_ref);
        Vec u = pd_control(params, cfg.gains, x, p_ref, v_ref, yaw_ref);
        for (Index i = 0; i < kInputDim; ++i) {
          if (unit(rng) < hold_prob) noise[i] = level(rng);
          u[i] = std::clamp(u[i] + noise[i], params.u_min, params.u_max);
        }
        rec.states.row(k) = x.transpose();
        rec.inputs.row(k) = u.transpose();
        if (k == steps) break;
        try {
          x = step_rk4(params, x, u, cfg.dt);
        } catch (const EulerSingularity&) {
          ok = false;
          break;
        }
        if (!x.allFinite() || std::abs(x[7]) >= kPitchGuard ||
            (x.segment<3>(0) - cfg.center).norm() > 8.0) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      rec.validate();
      records.push_back(std::move(rec));
      accepted = true;
    }
  }
  return records;
}

}  // namespace dkmpc
