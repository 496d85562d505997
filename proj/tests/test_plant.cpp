#include <doctest.h>

#include <cmath>
#include <random>

#include "dkmpc/errors.hpp"
#include "dkmpc/nmpc.hpp"
#include "dkmpc/plant.hpp"
#include "oracles.hpp"

using namespace dkmpc;

namespace {

Vec hover_state(Scalar x = 0, Scalar y = 0, Scalar z = 1) {
  Vec s = Vec::Zero(kStateDim);
  s[0] = x;
  s[1] = y;
  s[2] = z;
  return s;
}

Vec random_state(std::mt19937_64& rng, Scalar angle_scale = 0.3) {
  std::normal_distribution<Scalar> dist(0, 1);
  Vec x(kStateDim);
  for (Index i = 0; i < kStateDim; ++i) x[i] = dist(rng);
  x.segment<3>(6) *= angle_scale;   // keep attitude clear of the guard
  x.segment<3>(9) *= 0.5;
  return x;
}

}  // namespace

TEST_CASE("hover commands balance gravity exactly") {
  const PlantParams params;
  params.validate();
  const Scalar uh = hover_input(params);
  CHECK(uh == doctest::Approx(0.5).epsilon(1e-12));

  const Vec dx =
      quad_dynamics(params, hover_state(), Vec::Constant(kInputDim, uh));
  CHECK(dx.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("zero input is free fall") {
  const PlantParams params;
  Vec x = hover_state();
  x.segment<3>(9) << 0, 0, 0;
  const Vec dx = quad_dynamics(params, x, Vec::Zero(kInputDim));
  CHECK(dx.segment<3>(3)[0] == 0);
  CHECK(dx.segment<3>(3)[1] == 0);
  CHECK(dx.segment<3>(3)[2] == doctest::Approx(-params.gravity));
  CHECK(dx.segment<3>(9).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("boosting one diagonal pair produces pure yaw torque") {
  const PlantParams params;
  const Scalar uh = hover_input(params);

  Vec u = Vec::Constant(kInputDim, uh);
  u[0] += 0.1;  // front-right and rear-left spin together
  u[1] += 0.1;
  Vec dx = quad_dynamics(params, hover_state(), u);
  CHECK(std::abs(dx[9]) <= 1e-12);   // no roll
  CHECK(std::abs(dx[10]) <= 1e-12);  // no pitch
  CHECK(dx[11] > 0);

  u = Vec::Constant(kInputDim, uh);
  u[2] += 0.1;  // the other diagonal yaws the other way
  u[3] += 0.1;
  dx = quad_dynamics(params, hover_state(), u);
  CHECK(std::abs(dx[9]) <= 1e-12);
  CHECK(std::abs(dx[10]) <= 1e-12);
  CHECK(dx[11] < 0);
}

TEST_CASE("out-of-range commands are clamped and flagged") {
  const PlantParams params;
  bool clamped = false;
  Vec u(kInputDim);
  u << 1.4, 0.5, -0.2, 0.5;
  const Vec dx_clamped = quad_dynamics(params, hover_state(), u, &clamped);
  CHECK(clamped);

  Vec u_manual(kInputDim);
  u_manual << 1.0, 0.5, 0.0, 0.5;
  bool flag = true;
  const Vec dx_manual =
      quad_dynamics(params, hover_state(), u_manual, &flag);
  CHECK_FALSE(flag);
  CHECK(dx_clamped == dx_manual);
}

TEST_CASE("steep pitch raises the singularity guard") {
  const PlantParams params;
  Vec x = hover_state();
  x[7] = M_PI / 2 - 5e-4;
  CHECK_THROWS_AS(quad_dynamics(params, x, Vec::Constant(kInputDim, 0.5)),
                  EulerSingularity);
  Mat fx, fu;
  CHECK_THROWS_AS(quad_dynamics_jacobians(params, x,
                                          Vec::Constant(kInputDim, 0.5), fx,
                                          fu),
                  EulerSingularity);
}

TEST_CASE("hover is a fixed point of the integrator") {
  const PlantParams params;
  const Vec u = Vec::Constant(kInputDim, hover_input(params));
  Vec x = hover_state(0.3, -0.2, 1.5);
  for (int k = 0; k < 100; ++k) {
    const Vec next = step_rk4(params, x, u, 0.01);
    CHECK((next - x).cwiseAbs().maxCoeff() <= 1e-9);
    x = next;
  }
}

TEST_CASE("free fall from rest follows the ballistic arc") {
  const PlantParams params;
  Vec x = hover_state(0, 0, 5);
  const Vec u = Vec::Zero(kInputDim);
  const Scalar dt = 0.01;
  for (int k = 1; k <= 100; ++k) {
    x = step_rk4(params, x, u, dt);
    const Scalar t = k * dt;
    CHECK(x[2] == doctest::Approx(5 - 0.5 * params.gravity * t * t)
                      .epsilon(1e-6));
    CHECK(x[5] == doctest::Approx(-params.gravity * t).epsilon(1e-6));
  }
}

TEST_CASE("integrator error shrinks at fourth order") {
  const PlantParams params;
  Vec x0 = hover_state();
  x0.segment<3>(3) << 0.3, -0.2, 0.1;
  x0.segment<3>(6) << 0.1, -0.08, 0.2;
  x0.segment<3>(9) << 0.3, 0.2, -0.4;
  Vec u(kInputDim);
  u << 0.52, 0.49, 0.515, 0.505;

  // A very fine reference trajectory stands in for the exact flow.
  const Scalar horizon = 0.2;
  Vec truth = x0;
  for (int k = 0; k < 20000; ++k) truth = step_rk4(params, truth, u, 1e-5);

  std::vector<Scalar> hs = {0.01, 0.005, 0.0025, 0.00125};
  std::vector<Scalar> errs;
  for (const Scalar h : hs) {
    Vec x = x0;
    const long steps = std::lround(horizon / h);
    for (long k = 0; k < steps; ++k) x = step_rk4(params, x, u, h);
    errs.push_back((x - truth).norm());
  }

  // Least-squares slope of log error against log step size.
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const Scalar lx = std::log(hs[i]), ly = std::log(errs[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const Scalar n = static_cast<Scalar>(hs.size());
  const Scalar slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope >= 3.8);
}

TEST_CASE("step sensitivities match finite differences") {
  const PlantParams params;
  std::mt19937_64 rng(17);
  const Scalar dt = 0.01;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = random_state(rng);
    Vec u = Vec::Constant(kInputDim, 0.5);
    std::uniform_real_distribution<Scalar> du(-0.2, 0.2);
    for (Index i = 0; i < kInputDim; ++i) u[i] += du(rng);

    Mat a_mat, b_mat;
    step_rk4_jacobians(params, x, u, dt, a_mat, b_mat);

    const Scalar h = 1e-6;
    Mat a_fd(kStateDim, kStateDim), b_fd(kStateDim, kInputDim);
    for (Index j = 0; j < kStateDim; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      a_fd.col(j) =
          (step_rk4(params, xp, u, dt) - step_rk4(params, xm, u, dt)) / (2 * h);
    }
    for (Index j = 0; j < kInputDim; ++j) {
      Vec up = u, um = u;
      up[j] += h;
      um[j] -= h;
      b_fd.col(j) =
          (step_rk4(params, x, up, dt) - step_rk4(params, x, um, dt)) / (2 * h);
    }
    CHECK((a_mat - a_fd).cwiseAbs().maxCoeff() /
              std::max<Scalar>(1, a_fd.cwiseAbs().maxCoeff()) <=
          1e-5);
    CHECK((b_mat - b_fd).cwiseAbs().maxCoeff() /
              std::max<Scalar>(1, b_fd.cwiseAbs().maxCoeff()) <=
          1e-5);
  }
}

TEST_CASE("the autopilot parks the quadrotor on a waypoint") {
  const PlantParams params;
  const PdGains gains;
  const Eigen::Vector3d target(0.8, -0.5, 1.8);
  Vec x = hover_state(0, 0, 1.2);
  for (int k = 0; k < 500; ++k) {
    const Vec u = pd_control(params, gains, x, target,
                             Eigen::Vector3d::Zero(), 0.3);
    x = step_rk4(params, x, u, 0.01);
  }
  CHECK((x.segment<3>(0) - target).norm() <= 0.05);
  CHECK(std::abs(x[8] - 0.3) <= 0.05);
  CHECK(x.segment<3>(3).norm() <= 0.1);
}

TEST_CASE("flight generation is deterministic in the seed") {
  const PlantParams params;
  ExcitationConfig cfg;
  cfg.episodes = 2;
  cfg.duration = 2.0;
  const auto a = generate_flights(params, cfg, 42);
  const auto b = generate_flights(params, cfg, 42);
  const auto c = generate_flights(params, cfg, 43);
  REQUIRE(a.size() == 2);
  REQUIRE(b.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(a[i].states == b[i].states);
    CHECK(a[i].inputs == b[i].inputs);
  }
  CHECK(a[0].states != c[0].states);
}

TEST_CASE("generated flights respect the safety envelope") {
  const PlantParams params;
  ExcitationConfig cfg;
  cfg.episodes = 4;
  cfg.duration = 3.0;
  const auto records = generate_flights(params, cfg, 7);
  REQUIRE(records.size() == 4);
  for (const auto& rec : records) {
    rec.validate();
    CHECK(rec.dt == 0.01);
    CHECK(rec.states.rows() == 301);
    CHECK(rec.inputs.minCoeff() >= params.u_min);
    CHECK(rec.inputs.maxCoeff() <= params.u_max);
    CHECK(rec.states.col(7).cwiseAbs().maxCoeff() < kPitchGuard);
    CHECK(rec.state_names[6] == "roll");
    CHECK(rec.input_names[0] == "u0");
  }
}

TEST_CASE("the campaign explores the commanded box") {
  const PlantParams params;
  ExcitationConfig cfg;
  cfg.episodes = 8;
  cfg.duration = 6.0;
  const auto records = generate_flights(params, cfg, 11);
  Vec lo = Vec::Constant(3, 1e9), hi = Vec::Constant(3, -1e9);
  for (const auto& rec : records) {
    lo = lo.cwiseMin(rec.states.leftCols(3).colwise().minCoeff().transpose());
    hi = hi.cwiseMax(rec.states.leftCols(3).colwise().maxCoeff().transpose());
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(lo[i] <= cfg.center[i] - 0.5 * cfg.box[i]);
    CHECK(hi[i] >= cfg.center[i] + 0.5 * cfg.box[i]);
  }
}

TEST_CASE("an impossible campaign exhausts its attempt budget") {
  const PlantParams params;
  ExcitationConfig cfg;
  cfg.episodes = 1;
  cfg.duration = 3.0;
  cfg.attempt_cap = 3;
  cfg.perturbation = 3.0;  // command noise that always crashes the episode
  cfg.gains.kp_att = 0;    // with no attitude authority to recover
  cfg.gains.kd_att = 0;
  CHECK_THROWS_AS(generate_flights(params, cfg, 1), GenerationFailed);
}

TEST_CASE("sequential quadratic programming solves a linear plant in one go") {
  std::mt19937_64 rng(23);
  const Index n = 3, m = 2, horizon = 6;
  std::normal_distribution<Scalar> dist(0, 1);
  Mat a_sys(n, n), b_sys(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) a_sys(i, j) = 0.3 * dist(rng);
    for (Index j = 0; j < m; ++j) b_sys(i, j) = 0.5 * dist(rng);
  }
  a_sys += 0.5 * Mat::Identity(n, n);

  NmpcConfig cfg;
  cfg.horizon = horizon;
  cfg.Q = Mat::Identity(n, n);
  cfg.R = 0.1 * Mat::Identity(m, m);
  cfg.u_min = Vec::Constant(m, -1);
  cfg.u_max = Vec::Constant(m, 1);
  cfg.tol = 1e-9;
  // The inner QP must be solved to optimality for the outer loop to
  // terminate after a single Gauss-Newton step.
  cfg.max_inner = 50000;
  NmpcController sqp(make_linear_model(a_sys, b_sys), cfg);

  Vec x0(n);
  x0 << 0.4, -0.2, 0.3;
  Mat ref = Mat::Zero(horizon + 1, n);
  for (Index k = 0; k <= horizon; ++k)
    ref(k, 0) = 0.3 * std::sin(0.3 * static_cast<Scalar>(k));
  const NmpcResult result = sqp.solve_sequence(x0, ref);
  CHECK(result.converged);
  CHECK(result.iterations == 1);

  // The identical quadratic program through the latent-controller path.
  KoopmanModel latent;
  latent.n_x = n;
  latent.n_u = m;
  latent.latent = n;
  latent.normalizer.state_min = Vec::Constant(n, -1);
  latent.normalizer.state_max = Vec::Constant(n, 1);
  latent.normalizer.input_min = Vec::Constant(m, -1);
  latent.normalizer.input_max = Vec::Constant(m, 1);
  latent.encoder = Mlp::matrix(n, n);
  latent.encoder.layer(0).weight.value = Mat::Identity(n, n);
  latent.decoder = Mlp::matrix(n, n);
  latent.decoder.layer(0).weight.value = Mat::Identity(n, n);
  latent.a_net = Mlp::matrix(n, n);
  latent.a_net.layer(0).weight.value = a_sys;
  latent.b_net = Mlp::matrix(n, m);
  latent.b_net.layer(0).weight.value = b_sys;

  MpcConfig lin_cfg;
  lin_cfg.horizon = horizon;
  lin_cfg.Q = cfg.Q;
  lin_cfg.R = cfg.R;
  lin_cfg.u_min = cfg.u_min;
  lin_cfg.u_max = cfg.u_max;
  lin_cfg.tol = 1e-10;
  lin_cfg.max_iterations = 100000;
  const auto problem = build_problem(latent, lin_cfg);
  const auto qp = solve(problem, x0, ref);
  REQUIRE(qp.converged);
  CHECK((result.u_sequence - qp.u).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("a hovering quadrotor asked to hover keeps the hover command") {
  const PlantParams params;
  Normalizer norm;
  norm.state_min = Vec::Constant(kStateDim, -2);
  norm.state_max = Vec::Constant(kStateDim, 2);
  norm.input_min = Vec::Constant(kInputDim, 0);
  norm.input_max = Vec::Constant(kInputDim, 1);
  NmpcConfig cfg = make_nmpc_config(norm, 8);
  NmpcController sqp(make_quad_model(params, 0.01), cfg);

  const Vec x = hover_state(0, 0, 1.6);
  Mat ref(9, kStateDim);
  for (Index k = 0; k < 9; ++k) ref.row(k) = x.transpose();
  StepDiagnostics diag;
  const Vec u = sqp.step(x, ref, &diag);
  for (Index i = 0; i < kInputDim; ++i)
    CHECK(u[i] == doctest::Approx(hover_input(params)).epsilon(1e-6));
  CHECK(diag.objective <= 1e-9);
}

TEST_CASE("the nonlinear controller pulls toward a nearby setpoint") {
  const PlantParams params;
  Normalizer norm;
  norm.state_min = Vec::Constant(kStateDim, -2);
  norm.state_max = Vec::Constant(kStateDim, 2);
  norm.input_min = Vec::Constant(kInputDim, 0);
  norm.input_max = Vec::Constant(kInputDim, 1);
  NmpcConfig cfg = make_nmpc_config(norm, 15);
  // Full-weight velocity and rate channels would price the very motion a
  // step response needs; the bench configs relax them the same way.
  for (Index i = 3; i < 6; ++i) cfg.Q(i, i) *= 0.1;
  for (Index i = 9; i < 12; ++i) cfg.Q(i, i) *= 0.1;
  NmpcController sqp(make_quad_model(params, 0.01), cfg);

  Vec x = hover_state(0, 0, 1.6);
  Vec target = x;
  target[2] += 0.3;
  Mat ref(16, kStateDim);
  for (Index k = 0; k < 16; ++k) ref.row(k) = target.transpose();

  // Two seconds of closed loop climbs most of the way, without overshoot.
  for (int k = 0; k < 200; ++k) {
    const Vec u = sqp.step(x, ref);
    CHECK(u.minCoeff() >= 0);
    CHECK(u.maxCoeff() <= 1);
    x = step_rk4(params, x, u, 0.01);
    CHECK(x[2] < target[2] + 0.02);
  }
  CHECK(x[2] - 1.6 > 0.2);
  CHECK(std::abs(x[2] - target[2]) < 0.1);
}
