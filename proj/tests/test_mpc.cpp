#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "dkmpc/errors.hpp"
#include "dkmpc/mpc.hpp"
#include "oracles.hpp"

using namespace dkmpc;

namespace {

Normalizer pass_through(Index n_x, Index n_u) {
  Normalizer n;
  n.state_min = Vec::Constant(n_x, -1);
  n.state_max = Vec::Constant(n_x, 1);
  n.input_min = Vec::Constant(n_u, -1);
  n.input_max = Vec::Constant(n_u, 1);
  return n;
}

// Latent space equals state space: encoder and decoder are identities, so
// the QP can be reasoned about directly in terms of A and B.
KoopmanModel latent_model(const Mat& A, const Mat& B) {
  const Index n = A.rows();
  const Index m = B.cols();
  KoopmanModel model;
  model.n_x = n;
  model.n_u = m;
  model.latent = n;
  model.normalizer = pass_through(n, m);
  model.encoder = Mlp::matrix(n, n);
  model.encoder.layer(0).weight.value = Mat::Identity(n, n);
  model.decoder = Mlp::matrix(n, n);
  model.decoder.layer(0).weight.value = Mat::Identity(n, n);
  model.a_net = Mlp::matrix(n, n);
  model.a_net.layer(0).weight.value = A;
  model.b_net = Mlp::matrix(n, m);
  model.b_net.layer(0).weight.value = B;
  return model;
}

MpcConfig basic_config(Index n, Index m, Index horizon) {
  MpcConfig cfg;
  cfg.horizon = horizon;
  cfg.Q = Mat::Identity(n, n);
  cfg.R = 0.1 * Mat::Identity(m, m);
  cfg.u_min = Vec::Constant(m, -1);
  cfg.u_max = Vec::Constant(m, 1);
  cfg.tol = 1e-10;
  cfg.max_iterations = 50000;
  return cfg;
}

Mat random_mat(Index r, Index c, std::mt19937_64& rng, Scalar scale = 1) {
  std::normal_distribution<Scalar> dist(0, scale);
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

Mat random_psd(Index n, std::mt19937_64& rng, Scalar ridge = 0.1) {
  const Mat M = random_mat(n, n, rng);
  return Mat(M.transpose() * M + ridge * Mat::Identity(n, n));
}

}  // namespace

TEST_CASE("scalar double integrator in one step reaches the reference") {
  // A = 1, B = 1, H = 1, Q = 1, R ~ 0: the only penalized state is
  // z1 = z0 + u0, so the optimum is u0 = ref - z0.
  const auto model = latent_model(Mat::Ones(1, 1), Mat::Ones(1, 1));
  MpcConfig cfg = basic_config(1, 1, 1);
  cfg.Q << 1;
  cfg.R << 1e-10;
  const auto p = build_problem(model, cfg);

  Vec z0(1);
  z0 << -0.2;
  Mat z_ref(2, 1);
  z_ref << 0.3, 0.3;
  const auto sol = solve(p, z0, z_ref);
  CHECK(sol.converged);
  CHECK(sol.u[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(sol.u[1]) <= 1e-6);  // trailing input steers nothing
}

TEST_CASE("zero B makes the zero input optimal") {
  std::mt19937_64 rng(1);
  const Mat A = 0.8 * Mat::Identity(3, 3);
  const auto model = latent_model(A, Mat::Zero(3, 2));
  const auto p = build_problem(model, basic_config(3, 2, 4));

  const Vec z0 = Vec::Ones(3);
  const Mat z_ref = random_mat(5, 3, rng);
  const auto sol = solve(p, z0, z_ref);
  CHECK(sol.converged);
  CHECK(sol.u.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(sol.objective == doctest::Approx(0));
}

TEST_CASE("condensed problem has the documented block structure") {
  std::mt19937_64 rng(2);
  const Index n = 3, m = 2, H = 4;
  const Mat A = random_mat(n, n, rng, 0.4);
  const Mat B = random_mat(n, m, rng, 0.5);
  const auto model = latent_model(A, B);
  MpcConfig cfg = basic_config(n, m, H);
  cfg.Q = random_psd(n, rng);
  cfg.R = random_psd(m, rng);
  const auto p = build_problem(model, cfg);

  CHECK(p.P.rows() == (H + 1) * m);
  CHECK((p.P - p.P.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  // The final input block decouples: zero cross terms, pure 2R on the tail.
  CHECK(p.P.block(H * m, 0, m, H * m).cwiseAbs().maxCoeff() == 0);
  CHECK(p.P.block(0, H * m, H * m, m).cwiseAbs().maxCoeff() == 0);
  CHECK((p.P.block(H * m, H * m, m, m) - 2 * cfg.R).cwiseAbs().maxCoeff() <=
        1e-12);

  // Free and forced response stacks follow the power-of-A recursion.
  CHECK((p.F.topRows(n) - A).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((p.F.bottomRows(n) - Mat(A * A * A * A)).cwiseAbs().maxCoeff() <=
        1e-12);
  CHECK((p.G.block(0, 0, n, m) - B).cwiseAbs().maxCoeff() == 0);
  CHECK((p.G.block(n, 0, n, m) - Mat(A * B)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(p.G.block(0, m, n, m).cwiseAbs().maxCoeff() == 0);

  // Positive definite whenever R is, so the power-iteration constant is
  // a genuine top eigenvalue.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(p.P)};
  CHECK(eig.eigenvalues().minCoeff() > 0);
  CHECK(p.lipschitz == doctest::Approx(eig.eigenvalues().maxCoeff()));
}

TEST_CASE("weight matrices must be symmetric PSD and bounds ordered") {
  const auto model = latent_model(Mat::Identity(2, 2), Mat::Identity(2, 2));
  MpcConfig cfg = basic_config(2, 2, 3);

  MpcConfig bad = cfg;
  bad.Q(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(build_problem(model, bad), NotPsd);

  bad = cfg;
  bad.Q = -Mat::Identity(2, 2);
  CHECK_THROWS_AS(build_problem(model, bad), NotPsd);

  bad = cfg;
  bad.R(0, 0) = -1;
  bad.R = ((bad.R + bad.R.transpose()) / 2).eval();
  CHECK_THROWS_AS(build_problem(model, bad), NotPsd);

  bad = cfg;
  bad.u_min[0] = bad.u_max[0];
  CHECK_THROWS_AS(build_problem(model, bad), Error);

  bad = cfg;
  bad.horizon = 0;
  CHECK_THROWS_AS(build_problem(model, bad), DimensionMismatch);
}

TEST_CASE("power iteration finds the top eigenvalue of a PSD matrix") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat P = random_psd(6 + trial, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(P)};
    CHECK(power_iteration_lmax(P) ==
          doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-8));
  }
}

TEST_CASE("unconstrained solve matches the dense closed form") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Index dim = 4 + (trial % 5);
    const Mat P = random_psd(dim, rng, 0.5);
    const Vec q = random_mat(dim, 1, rng).col(0);
    const Vec lo = Vec::Constant(dim, -1e6);
    const Vec hi = Vec::Constant(dim, 1e6);
    const auto sol = box_qp_solve(P, q, lo, hi, power_iteration_lmax(P),
                                  1e-12, 100000, nullptr);
    const Vec closed = -P.llt().solve(q);
    CHECK(sol.converged);
    CHECK((sol.u - closed).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("a collapsed box returns its only feasible point") {
  std::mt19937_64 rng(5);
  const Index dim = 6;
  const Mat P = random_psd(dim, rng);
  const Vec q = random_mat(dim, 1, rng).col(0);
  const Vec c = random_mat(dim, 1, rng).col(0);
  const auto sol =
      box_qp_solve(P, q, c, c, power_iteration_lmax(P), 1e-10, 100, nullptr);
  CHECK(sol.u == c);
  CHECK(sol.converged);
}

TEST_CASE("a one-dimensional optimum beyond the box clips to the edge") {
  // Same scalar system as above but the unconstrained optimum 1.0 violates
  // the box [-0.5, 0.5], so the answer saturates at 0.5.
  const auto model = latent_model(Mat::Ones(1, 1), Mat::Ones(1, 1));
  MpcConfig cfg = basic_config(1, 1, 1);
  cfg.Q << 1;
  cfg.R << 1e-10;
  cfg.u_min << -0.5;
  cfg.u_max << 0.5;
  const auto p = build_problem(model, cfg);

  Vec z0(1);
  z0 << -0.5;
  Mat z_ref(2, 1);
  z_ref << 0.5, 0.5;
  const auto sol = solve(p, z0, z_ref);
  CHECK(sol.u[0] == doctest::Approx(0.5));
}

TEST_CASE("iterates are always exactly inside the box") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Index dim = 3 + (trial % 6);
    const Mat P = random_psd(dim, rng, 0.05);
    const Vec q = 3 * random_mat(dim, 1, rng).col(0);
    Vec lo(dim), hi(dim);
    for (Index i = 0; i < dim; ++i) {
      lo[i] = -0.2 - std::abs(random_mat(1, 1, rng)(0, 0));
      hi[i] = 0.2 + std::abs(random_mat(1, 1, rng)(0, 0));
    }
    // A loose cap leaves some runs unconverged on purpose; the feasibility
    // guarantee must hold regardless.
    const auto sol =
        box_qp_solve(P, q, lo, hi, power_iteration_lmax(P), 1e-12, 40, nullptr);
    for (Index i = 0; i < dim; ++i) {
      CHECK(sol.u[i] >= lo[i]);
      CHECK(sol.u[i] <= hi[i]);
    }
  }
}

TEST_CASE("the objective trace never increases") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Index dim = 8;
    const Mat P = random_psd(dim, rng, 0.01);  // poorly conditioned on purpose
    const Vec q = 5 * random_mat(dim, 1, rng).col(0);
    const Vec lo = Vec::Constant(dim, -0.7);
    const Vec hi = Vec::Constant(dim, 0.7);
    std::vector<Scalar> trace;
    box_qp_solve(P, q, lo, hi, power_iteration_lmax(P), 1e-10, 5000, nullptr,
                 &trace);
    for (std::size_t i = 1; i < trace.size(); ++i)
      CHECK(trace[i] <= trace[i - 1] + 1e-12);
  }
}

TEST_CASE("an iteration cap reports non-convergence but a usable iterate") {
  std::mt19937_64 rng(8);
  const Index dim = 10;
  const Mat P = random_psd(dim, rng, 1e-4);
  const Vec q = 10 * random_mat(dim, 1, rng).col(0);
  const Vec lo = Vec::Constant(dim, -5.0);
  const Vec hi = Vec::Constant(dim, 5.0);
  const auto sol =
      box_qp_solve(P, q, lo, hi, power_iteration_lmax(P), 1e-14, 3, nullptr);
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations == 3);
  CHECK(sol.u.allFinite());
}

TEST_CASE("solver ties the brute-force active-set oracle on small boxes") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 15; ++trial) {
    const Index dim = 3 + (trial % 5);  // up to 7 -> 3^7 assignments
    const Mat P = random_psd(dim, rng, 0.2);
    const Vec q = 2 * random_mat(dim, 1, rng).col(0);
    const Vec lo = Vec::Constant(dim, -0.6);
    const Vec hi = Vec::Constant(dim, 0.8);

    const auto sol = box_qp_solve(P, q, lo, hi, power_iteration_lmax(P),
                                  1e-11, 100000, nullptr);
    const Vec ref = oracles::box_qp_enumerate(P, q, lo, hi);
    const Scalar obj_ref = 0.5 * ref.dot(P * ref) + q.dot(ref);
    CHECK(sol.converged);
    CHECK(sol.objective <= obj_ref + 1e-6);
    CHECK((sol.u - ref).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("condensed controller problems tie the oracle as well") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 3, m = 2, H = 3;  // head dimension 6, tail 2
    const Mat A = random_mat(n, n, rng, 0.4);
    const Mat B = random_mat(n, m, rng, 0.6);
    const auto model = latent_model(A, B);
    MpcConfig cfg = basic_config(n, m, H);
    cfg.Q = random_psd(n, rng);
    cfg.u_min = Vec::Constant(m, -0.4);
    cfg.u_max = Vec::Constant(m, 0.4);
    const auto p = build_problem(model, cfg);

    const Vec z0 = random_mat(n, 1, rng).col(0);
    const Mat z_ref = 0.5 * random_mat(H + 1, n, rng);
    const auto sol = solve(p, z0, z_ref);
    REQUIRE(sol.converged);

    // The head and tail blocks separate exactly, so the oracle can
    // enumerate them independently.
    Vec ref_stack(H * n);
    for (Index k = 1; k <= H; ++k)
      ref_stack.segment((k - 1) * n, n) = z_ref.row(k).transpose();
    Vec q = Vec::Zero((H + 1) * m);
    q.head(H * m) = p.E_z * z0 - p.E_r * ref_stack;
    REQUIRE(q.tail(m).cwiseAbs().maxCoeff() == 0);

    const Vec head = oracles::box_qp_enumerate(
        p.P.topLeftCorner(H * m, H * m), q.head(H * m), p.lo.head(H * m),
        p.hi.head(H * m));
    const Vec tail = oracles::box_qp_enumerate(
        p.P.bottomRightCorner(m, m), q.tail(m), p.lo.tail(m), p.hi.tail(m));
    Vec full((H + 1) * m);
    full << head, tail;
    const Scalar obj_ref = 0.5 * full.dot(p.P * full) + q.dot(full);
    CHECK(sol.objective <= obj_ref + 1e-6);
  }
}

TEST_CASE("controller at an equilibrium reference keeps the input near zero") {
  const Mat A = 0.9 * Mat::Identity(2, 2);
  const Mat B = Mat::Identity(2, 2);
  auto controller = DkMpcController(latent_model(A, B), basic_config(2, 2, 5));

  const Vec x = Vec::Zero(2);  // encodes to the latent origin
  const Mat ref = Mat::Zero(6, 2);
  StepDiagnostics diag;
  const Vec u = controller.step(x, ref, &diag);
  CHECK(u.cwiseAbs().maxCoeff() <= 1e-9);
  // The zero sequence is feasible here, so the minimum cannot beat it.
  CHECK(diag.objective <= 1e-12);
  CHECK(diag.objective >= -1e-12);
}

TEST_CASE("controller output respects the raw input bounds") {
  std::mt19937_64 rng(11);
  const Mat A = random_mat(3, 3, rng, 0.5);
  const Mat B = random_mat(3, 2, rng, 0.7);
  auto model = latent_model(A, B);
  // A lopsided raw input range checks the denormalization of bounds.
  model.normalizer.input_min = Vec::Constant(2, 0.0);
  model.normalizer.input_max = Vec::Constant(2, 10.0);
  auto cfg = basic_config(3, 2, 4);
  cfg.max_iterations = 60;
  auto controller = DkMpcController(std::move(model), cfg);

  for (int step = 0; step < 30; ++step) {
    const Vec x = random_mat(3, 1, rng).col(0);
    const Mat ref = 2 * random_mat(5, 3, rng);
    const Vec u = controller.step(x, ref);
    CHECK(u.minCoeff() >= 0.0);
    CHECK(u.maxCoeff() <= 10.0);
  }
}

TEST_CASE("short reference windows are padded with their final row") {
  const Mat A = 0.8 * Mat::Identity(2, 2);
  const Mat B = Mat::Identity(2, 2);
  const auto model = latent_model(A, B);
  const auto cfg = basic_config(2, 2, 6);

  auto c1 = DkMpcController(model, cfg);
  auto c2 = DkMpcController(model, cfg);
  Vec x(2);
  x << 0.3, -0.1;
  Mat short_ref(2, 2);
  short_ref << 0.5, 0.5, 0.6, 0.4;
  Mat long_ref(7, 2);
  long_ref.row(0) = short_ref.row(0);
  for (Index k = 1; k < 7; ++k) long_ref.row(k) = short_ref.row(1);
  CHECK(c1.step(x, short_ref) == c2.step(x, long_ref));
}

TEST_CASE("warm starting cuts iterations on a smooth reference") {
  const Mat A = 0.95 * Mat::Identity(3, 3);
  Mat B(3, 2);
  B << 1, 0, 0, 1, 0.5, 0.5;
  const auto model = latent_model(A, B);
  MpcConfig cfg = basic_config(3, 2, 10);
  cfg.tol = 1e-9;
  cfg.max_iterations = 20000;

  auto warm = DkMpcController(model, cfg);
  auto cold = DkMpcController(model, cfg);

  std::vector<long> warm_iters, cold_iters;
  Vec x = Vec::Zero(3);
  for (int step = 0; step < 100; ++step) {
    Mat ref(11, 3);
    for (Index k = 0; k < 11; ++k) {
      const Scalar t = 0.05 * (step + static_cast<int>(k));
      ref.row(k) << 0.5 * std::sin(t), 0.5 * std::cos(t), 0.2;
    }
    StepDiagnostics dw, dc;
    warm.step(x, ref, &dw);
    cold.reset();  // forget the previous solution every time
    cold.step(x, ref, &dc);
    warm_iters.push_back(dw.iterations);
    cold_iters.push_back(dc.iterations);
    x = 0.9 * x + 0.1 * ref.row(1).transpose();  // drift along the path
  }
  std::nth_element(warm_iters.begin(), warm_iters.begin() + 50,
                   warm_iters.end());
  std::nth_element(cold_iters.begin(), cold_iters.begin() + 50,
                   cold_iters.end());
  CHECK(warm_iters[50] < cold_iters[50]);
}

TEST_CASE("diagnostics CSV has the documented columns") {
  std::vector<DiagnosticsRow> rows(2);
  rows[0].t = 0;
  rows[0].step.solve_ms = 1.25;
  rows[0].step.iterations = 12;
  rows[0].step.objective = 0.5;
  rows[0].step.saturated_count = 3;
  rows[1].t = 0.01;
  rows[1].step.iterations = 8;

  const std::string path = "tmp_diag.csv";
  write_diagnostics_csv(rows, path);
  std::ifstream f(path);
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  std::remove(path.c_str());
  CHECK(header == "t,solve_ms,iterations,objective,saturated_count");
  CHECK(row == "0,1.25,12,0.5,3");
}
