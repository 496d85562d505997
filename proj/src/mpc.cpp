#include "dkmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dkmpc/errors.hpp"

namespace dkmpc {

namespace {

void check_weight(const Mat& W, Index dim, const char* name) {
  if (W.rows() != dim || W.cols() != dim)
    throw DimensionMismatch(std::string(name) + " has the wrong size");
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw NotPsd(std::string(name) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(W)};
  if (eig.info() != Eigen::Success)
    throw ConvergenceFailure("eigensolver failed on weight matrix");
  if (eig.eigenvalues().minCoeff() < -1e-10)
    throw NotPsd(std::string(name) + " has a negative eigenvalue");
}

}  // namespace

Scalar power_iteration_lmax(const Mat& P) {
  const Index d = P.rows();
  if (d == 0) return 0;
  // Deterministic start with a ramp so no symmetry can hide the top mode.
  Vec v(d);
  for (Index i = 0; i < d; ++i) v[i] = 1 + 0.01 * static_cast<Scalar>(i);
  v /= v.norm();
  Scalar lambda = 0;
  for (int it = 0; it < 500; ++it) {
    Vec pv = P * v;
    const Scalar norm = pv.norm();
    if (norm == 0) return 0;
    pv /= norm;
    const Scalar next = pv.dot(P * pv);
    const bool settled = std::abs(next - lambda) <= 1e-12 * std::max(next, Scalar(1));
    lambda = next;
    v = pv;
    if (settled) break;
  }
  return lambda;
}

MpcProblem build_problem(const KoopmanModel& model, const MpcConfig& cfg) {
  const Index n = model.latent;
  const Index m = model.n_u;
  const Index H = cfg.horizon;
  if (H < 1) throw DimensionMismatch("horizon must be at least 1");
  check_weight(cfg.Q, n, "Q");
  check_weight(cfg.R, m, "R");
  if (cfg.u_min.size() != m || cfg.u_max.size() != m)
    throw DimensionMismatch("input bounds have the wrong length");
  if (((cfg.u_max - cfg.u_min).array() <= 0).any())
    throw Error("u_min must be strictly below u_max");

  MpcProblem p;
  p.n = n;
  p.m = m;
  p.horizon = H;
  p.tol = cfg.tol;
  p.max_iterations = cfg.max_iterations;

  // Stack the predictions z_{t+k} = A^k z_t + sum_j A^(k-1-j) B u_{t+j}.
  p.F.resize(H * n, n);
  p.G = Mat::Zero(H * n, H * m);
  Mat a_pow = model.A();  // A^(k+1) while filling row block k
  for (Index k = 0; k < H; ++k) {
    p.F.middleRows(k * n, n) = a_pow;
    if (k + 1 < H) a_pow = model.A() * a_pow;
  }
  for (Index j = 0; j < H; ++j) {
    Mat block = model.B();  // A^(k-1-j) B as k walks down the column
    for (Index k = j; k < H; ++k) {
      p.G.block(k * n, j * m, n, m) = block;
      if (k + 1 < H) block = model.A() * block;
    }
  }

  const Mat sym_q = ((cfg.Q + cfg.Q.transpose()) / 2).eval();
  const Mat sym_r = ((cfg.R + cfg.R.transpose()) / 2).eval();
  Mat qblk = Mat::Zero(H * n, H * n);
  for (Index k = 0; k < H; ++k) qblk.block(k * n, k * n, n, n) = sym_q;

  const Index dim = (H + 1) * m;
  p.P = Mat::Zero(dim, dim);
  p.P.topLeftCorner(H * m, H * m) = 2 * (p.G.transpose() * qblk * p.G);
  for (Index k = 0; k <= H; ++k)
    p.P.block(k * m, k * m, m, m) += 2 * sym_r;
  p.P = ((p.P + p.P.transpose()) / 2).eval();  // scrub rounding asymmetry

  p.E_r = 2 * (p.G.transpose() * qblk);
  p.E_z = p.E_r * p.F;

  p.lo.resize(dim);
  p.hi.resize(dim);
  for (Index k = 0; k <= H; ++k) {
    p.lo.segment(k * m, m) = cfg.u_min;
    p.hi.segment(k * m, m) = cfg.u_max;
  }

  p.lipschitz = power_iteration_lmax(p.P);
  return p;
}

QpResult box_qp_solve(const Mat& P, const Vec& q, const Vec& lo, const Vec& hi,
                      Scalar lipschitz, Scalar tol, long max_iterations,
                      const Vec* warm_start, std::vector<Scalar>* trace) {
  const Index dim = P.rows();
  if (P.cols() != dim || q.size() != dim || lo.size() != dim ||
      hi.size() != dim)
    throw DimensionMismatch("box_qp_solve: inconsistent dimensions");
  if (!P.allFinite() || !q.allFinite())
    throw NonFinite("box_qp_solve: non-finite problem data");
  Scalar L = std::max(lipschitz, Scalar(1e-12));

  const auto clamp = [&](const Vec& v) { return v.cwiseMax(lo).cwiseMin(hi); };

  Vec u = warm_start ? clamp(*warm_start) : clamp(Vec::Zero(dim));
  Vec pu = P * u;
  Scalar fu = Scalar(0.5) * u.dot(pu) + q.dot(u);
  Vec y = u;
  Scalar t = 1;

  QpResult out;
  if (trace) trace->push_back(fu);

  for (long iter = 1; iter <= max_iterations; ++iter) {
    out.iterations = iter;

    const Vec grad_y = P * y + q;
    Vec u_next = clamp(y - grad_y / L);
    Vec pu_next = P * u_next;
    Scalar f_next = Scalar(0.5) * u_next.dot(pu_next) + q.dot(u_next);

    if (f_next > fu + 1e-12) {
      // Momentum overshot: restart with a plain projected step from u,
      // growing L if even that fails the descent property.
      const Vec grad_u = pu + q;
      for (int tries = 0; tries < 60; ++tries) {
        u_next = clamp(u - grad_u / L);
        pu_next = P * u_next;
        f_next = Scalar(0.5) * u_next.dot(pu_next) + q.dot(u_next);
        if (f_next <= fu + 1e-12) break;
        L *= 2;
      }
      if (f_next > fu + 1e-12) {  // cannot descend: already at the bottom
        u_next = u;
        pu_next = pu;
        f_next = fu;
      }
      t = 1;
      y = u_next;
    } else {
      const Scalar t_next = (1 + std::sqrt(1 + 4 * t * t)) / 2;
      y = u_next + ((t - 1) / t_next) * (u_next - u);
      t = t_next;
    }

    u = u_next;
    pu = pu_next;
    fu = f_next;
    if (!std::isfinite(fu)) throw NonFinite("box_qp_solve: diverged");
    if (trace) trace->push_back(fu);

    const Vec grad_u = pu + q;
    out.residual = (u - clamp(u - grad_u)).cwiseAbs().maxCoeff();
    if (out.residual <= tol) {
      out.converged = true;
      break;
    }
  }

  out.u = u;
  out.objective = fu;
  return out;
}

QpResult solve(const MpcProblem& p, const Vec& z0, const Mat& z_ref,
               const Vec* warm_start) {
  if (z0.size() != p.n) throw DimensionMismatch("solve: z0 length");
  if (z_ref.rows() != p.horizon + 1 || z_ref.cols() != p.n)
    throw DimensionMismatch("solve: reference window shape");

  Vec ref_stack(p.horizon * p.n);
  for (Index k = 1; k <= p.horizon; ++k)
    ref_stack.segment((k - 1) * p.n, p.n) = z_ref.row(k).transpose();

  Vec q = Vec::Zero((p.horizon + 1) * p.m);
  q.head(p.horizon * p.m) = p.E_z * z0 - p.E_r * ref_stack;

  return box_qp_solve(p.P, q, p.lo, p.hi, p.lipschitz, p.tol,
                      p.max_iterations, warm_start);
}

DkMpcController::DkMpcController(KoopmanModel model, MpcConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
  problem_ = build_problem(model_, cfg_);
}

void DkMpcController::reset() { has_warm_ = false; }

Vec DkMpcController::step(const Vec& x_t, const Mat& x_ref,
                          StepDiagnostics* diagnostics) {
  if (x_ref.rows() < 1 || x_ref.cols() != model_.n_x)
    throw DimensionMismatch("step: reference window shape");
  const auto start = std::chrono::steady_clock::now();

  const Vec z0 = encode(model_, x_t);

  Mat z_ref(problem_.horizon + 1, problem_.n);
  const Index given = std::min<Index>(x_ref.rows(), problem_.horizon + 1);
  for (Index k = 0; k < given; ++k)
    z_ref.row(k) = encode(model_, x_ref.row(k).transpose()).transpose();
  for (Index k = given; k <= problem_.horizon; ++k)
    z_ref.row(k) = z_ref.row(given - 1);

  const QpResult sol =
      dkmpc::solve(problem_, z0, z_ref, has_warm_ ? &warm_ : nullptr);

  // Shift by one block for the next call, repeating the final block.
  warm_.resize(sol.u.size());
  warm_.head(sol.u.size() - problem_.m) = sol.u.tail(sol.u.size() - problem_.m);
  warm_.tail(problem_.m) = sol.u.tail(problem_.m);
  has_warm_ = true;

  if (diagnostics) {
    diagnostics->iterations = sol.iterations;
    diagnostics->objective = sol.objective;
    diagnostics->saturated_count = 0;
    for (Index i = 0; i < sol.u.size(); ++i)
      if (sol.u[i] <= problem_.lo[i] + 1e-12 ||
          sol.u[i] >= problem_.hi[i] - 1e-12)
        ++diagnostics->saturated_count;
    diagnostics->solve_ms =
        std::chrono::duration<Scalar, std::milli>(
            std::chrono::steady_clock::now() - start)
            .count();
  }
  return model_.normalizer.denormalize_input(sol.u.head(problem_.m));
}

void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write: " + path);
  f << "t,solve_ms,iterations,objective,saturated_count\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%ld,%.17g,%ld\n", r.t,
                  r.step.solve_ms, r.step.iterations, r.step.objective,
                  static_cast<long>(r.step.saturated_count));
    f << buf;
  }
}

}  // namespace dkmpc
