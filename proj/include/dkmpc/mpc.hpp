#pragma once

#include <vector>

#include "dkmpc/koopman.hpp"
#include "dkmpc/types.hpp"

namespace dkmpc {

struct MpcConfig {
  Index horizon = 25;  // H
  Mat Q;               // latent-error weight, n x n PSD
  Mat R;               // input weight, m x m PSD
  Vec u_min, u_max;    // normalized input box
  Scalar tol = 1e-6;   // projected-gradient optimality residual
  long max_iterations = 500;
};

// Condensed box QP over the stacked inputs U = (u_t ... u_{t+H}). The final
// input block steers nothing inside the window, so the Hessian is block
// diagonal between the first H blocks and the last and the linear term only
// touches the first H blocks; it is kept so the decision vector matches the
// objective's sum over k = 0..H.
struct MpcProblem {
  Index n = 0;  // latent dim
  Index m = 0;  // input dim
  Index horizon = 0;
  Mat P;    // (H+1)m square
  Mat F;    // free response, Hn x n
  Mat G;    // forced response, Hn x Hm
  Mat E_z;  // Hm x n;  q_head = E_z z0 - E_r zref_stack
  Mat E_r;  // Hm x Hn
  Vec lo, hi;  // (H+1)m replicated box
  Scalar lipschitz = 0;  // largest eigenvalue of P
  Scalar tol = 1e-6;
  long max_iterations = 500;
};

struct QpResult {
  Vec u;  // stacked minimizer, box-feasible
  long iterations = 0;
  Scalar objective = 0;
  Scalar residual = 0;
  bool converged = false;  // false means the iteration cap hit first
};

// Eliminates the latent states from the horizon-H tracking objective,
// leaving 1/2 U'PU + q'U over the input box. The current-time state error
// is a constant in U and is dropped.
MpcProblem build_problem(const KoopmanModel& model, const MpcConfig& cfg);

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
Scalar power_iteration_lmax(const Mat& P);

// Monotone accelerated projected gradient on 1/2 u'Pu + q'u over [lo, hi].
// Momentum restarts whenever it would raise the objective, so the returned
// objective sequence never increases; `trace` (optional) collects it.
QpResult box_qp_solve(const Mat& P, const Vec& q, const Vec& lo, const Vec& hi,
                      Scalar lipschitz, Scalar tol, long max_iterations,
                      const Vec* warm_start = nullptr,
                      std::vector<Scalar>* trace = nullptr);

// z_ref rows are the H+1 encoded references for times t..t+H (row 0 only
// feeds the dropped constant).
QpResult solve(const MpcProblem& p, const Vec& z0, const Mat& z_ref,
               const Vec* warm_start = nullptr);

struct StepDiagnostics {
  Scalar solve_ms = 0;
  long iterations = 0;
  Scalar objective = 0;
  Index saturated_count = 0;  // entries of U* on the box boundary
};

// Receding-horizon controller around a frozen model: encodes state and
// reference window, solves the condensed QP (built once at construction),
// applies the first input block, and warm starts the next call with the
// one-step-shifted solution.
class DkMpcController {
 public:
  DkMpcController(KoopmanModel model, MpcConfig cfg);

  // x_ref rows are raw reference states for t..t+H; a short window is
  // padded by repeating its last row. Returns the raw first input.
  Vec step(const Vec& x_t, const Mat& x_ref,
           StepDiagnostics* diagnostics = nullptr);

  void reset();  // drops the warm start
  const MpcProblem& problem() const { return problem_; }
  const KoopmanModel& model() const { return model_; }

 private:
  KoopmanModel model_;
  MpcConfig cfg_;
  MpcProblem problem_;
  Vec warm_;
  bool has_warm_ = false;
};

struct DiagnosticsRow {
  Scalar t = 0;
  StepDiagnostics step;
};

// CSV `t,solve_ms,iterations,objective,saturated_count`.
void write_diagnostics_csv(const std::vector<DiagnosticsRow>& rows,
                           const std::string& path);

}  // namespace dkmpc
