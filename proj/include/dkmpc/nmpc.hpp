#pragma once

#include <functional>

#include "dkmpc/dataset.hpp"
#include "dkmpc/mpc.hpp"
#include "dkmpc/plant.hpp"
#include "dkmpc/types.hpp"

namespace dkmpc {

// Discrete-time dynamics with sensitivities, the only view of the plant the
// nonlinear controller sees. Keeping it behind functions lets tests swap in
// an exactly linear system.
struct DiscreteModel {
  Index n = 0;
  Index m = 0;
  std::function<Vec(const Vec& x, const Vec& u)> step;
  std::function<void(const Vec& x, const Vec& u, Mat& a_mat, Mat& b_mat)>
      jacobians;
};

DiscreteModel make_quad_model(const PlantParams& params, Scalar dt);
DiscreteModel make_linear_model(const Mat& a_mat, const Mat& b_mat);

struct NmpcConfig {
  Index horizon = 25;
  Mat Q;                      // state tracking weight, n by n
  Mat R;                      // input deviation weight about mid-range, m by m
  Vec u_min, u_max;           // raw input box
  Scalar tol = 1e-6;          // outer stop on the step's infinity norm
  long max_outer = 30;        // linearize-solve-search rounds
  long max_inner = 200;       // projected-gradient iterations per round
  Scalar armijo_c = 1e-4;
  long max_halvings = 8;
};

// Weights matched to the latent controller's normalized-unit costs: a unit
// of normalized state error or input deviation costs the same in both, with
// the box taken from the normalizer's input range.
NmpcConfig make_nmpc_config(const Normalizer& normalizer, Index horizon,
                            Scalar q_scale = 1.0, Scalar r_scale = 0.1);

struct NmpcResult {
  Vec u_sequence;      // stacked inputs, (horizon + 1) * m entries
  long iterations = 0;     // accepted outer steps
  long inner_iterations = 0;
  Scalar objective = 0;    // true nonlinear cost at the returned sequence
  bool converged = false;
};

// Receding-horizon tracking by sequential quadratic programming over the
// input sequence alone: roll the dynamics out, linearize along the
// trajectory, solve the condensed box QP with the projected-gradient
// solver, and backtrack on the true cost. A rollout that leaves the safe
// envelope scores infinite cost, so the line search retreats from it.
class NmpcController {
 public:
  NmpcController(DiscreteModel model, NmpcConfig cfg);

  // One control step toward x_ref (rows are reference states from the
  // current sample onward; short windows repeat their last row). Returns
  // the first input of the optimized sequence.
  Vec step(const Vec& x_t, const Mat& x_ref, StepDiagnostics* diag = nullptr);

  // Full solve from scratch or from a warm-started sequence.
  NmpcResult solve_sequence(const Vec& x_t, const Mat& x_ref_window,
                            const Vec* warm_start = nullptr) const;

  void reset() { has_warm_ = false; }
  const NmpcConfig& config() const { return cfg_; }

 private:
  DiscreteModel model_;
  NmpcConfig cfg_;
  Vec warm_;
  bool has_warm_ = false;
};

// Single cold-started control step of the quadrotor baseline.
Vec nmpc_control_step(const PlantParams& params, const NmpcConfig& cfg,
                      Scalar dt, const Vec& x_t, const Mat& x_ref);

}  // namespace dkmpc
