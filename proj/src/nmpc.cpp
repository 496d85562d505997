#include "dkmpc/nmpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "dkmpc/errors.hpp"

namespace dkmpc {

DiscreteModel make_quad_model(const PlantParams& params, Scalar dt) {
  params.validate();
  if (!(dt > 0)) throw Error("integration step must be positive");
  DiscreteModel model;
  model.n = kStateDim;
  model.m = kInputDim;
  model.step = [params, dt](const Vec& x, const Vec& u) {
    return step_rk4(params, x, u, dt);
  };
  model.jacobians = [params, dt](const Vec& x, const Vec& u, Mat& a_mat,
                                 Mat& b_mat) {
    step_rk4_jacobians(params, x, u, dt, a_mat, b_mat);
  };
  return model;
}

DiscreteModel make_linear_model(const Mat& a_mat, const Mat& b_mat) {
  if (a_mat.rows() != a_mat.cols() || b_mat.rows() != a_mat.rows())
    throw DimensionMismatch("linear model needs square A and matching B");
  DiscreteModel model;
  model.n = a_mat.rows();
  model.m = b_mat.cols();
  model.step = [a_mat, b_mat](const Vec& x, const Vec& u) {
    return Vec(a_mat * x + b_mat * u);
  };
  model.jacobians = [a_mat, b_mat](const Vec&, const Vec&, Mat& a_out,
                                   Mat& b_out) {
    a_out = a_mat;
    b_out = b_mat;
  };
  return model;
}

NmpcConfig make_nmpc_config(const Normalizer& normalizer, Index horizon,
                            Scalar q_scale, Scalar r_scale) {
  if (normalizer.state_min.size() == 0 || normalizer.input_min.size() == 0 ||
      !((normalizer.state_max - normalizer.state_min).minCoeff() > 0) ||
      !((normalizer.input_max - normalizer.input_min).minCoeff() > 0))
    throw Error("normalizer ranges must be non-empty and ordered");
  NmpcConfig cfg;
  cfg.horizon = horizon;
  // One unit of normalized error costs q_scale (r_scale), expressed in raw
  // units through the normalizer's column scales.
  const Vec dx =
      2.0 * (normalizer.state_max - normalizer.state_min).cwiseInverse();
  const Vec du =
      2.0 * (normalizer.input_max - normalizer.input_min).cwiseInverse();
  cfg.Q = q_scale * dx.cwiseProduct(dx).asDiagonal();
  cfg.R = r_scale * du.cwiseProduct(du).asDiagonal();
  cfg.u_min = normalizer.input_min;
  cfg.u_max = normalizer.input_max;
  return cfg;
}

namespace {

struct Rollout {
  std::vector<Vec> states;  // x_0 .. x_H
  Scalar cost = 0;
  bool feasible = false;
};

// Simulates the input sequence and accumulates the tracking cost; a rollout
// that trips the plant guards is reported infeasible with infinite cost.
Rollout roll(const DiscreteModel& model, const NmpcConfig& cfg, const Vec& x0,
             const Mat& refs, const Vec& u_seq, const Vec& mid) {
  const Index h = cfg.horizon;
  const Index m = model.m;
  Rollout out;
  out.states.assign(static_cast<std::size_t>(h) + 1, Vec());
  out.states[0] = x0;
  out.cost = 0;
  for (Index k = 0; k < h; ++k) {
    const Vec uk = u_seq.segment(k * m, m);
    Vec next;
    try {
      next = model.step(out.states[k], uk);
    } catch (const Error&) {
      out.cost = std::numeric_limits<Scalar>::infinity();
      return out;
    }
    if (!next.allFinite()) {
      out.cost = std::numeric_limits<Scalar>::infinity();
      return out;
    }
    out.states[k + 1] = next;
    const Vec err = next - refs.row(k + 1).transpose();
    out.cost += err.dot(cfg.Q * err);
  }
  for (Index k = 0; k <= h; ++k) {
    const Vec dev = u_seq.segment(k * m, m) - mid;
    out.cost += dev.dot(cfg.R * dev);
  }
  out.feasible = true;
  return out;
}

Mat pad_window(const Mat& x_ref, Index rows) {
  if (x_ref.rows() >= rows) return x_ref.topRows(rows);
  Mat padded(rows, x_ref.cols());
  padded.topRows(x_ref.rows()) = x_ref;
  for (Index k = x_ref.rows(); k < rows; ++k)
    padded.row(k) = x_ref.row(x_ref.rows() - 1);
  return padded;
}

}  // namespace

NmpcController::NmpcController(DiscreteModel model, NmpcConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
  if (model_.n < 1 || model_.m < 1 || !model_.step || !model_.jacobians)
    throw DimensionMismatch("discrete model is incomplete");
  if (cfg_.horizon < 1) throw DimensionMismatch("horizon must be at least 1");
  if (cfg_.Q.rows() != model_.n || cfg_.Q.cols() != model_.n ||
      cfg_.R.rows() != model_.m || cfg_.R.cols() != model_.m)
    throw DimensionMismatch("weight shapes must match the model");
  if (cfg_.u_min.size() != model_.m || cfg_.u_max.size() != model_.m ||
      !((cfg_.u_max - cfg_.u_min).minCoeff() > 0))
    throw Error("input bounds must be ordered elementwise");
}

NmpcResult NmpcController::solve_sequence(const Vec& x_t,
                                          const Mat& x_ref_window,
                                          const Vec* warm_start) const {
  const Index h = cfg_.horizon;
  const Index n = model_.n;
  const Index m = model_.m;
  if (x_t.size() != n) throw DimensionMismatch("state size mismatch");
  if (x_ref_window.cols() != n || x_ref_window.rows() < 1)
    throw DimensionMismatch("reference window must have state columns");
  const Mat refs = pad_window(x_ref_window, h + 1);

  const Vec mid = (cfg_.u_min + cfg_.u_max) / 2;
  Vec lo((h + 1) * m), hi((h + 1) * m), mid_stack((h + 1) * m);
  for (Index k = 0; k <= h; ++k) {
    lo.segment(k * m, m) = cfg_.u_min;
    hi.segment(k * m, m) = cfg_.u_max;
    mid_stack.segment(k * m, m) = mid;
  }

  Vec u_seq = mid_stack;
  if (warm_start != nullptr) {
    if (warm_start->size() != u_seq.size())
      throw DimensionMismatch("warm start size mismatch");
    u_seq = warm_start->cwiseMax(lo).cwiseMin(hi);
  }

  NmpcResult result;
  Rollout current = roll(model_, cfg_, x_t, refs, u_seq, mid);
  if (!current.feasible) {
    // A stale warm start can start inside the guard region; fall back to
    // the mid-range sequence before giving up.
    u_seq = mid_stack;
    current = roll(model_, cfg_, x_t, refs, u_seq, mid);
    if (!current.feasible) {
      result.u_sequence = u_seq;
      result.objective = current.cost;
      return result;
    }
  }

  Mat g_mat = Mat::Zero(h * n, h * m);
  Mat a_k(n, n), b_k(n, m);
  for (long outer = 0; outer < cfg_.max_outer; ++outer) {
    // Linearize along the current trajectory and condense states out.
    for (Index k = 0; k < h; ++k) {
      model_.jacobians(current.states[k], u_seq.segment(k * m, m), a_k, b_k);
      for (Index j = 0; j < k; ++j)
        g_mat.block(k * n, j * m, n, m) =
            a_k * g_mat.block((k - 1) * n, j * m, n, m);
      g_mat.block(k * n, k * m, n, m) = b_k;
    }

    Mat qg(h * n, h * m);
    Vec qr(h * n);
    for (Index k = 0; k < h; ++k) {
      qg.middleRows(k * n, n) = cfg_.Q * g_mat.middleRows(k * n, n);
      qr.segment(k * n, n) =
          2 * cfg_.Q *
          (current.states[k + 1] - refs.row(k + 1).transpose());
    }
    Mat p_mat = Mat::Zero((h + 1) * m, (h + 1) * m);
    p_mat.topLeftCorner(h * m, h * m) = 2 * g_mat.transpose() * qg;
    Vec q = Vec::Zero((h + 1) * m);
    q.head(h * m) = g_mat.transpose() * qr;
    for (Index k = 0; k <= h; ++k) {
      p_mat.block(k * m, k * m, m, m) += 2 * cfg_.R;
      q.segment(k * m, m) +=
          2 * cfg_.R * (u_seq.segment(k * m, m) - mid);
    }
    p_mat = ((p_mat + p_mat.transpose()) / 2).eval();

    const auto qp =
        box_qp_solve(p_mat, q, Vec(lo - u_seq), Vec(hi - u_seq),
                     power_iteration_lmax(p_mat), cfg_.tol, cfg_.max_inner);
    result.inner_iterations += qp.iterations;
    const Vec& delta = qp.u;
    if (delta.cwiseAbs().maxCoeff() <= cfg_.tol) {
      result.converged = true;
      break;
    }

    // Backtrack on the true cost; the QP step predicts descent, so the
    // slope q' delta is nonpositive.
    const Scalar slope = q.dot(delta);
    Scalar alpha = 1;
    bool accepted = false;
    for (long halving = 0; halving <= cfg_.max_halvings; ++halving) {
      const Vec trial = u_seq + alpha * delta;
      const Rollout candidate = roll(model_, cfg_, x_t, refs, trial, mid);
      if (candidate.feasible &&
          candidate.cost <= current.cost + cfg_.armijo_c * alpha * slope) {
        u_seq = trial;
        current = candidate;
        accepted = true;
        break;
      }
      alpha /= 2;
    }
    if (!accepted) break;
    ++result.iterations;
  }

  result.u_sequence = u_seq;
  result.objective = current.cost;
  return result;
}

Vec NmpcController::step(const Vec& x_t, const Mat& x_ref,
                         StepDiagnostics* diag) {
  const auto start = std::chrono::steady_clock::now();
  const Index m = model_.m;
  const NmpcResult result =
      solve_sequence(x_t, x_ref, has_warm_ ? &warm_ : nullptr);

  // Shift the sequence one sample for the next call.
  warm_.resize(result.u_sequence.size());
  warm_.head(result.u_sequence.size() - m) = result.u_sequence.tail(
      result.u_sequence.size() - m);
  warm_.tail(m) = result.u_sequence.tail(m);
  has_warm_ = true;

  if (diag != nullptr) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    diag->solve_ms =
        std::chrono::duration<double, std::milli>(elapsed).count();
    diag->iterations = result.iterations;
    diag->objective = result.objective;
    diag->saturated_count = 0;
    for (Index i = 0; i < result.u_sequence.size(); ++i) {
      const Index j = i % m;
      if (result.u_sequence[i] <= cfg_.u_min[j] + 1e-12 ||
          result.u_sequence[i] >= cfg_.u_max[j] - 1e-12)
        ++diag->saturated_count;
    }
  }
  return result.u_sequence.head(m);
}

Vec nmpc_control_step(const PlantParams& params, const NmpcConfig& cfg,
                      Scalar dt, const Vec& x_t, const Mat& x_ref) {
  NmpcController controller(make_quad_model(params, dt), cfg);
  return controller.step(x_t, x_ref);
}

}  // namespace dkmpc
