#pragma once

// Slow, independent reference implementations the tests check fast code
// against. Everything here favors obviousness over speed.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dkmpc/types.hpp"

namespace oracles {

using dkmpc::Index;
using dkmpc::Mat;
using dkmpc::Scalar;
using dkmpc::Vec;

// Central finite differences of a scalar function over every entry of a
// matrix the function reads in place.
inline Mat fd_gradient(Mat& x, const std::function<Scalar()>& f,
                       Scalar h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      const Scalar saved = x(r, c);
      x(r, c) = saved + h;
      const Scalar up = f();
      x(r, c) = saved - h;
      const Scalar down = f();
      x(r, c) = saved;
      g(r, c) = (up - down) / (2 * h);
    }
  }
  return g;
}

// Max-norm relative disagreement between an analytic and a reference
// gradient, guarded for the all-zero case.
inline Scalar gradient_rel_error(const Mat& analytic, const Mat& reference) {
  const Scalar denom =
      std::max({reference.cwiseAbs().maxCoeff(), analytic.cwiseAbs().maxCoeff(),
                Scalar(1e-12)});
  return (analytic - reference).cwiseAbs().maxCoeff() / denom;
}

// Spectral radius via Gelfand's formula with repeated squaring: after j
// squarings, norm(A^(2^j))^(2^-j) converges to rho(A). Never touches an
// eigensolver, so it is an independent check on one.
inline Scalar gelfand_spectral_radius(const Mat& A, int squarings = 40) {
  Mat B = A;
  Scalar log_rho = 0;
  Scalar scale = 1;
  for (int k = 0; k < squarings; ++k) {
    scale *= 0.5;
    Mat sq = B * B;
    const Scalar t = sq.norm();
    if (t == 0) return 0;  // nilpotent: every eigenvalue is zero
    B = sq / t;
    log_rho += scale * std::log(t);
  }
  return std::exp(log_rho);
}

// Global minimizer of 1/2 u'Pu + q'u over [lo, hi] for convex P by brute
// force over every {free, at-lower, at-upper} assignment: solve the reduced
// stationarity system for the free coordinates, then keep KKT-consistent
// candidates (bounded coordinates need the right gradient sign). Cost grows
// as 3^dim, so keep dim small.
inline Vec box_qp_enumerate(const Mat& P, const Vec& q, const Vec& lo,
                            const Vec& hi) {
  const Index dim = P.rows();
  long combos = 1;
  for (Index i = 0; i < dim; ++i) combos *= 3;

  Vec best;
  Scalar best_obj = std::numeric_limits<Scalar>::infinity();
  std::vector<int> state(dim);  // 0 free, 1 lower, 2 upper

  for (long code = 0; code < combos; ++code) {
    long rem = code;
    std::vector<Index> free_idx;
    for (Index i = 0; i < dim; ++i) {
      state[i] = static_cast<int>(rem % 3);
      rem /= 3;
      if (state[i] == 0) free_idx.push_back(i);
    }

    Vec u(dim);
    for (Index i = 0; i < dim; ++i)
      u[i] = state[i] == 1 ? lo[i] : (state[i] == 2 ? hi[i] : 0);

    const Index nf = static_cast<Index>(free_idx.size());
    if (nf > 0) {
      Mat pff(nf, nf);
      Vec rhs(nf);
      for (Index a = 0; a < nf; ++a) {
        rhs[a] = -q[free_idx[a]];
        for (Index b = 0; b < nf; ++b)
          pff(a, b) = P(free_idx[a], free_idx[b]);
        for (Index i = 0; i < dim; ++i)
          if (state[i] != 0) rhs[a] -= P(free_idx[a], i) * u[i];
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(pff)};
      const Vec uf = lu.solve(rhs);
      if ((pff * uf - rhs).cwiseAbs().maxCoeff() > 1e-8) continue;
      for (Index a = 0; a < nf; ++a) u[free_idx[a]] = uf[a];
    }

    bool ok = true;
    for (Index a = 0; a < nf && ok; ++a) {
      const Index i = free_idx[a];
      ok = u[i] >= lo[i] - 1e-9 && u[i] <= hi[i] + 1e-9;
    }
    if (!ok) continue;
    const Vec grad = P * u + q;
    for (Index i = 0; i < dim && ok; ++i) {
      if (state[i] == 1) ok = grad[i] >= -1e-9;
      if (state[i] == 2) ok = grad[i] <= 1e-9;
    }
    if (!ok) continue;

    const Scalar obj = 0.5 * u.dot(P * u) + q.dot(u);
    if (obj < best_obj) {
      best_obj = obj;
      best = u.cwiseMax(lo).cwiseMin(hi);
    }
  }
  if (best.size() == 0)
    throw std::runtime_error("box_qp_enumerate: no KKT point found");
  return best;
}

}  // namespace oracles
