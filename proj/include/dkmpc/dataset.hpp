#pragma once

#include <array>
#include <string>
#include <vector>

#include "dkmpc/types.hpp"

namespace dkmpc {

// One flight log sampled at a fixed rate. Rows of `states`/`inputs` are
// samples, columns are features.
struct FlightRecord {
  Scalar dt = 0;
  Scalar t0 = 0;
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;
  Mat states;  // T x n_x
  Mat inputs;  // T x n_u

  Index length() const { return states.rows(); }
  Index state_dim() const { return states.cols(); }
  Index input_dim() const { return inputs.cols(); }

  // Throws on any structural violation (T < 2, ragged dims, dt <= 0).
  void validate() const;
};

// Per-feature extrema backing the affine map to [-1, 1] and back.
struct Normalizer {
  Vec state_min, state_max;
  Vec input_min, input_max;

  Vec normalize_state(const Vec& x) const;
  Vec denormalize_state(const Vec& x) const;
  Vec normalize_input(const Vec& u) const;
  Vec denormalize_input(const Vec& u) const;

  // Row-wise over a (samples x features) batch.
  Mat normalize_states(const Mat& x) const;
  Mat normalize_inputs(const Mat& u) const;
};

enum class Split { kTrain, kValidation, kTest };

// Normalized one-step transitions (x_k, u_k, x_{k+1}) stacked row-wise.
struct TripleSet {
  Split split = Split::kTrain;
  Mat x;       // N x n_x
  Mat u;       // N x n_u
  Mat x_next;  // N x n_x

  Index size() const { return x.rows(); }
};

// v -> 2 (v - lo) / (hi - lo) - 1, elementwise; inverse undoes it exactly.
Vec minmax_normalize(const Vec& v, const Vec& lo, const Vec& hi);
Vec minmax_denormalize(const Vec& v, const Vec& lo, const Vec& hi);

// Pooled per-feature extrema over all records. State feature i that never
// varies raises ConstantFeature(i); input features report index n_x + j.
Normalizer fit_normalizer(const std::vector<FlightRecord>& records);

// Split boundaries over `triples` transitions: train takes [0, first),
// validation [first, second), test [second, triples), cumulative-rounded so
// each split lands within one triple of its fraction.
std::array<Index, 2> segment_cuts(Index triples,
                                  const std::array<Scalar, 3>& fractions);

// Cuts each record's T-1 transitions contiguously into train/val/test so no
// triple straddles a split boundary, then normalizes every entry. Fractions
// must be non-negative and sum to 1.
std::array<TripleSet, 3> segment(const std::vector<FlightRecord>& records,
                                 const Normalizer& n,
                                 const std::array<Scalar, 3>& fractions);

// CSV with header `t,<state names...>,<input names...>`; input columns are
// the ones named `u<digits>` or `u_...`. A qw,qx,qy,qz run in the state
// block is converted to roll,pitch,yaw (Z-Y-X) on load. Values are written
// with 17 significant digits so write/load round-trips exactly.
FlightRecord load_csv(const std::string& path);
void write_csv(const FlightRecord& record, const std::string& path);

void save_normalizer(const Normalizer& n, const std::string& path);
Normalizer load_normalizer(const std::string& path);

}  // namespace dkmpc
