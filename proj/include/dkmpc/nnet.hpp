#pragma once

#include <random>
#include <utility>
#include <vector>

#include "dkmpc/types.hpp"

namespace dkmpc {

// Dense value with a same-shape gradient accumulator.
struct Tensor {
  Mat value;
  Mat grad;

  Tensor() = default;
  Tensor(Index rows, Index cols)
      : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}
  explicit Tensor(Mat v) : value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  void zero_grad() { grad.setZero(); }
};

enum class Activation { kIdentity, kTanh, kRelu };

struct Layer {
  Tensor weight;  // out x in
  Tensor bias;    // out x 1, ignored when has_bias is false
  bool has_bias = true;
  Activation activation = Activation::kIdentity;
};

// Per-layer inputs plus the final output, recorded by forward for backward.
struct MlpTrace {
  std::vector<Mat> xs;
  bool valid = false;
};

// Plain feed-forward stack over (batch x features) matrices.
class Mlp {
 public:
  Mlp() = default;

  // Fully connected biased layers sized dims[0] -> ... -> dims.back(),
  // Glorot-uniform weights, zero biases; `hidden` activation on all layers
  // except the last, which gets `output`.
  static Mlp dense(const std::vector<Index>& dims, Activation hidden,
                   Activation output, std::mt19937_64& rng);

  // One bias-free identity layer: a bare matrix multiplication out = W in.
  static Mlp matrix(Index out, Index in);

  void add_layer(Layer layer);

  Index input_dim() const;
  Index output_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return layers_[i]; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }

  Mat forward(const Mat& x, MlpTrace& trace) const;
  Mat forward(const Mat& x);

  // Propagates d(loss)/d(output) back through the trace, adding into each
  // parameter's grad slot; returns d(loss)/d(input) for chaining.
  Mat backward(const MlpTrace& trace, const Mat& upstream);
  Mat backward(const Mat& upstream);

  // d(output)/d(input) at a single sample given as a 1 x input_dim row;
  // leaves parameter gradients untouched.
  Mat jacobian(const Mat& x) const;

  void zero_grad();
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

 private:
  std::vector<Layer> layers_;
  MlpTrace last_trace_;
};

// Textbook Adam with bias correction; moment buffers are keyed by position
// in `params`, so pass the same parameter list every step.
struct AdamState {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  long step_count = 0;
  std::vector<Mat> m, v;
};

void adam_step(const std::vector<Tensor*>& params, AdamState& state);

// Largest absolute eigenvalue of a square matrix and its gradient via the
// dominant eigenpair; falls back to the top singular pair direction when the
// eigenpair is too close to defective for the sensitivity formula.
std::pair<Scalar, Mat> spectral_radius(const Mat& A);

Mat glorot_uniform(Index out, Index in, std::mt19937_64& rng);

// Throws NonFinite if any entry is NaN or infinite.
void assert_finite(const Mat& m, const char* what);

}  // namespace dkmpc

// Per-op finiteness checks are compiled into debug builds only.
#ifndef NDEBUG
#define DKMPC_CHECK_FINITE(m, what) ::dkmpc::assert_finite((m), (what))
#else
#define DKMPC_CHECK_FINITE(m, what) ((void)0)
#endif
