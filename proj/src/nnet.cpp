#include "dkmpc/nnet.hpp"

#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dkmpc/errors.hpp"

namespace dkmpc {

namespace {

Mat apply_activation(Mat y, Activation a) {
  switch (a) {
    case Activation::kIdentity:
      break;
    case Activation::kTanh:
      y = y.array().tanh().matrix();
      break;
    case Activation::kRelu:
      y = y.cwiseMax(Scalar(0));
      break;
  }
  return y;
}

// Derivative through the activation expressed in terms of the activation
// output y (valid for all three: 1, 1 - y^2, and 1{y > 0}).
Mat activation_backward(const Mat& d, const Mat& y, Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return d;
    case Activation::kTanh:
      return (d.array() * (1 - y.array().square())).matrix();
    case Activation::kRelu:
      return (d.array() * (y.array() > 0).cast<Scalar>()).matrix();
  }
  return d;
}

}  // namespace

void assert_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NonFinite(what);
}

Mat glorot_uniform(Index out, Index in, std::mt19937_64& rng) {
  // Three quarters of the classic limit: keeps tanh preactivations in the
  // linear-ish band for unit-range inputs and starts the weight norm small
  // enough that the ridge term does not dominate early epochs.
  const Scalar s = Scalar(0.75) * std::sqrt(Scalar(6) / static_cast<Scalar>(in + out));
  std::uniform_real_distribution<Scalar> dist(-s, s);
  Mat w(out, in);
  for (Index r = 0; r < out; ++r)
    for (Index c = 0; c < in; ++c) w(r, c) = dist(rng);
  return w;
}

Mlp Mlp::dense(const std::vector<Index>& dims, Activation hidden,
               Activation output, std::mt19937_64& rng) {
  if (dims.size() < 2) throw DimensionMismatch("dense: need at least 2 dims");
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    l.weight = Tensor(glorot_uniform(dims[i + 1], dims[i], rng));
    l.bias = Tensor(dims[i + 1], 1);
    l.has_bias = true;
    l.activation = (i + 2 == dims.size()) ? output : hidden;
    net.add_layer(std::move(l));
  }
  return net;
}

Mlp Mlp::matrix(Index out, Index in) {
  Mlp net;
  Layer l;
  l.weight = Tensor(out, in);
  l.has_bias = false;
  l.activation = Activation::kIdentity;
  net.add_layer(std::move(l));
  return net;
}

void Mlp::add_layer(Layer layer) {
  if (!layers_.empty() && layer.weight.cols() != output_dim())
    throw DimensionMismatch("add_layer: input dim does not chain");
  if (layer.has_bias && (layer.bias.rows() != layer.weight.rows() ||
                         layer.bias.cols() != 1))
    throw DimensionMismatch("add_layer: bias shape");
  layers_.push_back(std::move(layer));
  last_trace_.valid = false;
}

Index Mlp::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.cols();
}

Index Mlp::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.rows();
}

Mat Mlp::forward(const Mat& x, MlpTrace& trace) const {
  if (layers_.empty()) throw DimensionMismatch("forward: empty network");
  if (x.cols() != input_dim())
    throw DimensionMismatch("forward: input has wrong feature count");
  trace.xs.clear();
  trace.xs.reserve(layers_.size() + 1);
  trace.xs.push_back(x);
  for (const auto& l : layers_) {
    Mat y = trace.xs.back() * l.weight.value.transpose();
    if (l.has_bias) y.rowwise() += l.bias.value.transpose().row(0);
    y = apply_activation(std::move(y), l.activation);
    DKMPC_CHECK_FINITE(y, "forward activation");
    trace.xs.push_back(std::move(y));
  }
  trace.valid = true;
  return trace.xs.back();
}

Mat Mlp::forward(const Mat& x) { return forward(x, last_trace_); }

Mat Mlp::backward(const MlpTrace& trace, const Mat& upstream) {
  if (!trace.valid) throw NoForwardPass("backward before forward");
  if (trace.xs.size() != layers_.size() + 1)
    throw NoForwardPass("trace does not match network depth");
  const Mat& out = trace.xs.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw DimensionMismatch("backward: upstream shape mismatch");

  Mat d = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Layer& l = layers_[i];
    const Mat& y = trace.xs[i + 1];
    const Mat& x = trace.xs[i];
    d = activation_backward(d, y, l.activation);
    l.weight.grad.noalias() += d.transpose() * x;
    if (l.has_bias) l.bias.grad += d.colwise().sum().transpose();
    d = d * l.weight.value;
    DKMPC_CHECK_FINITE(d, "backward input grad");
  }
  return d;
}

Mat Mlp::backward(const Mat& upstream) {
  return backward(last_trace_, upstream);
}

Mat Mlp::jacobian(const Mat& x) const {
  if (x.rows() != 1) throw DimensionMismatch("jacobian: expects a single row");
  MlpTrace trace;
  forward(x, trace);
  Mat j = Mat::Identity(input_dim(), input_dim());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const Mat& y = trace.xs[i + 1];
    Mat wj = l.weight.value * j;
    switch (l.activation) {
      case Activation::kIdentity:
        break;
      case Activation::kTanh:
        wj.array().colwise() *=
            (1 - y.array().square()).transpose().col(0);
        break;
      case Activation::kRelu:
        wj.array().colwise() *=
            (y.array() > 0).cast<Scalar>().transpose().col(0);
        break;
    }
    j = std::move(wj);
  }
  return j;
}

void Mlp::zero_grad() {
  for (auto& l : layers_) {
    l.weight.zero_grad();
    if (l.has_bias) l.bias.zero_grad();
  }
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    if (l.has_bias) out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    if (l.has_bias) out.push_back(&l.bias);
  }
  return out;
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state) {
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto* p : params) {
      state.m.push_back(Mat::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw DimensionMismatch("adam_step: parameter count changed");

  ++state.step_count;
  const Scalar c1 = 1 - std::pow(state.beta1, state.step_count);
  const Scalar c2 = 1 - std::pow(state.beta2, state.step_count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (state.m[i].rows() != p.rows() || state.m[i].cols() != p.cols())
      throw DimensionMismatch("adam_step: parameter shape changed");
    state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * p.grad;
    state.v[i] =
        state.beta2 * state.v[i] + (1 - state.beta2) * p.grad.cwiseProduct(p.grad);
    const Mat m_hat = state.m[i] / c1;
    const Mat v_hat = state.v[i] / c2;
    p.value.array() -=
        state.lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
    DKMPC_CHECK_FINITE(p.value, "adam update");
  }
}

std::pair<Scalar, Mat> spectral_radius(const Mat& A) {
  if (A.rows() != A.cols())
    throw DimensionMismatch("spectral_radius: matrix not square");
  assert_finite(A, "spectral_radius input");
  const Index n = A.rows();

  using Cplx = std::complex<Scalar>;
  const Eigen::MatrixXd Ac = A;  // column-major copy for the solver
  Eigen::EigenSolver<Eigen::MatrixXd> eig(Ac);
  if (eig.info() != Eigen::Success)
    throw ConvergenceFailure("eigensolver did not converge");

  Index dominant = 0;
  Scalar rho = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar mag = std::abs(eig.eigenvalues()[i]);
    if (mag > rho) {
      rho = mag;
      dominant = i;
    }
  }
  if (rho == 0) return {0, Mat::Zero(n, n)};

  const Cplx lambda = eig.eigenvalues()[dominant];
  const Eigen::VectorXcd v = eig.eigenvectors().col(dominant);

  // Row eigenvector from the transpose, matched to the same eigenvalue.
  Eigen::EigenSolver<Eigen::MatrixXd> eig_t(Ac.transpose());
  if (eig_t.info() != Eigen::Success)
    throw ConvergenceFailure("eigensolver did not converge on transpose");
  Index match = 0;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < n; ++i) {
    const Scalar dist = std::abs(eig_t.eigenvalues()[i] - lambda);
    if (dist < best) {
      best = dist;
      match = i;
    }
  }
  const Eigen::VectorXcd w = eig_t.eigenvectors().col(match);

  const Cplx pairing = w.transpose() * v;
  if (std::abs(pairing) < 1e-10) {
    // Nearly defective dominant eigenvalue: the eigenpair sensitivity blows
    // up, so use the top singular pair of A as a stable ascent direction.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        Ac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Mat grad = svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
    return {rho, grad};
  }

  // d(rho) = Re(conj(lambda)/rho * d(lambda)), d(lambda) = w^T dA v / (w^T v).
  const Cplx scale = std::conj(lambda) / (rho * pairing);
  Mat grad(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      grad(r, c) = std::real(scale * w[r] * v[c]);
  return {rho, grad};
}

}  // namespace dkmpc
