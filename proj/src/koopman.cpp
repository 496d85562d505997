#include "dkmpc/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dkmpc/errors.hpp"

namespace dkmpc {

std::vector<Tensor*> KoopmanModel::parameters() {
  std::vector<Tensor*> out;
  for (Mlp* net : {&encoder, &decoder, &a_net, &b_net})
    for (Tensor* p : net->parameters()) out.push_back(p);
  return out;
}

void KoopmanModel::zero_grad() {
  encoder.zero_grad();
  decoder.zero_grad();
  a_net.zero_grad();
  b_net.zero_grad();
}

KoopmanModel make_koopman_model(Index n_x, Index n_u, Index latent,
                                const std::vector<Index>& hidden,
                                const Normalizer& normalizer,
                                std::mt19937_64& rng) {
  if (n_x < 1 || n_u < 1 || latent < 1)
    throw DimensionMismatch("model dims must be positive");
  if (normalizer.state_min.size() != n_x || normalizer.input_min.size() != n_u)
    throw DimensionMismatch("normalizer does not match model dims");

  std::vector<Index> enc_dims = {n_x};
  enc_dims.insert(enc_dims.end(), hidden.begin(), hidden.end());
  enc_dims.push_back(latent);
  std::vector<Index> dec_dims(enc_dims.rbegin(), enc_dims.rend());

  KoopmanModel m;
  m.n_x = n_x;
  m.n_u = n_u;
  m.latent = latent;
  m.normalizer = normalizer;
  m.encoder =
      Mlp::dense(enc_dims, Activation::kTanh, Activation::kIdentity, rng);
  m.decoder =
      Mlp::dense(dec_dims, Activation::kTanh, Activation::kIdentity, rng);
  // Noise scale keeps the initial radius below 1 even in the tails: the
  // eigenvalues of 0.99 I + eps G stay within eps * rho(G) of 0.99.
  m.a_net = Mlp::matrix(latent, latent);
  m.a_net.layer(0).weight.value =
      0.99 * Mat::Identity(latent, latent) +
      0.001 * glorot_uniform(latent, latent, rng);
  m.b_net = Mlp::matrix(latent, n_u);
  m.b_net.layer(0).weight.value = 0.01 * glorot_uniform(latent, n_u, rng);
  return m;
}

Vec encode(const KoopmanModel& m, const Vec& x, bool already_normalized) {
  if (x.size() != m.n_x) throw DimensionMismatch("encode: state length");
  const Vec xn = already_normalized ? x : m.normalizer.normalize_state(x);
  MlpTrace t;
  return m.encoder.forward(xn.transpose(), t).transpose();
}

Vec decode(const KoopmanModel& m, const Vec& z) {
  if (z.size() != m.latent) throw DimensionMismatch("decode: latent length");
  MlpTrace t;
  const Vec xn = m.decoder.forward(z.transpose(), t).transpose();
  return m.normalizer.denormalize_state(xn);
}

Vec latent_step(const KoopmanModel& m, const Vec& z, const Vec& u) {
  if (z.size() != m.latent) throw DimensionMismatch("latent_step: z length");
  if (u.size() != m.n_u) throw DimensionMismatch("latent_step: u length");
  return m.A() * z + m.B() * u;
}

Mat predict_rollout(const KoopmanModel& m, const Vec& x0, const Mat& inputs) {
  if (inputs.rows() < 1) throw DimensionMismatch("rollout: no steps");
  if (inputs.cols() != m.n_u) throw DimensionMismatch("rollout: input width");
  const Index T = inputs.rows();

  Mat zs(T, m.latent);
  zs.row(0) = encode(m, x0).transpose();
  for (Index k = 0; k + 1 < T; ++k) {
    const Vec u = m.normalizer.normalize_input(inputs.row(k).transpose());
    zs.row(k + 1) = latent_step(m, zs.row(k).transpose(), u).transpose();
  }

  MlpTrace t;
  const Mat decoded = m.decoder.forward(zs, t);
  Mat out(T, m.n_x);
  for (Index k = 0; k < T; ++k)
    out.row(k) =
        m.normalizer.denormalize_state(decoded.row(k).transpose()).transpose();
  return out;
}

namespace {

Scalar weight_l2(const KoopmanModel& m) {
  Scalar sum = 0;
  for (const Mlp* net : {&m.encoder, &m.decoder, &m.a_net, &m.b_net})
    for (std::size_t i = 0; i < net->layer_count(); ++i)
      sum += net->layer(i).weight.value.squaredNorm();
  return sum;
}

Scalar compose_total(const LossBreakdown& b) {
  return b.weights.recon * b.recon + b.weights.linear * b.linear +
         b.weights.stability * b.stability + b.weights.l2_reg * b.l2_reg;
}

void check_batch(const KoopmanModel& m, const Mat& x, const Mat& u,
                 const Mat& x_next) {
  if (x.rows() == 0) throw EmptyBatch("loss: empty batch");
  if (x.cols() != m.n_x || x_next.cols() != m.n_x || u.cols() != m.n_u ||
      u.rows() != x.rows() || x_next.rows() != x.rows())
    throw DimensionMismatch("loss: batch shapes do not match model dims");
}

}  // namespace

LossBreakdown compute_loss(const KoopmanModel& m, const Mat& x, const Mat& u,
                           const Mat& x_next, const LossWeights& w) {
  check_batch(m, x, u, x_next);
  const Scalar b = static_cast<Scalar>(x.rows());

  MlpTrace t_enc, t_dec, t_enc_next, t_a, t_b;
  const Mat z = m.encoder.forward(x, t_enc);
  const Mat x_rec = m.decoder.forward(z, t_dec);
  const Mat z_next = m.encoder.forward(x_next, t_enc_next);
  const Mat z_pred = m.a_net.forward(z, t_a) + m.b_net.forward(u, t_b);

  LossBreakdown out;
  out.weights = w;
  out.recon = (x_rec - x).squaredNorm() / b;
  out.linear = (z_next - z_pred).squaredNorm() / b;
  const Scalar rho = spectral_radius(m.A()).first;
  out.stability = rho > 1 ? (rho - 1) * (rho - 1) : 0;
  out.l2_reg = weight_l2(m);
  out.total = compose_total(out);
  return out;
}

LossBreakdown compute_loss(const KoopmanModel& m, const TripleSet& batch,
                           const LossWeights& w) {
  return compute_loss(m, batch.x, batch.u, batch.x_next, w);
}

LossBreakdown loss_and_grad(KoopmanModel& m, const Mat& x, const Mat& u,
                            const Mat& x_next, const LossWeights& w) {
  check_batch(m, x, u, x_next);
  const Scalar b = static_cast<Scalar>(x.rows());

  MlpTrace t_enc, t_dec, t_enc_next, t_a, t_b;
  const Mat z = m.encoder.forward(x, t_enc);
  const Mat x_rec = m.decoder.forward(z, t_dec);
  const Mat z_next = m.encoder.forward(x_next, t_enc_next);
  const Mat z_pred = m.a_net.forward(z, t_a) + m.b_net.forward(u, t_b);

  const Mat recon_res = x_rec - x;
  const Mat linear_res = z_next - z_pred;
  const auto [rho, rho_grad] = spectral_radius(m.A());

  LossBreakdown out;
  out.weights = w;
  out.recon = recon_res.squaredNorm() / b;
  out.linear = linear_res.squaredNorm() / b;
  out.stability = rho > 1 ? (rho - 1) * (rho - 1) : 0;
  out.l2_reg = weight_l2(m);
  out.total = compose_total(out);

  // Reconstruction path: through the decoder into the encoder.
  const Mat d_z_recon =
      m.decoder.backward(t_dec, (2 * w.recon / b) * recon_res);
  // Linearity path: the residual pulls the next-state encoding one way and
  // the A/B prediction the other.
  m.encoder.backward(t_enc_next, (2 * w.linear / b) * linear_res);
  const Mat d_upstream = (-2 * w.linear / b) * linear_res;
  const Mat d_z_a = m.a_net.backward(t_a, d_upstream);
  m.b_net.backward(t_b, d_upstream);
  m.encoder.backward(t_enc, d_z_recon + d_z_a);

  if (rho > 1)
    m.a_net.layer(0).weight.grad += (2 * w.stability * (rho - 1)) * rho_grad;

  for (Mlp* net : {&m.encoder, &m.decoder, &m.a_net, &m.b_net})
    for (std::size_t i = 0; i < net->layer_count(); ++i) {
      Layer& l = net->layer(i);
      l.weight.grad += (2 * w.l2_reg) * l.weight.value;
    }
  return out;
}

TrainResult train(KoopmanModel m, const TripleSet& train_set,
                  const TripleSet& val_set, const TrainSettings& settings) {
  if (train_set.size() == 0 || val_set.size() == 0)
    throw EmptyDataset("train: empty split");
  if (settings.batch_size < 1) throw EmptyBatch("train: batch size < 1");

  TrainResult result;
  std::mt19937_64 rng(settings.seed);
  AdamState opt;
  opt.lr = settings.lr;
  // Shorter second-moment memory tracks the loss surface change as the
  // encoder chart bends mid-training; the stock 0.999 leaves the first
  // epochs an order of magnitude short of their per-step potential.
  opt.beta2 = 0.99;

  std::vector<Index> order(train_set.size());
  std::iota(order.begin(), order.end(), Index(0));

  Scalar best_val = std::numeric_limits<Scalar>::infinity();
  result.best_model = m;

  for (long epoch = 1; epoch <= settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);

    Scalar sum_recon = 0, sum_linear = 0, sum_stab = 0, sum_l2 = 0;
    long batches = 0;
    for (Index start = 0; start < train_set.size();
         start += settings.batch_size) {
      const Index count =
          std::min<Index>(settings.batch_size, train_set.size() - start);
      Mat bx(count, m.n_x), bu(count, m.n_u), bxn(count, m.n_x);
      for (Index i = 0; i < count; ++i) {
        const Index row = order[start + i];
        bx.row(i) = train_set.x.row(row);
        bu.row(i) = train_set.u.row(row);
        bxn.row(i) = train_set.x_next.row(row);
      }

      m.zero_grad();
      const LossBreakdown batch_loss =
          loss_and_grad(m, bx, bu, bxn, settings.weights);
      if (!std::isfinite(batch_loss.total))
        throw DivergenceDetected("training loss is not finite at epoch " +
                                 std::to_string(epoch));
      adam_step(m.parameters(), opt);

      // Projected step: rescale A back onto the spectral ball whenever the
      // update leaves it, so checkpoints are stable by construction and the
      // fit can hold oscillatory modes at modulus one instead of fighting
      // the penalty just above it.
      const Scalar rho_now = spectral_radius(m.A()).first;
      if (rho_now > 1) m.a_net.layer(0).weight.value /= rho_now;

      sum_recon += batch_loss.recon;
      sum_linear += batch_loss.linear;
      sum_stab += batch_loss.stability;
      sum_l2 += batch_loss.l2_reg;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train.weights = settings.weights;
    entry.train.recon = sum_recon / batches;
    entry.train.linear = sum_linear / batches;
    entry.train.stability = sum_stab / batches;
    entry.train.l2_reg = sum_l2 / batches;
    entry.train.total = compose_total(entry.train);
    entry.val_total = compute_loss(m, val_set, settings.weights).total;
    result.log.push_back(entry);

    if (entry.val_total < best_val) {
      best_val = entry.val_total;
      result.best_model = m;
      result.best_epoch = epoch;
    }
  }

  result.model = std::move(m);
  if (settings.epochs == 0) result.best_model = result.model;
  return result;
}

namespace {

const char* activation_tag(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "identity";
}

Activation activation_from_tag(const std::string& tag) {
  if (tag == "identity") return Activation::kIdentity;
  if (tag == "tanh") return Activation::kTanh;
  if (tag == "relu") return Activation::kRelu;
  throw Error("unknown activation tag: " + tag);
}

void append_number(std::string& out, Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_array(std::string& out, const Scalar* data, Index count) {
  out += '[';
  for (Index i = 0; i < count; ++i) {
    if (i) out += ',';
    append_number(out, data[i]);
  }
  out += ']';
}

void append_mlp(std::string& out, const Mlp& net) {
  out += "{\"layers\":[";
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Layer& l = net.layer(i);
    if (i) out += ',';
    out += "{\"rows\":" + std::to_string(l.weight.rows());
    out += ",\"cols\":" + std::to_string(l.weight.cols());
    out += ",\"activation\":\"";
    out += activation_tag(l.activation);
    out += "\",\"weight\":";
    // Row-major storage, so data() already flattens row by row.
    append_array(out, l.weight.value.data(), l.weight.value.size());
    if (l.has_bias) {
      out += ",\"bias\":";
      append_array(out, l.bias.value.data(), l.bias.value.size());
    }
    out += '}';
  }
  out += "]}";
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& jl : j.at("layers")) {
    Layer l;
    const Index rows = jl.at("rows").get<Index>();
    const Index cols = jl.at("cols").get<Index>();
    const auto w = jl.at("weight").get<std::vector<Scalar>>();
    if (static_cast<Index>(w.size()) != rows * cols)
      throw Error("checkpoint: weight length does not match shape");
    l.weight = Tensor(Eigen::Map<const Mat>(w.data(), rows, cols));
    l.activation = activation_from_tag(jl.at("activation").get<std::string>());
    if (jl.contains("bias")) {
      const auto b = jl.at("bias").get<std::vector<Scalar>>();
      if (static_cast<Index>(b.size()) != rows)
        throw Error("checkpoint: bias length does not match shape");
      l.bias = Tensor(Eigen::Map<const Mat>(b.data(), rows, 1));
      l.has_bias = true;
    } else {
      l.has_bias = false;
    }
    net.add_layer(std::move(l));
  }
  return net;
}

}  // namespace

void save_checkpoint(const KoopmanModel& m, const CheckpointMeta& meta,
                     const std::string& path) {
  std::string out;
  out.reserve(1 << 20);
  out += "{\"n_x\":" + std::to_string(m.n_x);
  out += ",\"n_u\":" + std::to_string(m.n_u);
  out += ",\"latent\":" + std::to_string(m.latent);
  out += ",\"encoder\":";
  append_mlp(out, m.encoder);
  out += ",\"decoder\":";
  append_mlp(out, m.decoder);
  out += ",\"a\":";
  append_mlp(out, m.a_net);
  out += ",\"b\":";
  append_mlp(out, m.b_net);
  out += ",\"normalizer\":{\"state_min\":";
  append_array(out, m.normalizer.state_min.data(), m.normalizer.state_min.size());
  out += ",\"state_max\":";
  append_array(out, m.normalizer.state_max.data(), m.normalizer.state_max.size());
  out += ",\"input_min\":";
  append_array(out, m.normalizer.input_min.data(), m.normalizer.input_min.size());
  out += ",\"input_max\":";
  append_array(out, m.normalizer.input_max.data(), m.normalizer.input_max.size());
  out += "},\"meta\":{\"seed\":" + std::to_string(meta.seed);
  out += ",\"epoch\":" + std::to_string(meta.epoch);
  out += ",\"train_total\":";
  append_number(out, meta.train_total);
  out += ",\"val_total\":";
  append_number(out, meta.val_total);
  out += "}}\n";

  std::ofstream f(path);
  if (!f) throw Error("cannot write: " + path);
  f << out;
  if (!f) throw Error("write failed: " + path);
}

std::pair<KoopmanModel, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open: " + path);
  nlohmann::json j;
  f >> j;

  KoopmanModel m;
  m.n_x = j.at("n_x").get<Index>();
  m.n_u = j.at("n_u").get<Index>();
  m.latent = j.at("latent").get<Index>();
  m.encoder = mlp_from_json(j.at("encoder"));
  m.decoder = mlp_from_json(j.at("decoder"));
  m.a_net = mlp_from_json(j.at("a"));
  m.b_net = mlp_from_json(j.at("b"));

  const auto& jn = j.at("normalizer");
  const auto to_vec = [&](const char* key) {
    const auto list = jn.at(key).get<std::vector<Scalar>>();
    return Vec(Eigen::Map<const Vec>(list.data(), list.size()));
  };
  m.normalizer.state_min = to_vec("state_min");
  m.normalizer.state_max = to_vec("state_max");
  m.normalizer.input_min = to_vec("input_min");
  m.normalizer.input_max = to_vec("input_max");

  if (m.encoder.input_dim() != m.n_x || m.encoder.output_dim() != m.latent ||
      m.decoder.input_dim() != m.latent || m.decoder.output_dim() != m.n_x ||
      m.a_net.input_dim() != m.latent || m.a_net.output_dim() != m.latent ||
      m.b_net.input_dim() != m.n_u || m.b_net.output_dim() != m.latent ||
      m.normalizer.state_min.size() != m.n_x ||
      m.normalizer.input_min.size() != m.n_u)
    throw DimensionMismatch("checkpoint dims are inconsistent");

  CheckpointMeta meta;
  const auto& jm = j.at("meta");
  meta.seed = jm.at("seed").get<std::uint64_t>();
  meta.epoch = jm.at("epoch").get<long>();
  meta.train_total = jm.at("train_total").get<Scalar>();
  meta.val_total = jm.at("val_total").get<Scalar>();
  return {std::move(m), meta};
}

void write_loss_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write: " + path);
  f << "epoch,recon,linear,stability,l2,total,val_total\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf),
                  "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.train.recon, e.train.linear, e.train.stability,
                  e.train.l2_reg, e.train.total, e.val_total);
    f << buf;
  }
}

}  // namespace dkmpc
