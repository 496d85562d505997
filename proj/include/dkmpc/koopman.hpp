#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dkmpc/dataset.hpp"
#include "dkmpc/nnet.hpp"
#include "dkmpc/types.hpp"

namespace dkmpc {

// Autoencoder with a linear latent transition: encoder phi, decoder phi^-1,
// and bias-free nets realizing z_next = A z + B u.
struct KoopmanModel {
  Mlp encoder;  // n_x -> latent
  Mlp decoder;  // latent -> n_x
  Mlp a_net;    // latent -> latent, bias-free
  Mlp b_net;    // n_u -> latent, bias-free
  Normalizer normalizer;
  Index n_x = 0;
  Index n_u = 0;
  Index latent = 0;

  const Mat& A() const { return a_net.layer(0).weight.value; }
  const Mat& B() const { return b_net.layer(0).weight.value; }

  std::vector<Tensor*> parameters();
  void zero_grad();
};

// Encoder dims n_x -> hidden... -> latent with tanh hidden layers, decoder
// mirrored. A starts near 0.99 I (inside the stable region the stability
// penalty enforces) and B starts small.
KoopmanModel make_koopman_model(Index n_x, Index n_u, Index latent,
                                const std::vector<Index>& hidden,
                                const Normalizer& normalizer,
                                std::mt19937_64& rng);

// x is raw unless already_normalized; z = phi(normalized x).
Vec encode(const KoopmanModel& m, const Vec& x, bool already_normalized = false);
// Returns the denormalized state phi^-1(z) maps to.
Vec decode(const KoopmanModel& m, const Vec& z);
// Exactly A z + B u in normalized latent/input coordinates.
Vec latent_step(const KoopmanModel& m, const Vec& z, const Vec& u);

// Open loop: encode x0 once, advance the latent state with the raw input
// rows, decode every step. Returns inputs.rows() states; the final input
// row only pads the alignment and is never applied.
Mat predict_rollout(const KoopmanModel& m, const Vec& x0, const Mat& inputs);

struct LossWeights {
  Scalar recon = 1;
  Scalar linear = 50;
  Scalar stability = 1;
  Scalar l2_reg = 1e-4;
};

struct LossBreakdown {
  Scalar recon = 0;
  Scalar linear = 0;
  Scalar stability = 0;
  Scalar l2_reg = 0;
  Scalar total = 0;
  LossWeights weights;
};

// Batch means of the reconstruction and one-step linearity residuals plus
// the spectral-radius hinge and the weight-only L2 term.
LossBreakdown compute_loss(const KoopmanModel& m, const Mat& x, const Mat& u,
                           const Mat& x_next, const LossWeights& w);
LossBreakdown compute_loss(const KoopmanModel& m, const TripleSet& batch,
                           const LossWeights& w);

// Same value as compute_loss but also accumulates d(total)/d(parameter)
// into every parameter's grad slot (call zero_grad first for plain grads).
LossBreakdown loss_and_grad(KoopmanModel& m, const Mat& x, const Mat& u,
                            const Mat& x_next, const LossWeights& w);

struct TrainSettings {
  long epochs = 50;
  Index batch_size = 32;
  Scalar lr = 1e-4;
  LossWeights weights;
  std::uint64_t seed = 0;
};

struct EpochLog {
  long epoch = 0;  // 1-based
  LossBreakdown train;
  Scalar val_total = 0;
};

struct TrainResult {
  KoopmanModel model;       // after the last epoch
  KoopmanModel best_model;  // lowest validation total
  long best_epoch = 0;
  std::vector<EpochLog> log;
};

// Seeded-shuffle mini-batch Adam over all four networks jointly. Logged
// train losses are means over the epoch's batches with the total recomposed
// from the weighted component means.
TrainResult train(KoopmanModel m, const TripleSet& train_set,
                  const TripleSet& val_set, const TrainSettings& settings);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  long epoch = 0;
  Scalar train_total = 0;
  Scalar val_total = 0;
};

// Single JSON file: layer shapes, activation tags, weights flattened row by
// row with 17 significant digits, the normalizer, and training metadata.
void save_checkpoint(const KoopmanModel& m, const CheckpointMeta& meta,
                     const std::string& path);
std::pair<KoopmanModel, CheckpointMeta> load_checkpoint(const std::string& path);

// CSV log `epoch,recon,linear,stability,l2,total,val_total`.
void write_loss_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace dkmpc
