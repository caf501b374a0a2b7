#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ipr/model.hpp"
#include "ipr/scan.hpp"

namespace ipr {

// Four-term objective: an invariant contrastive loss on z_inv, a variant
// contrastive loss on z = z_inv + z_v (z_v reparameterized), a KL penalty
// pulling N(mu, diag(exp(log_var))) toward N(0, I), and a reconstruction
// loss on the decoded trunk feature. Optimized with plain SGD and
// hand-written gradients.
struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 8;         // m
  double temperature = 1.0;   // tau
  double negative_margin = 0.1;
  int epochs = 10;
  double w_inv = 1.0;
  double w_var = 1.0;
  double w_kl = 1.0;
  double w_rec = 1.0;
  int temporal_window = 2;    // +/- frames eligible as the augmented pair
  bool rotate_random = true;  // false -> use rotate_fixed_angle for every pair
  double rotate_fixed_angle = 0.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// m originals plus m augmented partners (rotated temporally-proximal frames).
struct Batch {
  std::vector<CartesianScan> originals;
  std::vector<CartesianScan> augmented;
  std::vector<int> indices;  // session frame index of each original
};

struct LossBreakdown {
  double l_con_inv = 0.0;
  double l_con_var = 0.0;
  double kl = 0.0;
  double l_rec = 0.0;
  double total = 0.0;
};

// P(i | query) = softmax over batch keys of z_k . z_j / tau, evaluated at i.
// Inputs are assumed L2-normalized already.
double recognition_prob(int i, const std::vector<double>& z_j,
                        const std::vector<std::vector<double>>& batch_z, double tau);

// Batch-criterion instance-discrimination loss:
//   -sum_i log P(i | aug_i)  -  sum_i sum_{j != i} log(1 - P(i | x_j)).
// `margin` is subtracted from every non-self similarity before the softmax.
// Probabilities are clamped to [1e-12, 1 - 1e-12] inside the logs.
// Inputs are assumed L2-normalized already.
double contrastive_loss(const std::vector<std::vector<double>>& batch_z,
                        const std::vector<std::vector<double>>& augmented_z, double tau,
                        double margin = 0.0);

// KL( N(mu, diag(exp(log_var))) || N(0, I) ), closed form:
// 0.5 * sum_i (exp(log_var_i) + mu_i^2 - 1 - log_var_i).
double kl_divergence(const std::vector<double>& mu, const std::vector<double>& log_var);

// Euclidean norm of the difference (not squared).
double reconstruction_loss(const std::vector<double>& m_r, const std::vector<double>& m_feat);

// Full forward pass over a batch. The reparameterization draws depend only on
// `seed`, so repeated calls with the same seed see the same noise.
LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const TrainConfig& cfg,
                         std::uint64_t seed);

// Analytic gradient of total_loss with the reparameterization noise held
// fixed (same draws as total_loss for the same seed).
struct GradResult {
  LossBreakdown loss;
  ModelGrads grads;
};
GradResult gradients(const Batch& batch, const ModelParams& params, const TrainConfig& cfg,
                     std::uint64_t seed);

// Builds a batch from one session: originals are session[indices[i]]; each
// augmented partner is a frame within +/- window of it, rotated. Offsets are
// clamped at the session edges; frame choice and angle are seed-deterministic.
Batch make_batch(const std::vector<CartesianScan>& session, const std::vector<int>& indices,
                 const TrainConfig& cfg, std::uint64_t seed);

struct StepRecord {
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
};
struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<LossBreakdown> epoch_means;
};

// SGD over shuffled fixed-size batches drawn within each session. Deterministic
// in cfg.seed. Throws NumericError naming the offending loss component if any
// step produces a non-finite value.
TrainHistory train(const std::vector<std::vector<CartesianScan>>& sessions,
                   ModelParams& params, const TrainConfig& cfg);

// CSV: epoch,step,l_con_inv,l_con_var,kl,l_rec,total
void save_loss_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace ipr
