#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ipr/scan.hpp"

namespace ipr {

class Rng;

// Convolutional encoder with a shared feature trunk and three linear heads:
// a deterministic invariant code z_inv and the (mu, log_var) parameters of a
// Gaussian over the variant code. A linear decoder maps a combined latent
// back to the trunk feature vector so reconstruction quality can be scored.
//
// Trunk: conv3x3(1->c1, pad 1) -> tanh -> avgpool(p) -> conv3x3(c1->c2, pad 1)
//        -> tanh -> avgpool(p) -> flatten -> fully connected -> tanh = feature.
// All math runs in double precision; checkpoints store float32.
struct ModelConfig {
  int input_w = 64;  // side length of the input grid, divisible by pool^2
  int c1 = 4;        // channels after the first convolution
  int c2 = 8;        // channels after the second convolution
  int pool = 4;      // average-pooling window (applied twice)
  int d = 16;        // latent dimension (z_inv, mu, log_var)
  int f = 32;        // trunk feature dimension

  int pooled1_w() const { return input_w / pool; }
  int pooled2_w() const { return input_w / pool / pool; }
  int flat_dim() const { return c2 * pooled2_w() * pooled2_w(); }
  void validate() const;  // throws ConfigError on inconsistent dimensions
};

struct ModelParams {
  ModelConfig cfg;

  std::vector<double> conv1_w;  // c1 x 1 x 3 x 3
  std::vector<double> conv1_b;  // c1
  std::vector<double> conv2_w;  // c2 x c1 x 3 x 3
  std::vector<double> conv2_b;  // c2
  std::vector<double> fc_w;     // f x flat_dim
  std::vector<double> fc_b;     // f
  std::vector<double> head_inv_w;  // d x f
  std::vector<double> head_inv_b;  // d
  std::vector<double> head_mu_w;   // d x f
  std::vector<double> head_mu_b;   // d
  std::vector<double> head_lv_w;   // d x f
  std::vector<double> head_lv_b;   // d
  std::vector<double> dec_w;  // f x d
  std::vector<double> dec_b;  // f

  // Allocates every array for cfg and fills weights with small uniform
  // values (biases zero); deterministic in seed.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  size_t param_count() const;
  std::vector<double> to_flat() const;
  void from_flat(const std::vector<double>& flat);
};

// Gradient accumulator with the same shapes as ModelParams.
struct ModelGrads {
  ModelParams g;  // arrays reused as gradient storage
  explicit ModelGrads(const ModelConfig& cfg);
  void zero();
  std::vector<double> to_flat() const { return g.to_flat(); }
};

// Distribution parameters produced by one encoder pass.
struct LatentOutput {
  std::vector<double> z_inv;    // d
  std::vector<double> mu;       // d
  std::vector<double> log_var;  // d, clamped to [-10, 10]
  std::vector<double> feature;  // f, trunk output M
};

// Every intermediate activation needed to run the backward pass.
struct EncodeTrace {
  std::vector<double> input;      // input_w^2
  std::vector<double> conv1_pre;  // c1 x input_w^2
  std::vector<double> pool1;      // c1 x pooled1_w^2
  std::vector<double> conv2_pre;  // c2 x pooled1_w^2
  std::vector<double> pool2;      // flat_dim
  std::vector<double> fc_pre;     // f
  LatentOutput out;
  std::vector<double> log_var_raw;  // pre-clamp head output
};

LatentOutput encode(const ModelParams& params, const CartesianScan& scan);
EncodeTrace encode_traced(const ModelParams& params, const CartesianScan& scan);

// Accumulates parameter gradients for one scan given upstream gradients on
// the three head outputs and (optionally) directly on the trunk feature.
// Any of the gradient vectors may be empty to mean zero.
void encode_backward(const ModelParams& params, const EncodeTrace& trace,
                     const std::vector<double>& d_z_inv, const std::vector<double>& d_mu,
                     const std::vector<double>& d_log_var,
                     const std::vector<double>& d_feature, ModelGrads& grads);

// Linear decoder: latent z (d) -> reconstructed feature (f).
std::vector<double> decode(const ModelParams& params, const std::vector<double>& z);
// Accumulates decoder gradients and returns the gradient wrt z.
std::vector<double> decode_backward(const ModelParams& params, const std::vector<double>& z,
                                    const std::vector<double>& d_out, ModelGrads& grads);

// Reparameterized draw from N(mu, diag(exp(log_var))): mu + exp(lv/2) * eps.
// eps is returned so the backward pass can reuse it.
struct VariantSample {
  std::vector<double> z_v;
  std::vector<double> eps;
};
VariantSample sample_variant(const std::vector<double>& mu, const std::vector<double>& log_var,
                             Rng& rng);

// Combined latent used for retrieval: z = z_inv + z_v.
std::vector<double> combine_latent(const std::vector<double>& z_inv,
                                   const std::vector<double>& z_v);

// Deterministic inference output: z = z_inv + mu and the scalar uncertainty
// U = mean(exp(log_var)).
struct Embedding {
  std::vector<double> z;
  double u = 0.0;
};
Embedding inference_embedding(const ModelParams& params, const CartesianScan& scan);

// Scalar uncertainty summary of a diagonal Gaussian.
double uncertainty_from_log_var(const std::vector<double>& log_var);

// Checkpoint file ("VCPR"): header + float32 parameter arrays.
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace ipr
