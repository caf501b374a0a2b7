#include "ipr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"
#include "ipr/rng.hpp"
#include "ipr/scan_synth.hpp"

namespace ipr {

namespace {

constexpr double kProbEps = 1e-12;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

struct UnitVec {
  std::vector<double> unit;
  double norm = 0.0;
};

UnitVec l2_normalize(const std::vector<double>& v) {
  UnitVec u;
  u.norm = std::sqrt(dot(v, v));
  u.unit.assign(v.size(), 0.0);
  if (u.norm > 0.0)
    for (size_t i = 0; i < v.size(); ++i) u.unit[i] = v[i] / u.norm;
  return u;
}

// d/d_raw of a function of unit = raw/|raw|: project out the radial component.
std::vector<double> normalize_backward(const std::vector<double>& d_unit, const UnitVec& u) {
  std::vector<double> d_raw(d_unit.size(), 0.0);
  if (u.norm <= 0.0) return d_raw;
  const double radial = dot(d_unit, u.unit);
  for (size_t i = 0; i < d_unit.size(); ++i)
    d_raw[i] = (d_unit[i] - radial * u.unit[i]) / u.norm;
  return d_raw;
}

// Softmax over keys of (key_k . q - margin[k != self]) / tau.
std::vector<double> margin_softmax(const std::vector<std::vector<double>>& keys,
                                   const std::vector<double>& q, int self, double tau,
                                   double margin) {
  const size_t m = keys.size();
  std::vector<double> logits(m);
  for (size_t k = 0; k < m; ++k)
    logits[k] = (dot(keys[k], q) - (static_cast<int>(k) == self ? 0.0 : margin)) / tau;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (size_t k = 0; k < m; ++k) {
    logits[k] = std::exp(logits[k] - peak);
    denom += logits[k];
  }
  for (size_t k = 0; k < m; ++k) logits[k] /= denom;
  return logits;
}

bool clamped(double p) { return p <= kProbEps || p >= 1.0 - kProbEps; }

double log_clamped(double p) {
  return std::log(std::clamp(p, kProbEps, 1.0 - kProbEps));
}

double contrastive_from_units(const std::vector<std::vector<double>>& batch_z,
                              const std::vector<std::vector<double>>& augmented_z, double tau,
                              double margin) {
  const int m = static_cast<int>(batch_z.size());
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    const std::vector<double> probs = margin_softmax(batch_z, augmented_z[i], i, tau, margin);
    loss -= log_clamped(probs[i]);
  }
  for (int j = 0; j < m; ++j) {
    const std::vector<double> probs = margin_softmax(batch_z, batch_z[j], j, tau, margin);
    for (int i = 0; i < m; ++i)
      if (i != j) loss -= log_clamped(1.0 - probs[i]);
  }
  return loss;
}

// Gradient of contrastive_from_units wrt the unit embeddings, scaled by
// `weight` and accumulated into d_batch / d_aug. Terms whose probability hit
// the clamp contribute zero, matching the flat clamped forward value.
void contrastive_backward_units(const std::vector<std::vector<double>>& batch_z,
                                const std::vector<std::vector<double>>& augmented_z,
                                double tau, double margin, double weight,
                                std::vector<std::vector<double>>& d_batch,
                                std::vector<std::vector<double>>& d_aug) {
  const int m = static_cast<int>(batch_z.size());
  const double scale = weight / tau;

  // -sum_i log P(i | aug_i): d/dlogit_k = probs_k - [k == i]
  for (int i = 0; i < m; ++i) {
    const std::vector<double>& q = augmented_z[i];
    const std::vector<double> probs = margin_softmax(batch_z, q, i, tau, margin);
    if (clamped(probs[i])) continue;
    for (int k = 0; k < m; ++k) {
      const double dl = probs[k] - (k == i ? 1.0 : 0.0);
      if (dl == 0.0) continue;
      for (size_t t = 0; t < q.size(); ++t) {
        d_batch[k][t] += scale * dl * q[t];
        d_aug[i][t] += scale * dl * batch_z[k][t];
      }
    }
  }

  // -sum_j sum_{i != j} log(1 - P(i | x_j)):
  // d/dlogit_k = [k != j, active] p_k/(1-p_k) - p_k * sum_{i != j, active} p_i/(1-p_i)
  for (int j = 0; j < m; ++j) {
    const std::vector<double>& q = batch_z[j];
    const std::vector<double> probs = margin_softmax(batch_z, q, j, tau, margin);
    double ratio_sum = 0.0;
    std::vector<char> active(m, 0);
    for (int i = 0; i < m; ++i) {
      if (i == j || clamped(1.0 - probs[i])) continue;
      active[i] = 1;
      ratio_sum += probs[i] / (1.0 - probs[i]);
    }
    for (int k = 0; k < m; ++k) {
      double dl = -probs[k] * ratio_sum;
      if (active[k]) dl += probs[k] / (1.0 - probs[k]);
      if (dl == 0.0) continue;
      for (size_t t = 0; t < q.size(); ++t) {
        d_batch[k][t] += scale * dl * q[t];
        d_batch[j][t] += scale * dl * batch_z[k][t];
      }
    }
  }
}

struct ScanEval {
  EncodeTrace trace;
  VariantSample vs;
  std::vector<double> z;  // z_inv + z_v
  UnitVec zi_unit;
  UnitVec z_unit;
  std::vector<double> recon;
};

struct BatchEval {
  std::vector<ScanEval> scans;  // originals 0..m-1 then augmented m..2m-1
  int m = 0;
  LossBreakdown loss;
};

void validate_batch(const Batch& batch) {
  if (batch.originals.empty() || batch.originals.size() != batch.augmented.size())
    throw DataError("batch must hold matching non-empty original/augmented sets");
}

BatchEval evaluate_batch(const Batch& batch, const ModelParams& params, const TrainConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  validate_batch(batch);
  const int m = static_cast<int>(batch.originals.size());

  BatchEval ev;
  ev.m = m;
  ev.scans.reserve(static_cast<size_t>(2) * m);
  Rng rng(mix_seed(seed, 0xe5 /* reparameterization stream */));
  auto eval_scan = [&](const CartesianScan& scan) {
    ScanEval se;
    se.trace = encode_traced(params, scan);
    se.vs = sample_variant(se.trace.out.mu, se.trace.out.log_var, rng);
    se.z = combine_latent(se.trace.out.z_inv, se.vs.z_v);
    se.recon = decode(params, se.z);
    ev.scans.push_back(std::move(se));
  };
  for (int i = 0; i < m; ++i) eval_scan(batch.originals[i]);
  for (int i = 0; i < m; ++i) eval_scan(batch.augmented[i]);

  // Center each embedding stream on its batch mean before normalizing. The
  // component shared by every scan in the batch then cancels out of the
  // contrastive terms, so a configuration where all embeddings coincide is a
  // repeller of the training dynamics instead of a zero-gradient fixed point.
  const int d = params.cfg.d;
  const double n2 = static_cast<double>(2 * m);
  std::vector<double> mean_zi(static_cast<size_t>(d), 0.0);
  std::vector<double> mean_z(static_cast<size_t>(d), 0.0);
  for (const ScanEval& se : ev.scans)
    for (int t = 0; t < d; ++t) {
      mean_zi[static_cast<size_t>(t)] += se.trace.out.z_inv[static_cast<size_t>(t)];
      mean_z[static_cast<size_t>(t)] += se.z[static_cast<size_t>(t)];
    }
  for (int t = 0; t < d; ++t) {
    mean_zi[static_cast<size_t>(t)] /= n2;
    mean_z[static_cast<size_t>(t)] /= n2;
  }
  for (ScanEval& se : ev.scans) {
    std::vector<double> zi_c(static_cast<size_t>(d)), z_c(static_cast<size_t>(d));
    for (int t = 0; t < d; ++t) {
      zi_c[static_cast<size_t>(t)] =
          se.trace.out.z_inv[static_cast<size_t>(t)] - mean_zi[static_cast<size_t>(t)];
      z_c[static_cast<size_t>(t)] = se.z[static_cast<size_t>(t)] - mean_z[static_cast<size_t>(t)];
    }
    se.zi_unit = l2_normalize(zi_c);
    se.z_unit = l2_normalize(z_c);
  }

  std::vector<std::vector<double>> zi_orig(m), zi_aug(m), z_orig(m), z_aug(m);
  for (int i = 0; i < m; ++i) {
    zi_orig[i] = ev.scans[i].zi_unit.unit;
    z_orig[i] = ev.scans[i].z_unit.unit;
    zi_aug[i] = ev.scans[m + i].zi_unit.unit;
    z_aug[i] = ev.scans[m + i].z_unit.unit;
  }

  LossBreakdown& loss = ev.loss;
  loss.l_con_inv = contrastive_from_units(zi_orig, zi_aug, cfg.temperature, cfg.negative_margin);
  loss.l_con_var = contrastive_from_units(z_orig, z_aug, cfg.temperature, cfg.negative_margin);
  for (const ScanEval& se : ev.scans) {
    loss.kl += kl_divergence(se.trace.out.mu, se.trace.out.log_var);
    loss.l_rec += reconstruction_loss(se.recon, se.trace.out.feature);
  }
  loss.total = cfg.w_inv * loss.l_con_inv + cfg.w_var * loss.l_con_var + cfg.w_kl * loss.kl +
               cfg.w_rec * loss.l_rec;
  return ev;
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (temperature <= 0.0) throw ConfigError("temperature must be > 0");
  if (negative_margin < 0.0) throw ConfigError("negative_margin must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (w_inv < 0.0 || w_var < 0.0 || w_kl < 0.0 || w_rec < 0.0)
    throw ConfigError("loss weights must be >= 0");
  if (temporal_window < 0) throw ConfigError("temporal_window must be >= 0");
}

double recognition_prob(int i, const std::vector<double>& z_j,
                        const std::vector<std::vector<double>>& batch_z, double tau) {
  if (tau <= 0.0) throw ConfigError("temperature must be > 0");
  if (batch_z.empty() || i < 0 || i >= static_cast<int>(batch_z.size()))
    throw DataError("recognition_prob index out of range");
  const std::vector<double> probs = margin_softmax(batch_z, z_j, i, tau, 0.0);
  return probs[static_cast<size_t>(i)];
}

double contrastive_loss(const std::vector<std::vector<double>>& batch_z,
                        const std::vector<std::vector<double>>& augmented_z, double tau,
                        double margin) {
  if (tau <= 0.0) throw ConfigError("temperature must be > 0");
  if (batch_z.empty() || batch_z.size() != augmented_z.size())
    throw DataError("contrastive_loss needs matching non-empty embedding sets");
  return contrastive_from_units(batch_z, augmented_z, tau, margin);
}

double kl_divergence(const std::vector<double>& mu, const std::vector<double>& log_var) {
  if (mu.size() != log_var.size())
    throw DataError("kl_divergence dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < mu.size(); ++i)
    acc += std::exp(log_var[i]) + mu[i] * mu[i] - 1.0 - log_var[i];
  return 0.5 * acc;
}

double reconstruction_loss(const std::vector<double>& m_r, const std::vector<double>& m_feat) {
  if (m_r.size() != m_feat.size())
    throw DataError("reconstruction_loss dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < m_r.size(); ++i) {
    const double d = m_r[i] - m_feat[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const TrainConfig& cfg,
                         std::uint64_t seed) {
  return evaluate_batch(batch, params, cfg, seed).loss;
}

GradResult gradients(const Batch& batch, const ModelParams& params, const TrainConfig& cfg,
                     std::uint64_t seed) {
  BatchEval ev = evaluate_batch(batch, params, cfg, seed);
  const int m = ev.m;
  const int d = params.cfg.d;

  GradResult result{ev.loss, ModelGrads(params.cfg)};

  // Gradients on the normalized embedding streams from both contrastive terms.
  std::vector<std::vector<double>> d_zi(2 * m, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> d_z(2 * m, std::vector<double>(d, 0.0));
  {
    std::vector<std::vector<double>> zi_orig(m), zi_aug(m), z_orig(m), z_aug(m);
    for (int i = 0; i < m; ++i) {
      zi_orig[i] = ev.scans[i].zi_unit.unit;
      z_orig[i] = ev.scans[i].z_unit.unit;
      zi_aug[i] = ev.scans[m + i].zi_unit.unit;
      z_aug[i] = ev.scans[m + i].z_unit.unit;
    }
    std::vector<std::vector<double>> d_zi_orig(m, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> d_zi_aug(m, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> d_z_orig(m, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> d_z_aug(m, std::vector<double>(d, 0.0));
    if (cfg.w_inv != 0.0)
      contrastive_backward_units(zi_orig, zi_aug, cfg.temperature, cfg.negative_margin,
                                 cfg.w_inv, d_zi_orig, d_zi_aug);
    if (cfg.w_var != 0.0)
      contrastive_backward_units(z_orig, z_aug, cfg.temperature, cfg.negative_margin,
                                 cfg.w_var, d_z_orig, d_z_aug);
    for (int i = 0; i < m; ++i) {
      d_zi[i] = std::move(d_zi_orig[i]);
      d_zi[m + i] = std::move(d_zi_aug[i]);
      d_z[i] = std::move(d_z_orig[i]);
      d_z[m + i] = std::move(d_z_aug[i]);
    }
  }

  // The contrastive gradients land on the centered vectors; centering
  // backward subtracts the batch-mean gradient from every scan's share.
  std::vector<std::vector<double>> d_zi_cent(2 * static_cast<size_t>(m));
  std::vector<std::vector<double>> d_z_cent(2 * static_cast<size_t>(m));
  std::vector<double> mean_d_zi(static_cast<size_t>(d), 0.0);
  std::vector<double> mean_d_z(static_cast<size_t>(d), 0.0);
  for (int s = 0; s < 2 * m; ++s) {
    d_zi_cent[s] = normalize_backward(d_zi[s], ev.scans[s].zi_unit);
    d_z_cent[s] = normalize_backward(d_z[s], ev.scans[s].z_unit);
    for (int t = 0; t < d; ++t) {
      mean_d_zi[static_cast<size_t>(t)] += d_zi_cent[s][static_cast<size_t>(t)];
      mean_d_z[static_cast<size_t>(t)] += d_z_cent[s][static_cast<size_t>(t)];
    }
  }
  for (int t = 0; t < d; ++t) {
    mean_d_zi[static_cast<size_t>(t)] /= static_cast<double>(2 * m);
    mean_d_z[static_cast<size_t>(t)] /= static_cast<double>(2 * m);
  }

  for (int s = 0; s < 2 * m; ++s) {
    const ScanEval& se = ev.scans[s];
    const std::vector<double>& mu = se.trace.out.mu;
    const std::vector<double>& lv = se.trace.out.log_var;

    std::vector<double> d_zi_raw(static_cast<size_t>(d));
    std::vector<double> d_z_raw(static_cast<size_t>(d));
    for (int t = 0; t < d; ++t) {
      d_zi_raw[static_cast<size_t>(t)] =
          d_zi_cent[s][static_cast<size_t>(t)] - mean_d_zi[static_cast<size_t>(t)];
      d_z_raw[static_cast<size_t>(t)] =
          d_z_cent[s][static_cast<size_t>(t)] - mean_d_z[static_cast<size_t>(t)];
    }

    // Reconstruction: d||r - M|| flows into the decoder (and through z) and
    // directly into the trunk feature.
    std::vector<double> d_feature(params.cfg.f, 0.0);
    if (cfg.w_rec != 0.0) {
      double norm = 0.0;
      std::vector<double> delta(se.recon.size());
      for (size_t t = 0; t < delta.size(); ++t) {
        delta[t] = se.recon[t] - se.trace.out.feature[t];
        norm += delta[t] * delta[t];
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        std::vector<double> d_recon(delta.size());
        for (size_t t = 0; t < delta.size(); ++t) {
          d_recon[t] = cfg.w_rec * delta[t] / norm;
          d_feature[t] = -cfg.w_rec * delta[t] / norm;
        }
        const std::vector<double> d_z_dec =
            decode_backward(params, se.z, d_recon, result.grads);
        for (int t = 0; t < d; ++t) d_z_raw[t] += d_z_dec[t];
      }
    }

    // z = z_inv + mu + exp(lv/2) * eps, plus the KL term's own pulls.
    std::vector<double> d_z_inv(d), d_mu(d), d_lv(d);
    for (int t = 0; t < d; ++t) {
      d_z_inv[t] = d_zi_raw[t] + d_z_raw[t];
      d_mu[t] = d_z_raw[t] + cfg.w_kl * mu[t];
      d_lv[t] = d_z_raw[t] * se.vs.eps[t] * 0.5 * std::exp(0.5 * lv[t]) +
                cfg.w_kl * 0.5 * (std::exp(lv[t]) - 1.0);
    }
    encode_backward(params, se.trace, d_z_inv, d_mu, d_lv, d_feature, result.grads);
  }
  return result;
}

Batch make_batch(const std::vector<CartesianScan>& session, const std::vector<int>& indices,
                 const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (session.empty()) throw DataError("make_batch needs a non-empty session");
  const int n = static_cast<int>(session.size());
  Batch batch;
  batch.indices = indices;
  Rng rng(mix_seed(seed, 0xba /* augmentation stream */));
  for (int idx : indices) {
    if (idx < 0 || idx >= n) throw DataError("batch index out of session range");
    batch.originals.push_back(session[static_cast<size_t>(idx)]);
    int partner = idx;
    if (cfg.temporal_window > 0) {
      const int offset =
          static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(cfg.temporal_window) + 1)) -
          cfg.temporal_window;
      partner = std::clamp(idx + offset, 0, n - 1);
    }
    const double angle =
        cfg.rotate_random ? rng.uniform(0.0, kTau) : cfg.rotate_fixed_angle;
    batch.augmented.push_back(rotate_scan(session[static_cast<size_t>(partner)], angle));
  }
  return batch;
}

namespace {

void check_finite(const LossBreakdown& loss, int epoch, int step) {
  auto bad = [](double v) { return !std::isfinite(v); };
  const char* component = nullptr;
  if (bad(loss.l_con_inv)) component = "invariant contrastive loss";
  else if (bad(loss.l_con_var)) component = "variant contrastive loss";
  else if (bad(loss.kl)) component = "kl divergence";
  else if (bad(loss.l_rec)) component = "reconstruction loss";
  else if (bad(loss.total)) component = "total loss";
  if (component)
    throw NumericError("non-finite " + std::string(component) + " at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step));
}

}  // namespace

TrainHistory train(const std::vector<std::vector<CartesianScan>>& sessions,
                   ModelParams& params, const TrainConfig& cfg) {
  cfg.validate();
  const int m = cfg.batch_size;
  size_t total = 0;
  for (const auto& s : sessions) total += s.size();
  if (total < static_cast<size_t>(2 * m))
    throw DataError("training needs at least 2 * batch_size scans");
  bool any_usable = false;
  for (const auto& s : sessions) any_usable |= s.size() >= static_cast<size_t>(m);
  if (!any_usable) throw DataError("no session holds a full batch");

  TrainHistory history;
  std::uint64_t step_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Chunk each session's shuffled frame list into batches, then shuffle
    // the batch order across sessions.
    std::vector<std::pair<int, std::vector<int>>> groups;
    Rng order_rng(mix_seed(cfg.seed, 0x0e00 + static_cast<std::uint64_t>(epoch)));
    for (size_t s = 0; s < sessions.size(); ++s) {
      const int n = static_cast<int>(sessions[s].size());
      if (n < m) continue;
      std::vector<int> idx(static_cast<size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      for (int i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)],
                  idx[order_rng.below(static_cast<std::uint64_t>(i) + 1)]);
      for (int start = 0; start + m <= n; start += m)
        groups.emplace_back(static_cast<int>(s),
                            std::vector<int>(idx.begin() + start, idx.begin() + start + m));
    }
    for (size_t i = groups.size(); i > 1; --i)
      std::swap(groups[i - 1], groups[order_rng.below(i)]);

    LossBreakdown epoch_sum;
    for (size_t t = 0; t < groups.size(); ++t) {
      const std::uint64_t batch_seed = mix_seed(cfg.seed, 0x1000 + step_counter);
      const std::uint64_t noise_seed = mix_seed(cfg.seed, 0x2000 + step_counter);
      ++step_counter;

      const Batch batch =
          make_batch(sessions[static_cast<size_t>(groups[t].first)], groups[t].second, cfg,
                     batch_seed);
      GradResult r = gradients(batch, params, cfg, noise_seed);
      check_finite(r.loss, epoch, static_cast<int>(t));

      std::vector<double> flat = params.to_flat();
      const std::vector<double> gflat = r.grads.to_flat();
      for (size_t k = 0; k < flat.size(); ++k) flat[k] -= cfg.learning_rate * gflat[k];
      params.from_flat(flat);

      history.steps.push_back({epoch, static_cast<int>(t), r.loss});
      epoch_sum.l_con_inv += r.loss.l_con_inv;
      epoch_sum.l_con_var += r.loss.l_con_var;
      epoch_sum.kl += r.loss.kl;
      epoch_sum.l_rec += r.loss.l_rec;
      epoch_sum.total += r.loss.total;
    }
    const double inv_steps = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());
    history.epoch_means.push_back({epoch_sum.l_con_inv * inv_steps,
                                   epoch_sum.l_con_var * inv_steps, epoch_sum.kl * inv_steps,
                                   epoch_sum.l_rec * inv_steps, epoch_sum.total * inv_steps});
  }
  return history;
}

void save_loss_history(const TrainHistory& history, const std::filesystem::path& path) {
  io::atomic_write(
      path,
      [&](std::ostream& out) {
        out << "epoch,step,l_con_inv,l_con_var,kl,l_rec,total\n";
        for (const StepRecord& rec : history.steps) {
          out << rec.epoch << ',' << rec.step << ',' << io::fmt_double(rec.loss.l_con_inv)
              << ',' << io::fmt_double(rec.loss.l_con_var) << ','
              << io::fmt_double(rec.loss.kl) << ',' << io::fmt_double(rec.loss.l_rec) << ','
              << io::fmt_double(rec.loss.total) << '\n';
        }
      },
      /*binary=*/false);
}

}  // namespace ipr
