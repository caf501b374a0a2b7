#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "ipr/errors.hpp"
#include "ipr/rng.hpp"
#include "ipr/scan_synth.hpp"
#include "ipr/training.hpp"
#include "test_util.hpp"

using namespace ipr;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.input_w = 16;
  cfg.c1 = 2;
  cfg.c2 = 3;
  cfg.pool = 4;
  cfg.d = 4;
  cfg.f = 6;
  return cfg;
}

TrainConfig tiny_train(int m = 2) {
  TrainConfig cfg;
  cfg.batch_size = m;
  cfg.temperature = 1.0;
  cfg.negative_margin = 0.1;
  cfg.seed = 0;
  return cfg;
}

Batch random_batch(const ModelConfig& model, int m, std::uint64_t seed) {
  Batch batch;
  for (int i = 0; i < m; ++i) {
    batch.originals.push_back(testutil::random_scan(model.input_w, 1.0, seed + 2 * i));
    batch.augmented.push_back(
        rotate_scan(testutil::random_scan(model.input_w, 1.0, seed + 2 * i), 0.3 * (i + 1)));
    batch.indices.push_back(i);
  }
  return batch;
}

std::vector<std::vector<double>> normalized_random(int m, int d, std::uint64_t seed) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < m; ++i) {
    std::vector<double> v = testutil::random_vec(static_cast<std::size_t>(d),
                                                 mix_seed(seed, static_cast<std::uint64_t>(i)),
                                                 -1.0, 1.0);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

// Noiseless structured session rendered from a small world; learnable.
std::vector<CartesianScan> toy_session(int frames) {
  const WorldModel world = WorldModel::random(404, 30, 30.0);
  const auto poses =
      generate_trajectory(world, RouteSpec::loop(0.0, 0.0, 20.0), frames, 5.0);
  std::vector<CartesianScan> scans;
  for (const Pose& p : poses) {
    const PolarScan polar = render_polar_scan(world, p, 36, 32, 1.0);
    scans.push_back(polar_to_cartesian(polar, 16, 2.0));
  }
  return scans;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("recognition probability reproduces the two-vector hand softmax") {
    const std::vector<std::vector<double>> batch = {{1.0, 0.0}, {0.0, 1.0}};
    const double p = recognition_prob(0, batch[1], batch, 1.0);
    CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
    CHECK(p == doctest::Approx(0.2689414213699951).epsilon(1e-9));
    const double q = recognition_prob(1, batch[1], batch, 1.0);
    CHECK(p + q == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("identical embeddings give the uniform distribution") {
    const std::vector<std::vector<double>> batch = {
        {0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}};
    for (int i = 0; i < 4; ++i)
      CHECK(recognition_prob(i, batch[0], batch, 1.0) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("large temperature flattens the distribution") {
    const auto batch = normalized_random(5, 8, 61);
    for (int i = 0; i < 5; ++i) {
      const double p = recognition_prob(i, batch[2], batch, 1e6);
      CHECK(std::abs(p - 0.2) <= 1e-6);
    }
  }

  TEST_CASE("the recognition distribution normalizes over the batch") {
    const auto batch = normalized_random(7, 6, 62);
    for (int j = 0; j < 7; ++j) {
      double sum = 0.0;
      for (int i = 0; i < 7; ++i) sum += recognition_prob(i, batch[j], batch, 0.7);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("invalid temperature or index is rejected") {
    const auto batch = normalized_random(3, 4, 63);
    CHECK_THROWS_AS(recognition_prob(0, batch[0], batch, 0.0), ConfigError);
    CHECK_THROWS_AS(recognition_prob(0, batch[0], batch, -1.0), ConfigError);
    CHECK_THROWS_AS(recognition_prob(5, batch[0], batch, 1.0), DataError);
    CHECK_THROWS_AS(contrastive_loss(batch, normalized_random(2, 4, 64), 1.0), DataError);
  }

  TEST_CASE("near-perfect discrimination drives the loss to zero") {
    // Orthonormal embeddings and a cold temperature saturate the softmax.
    const std::vector<std::vector<double>> batch = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0},
                                                    {0.0, 0.0, 1.0}};
    const double loss = contrastive_loss(batch, batch, 1e-3, 0.0);
    CHECK(loss >= 0.0);
    CHECK(loss <= 1e-6);
  }

  TEST_CASE("the two-vector contrastive loss matches its closed form") {
    const std::vector<std::vector<double>> batch = {{1.0, 0.0}, {0.0, 1.0}};
    // Positive terms: -log(e / (e + 1)) each; negatives: -log(1 - 1/(1+e)).
    // All four terms collapse to log(1 + exp(-1)).
    const double expected = 4.0 * std::log1p(std::exp(-1.0));
    CHECK(contrastive_loss(batch, batch, 1.0, 0.0) ==
          doctest::Approx(expected).epsilon(1e-12));
    // With the margin, every non-self similarity drops by 0.1.
    const double with_margin = 4.0 * std::log1p(std::exp(-1.1));
    CHECK(contrastive_loss(batch, batch, 1.0, 0.1) ==
          doctest::Approx(with_margin).epsilon(1e-12));
  }

  TEST_CASE("contrastive loss is invariant under consistent index permutation") {
    const auto batch = normalized_random(5, 6, 65);
    const auto augmented = normalized_random(5, 6, 66);
    const double base = contrastive_loss(batch, augmented, 0.9, 0.1);

    const std::vector<int> perm = {3, 0, 4, 1, 2};
    std::vector<std::vector<double>> batch_p, augmented_p;
    for (int idx : perm) {
      batch_p.push_back(batch[static_cast<std::size_t>(idx)]);
      augmented_p.push_back(augmented[static_cast<std::size_t>(idx)]);
    }
    CHECK(contrastive_loss(batch_p, augmented_p, 0.9, 0.1) ==
          doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("probability clamping keeps saturated losses finite") {
    // Extremely cold temperature pushes probabilities to the clamp rails.
    const std::vector<std::vector<double>> batch = {{1.0, 0.0}, {-1.0, 0.0}};
    const double loss = contrastive_loss(batch, batch, 1e-9, 0.0);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
  }

  TEST_CASE("divergence closed form matches hand values") {
    CHECK(kl_divergence({0.0, 0.0}, {0.0, 0.0}) == 0.0);
    CHECK(kl_divergence({1.0, 0.0}, {0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(kl_divergence({1.0}, {0.0, 0.0}), DataError);
  }

  TEST_CASE("divergence is non-negative over random parameters") {
    Rng rng(71);
    for (int trial = 0; trial < 10000; ++trial) {
      const auto mu = testutil::random_vec(3, rng.next_u64(), -3.0, 3.0);
      const auto lv = testutil::random_vec(3, rng.next_u64(), -10.0, 10.0);
      CHECK(kl_divergence(mu, lv) >= 0.0);
    }
  }

  TEST_CASE("divergence closed form agrees with quadrature on a spot check") {
    CHECK(kl_divergence({0.7}, {-0.5}) ==
          doctest::Approx(testutil::kl_quadrature_1d(0.7, -0.5)).epsilon(1e-8));
  }

  TEST_CASE("reconstruction distance is a plain Euclidean norm") {
    CHECK(reconstruction_loss({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(reconstruction_loss({0.0, 0.0}, {3.0, 4.0}) == 5.0);
    CHECK(reconstruction_loss({3.0, 4.0}, {0.0, 0.0}) == 5.0);
    CHECK_THROWS_AS(reconstruction_loss({1.0}, {1.0, 2.0}), DataError);
  }

  TEST_CASE("zero weights give zero total and zero gradients") {
    const ModelConfig model = tiny_model();
    const ModelParams params = ModelParams::init(model, 5);
    const Batch batch = random_batch(model, 2, 100);
    TrainConfig cfg = tiny_train(2);
    cfg.w_inv = cfg.w_var = cfg.w_kl = cfg.w_rec = 0.0;

    const LossBreakdown loss = total_loss(batch, params, cfg, 9);
    CHECK(loss.total == 0.0);

    const GradResult result = gradients(batch, params, cfg, 9);
    for (double g : result.grads.to_flat()) CHECK(g == 0.0);
  }

  TEST_CASE("a perfect decoder zeroes the reconstruction objective") {
    const ModelConfig model = tiny_model();
    ModelParams params = ModelParams::init(model, 5);
    params.from_flat(std::vector<double>(params.param_count(), 0.0));
    const Batch batch = random_batch(model, 2, 101);
    TrainConfig cfg = tiny_train(2);
    cfg.w_inv = cfg.w_var = cfg.w_kl = 0.0;
    cfg.w_rec = 1.0;

    // Zero parameters give a zero feature map and a zero reconstruction.
    const LossBreakdown loss = total_loss(batch, params, cfg, 10);
    CHECK(loss.l_rec == 0.0);
    CHECK(loss.total == 0.0);

    // The norm minimum is a stationary point.
    const GradResult result = gradients(batch, params, cfg, 10);
    for (double g : result.grads.to_flat()) CHECK(g == 0.0);
  }

  TEST_CASE("the loss breakdown satisfies its weighted-sum identity") {
    const ModelConfig model = tiny_model();
    const ModelParams params = ModelParams::init(model, 6);
    const Batch batch = random_batch(model, 3, 102);
    TrainConfig cfg = tiny_train(3);
    cfg.w_inv = 0.5;
    cfg.w_var = 2.0;
    cfg.w_kl = 0.25;
    cfg.w_rec = 1.5;

    const LossBreakdown loss = total_loss(batch, params, cfg, 11);
    const double expected = cfg.w_inv * loss.l_con_inv + cfg.w_var * loss.l_con_var +
                            cfg.w_kl * loss.kl + cfg.w_rec * loss.l_rec;
    CHECK(loss.total == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss.l_con_inv >= 0.0);
    CHECK(loss.l_con_var >= 0.0);
    CHECK(loss.kl >= 0.0);
    CHECK(loss.l_rec >= 0.0);
  }

  TEST_CASE("a fixed tiny batch reproduces the recorded golden breakdown") {
    const ModelConfig model = tiny_model();
    const ModelParams params = ModelParams::init(model, 5);
    const Batch batch = random_batch(model, 2, 103);
    const TrainConfig cfg = tiny_train(2);

    const LossBreakdown loss = total_loss(batch, params, cfg, 12);
    const LossBreakdown again = total_loss(batch, params, cfg, 12);
    CHECK(loss.total == again.total);  // same seed, same draws

    // Golden values frozen from the first verified run of this configuration.
    CHECK(loss.l_con_inv == doctest::Approx(2.5989892395424148).epsilon(1e-9));
    CHECK(loss.l_con_var == doctest::Approx(2.4913762425979664).epsilon(1e-9));
    CHECK(loss.kl == doctest::Approx(7.1929730049269202e-05).epsilon(1e-9));
    CHECK(loss.l_rec == doctest::Approx(3.636281105429009).epsilon(1e-9));
    CHECK(loss.total == doctest::Approx(8.7267185172994388).epsilon(1e-9));
  }

  TEST_CASE("analytic gradients match finite differences on a small model") {
    const ModelConfig model = tiny_model();
    const ModelParams params = ModelParams::init(model, 7);
    const Batch batch = random_batch(model, 2, 104);
    const TrainConfig cfg = tiny_train(2);
    const std::uint64_t seed = 13;

    const GradResult analytic = gradients(batch, params, cfg, seed);
    ModelParams probe = params;
    const auto loss_at = [&](const std::vector<double>& flat) {
      probe.from_flat(flat);
      return total_loss(batch, probe, cfg, seed).total;
    };
    const auto numeric = testutil::fd_gradient(loss_at, params.to_flat(), 1e-4);
    const auto cmp = testutil::compare_grads(analytic.grads.to_flat(), numeric, 1e-4, 1e-6);
    INFO("worst index ", cmp.worst_index, ": analytic ", cmp.analytic, " vs numeric ",
         cmp.numeric);
    CHECK(cmp.ok);
  }

  TEST_CASE("window-zero batches with a fixed angle are explicit rotations") {
    const std::vector<CartesianScan> session = {testutil::random_scan(16, 1.0, 200),
                                                testutil::random_scan(16, 1.0, 201),
                                                testutil::random_scan(16, 1.0, 202)};
    TrainConfig cfg = tiny_train(2);
    cfg.temporal_window = 0;
    cfg.rotate_random = false;
    cfg.rotate_fixed_angle = 0.0;

    Batch batch = make_batch(session, {0, 2}, cfg, 50);
    REQUIRE(batch.originals.size() == 2);
    CHECK(batch.originals[0].intensities == session[0].intensities);
    CHECK(batch.originals[1].intensities == session[2].intensities);
    CHECK(batch.augmented[0].intensities == session[0].intensities);
    CHECK(batch.augmented[1].intensities == session[2].intensities);

    cfg.rotate_fixed_angle = kTau / 4.0;
    batch = make_batch(session, {0, 2}, cfg, 50);
    CHECK(batch.augmented[0].intensities ==
          rotate_scan(session[0], kTau / 4.0).intensities);
    CHECK(batch.augmented[1].intensities ==
          rotate_scan(session[2], kTau / 4.0).intensities);
  }

  TEST_CASE("batch construction is seed-deterministic") {
    std::vector<CartesianScan> session;
    for (int i = 0; i < 8; ++i) session.push_back(testutil::random_scan(16, 1.0, 300 + i));
    TrainConfig cfg = tiny_train(3);
    cfg.temporal_window = 2;
    cfg.rotate_random = true;

    const Batch a = make_batch(session, {1, 4, 6}, cfg, 51);
    const Batch b = make_batch(session, {1, 4, 6}, cfg, 51);
    for (int i = 0; i < 3; ++i)
      CHECK(a.augmented[static_cast<std::size_t>(i)].intensities ==
            b.augmented[static_cast<std::size_t>(i)].intensities);

    const Batch c = make_batch(session, {1, 4, 6}, cfg, 52);
    bool any_diff = false;
    for (int i = 0; i < 3 && !any_diff; ++i)
      any_diff = a.augmented[static_cast<std::size_t>(i)].intensities !=
                 c.augmented[static_cast<std::size_t>(i)].intensities;
    CHECK(any_diff);
  }

  TEST_CASE("windows overhanging the session edges are clamped") {
    std::vector<CartesianScan> session;
    for (int i = 0; i < 3; ++i) session.push_back(testutil::random_scan(16, 1.0, 310 + i));
    TrainConfig cfg = tiny_train(2);
    cfg.temporal_window = 10;  // far beyond both edges
    const Batch batch = make_batch(session, {0, 2}, cfg, 53);
    CHECK(batch.originals.size() == 2);
    CHECK(batch.augmented.size() == 2);
    CHECK_THROWS_AS(make_batch(session, {7}, cfg, 53), DataError);
  }

  TEST_CASE("training for zero epochs leaves parameters untouched") {
    const ModelConfig model = tiny_model();
    ModelParams params = ModelParams::init(model, 8);
    const auto before = params.to_flat();
    TrainConfig cfg = tiny_train(2);
    cfg.epochs = 0;
    std::vector<std::vector<CartesianScan>> sessions = {{}};
    sessions[0] = {testutil::random_scan(16, 1.0, 400), testutil::random_scan(16, 1.0, 401),
                   testutil::random_scan(16, 1.0, 402), testutil::random_scan(16, 1.0, 403)};
    const TrainHistory history = train(sessions, params, cfg);
    CHECK(history.steps.empty());
    CHECK(params.to_flat() == before);
  }

  TEST_CASE("training is bitwise reproducible for one seed") {
    const ModelConfig model = tiny_model();
    TrainConfig cfg = tiny_train(2);
    cfg.epochs = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 5;
    std::vector<std::vector<CartesianScan>> sessions(1);
    for (int i = 0; i < 6; ++i)
      sessions[0].push_back(testutil::random_scan(16, 1.0, 500 + i));

    ModelParams a = ModelParams::init(model, 9);
    ModelParams b = ModelParams::init(model, 9);
    const TrainHistory ha = train(sessions, a, cfg);
    const TrainHistory hb = train(sessions, b, cfg);
    CHECK(a.to_flat() == b.to_flat());
    REQUIRE(ha.steps.size() == hb.steps.size());
    for (std::size_t i = 0; i < ha.steps.size(); ++i)
      CHECK(ha.steps[i].loss.total == hb.steps[i].loss.total);

    cfg.seed = 6;
    ModelParams c = ModelParams::init(model, 9);
    train(sessions, c, cfg);
    CHECK(a.to_flat() != c.to_flat());
  }

  TEST_CASE("loss falls over training on the noiseless toy loop") {
    const ModelConfig model = tiny_model();
    ModelParams params = ModelParams::init(model, 10);
    TrainConfig cfg = tiny_train(4);
    cfg.epochs = 6;
    cfg.learning_rate = 3e-3;
    cfg.temporal_window = 1;
    cfg.seed = 11;

    std::vector<std::vector<CartesianScan>> sessions = {toy_session(24)};
    const TrainHistory history = train(sessions, params, cfg);
    REQUIRE(history.epoch_means.size() == 6);
    CHECK(history.epoch_means.back().total < history.epoch_means.front().total);
  }

  TEST_CASE("non-finite losses abort with a component diagnostic") {
    const ModelConfig model = tiny_model();
    ModelParams params = ModelParams::init(model, 12);
    TrainConfig cfg = tiny_train(2);
    cfg.epochs = 1;
    std::vector<std::vector<CartesianScan>> sessions(1);
    for (int i = 0; i < 4; ++i)
      sessions[0].push_back(testutil::random_scan(16, 1.0, 600 + i));
    sessions[0][1].intensities[40] = std::numeric_limits<float>::quiet_NaN();

    CHECK_THROWS_WITH_AS(train(sessions, params, cfg), doctest::Contains("non-finite"),
                         NumericError);
  }

  TEST_CASE("training rejects undersized sessions") {
    const ModelConfig model = tiny_model();
    ModelParams params = ModelParams::init(model, 13);
    TrainConfig cfg = tiny_train(4);
    cfg.epochs = 1;
    std::vector<std::vector<CartesianScan>> sessions(1);
    for (int i = 0; i < 5; ++i)  // 5 < 2m = 8
      sessions[0].push_back(testutil::random_scan(16, 1.0, 700 + i));
    CHECK_THROWS_AS(train(sessions, params, cfg), DataError);
  }

  TEST_CASE("invalid train configurations are rejected") {
    TrainConfig cfg = tiny_train(2);
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_train(1);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_train(2);
    cfg.temperature = -0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_train(2);
    cfg.w_kl = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("loss history serializes one row per step") {
    testutil::TempDir dir("losses");
    TrainHistory history;
    history.steps.push_back({1, 0, {0.5, 0.25, 0.125, 1.0, 1.875}});
    history.steps.push_back({1, 1, {0.4, 0.2, 0.1, 0.9, 1.6}});
    const auto path = dir.path() / "loss.csv";
    save_loss_history(history, path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch,step,l_con_inv,l_con_var,kl,l_rec,total");
    int rows = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 2);
  }
}
