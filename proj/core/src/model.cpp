#include "ipr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"
#include "ipr/rng.hpp"

namespace ipr {

namespace {

constexpr double kLogVarClamp = 10.0;

// out[oc][y][x] = b[oc] + sum over ic, 3x3 window (zero padded, stride 1)
void conv3x3_forward(const std::vector<double>& in, int w, int in_ch, int out_ch,
                     const std::vector<double>& wts, const std::vector<double>& bias,
                     std::vector<double>& out) {
  out.assign(static_cast<size_t>(out_ch) * w * w, 0.0);
  for (int oc = 0; oc < out_ch; ++oc) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= w) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= w) continue;
              acc += wts[((static_cast<size_t>(oc) * in_ch + ic) * 3 + ky) * 3 + kx] *
                     in[(static_cast<size_t>(ic) * w + sy) * w + sx];
            }
          }
        }
        out[(static_cast<size_t>(oc) * w + y) * w + x] = acc;
      }
    }
  }
}

void conv3x3_backward(const std::vector<double>& in, int w, int in_ch, int out_ch,
                      const std::vector<double>& wts, const std::vector<double>& d_out,
                      std::vector<double>& d_wts, std::vector<double>& d_bias,
                      std::vector<double>* d_in) {
  if (d_in) d_in->assign(static_cast<size_t>(in_ch) * w * w, 0.0);
  for (int oc = 0; oc < out_ch; ++oc) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        const double g = d_out[(static_cast<size_t>(oc) * w + y) * w + x];
        if (g == 0.0) continue;
        d_bias[oc] += g;
        for (int ic = 0; ic < in_ch; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= w) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= w) continue;
              const size_t wi = ((static_cast<size_t>(oc) * in_ch + ic) * 3 + ky) * 3 + kx;
              const size_t ii = (static_cast<size_t>(ic) * w + sy) * w + sx;
              d_wts[wi] += g * in[ii];
              if (d_in) (*d_in)[ii] += g * wts[wi];
            }
          }
        }
      }
    }
  }
}

void avgpool_forward(const std::vector<double>& in, int w, int ch, int p,
                     std::vector<double>& out) {
  const int ow = w / p;
  const double inv = 1.0 / (p * p);
  out.assign(static_cast<size_t>(ch) * ow * ow, 0.0);
  for (int c = 0; c < ch; ++c) {
    for (int oy = 0; oy < ow; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            acc += in[(static_cast<size_t>(c) * w + oy * p + dy) * w + ox * p + dx];
        out[(static_cast<size_t>(c) * ow + oy) * ow + ox] = acc * inv;
      }
    }
  }
}

void avgpool_backward(const std::vector<double>& d_out, int w, int ch, int p,
                      std::vector<double>& d_in) {
  const int ow = w / p;
  const double inv = 1.0 / (p * p);
  d_in.assign(static_cast<size_t>(ch) * w * w, 0.0);
  for (int c = 0; c < ch; ++c) {
    for (int oy = 0; oy < ow; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = d_out[(static_cast<size_t>(c) * ow + oy) * ow + ox] * inv;
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            d_in[(static_cast<size_t>(c) * w + oy * p + dy) * w + ox * p + dx] = g;
      }
    }
  }
}

std::vector<double> tanh_vec(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

// y = W x + b with W of shape rows x cols (row major)
void linear_forward(const std::vector<double>& wts, const std::vector<double>& bias,
                    const std::vector<double>& x, int rows, int cols,
                    std::vector<double>& out) {
  out.assign(static_cast<size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = bias[r];
    const double* row = wts.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

void linear_backward(const std::vector<double>& wts, const std::vector<double>& x,
                     const std::vector<double>& d_out, int rows, int cols,
                     std::vector<double>& d_wts, std::vector<double>& d_bias,
                     std::vector<double>* d_x) {
  for (int r = 0; r < rows; ++r) {
    const double g = d_out[r];
    if (g == 0.0) continue;
    d_bias[r] += g;
    double* d_row = d_wts.data() + static_cast<size_t>(r) * cols;
    const double* row = wts.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      d_row[c] += g * x[c];
      if (d_x) (*d_x)[c] += g * row[c];
    }
  }
}

void append_flat(std::vector<double>& flat, const std::vector<double>& v) {
  flat.insert(flat.end(), v.begin(), v.end());
}

size_t take_flat(const std::vector<double>& flat, size_t pos, std::vector<double>& v) {
  std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
  return pos + v.size();
}

}  // namespace

void ModelConfig::validate() const {
  if (input_w < 2) throw ConfigError("model input_w must be >= 2");
  if (c1 < 1 || c2 < 1) throw ConfigError("model channel counts must be >= 1");
  if (pool < 1) throw ConfigError("model pool must be >= 1");
  if (input_w % (pool * pool) != 0)
    throw ConfigError("model input_w must be divisible by pool^2");
  if (d < 1 || f < 1) throw ConfigError("model latent and feature dims must be >= 1");
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  Rng rng(mix_seed(seed, 0x6d /* model init stream */));
  auto fill = [&](std::vector<double>& v, size_t n, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    v.resize(n);
    for (double& x : v) x = rng.uniform(-bound, bound);
  };
  fill(p.conv1_w, static_cast<size_t>(cfg.c1) * 9, 9);
  p.conv1_b.assign(cfg.c1, 0.0);
  fill(p.conv2_w, static_cast<size_t>(cfg.c2) * cfg.c1 * 9, 9 * cfg.c1);
  p.conv2_b.assign(cfg.c2, 0.0);
  fill(p.fc_w, static_cast<size_t>(cfg.f) * cfg.flat_dim(), cfg.flat_dim());
  p.fc_b.assign(cfg.f, 0.0);
  fill(p.head_inv_w, static_cast<size_t>(cfg.d) * cfg.f, cfg.f);
  p.head_inv_b.assign(cfg.d, 0.0);
  fill(p.head_mu_w, static_cast<size_t>(cfg.d) * cfg.f, cfg.f);
  p.head_mu_b.assign(cfg.d, 0.0);
  fill(p.head_lv_w, static_cast<size_t>(cfg.d) * cfg.f, cfg.f);
  p.head_lv_b.assign(cfg.d, 0.0);
  fill(p.dec_w, static_cast<size_t>(cfg.f) * cfg.d, cfg.d);
  p.dec_b.assign(cfg.f, 0.0);
  return p;
}

size_t ModelParams::param_count() const {
  return conv1_w.size() + conv1_b.size() + conv2_w.size() + conv2_b.size() + fc_w.size() +
         fc_b.size() + head_inv_w.size() + head_inv_b.size() + head_mu_w.size() +
         head_mu_b.size() + head_lv_w.size() + head_lv_b.size() + dec_w.size() + dec_b.size();
}

std::vector<double> ModelParams::to_flat() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  append_flat(flat, conv1_w);
  append_flat(flat, conv1_b);
  append_flat(flat, conv2_w);
  append_flat(flat, conv2_b);
  append_flat(flat, fc_w);
  append_flat(flat, fc_b);
  append_flat(flat, head_inv_w);
  append_flat(flat, head_inv_b);
  append_flat(flat, head_mu_w);
  append_flat(flat, head_mu_b);
  append_flat(flat, head_lv_w);
  append_flat(flat, head_lv_b);
  append_flat(flat, dec_w);
  append_flat(flat, dec_b);
  return flat;
}

void ModelParams::from_flat(const std::vector<double>& flat) {
  if (flat.size() != param_count())
    throw DataError("flat parameter vector has the wrong length");
  size_t pos = 0;
  pos = take_flat(flat, pos, conv1_w);
  pos = take_flat(flat, pos, conv1_b);
  pos = take_flat(flat, pos, conv2_w);
  pos = take_flat(flat, pos, conv2_b);
  pos = take_flat(flat, pos, fc_w);
  pos = take_flat(flat, pos, fc_b);
  pos = take_flat(flat, pos, head_inv_w);
  pos = take_flat(flat, pos, head_inv_b);
  pos = take_flat(flat, pos, head_mu_w);
  pos = take_flat(flat, pos, head_mu_b);
  pos = take_flat(flat, pos, head_lv_w);
  pos = take_flat(flat, pos, head_lv_b);
  pos = take_flat(flat, pos, dec_w);
  pos = take_flat(flat, pos, dec_b);
}

ModelGrads::ModelGrads(const ModelConfig& cfg) {
  g.cfg = cfg;
  g.conv1_w.assign(static_cast<size_t>(cfg.c1) * 9, 0.0);
  g.conv1_b.assign(cfg.c1, 0.0);
  g.conv2_w.assign(static_cast<size_t>(cfg.c2) * cfg.c1 * 9, 0.0);
  g.conv2_b.assign(cfg.c2, 0.0);
  g.fc_w.assign(static_cast<size_t>(cfg.f) * cfg.flat_dim(), 0.0);
  g.fc_b.assign(cfg.f, 0.0);
  g.head_inv_w.assign(static_cast<size_t>(cfg.d) * cfg.f, 0.0);
  g.head_inv_b.assign(cfg.d, 0.0);
  g.head_mu_w.assign(static_cast<size_t>(cfg.d) * cfg.f, 0.0);
  g.head_mu_b.assign(cfg.d, 0.0);
  g.head_lv_w.assign(static_cast<size_t>(cfg.d) * cfg.f, 0.0);
  g.head_lv_b.assign(cfg.d, 0.0);
  g.dec_w.assign(static_cast<size_t>(cfg.f) * cfg.d, 0.0);
  g.dec_b.assign(cfg.f, 0.0);
}

void ModelGrads::zero() {
  auto z = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
  z(g.conv1_w);
  z(g.conv1_b);
  z(g.conv2_w);
  z(g.conv2_b);
  z(g.fc_w);
  z(g.fc_b);
  z(g.head_inv_w);
  z(g.head_inv_b);
  z(g.head_mu_w);
  z(g.head_mu_b);
  z(g.head_lv_w);
  z(g.head_lv_b);
  z(g.dec_w);
  z(g.dec_b);
}

EncodeTrace encode_traced(const ModelParams& params, const CartesianScan& scan) {
  const ModelConfig& cfg = params.cfg;
  if (scan.side_length != cfg.input_w)
    throw ConfigError("scan side length does not match the model input size");

  EncodeTrace t;
  const int w = cfg.input_w;
  t.input.resize(static_cast<size_t>(w) * w);
  for (size_t i = 0; i < t.input.size(); ++i) t.input[i] = scan.intensities[i];

  // Standardize the grid per scan: radar returns are sparse and the pooled
  // conv stack starves on near-zero inputs, so center and rescale to unit
  // variance (a flat scan maps to all zeros). This also makes the encoder
  // indifferent to global sensor gain.
  double mean = 0.0;
  for (double v : t.input) mean += v;
  mean /= static_cast<double>(t.input.size());
  double var = 0.0;
  for (double v : t.input) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.input.size());
  const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : t.input) v = (v - mean) * inv_std;

  conv3x3_forward(t.input, w, 1, cfg.c1, params.conv1_w, params.conv1_b, t.conv1_pre);
  const std::vector<double> act1 = tanh_vec(t.conv1_pre);
  avgpool_forward(act1, w, cfg.c1, cfg.pool, t.pool1);

  const int w1 = cfg.pooled1_w();
  conv3x3_forward(t.pool1, w1, cfg.c1, cfg.c2, params.conv2_w, params.conv2_b, t.conv2_pre);
  const std::vector<double> act2 = tanh_vec(t.conv2_pre);
  avgpool_forward(act2, w1, cfg.c2, cfg.pool, t.pool2);

  linear_forward(params.fc_w, params.fc_b, t.pool2, cfg.f, cfg.flat_dim(), t.fc_pre);
  t.out.feature = tanh_vec(t.fc_pre);

  linear_forward(params.head_inv_w, params.head_inv_b, t.out.feature, cfg.d, cfg.f,
                 t.out.z_inv);
  linear_forward(params.head_mu_w, params.head_mu_b, t.out.feature, cfg.d, cfg.f, t.out.mu);
  linear_forward(params.head_lv_w, params.head_lv_b, t.out.feature, cfg.d, cfg.f,
                 t.log_var_raw);
  t.out.log_var.resize(t.log_var_raw.size());
  for (size_t i = 0; i < t.log_var_raw.size(); ++i)
    t.out.log_var[i] = std::clamp(t.log_var_raw[i], -kLogVarClamp, kLogVarClamp);
  return t;
}

LatentOutput encode(const ModelParams& params, const CartesianScan& scan) {
  return encode_traced(params, scan).out;
}

void encode_backward(const ModelParams& params, const EncodeTrace& trace,
                     const std::vector<double>& d_z_inv, const std::vector<double>& d_mu,
                     const std::vector<double>& d_log_var,
                     const std::vector<double>& d_feature, ModelGrads& grads) {
  const ModelConfig& cfg = params.cfg;
  std::vector<double> d_feat(cfg.f, 0.0);
  if (!d_feature.empty()) d_feat = d_feature;

  if (!d_z_inv.empty())
    linear_backward(params.head_inv_w, trace.out.feature, d_z_inv, cfg.d, cfg.f,
                    grads.g.head_inv_w, grads.g.head_inv_b, &d_feat);
  if (!d_mu.empty())
    linear_backward(params.head_mu_w, trace.out.feature, d_mu, cfg.d, cfg.f,
                    grads.g.head_mu_w, grads.g.head_mu_b, &d_feat);
  if (!d_log_var.empty()) {
    std::vector<double> d_raw(cfg.d, 0.0);
    for (int i = 0; i < cfg.d; ++i)
      d_raw[i] = std::abs(trace.log_var_raw[i]) < kLogVarClamp ? d_log_var[i] : 0.0;
    linear_backward(params.head_lv_w, trace.out.feature, d_raw, cfg.d, cfg.f,
                    grads.g.head_lv_w, grads.g.head_lv_b, &d_feat);
  }

  std::vector<double> d_fc_pre(cfg.f);
  for (int i = 0; i < cfg.f; ++i) {
    const double y = trace.out.feature[i];
    d_fc_pre[i] = d_feat[i] * (1.0 - y * y);
  }

  std::vector<double> d_pool2(cfg.flat_dim(), 0.0);
  linear_backward(params.fc_w, trace.pool2, d_fc_pre, cfg.f, cfg.flat_dim(), grads.g.fc_w,
                  grads.g.fc_b, &d_pool2);

  const int w1 = cfg.pooled1_w();
  std::vector<double> d_act2;
  avgpool_backward(d_pool2, w1, cfg.c2, cfg.pool, d_act2);
  std::vector<double> d_conv2_pre(d_act2.size());
  for (size_t i = 0; i < d_act2.size(); ++i) {
    const double y = std::tanh(trace.conv2_pre[i]);
    d_conv2_pre[i] = d_act2[i] * (1.0 - y * y);
  }
  std::vector<double> d_pool1;
  conv3x3_backward(trace.pool1, w1, cfg.c1, cfg.c2, params.conv2_w, d_conv2_pre,
                   grads.g.conv2_w, grads.g.conv2_b, &d_pool1);

  const int w0 = cfg.input_w;
  std::vector<double> d_act1;
  avgpool_backward(d_pool1, w0, cfg.c1, cfg.pool, d_act1);
  std::vector<double> d_conv1_pre(d_act1.size());
  for (size_t i = 0; i < d_act1.size(); ++i) {
    const double y = std::tanh(trace.conv1_pre[i]);
    d_conv1_pre[i] = d_act1[i] * (1.0 - y * y);
  }
  conv3x3_backward(trace.input, w0, 1, cfg.c1, params.conv1_w, d_conv1_pre, grads.g.conv1_w,
                   grads.g.conv1_b, nullptr);
}

std::vector<double> decode(const ModelParams& params, const std::vector<double>& z) {
  if (z.size() != static_cast<size_t>(params.cfg.d))
    throw DataError("decode input does not match the latent width");
  std::vector<double> out;
  linear_forward(params.dec_w, params.dec_b, z, params.cfg.f, params.cfg.d, out);
  return out;
}

std::vector<double> decode_backward(const ModelParams& params, const std::vector<double>& z,
                                    const std::vector<double>& d_out, ModelGrads& grads) {
  std::vector<double> d_z(params.cfg.d, 0.0);
  linear_backward(params.dec_w, z, d_out, params.cfg.f, params.cfg.d, grads.g.dec_w,
                  grads.g.dec_b, &d_z);
  return d_z;
}

VariantSample sample_variant(const std::vector<double>& mu, const std::vector<double>& log_var,
                             Rng& rng) {
  VariantSample s;
  s.eps.resize(mu.size());
  s.z_v.resize(mu.size());
  for (size_t i = 0; i < mu.size(); ++i) {
    s.eps[i] = rng.normal();
    s.z_v[i] = mu[i] + std::exp(0.5 * log_var[i]) * s.eps[i];
  }
  return s;
}

std::vector<double> combine_latent(const std::vector<double>& z_inv,
                                   const std::vector<double>& z_v) {
  if (z_inv.size() != z_v.size())
    throw DataError("combine_latent components differ in width");
  std::vector<double> z(z_inv.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = z_inv[i] + z_v[i];
  return z;
}

double uncertainty_from_log_var(const std::vector<double>& log_var) {
  double acc = 0.0;
  for (double lv : log_var) acc += std::exp(lv);
  return acc / static_cast<double>(log_var.size());
}

Embedding inference_embedding(const ModelParams& params, const CartesianScan& scan) {
  const LatentOutput latent = encode(params, scan);
  Embedding e;
  e.z = combine_latent(latent.z_inv, latent.mu);
  e.u = uncertainty_from_log_var(latent.log_var);
  return e;
}

namespace {

constexpr char kModelMagic[4] = {'V', 'C', 'P', 'R'};
constexpr std::uint32_t kModelVersion = 1;

void write_f32_array(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) io::write_pod(out, static_cast<float>(x));
}

void read_f32_array(std::istream& in, std::vector<double>& v, size_t n, const char* what) {
  v.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float x;
    io::read_pod(in, x, what);
    v[i] = x;
  }
}

}  // namespace

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  params.cfg.validate();
  io::atomic_write(path, [&](std::ostream& out) {
    out.write(kModelMagic, 4);
    io::write_pod(out, kModelVersion);
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.input_w));
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.c1));
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.c2));
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.pool));
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.d));
    io::write_pod(out, static_cast<std::uint32_t>(params.cfg.f));
    write_f32_array(out, params.conv1_w);
    write_f32_array(out, params.conv1_b);
    write_f32_array(out, params.conv2_w);
    write_f32_array(out, params.conv2_b);
    write_f32_array(out, params.fc_w);
    write_f32_array(out, params.fc_b);
    write_f32_array(out, params.head_inv_w);
    write_f32_array(out, params.head_inv_b);
    write_f32_array(out, params.head_mu_w);
    write_f32_array(out, params.head_mu_b);
    write_f32_array(out, params.head_lv_w);
    write_f32_array(out, params.head_lv_b);
    write_f32_array(out, params.dec_w);
    write_f32_array(out, params.dec_b);
  });
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw DataError("not a model file: " + path.string());
  std::uint32_t version;
  io::read_pod(in, version, "model version");
  if (version != kModelVersion) throw DataError("unsupported model version");

  auto read_dim = [&](const char* what) {
    std::uint32_t v;
    io::read_pod(in, v, what);
    return static_cast<int>(v);
  };
  ModelConfig cfg;
  cfg.input_w = read_dim("model input_w");
  cfg.c1 = read_dim("model c1");
  cfg.c2 = read_dim("model c2");
  cfg.pool = read_dim("model pool");
  cfg.d = read_dim("model d");
  cfg.f = read_dim("model f");
  cfg.validate();

  ModelParams p;
  p.cfg = cfg;
  read_f32_array(in, p.conv1_w, static_cast<size_t>(cfg.c1) * 9, "conv1_w");
  read_f32_array(in, p.conv1_b, cfg.c1, "conv1_b");
  read_f32_array(in, p.conv2_w, static_cast<size_t>(cfg.c2) * cfg.c1 * 9, "conv2_w");
  read_f32_array(in, p.conv2_b, cfg.c2, "conv2_b");
  read_f32_array(in, p.fc_w, static_cast<size_t>(cfg.f) * cfg.flat_dim(), "fc_w");
  read_f32_array(in, p.fc_b, cfg.f, "fc_b");
  read_f32_array(in, p.head_inv_w, static_cast<size_t>(cfg.d) * cfg.f, "head_inv_w");
  read_f32_array(in, p.head_inv_b, cfg.d, "head_inv_b");
  read_f32_array(in, p.head_mu_w, static_cast<size_t>(cfg.d) * cfg.f, "head_mu_w");
  read_f32_array(in, p.head_mu_b, cfg.d, "head_mu_b");
  read_f32_array(in, p.head_lv_w, static_cast<size_t>(cfg.d) * cfg.f, "head_lv_w");
  read_f32_array(in, p.head_lv_b, cfg.d, "head_lv_b");
  read_f32_array(in, p.dec_w, static_cast<size_t>(cfg.f) * cfg.d, "dec_w");
  read_f32_array(in, p.dec_b, cfg.f, "dec_b");

  char extra;
  if (in.read(&extra, 1)) throw DataError("trailing bytes in model file");
  return p;
}

}  // namespace ipr
