#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ipr/model.hpp"
#include "ipr/scan_synth.hpp"
#include "ipr/training.hpp"

namespace ipr::tools {

struct ScanParams {
  int azimuths = 100;       // A
  int bins = 256;           // B
  double bin_size = 0.5;    // meters
  int cartesian_w = 64;     // W
  double cell_size = 0.5;   // meters
};

struct SynthParams {
  int landmarks = 60;
  double extent = 70.0;          // half-width of the square world, meters
  std::string route = "loop";    // "loop" or "line"
  double route_x = 0.0;
  double route_y = 0.0;
  double route_param = 55.0;     // loop radius or line heading
  int frames = 48;
  double spacing = 7.0;          // meters between consecutive poses
  int traversals = 5;
  std::vector<double> noise_scales = {0.0, 0.5, 1.0, 1.5, 2.0};
};

struct MapParams {
  double match_threshold = 5.0;  // D_t, meters
  bool alg1_literal = false;
};

struct QueryParams {
  int k = 5;
  double threshold = 1.5;
};

struct EvalParams {
  double positive_radius = 25.0;
  double negative_radius = 50.0;
  double delta = 0.5;  // threshold-set half-range
  int nlevels = 10;    // threshold-set resolution N
};

// Whole-pipeline configuration, read from a sectioned key = value text file.
// Unknown sections or keys are rejected; missing keys keep these defaults.
struct PipelineConfig {
  std::uint64_t seed = 1;  // [run] seed
  ScanParams scan;
  NoiseConfig noise;  // base noise; per-traversal scaling via synth.noise_scales
  SynthParams synth;
  ModelConfig model;  // input_w is always synced from scan.cartesian_w
  TrainConfig train;  // seed is always synced from the run seed
  MapParams map;
  QueryParams query;
  EvalParams eval;

  void apply_seed(std::uint64_t s);
  void validate() const;
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical re-emission: fixed section/key order, shortest round-trip floats.
std::string emit_config(const PipelineConfig& cfg);

// Noise settings for one traversal: continuous fields scale linearly with s
// (sector count switches off at s = 0, blur count rounds).
NoiseConfig scale_noise(const NoiseConfig& base, double s);

}  // namespace ipr::tools
