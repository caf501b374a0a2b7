#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ipr/scan.hpp"

namespace ipr {

constexpr double kTau = 6.283185307179586476925286766559;  // 2*pi

// Wraps an angle into [0, 2*pi).
double normalize_angle(double radians);

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double reflectivity = 1.0;  // in [0, 1]
  double radius = 1.0;        // meters
};

// Square world of half-width `extent` centered on the origin. Regeneration
// from the same seed is bitwise identical.
struct WorldModel {
  std::vector<Landmark> landmarks;
  double extent = 100.0;
  std::uint64_t seed = 0;

  static WorldModel random(std::uint64_t seed, int landmark_count, double extent);
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // [0, 2*pi)
  double timestamp = 0.0;
};

// Either a straight segment (start point plus fixed heading) or a
// counterclockwise circular loop (center plus radius).
struct RouteSpec {
  enum class Kind { kLine, kLoop };
  Kind kind = Kind::kLoop;
  double x = 0.0;      // line start / loop center
  double y = 0.0;
  double param = 0.0;  // line heading (radians) / loop radius (meters)

  static RouteSpec line(double start_x, double start_y, double heading) {
    return RouteSpec{Kind::kLine, start_x, start_y, heading};
  }
  static RouteSpec loop(double center_x, double center_y, double radius) {
    return RouteSpec{Kind::kLoop, center_x, center_y, radius};
  }
};

// Poses along the route at fixed spacing, timestamps at the 4 Hz frame rate.
// Throws DataError if the route leaves the world extent.
std::vector<Pose> generate_trajectory(const WorldModel& world, const RouteSpec& route,
                                      int n_frames, double frame_spacing);

// Controllable degradations, applied as speckle -> saturation -> occlusion ->
// azimuthal blur. severity() is a monotone scalar summary used as the
// per-frame ground truth for calibration checks.
struct NoiseConfig {
  double speckle_sigma = 0.0;    // >= 0
  double saturation_prob = 0.0;  // [0, 1]
  int occlusion_sectors = 0;     // >= 0
  double occlusion_width = 0.0;  // radians
  int blur_azimuths = 0;         // >= 0
  std::uint64_t seed = 0;

  double severity() const;
  void validate() const;  // throws ConfigError on out-of-range fields
};

// Step angle of one azimuthal blur unit.
constexpr double kBlurStepRadians = kTau / 256.0;

// Ray-splat rendering: each landmark in range lights the (azimuth, range)
// cell under it, attenuated linearly with range, with a triangular falloff
// over the bins its disc subtends. Overlaps combine by max.
PolarScan render_polar_scan(const WorldModel& world, const Pose& pose, int azimuth_count,
                            int bin_count, double bin_size);

// Nearest-neighbor polar -> Cartesian resampling onto a W x W metric grid
// centered on the sensor. W must be even.
CartesianScan polar_to_cartesian(const PolarScan& scan, int side_length, double cell_size);

// Returns the degraded scan and the config's severity.
std::pair<CartesianScan, double> apply_noise(const CartesianScan& scan, const NoiseConfig& cfg);

// Nearest-neighbor rotation about the grid center (counterclockwise).
CartesianScan rotate_scan(const CartesianScan& scan, double angle);

// Trajectory CSV: header "frame,x,y,heading,timestamp", one row per pose.
void save_trajectory(const std::vector<Pose>& poses, const std::filesystem::path& path);
std::vector<Pose> load_trajectory(const std::filesystem::path& path);

}  // namespace ipr
