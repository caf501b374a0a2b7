#include "ipr/scan_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"
#include "ipr/rng.hpp"

namespace ipr {

double normalize_angle(double radians) {
  double a = std::fmod(radians, kTau);
  if (a < 0.0) a += kTau;
  if (a >= kTau) a = 0.0;  // fmod can land exactly on 2*pi after the add
  return a;
}

WorldModel WorldModel::random(std::uint64_t seed, int landmark_count, double extent) {
  if (landmark_count < 0) throw ConfigError("landmark count must be >= 0");
  if (extent <= 0.0) throw ConfigError("world extent must be > 0");
  WorldModel world;
  world.extent = extent;
  world.seed = seed;
  Rng rng(mix_seed(seed, 0x77 /* world stream */));
  world.landmarks.reserve(static_cast<size_t>(landmark_count));
  for (int i = 0; i < landmark_count; ++i) {
    Landmark lm;
    lm.x = rng.uniform(-extent, extent);
    lm.y = rng.uniform(-extent, extent);
    lm.reflectivity = rng.uniform(0.3, 1.0);
    lm.radius = rng.uniform(0.4, 1.6);
    world.landmarks.push_back(lm);
  }
  return world;
}

std::vector<Pose> generate_trajectory(const WorldModel& world, const RouteSpec& route,
                                      int n_frames, double frame_spacing) {
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (frame_spacing <= 0.0) throw ConfigError("frame_spacing must be > 0");
  constexpr double kFramePeriod = 0.25;  // 4 Hz scan rate

  std::vector<Pose> poses;
  poses.reserve(static_cast<size_t>(n_frames));
  if (route.kind == RouteSpec::Kind::kLine) {
    const double heading = normalize_angle(route.param);
    const double dir_x = std::cos(heading);
    const double dir_y = std::sin(heading);
    for (int i = 0; i < n_frames; ++i) {
      Pose p;
      p.x = route.x + i * frame_spacing * dir_x;
      p.y = route.y + i * frame_spacing * dir_y;
      p.heading = heading;
      p.timestamp = i * kFramePeriod;
      poses.push_back(p);
    }
  } else {
    const double radius = route.param;
    if (radius <= 0.0) throw ConfigError("loop radius must be > 0");
    const double step = frame_spacing / radius;  // arc length -> angle
    for (int i = 0; i < n_frames; ++i) {
      const double beta = i * step;
      Pose p;
      p.x = route.x + radius * std::cos(beta);
      p.y = route.y + radius * std::sin(beta);
      p.heading = normalize_angle(beta + kTau / 4.0);  // tangent, counterclockwise
      p.timestamp = i * kFramePeriod;
      poses.push_back(p);
    }
  }
  for (const Pose& p : poses) {
    if (std::abs(p.x) > world.extent || std::abs(p.y) > world.extent)
      throw DataError("route leaves the world extent");
  }
  return poses;
}

double NoiseConfig::severity() const {
  return speckle_sigma + saturation_prob + occlusion_sectors * (occlusion_width / kTau) +
         blur_azimuths / 256.0;
}

void NoiseConfig::validate() const {
  if (speckle_sigma < 0.0) throw ConfigError("speckle_sigma must be >= 0");
  if (saturation_prob < 0.0 || saturation_prob > 1.0)
    throw ConfigError("saturation_prob must be in [0, 1]");
  if (occlusion_sectors < 0) throw ConfigError("occlusion_sectors must be >= 0");
  if (occlusion_width < 0.0) throw ConfigError("occlusion_width must be >= 0");
  if (blur_azimuths < 0) throw ConfigError("blur_azimuths must be >= 0");
}

PolarScan render_polar_scan(const WorldModel& world, const Pose& pose, int azimuth_count,
                            int bin_count, double bin_size) {
  if (azimuth_count < 1 || bin_count < 1) throw ConfigError("scan dimensions must be >= 1");
  if (bin_size <= 0.0) throw ConfigError("bin_size must be > 0");

  PolarScan scan;
  scan.azimuth_count = azimuth_count;
  scan.bin_count = bin_count;
  scan.bin_size = bin_size;
  scan.pose_index = 0;
  scan.intensities.assign(static_cast<size_t>(azimuth_count) * bin_count, 0.0f);

  const double azimuth_width = kTau / azimuth_count;
  const double max_range = scan.max_range();

  for (const Landmark& lm : world.landmarks) {
    const double dx = lm.x - pose.x;
    const double dy = lm.y - pose.y;
    const double range = std::hypot(dx, dy);
    if (range - lm.radius >= max_range) continue;

    const double rel_azimuth = normalize_angle(std::atan2(dy, dx) - pose.heading);
    // Angular half-width the disc subtends; a disc engulfing the sensor
    // covers every azimuth.
    const double half_angle =
        range > lm.radius ? std::asin(std::min(1.0, lm.radius / range)) : kTau / 2.0;

    int center_az = static_cast<int>(rel_azimuth / azimuth_width);
    if (center_az >= azimuth_count) center_az = azimuth_count - 1;
    const int center_bin = static_cast<int>(range / bin_size);

    int az_span = static_cast<int>(std::ceil(half_angle / azimuth_width));
    az_span = std::min(az_span, azimuth_count / 2);
    const int bin_span = static_cast<int>(std::ceil(lm.radius / bin_size));

    const double peak = lm.reflectivity * std::max(0.0, 1.0 - range / max_range);
    if (peak <= 0.0) continue;

    for (int da = -az_span; da <= az_span; ++da) {
      const int a = ((center_az + da) % azimuth_count + azimuth_count) % azimuth_count;
      const double az_falloff = 1.0 - std::abs(da) / static_cast<double>(az_span + 1);
      for (int db = -bin_span; db <= bin_span; ++db) {
        const int b = center_bin + db;
        if (b < 0 || b >= bin_count) continue;
        const double bin_falloff = 1.0 - std::abs(db) / static_cast<double>(bin_span + 1);
        const float value = static_cast<float>(peak * az_falloff * bin_falloff);
        scan.at(a, b) = std::max(scan.at(a, b), value);
      }
    }
  }
  return scan;
}

CartesianScan polar_to_cartesian(const PolarScan& scan, int side_length, double cell_size) {
  if (side_length < 2 || side_length % 2 != 0)
    throw ConfigError("cartesian side length must be even and >= 2");
  if (cell_size <= 0.0) throw ConfigError("cell_size must be > 0");

  CartesianScan out;
  out.side_length = side_length;
  out.cell_size = cell_size;
  out.pose_index = scan.pose_index;
  out.intensities.assign(static_cast<size_t>(side_length) * side_length, 0.0f);

  const double azimuth_width = kTau / scan.azimuth_count;
  const double max_range = scan.max_range();
  const int center = side_length / 2;

  for (int iy = 0; iy < side_length; ++iy) {
    for (int ix = 0; ix < side_length; ++ix) {
      const double dx = (ix - center) * cell_size;
      const double dy = (iy - center) * cell_size;
      const double range = std::hypot(dx, dy);
      if (range >= max_range) continue;
      const int bin = static_cast<int>(range / scan.bin_size);
      if (bin >= scan.bin_count) continue;
      const double azimuth = normalize_angle(std::atan2(dy, dx));
      int a = static_cast<int>(azimuth / azimuth_width);
      if (a >= scan.azimuth_count) a = scan.azimuth_count - 1;
      out.at(ix, iy) = scan.at(a, bin);
    }
  }
  return out;
}

namespace {

void clamp_unit(CartesianScan& scan) {
  for (float& v : scan.intensities) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

std::pair<CartesianScan, double> apply_noise(const CartesianScan& scan, const NoiseConfig& cfg) {
  cfg.validate();
  CartesianScan out = scan;
  const int w = out.side_length;
  Rng rng(mix_seed(cfg.seed, 0x4e /* noise stream */));

  // 1. multiplicative speckle
  if (cfg.speckle_sigma > 0.0) {
    for (float& v : out.intensities) {
      const double gain = std::max(0.0, 1.0 + cfg.speckle_sigma * rng.normal());
      v = static_cast<float>(std::min(1.0, v * gain));
    }
  }

  // 2. saturation of cells adjacent to returns
  if (cfg.saturation_prob > 0.0) {
    std::vector<char> eligible(out.intensities.size(), 0);
    for (int iy = 0; iy < w; ++iy) {
      for (int ix = 0; ix < w; ++ix) {
        bool near = false;
        for (int ny = std::max(0, iy - 1); ny <= std::min(w - 1, iy + 1) && !near; ++ny)
          for (int nx = std::max(0, ix - 1); nx <= std::min(w - 1, ix + 1) && !near; ++nx)
            near = out.at(nx, ny) > 0.0f;
        eligible[static_cast<size_t>(iy) * w + ix] = near ? 1 : 0;
      }
    }
    for (size_t i = 0; i < out.intensities.size(); ++i) {
      const double u = rng.uniform01();
      if (eligible[i] && u < cfg.saturation_prob) out.intensities[i] = 1.0f;
    }
  }

  // 3. angular-sector occlusion
  for (int s = 0; s < cfg.occlusion_sectors; ++s) {
    const double sector_center = rng.uniform(0.0, kTau);
    const double half_width = cfg.occlusion_width / 2.0;
    const int center = w / 2;
    for (int iy = 0; iy < w; ++iy) {
      for (int ix = 0; ix < w; ++ix) {
        const double angle = normalize_angle(std::atan2(iy - center, ix - center));
        double delta = std::abs(angle - sector_center);
        if (delta > kTau / 2.0) delta = kTau - delta;
        if (delta <= half_width) out.at(ix, iy) = 0.0f;
      }
    }
  }

  // 4. circular azimuthal smearing
  if (cfg.blur_azimuths > 0) {
    std::vector<double> acc(out.intensities.size(), 0.0);
    for (int j = 0; j <= cfg.blur_azimuths; ++j) {
      const CartesianScan turned = rotate_scan(out, j * kBlurStepRadians);
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += turned.intensities[i];
    }
    const double inv = 1.0 / (cfg.blur_azimuths + 1);
    for (size_t i = 0; i < acc.size(); ++i)
      out.intensities[i] = static_cast<float>(acc[i] * inv);
  }

  clamp_unit(out);
  return {std::move(out), cfg.severity()};
}

CartesianScan rotate_scan(const CartesianScan& scan, double angle) {
  CartesianScan out;
  out.side_length = scan.side_length;
  out.cell_size = scan.cell_size;
  out.pose_index = scan.pose_index;
  out.intensities.assign(scan.intensities.size(), 0.0f);

  const int w = scan.side_length;
  const int center = w / 2;
  const double c = std::cos(angle);
  const double s = std::sin(angle);

  for (int iy = 0; iy < w; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      const double dx = ix - center;
      const double dy = iy - center;
      // source position under the inverse rotation
      const long sx = std::lround(center + dx * c + dy * s);
      const long sy = std::lround(center - dx * s + dy * c);
      if (sx < 0 || sx >= w || sy < 0 || sy >= w) continue;
      out.at(ix, iy) = scan.at(static_cast<int>(sx), static_cast<int>(sy));
    }
  }
  return out;
}

void save_trajectory(const std::vector<Pose>& poses, const std::filesystem::path& path) {
  io::atomic_write(
      path,
      [&](std::ostream& out) {
        out << "frame,x,y,heading,timestamp\n";
        for (size_t i = 0; i < poses.size(); ++i) {
          out << i << ',' << io::fmt_double(poses[i].x) << ',' << io::fmt_double(poses[i].y)
              << ',' << io::fmt_double(poses[i].heading) << ','
              << io::fmt_double(poses[i].timestamp) << '\n';
        }
      },
      /*binary=*/false);
}

std::vector<Pose> load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame,x,y,heading,timestamp")
    throw DataError("trajectory file has unexpected header: " + path.string());
  std::vector<Pose> poses;
  size_t expected_frame = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    Pose p;
    size_t frame = 0;
    try {
      std::getline(row, field, ',');
      frame = std::stoull(field);
      std::getline(row, field, ',');
      p.x = std::stod(field);
      std::getline(row, field, ',');
      p.y = std::stod(field);
      std::getline(row, field, ',');
      p.heading = std::stod(field);
      std::getline(row, field, ',');
      p.timestamp = std::stod(field);
    } catch (const std::exception&) {
      throw DataError("malformed trajectory row: " + line);
    }
    if (frame != expected_frame)
      throw DataError("trajectory frames out of order: " + path.string());
    ++expected_frame;
    poses.push_back(p);
  }
  return poses;
}

}  // namespace ipr
