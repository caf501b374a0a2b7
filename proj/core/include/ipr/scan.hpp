#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ipr {

// Raw radar intensity grid over (azimuth, range) bins. Row a holds the B
// range bins of azimuth a; azimuth 0 points along the sensor heading and
// angles grow counterclockwise. Intensities stay in [0, 1].
struct PolarScan {
  int azimuth_count = 0;  // A
  int bin_count = 0;      // B
  double bin_size = 0.0;  // meters per range bin
  std::uint64_t pose_index = 0;
  std::vector<float> intensities;  // A * B, azimuth-major

  float& at(int azimuth, int bin) { return intensities[static_cast<size_t>(azimuth) * bin_count + bin]; }
  float at(int azimuth, int bin) const { return intensities[static_cast<size_t>(azimuth) * bin_count + bin]; }
  double max_range() const { return bin_count * bin_size; }
};

// Sensor-centered metric grid, W x W cells, row-major with the row index
// along +y. The sensor sits exactly at cell (W/2, W/2); W is even.
struct CartesianScan {
  int side_length = 0;     // W
  double cell_size = 0.0;  // meters per cell
  std::uint64_t pose_index = 0;
  std::vector<float> intensities;  // W * W, row-major (y rows)

  float& at(int ix, int iy) { return intensities[static_cast<size_t>(iy) * side_length + ix]; }
  float at(int ix, int iy) const { return intensities[static_cast<size_t>(iy) * side_length + ix]; }
};

// Binary scan file ("RSCN"): u32 version, u32 W, f32 cell_size,
// u64 pose_index, then W*W f32 intensities row-major, little-endian.
void save_scan(const CartesianScan& scan, const std::filesystem::path& path);
CartesianScan load_scan(const std::filesystem::path& path);

}  // namespace ipr
