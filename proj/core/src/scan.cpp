#include "ipr/scan.hpp"

#include <cstring>
#include <fstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"

namespace ipr {

namespace {
constexpr char kScanMagic[4] = {'R', 'S', 'C', 'N'};
constexpr std::uint32_t kScanVersion = 1;
}  // namespace

void save_scan(const CartesianScan& scan, const std::filesystem::path& path) {
  if (scan.side_length <= 0 || scan.side_length % 2 != 0)
    throw DataError("scan side length must be positive and even");
  if (scan.intensities.size() != static_cast<size_t>(scan.side_length) * scan.side_length)
    throw DataError("scan buffer does not match side length");
  io::atomic_write(path, [&](std::ostream& out) {
    out.write(kScanMagic, 4);
    io::write_pod<std::uint32_t>(out, kScanVersion);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(scan.side_length));
    io::write_pod<float>(out, static_cast<float>(scan.cell_size));
    io::write_pod<std::uint64_t>(out, scan.pose_index);
    out.write(reinterpret_cast<const char*>(scan.intensities.data()),
              static_cast<std::streamsize>(scan.intensities.size() * sizeof(float)));
  });
}

CartesianScan load_scan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open scan file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kScanMagic, 4) != 0)
    throw DataError("not a scan file (bad magic): " + path.string());
  const auto version = io::read_pod<std::uint32_t>(in, "scan version");
  if (version != kScanVersion) throw DataError("unsupported scan file version");
  CartesianScan scan;
  scan.side_length = static_cast<int>(io::read_pod<std::uint32_t>(in, "scan side length"));
  if (scan.side_length <= 0 || scan.side_length % 2 != 0)
    throw DataError("scan file has invalid side length: " + path.string());
  scan.cell_size = io::read_pod<float>(in, "scan cell size");
  scan.pose_index = io::read_pod<std::uint64_t>(in, "scan pose index");
  const size_t n = static_cast<size_t>(scan.side_length) * scan.side_length;
  scan.intensities.resize(n);
  in.read(reinterpret_cast<char*>(scan.intensities.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError("truncated scan file: " + path.string());
  return scan;
}

}  // namespace ipr
