#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ipr/evalkit.hpp"
#include "ipr/scan.hpp"
#include "ipr/scan_synth.hpp"

namespace ipr::tools {

// One traversal on disk:
//   <dir>/trajectory.csv          frame,x,y,heading,timestamp
//   <dir>/severity.csv            frame,severity
//   <dir>/scan_000000.rscn ...    one binary scan per frame
struct Session {
  std::string name;  // directory basename
  std::vector<Pose> poses;
  std::vector<CartesianScan> scans;
  std::vector<double> severities;
};

void save_session(const Session& session, const std::filesystem::path& dir);
// severity.csv is optional on load (defaults to zeros).
Session load_session(const std::filesystem::path& dir);

// Precomputed per-frame embeddings from an external method, bridged into the
// evaluation harness. CSV with header frame,x,y,u,e0..e{d-1}.
struct ExternalDump {
  std::vector<std::uint64_t> frames;
  std::vector<XY> positions;
  std::vector<double> us;
  std::vector<std::vector<double>> embeddings;  // consistent dimension
};

void save_external_dump(const ExternalDump& dump, const std::filesystem::path& path);
ExternalDump load_external_dump(const std::filesystem::path& path);

}  // namespace ipr::tools
