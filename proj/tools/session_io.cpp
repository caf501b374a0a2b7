#include "session_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"

namespace ipr::tools {

namespace {

std::string scan_filename(size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scan_%06zu.rscn", frame);
  return buf;
}

}  // namespace

void save_session(const Session& session, const std::filesystem::path& dir) {
  if (session.poses.size() != session.scans.size() ||
      session.poses.size() != session.severities.size())
    throw DataError("session poses, scans, and severities must align");
  if (session.poses.empty()) throw DataError("refusing to save an empty session");
  std::filesystem::create_directories(dir);
  save_trajectory(session.poses, dir / "trajectory.csv");
  io::atomic_write(
      dir / "severity.csv",
      [&](std::ostream& out) {
        out << "frame,severity\n";
        for (size_t i = 0; i < session.severities.size(); ++i)
          out << i << ',' << io::fmt_double(session.severities[i]) << '\n';
      },
      /*binary=*/false);
  for (size_t i = 0; i < session.scans.size(); ++i)
    save_scan(session.scans[i], dir / scan_filename(i));
}

Session load_session(const std::filesystem::path& dir) {
  Session session;
  session.name = dir.filename().string();
  if (session.name.empty()) session.name = dir.parent_path().filename().string();
  session.poses = load_trajectory(dir / "trajectory.csv");
  session.scans.reserve(session.poses.size());
  for (size_t i = 0; i < session.poses.size(); ++i) {
    CartesianScan scan = load_scan(dir / scan_filename(i));
    if (scan.pose_index != i)
      throw DataError("scan frame index mismatch in " + (dir / scan_filename(i)).string());
    session.scans.push_back(std::move(scan));
  }

  session.severities.assign(session.poses.size(), 0.0);
  const std::filesystem::path sev_path = dir / "severity.csv";
  if (std::filesystem::exists(sev_path)) {
    std::ifstream in(sev_path);
    if (!in) throw DataError("cannot open " + sev_path.string());
    std::string line;
    if (!std::getline(in, line) || line != "frame,severity")
      throw DataError("severity file has unexpected header: " + sev_path.string());
    size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const size_t comma = line.find(',');
      if (comma == std::string::npos) throw DataError("malformed severity row: " + line);
      size_t frame = 0;
      double value = 0.0;
      try {
        frame = std::stoull(line.substr(0, comma));
        value = std::stod(line.substr(comma + 1));
      } catch (const std::exception&) {
        throw DataError("malformed severity row: " + line);
      }
      if (frame >= session.severities.size())
        throw DataError("severity frame out of range: " + line);
      session.severities[frame] = value;
      ++rows;
    }
    if (rows != session.poses.size())
      throw DataError("severity row count does not match the trajectory");
  }
  return session;
}

void save_external_dump(const ExternalDump& dump, const std::filesystem::path& path) {
  const size_t n = dump.frames.size();
  if (dump.positions.size() != n || dump.us.size() != n || dump.embeddings.size() != n)
    throw DataError("external dump columns must align");
  if (n == 0) throw DataError("refusing to save an empty external dump");
  const size_t d = dump.embeddings[0].size();
  for (const auto& e : dump.embeddings)
    if (e.size() != d) throw DataError("external dump has mixed embedding dims");

  io::atomic_write(
      path,
      [&](std::ostream& out) {
        out << "frame,x,y,u";
        for (size_t j = 0; j < d; ++j) out << ",e" << j;
        out << '\n';
        for (size_t i = 0; i < n; ++i) {
          out << dump.frames[i] << ',' << io::fmt_double(dump.positions[i].x) << ','
              << io::fmt_double(dump.positions[i].y) << ',' << io::fmt_double(dump.us[i]);
          for (size_t j = 0; j < d; ++j) out << ',' << io::fmt_double(dump.embeddings[i][j]);
          out << '\n';
        }
      },
      /*binary=*/false);
}

ExternalDump load_external_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open external dump: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty external dump: " + path.string());

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  if (header.size() < 5 || header[0] != "frame" || header[1] != "x" || header[2] != "y" ||
      header[3] != "u")
    throw DataError("external dump header must be frame,x,y,u,e0..: " + path.string());
  const size_t d = header.size() - 4;
  for (size_t j = 0; j < d; ++j)
    if (header[4 + j] != "e" + std::to_string(j))
      throw DataError("external dump embedding columns must be e0..e" +
                      std::to_string(d - 1));

  ExternalDump dump;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4 + d)
      throw DataError("external dump row has wrong column count: " + line);
    try {
      dump.frames.push_back(std::stoull(fields[0]));
      dump.positions.push_back({std::stod(fields[1]), std::stod(fields[2])});
      dump.us.push_back(std::stod(fields[3]));
      std::vector<double> e(d);
      for (size_t j = 0; j < d; ++j) e[j] = std::stod(fields[4 + j]);
      dump.embeddings.push_back(std::move(e));
    } catch (const std::exception&) {
      throw DataError("malformed external dump row: " + line);
    }
  }
  if (dump.frames.empty()) throw DataError("external dump has no rows: " + path.string());
  return dump;
}

}  // namespace ipr::tools
