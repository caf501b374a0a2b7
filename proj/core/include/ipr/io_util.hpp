#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "ipr/errors.hpp"

namespace ipr::io {

static_assert(std::endian::native == std::endian::little,
              "binary file formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError(std::string("truncated read: ") + what);
  return value;
}

template <typename T>
void read_pod(std::istream& in, T& value, const char* what) {
  value = read_pod<T>(in, what);
}

inline void write_string(std::ostream& out, const std::string& s) {
  if (s.size() > UINT16_MAX) throw DataError("string field too long");
  write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const auto len = read_pod<std::uint16_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DataError(std::string("truncated read: ") + what);
  return s;
}

// Shortest decimal form that parses back to the same double. Keeps every
// emitted CSV/JSON byte-reproducible for a given value.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Write-temp-then-rename so readers never observe a partial file.
template <typename WriteFn>
void atomic_write(const std::filesystem::path& path, WriteFn&& fn, bool binary = true) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    fn(out);
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace ipr::io
