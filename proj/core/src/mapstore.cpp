#include "ipr/mapstore.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"

namespace ipr {

namespace {

void validate_entry(const MapEntry& e) {
  if (e.embedding.empty()) throw DataError("map entry has an empty embedding");
  for (float v : e.embedding)
    if (!std::isfinite(v)) throw DataError("map entry embedding is not finite");
  if (!std::isfinite(e.uncertainty) || e.uncertainty < 0.0f)
    throw DataError("map entry uncertainty must be finite and >= 0");
  if (!std::isfinite(e.x) || !std::isfinite(e.y))
    throw DataError("map entry position is not finite");
}

std::uint64_t next_entry_id(const ParentMap& map) {
  std::uint64_t next = 0;
  for (const MapEntry& e : map.entries)
    if (e.entry_id >= next) next = e.entry_id + 1;
  return next;
}

}  // namespace

ParentMap init_map(const std::vector<MapEntry>& session, double match_threshold) {
  if (session.empty()) throw DataError("cannot initialize a map from an empty session");
  if (match_threshold <= 0.0) throw ConfigError("match_threshold must be > 0");
  ParentMap map;
  map.match_threshold = match_threshold;
  map.entries = session;
  for (size_t i = 0; i < map.entries.size(); ++i) {
    validate_entry(map.entries[i]);
    map.entries[i].entry_id = i;
  }
  return map;
}

int merge_scan(ParentMap& map, const MapEntry& incoming, bool literal_rule) {
  validate_entry(incoming);
  bool any_candidate = false;
  int replaced = 0;
  for (MapEntry& slot : map.entries) {
    const double dx = slot.x - incoming.x;
    const double dy = slot.y - incoming.y;
    if (std::hypot(dx, dy) >= map.match_threshold) continue;
    any_candidate = true;
    const bool replace = literal_rule ? incoming.uncertainty > slot.uncertainty
                                      : incoming.uncertainty < slot.uncertainty;
    if (replace) {
      slot.embedding = incoming.embedding;
      slot.uncertainty = incoming.uncertainty;
      slot.source_session = incoming.source_session;
      slot.source_frame = incoming.source_frame;
      ++replaced;
    }
  }
  MergeRecord rec;
  rec.session = incoming.source_session;
  rec.frame = incoming.source_frame;
  if (!any_candidate) {
    MapEntry added = incoming;
    added.entry_id = next_entry_id(map);
    map.entries.push_back(std::move(added));
    rec.action = MergeAction::kAppended;
  } else {
    rec.action = replaced > 0 ? MergeAction::kReplaced : MergeAction::kDiscarded;
  }
  map.merge_log.push_back(std::move(rec));
  return replaced;
}

void merge_session(ParentMap& map, const std::vector<MapEntry>& session, bool literal_rule) {
  for (const MapEntry& e : session) merge_scan(map, e, literal_rule);
}

namespace {

constexpr char kMapMagic[4] = {'P', 'M', 'A', 'P'};
constexpr std::uint32_t kMapVersion = 1;

}  // namespace

void save_map(const ParentMap& map, const std::filesystem::path& path) {
  const std::uint32_t d =
      map.entries.empty() ? 0 : static_cast<std::uint32_t>(map.entries[0].embedding.size());
  for (const MapEntry& e : map.entries)
    if (e.embedding.size() != d) throw DataError("map entries have mixed embedding dims");

  io::atomic_write(path, [&](std::ostream& out) {
    out.write(kMapMagic, 4);
    io::write_pod(out, kMapVersion);
    io::write_pod(out, d);
    io::write_pod(out, map.match_threshold);
    io::write_pod(out, static_cast<std::uint64_t>(map.entries.size()));
    for (const MapEntry& e : map.entries) {
      io::write_pod(out, e.entry_id);
      for (float v : e.embedding) io::write_pod(out, v);
      io::write_pod(out, e.uncertainty);
      io::write_pod(out, e.x);
      io::write_pod(out, e.y);
      io::write_string(out, e.source_session);
      io::write_pod(out, e.source_frame);
    }
    io::write_pod(out, static_cast<std::uint64_t>(map.merge_log.size()));
    for (const MergeRecord& rec : map.merge_log) {
      io::write_string(out, rec.session);
      io::write_pod(out, rec.frame);
      io::write_pod(out, static_cast<std::uint8_t>(rec.action));
    }
  });
}

ParentMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open map file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMapMagic, 4) != 0)
    throw DataError("not a map file: " + path.string());
  std::uint32_t version;
  io::read_pod(in, version, "map version");
  if (version != kMapVersion) throw DataError("unsupported map version");

  std::uint32_t d;
  io::read_pod(in, d, "map embedding dim");
  ParentMap map;
  io::read_pod(in, map.match_threshold, "map match threshold");
  std::uint64_t count;
  io::read_pod(in, count, "map entry count");
  map.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    MapEntry e;
    io::read_pod(in, e.entry_id, "map entry id");
    e.embedding.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) io::read_pod(in, e.embedding[j], "map embedding");
    io::read_pod(in, e.uncertainty, "map uncertainty");
    io::read_pod(in, e.x, "map position x");
    io::read_pod(in, e.y, "map position y");
    e.source_session = io::read_string(in, "map source session");
    io::read_pod(in, e.source_frame, "map source frame");
    map.entries.push_back(std::move(e));
  }
  std::uint64_t log_count;
  io::read_pod(in, log_count, "merge log count");
  map.merge_log.reserve(log_count);
  for (std::uint64_t i = 0; i < log_count; ++i) {
    MergeRecord rec;
    rec.session = io::read_string(in, "merge log session");
    io::read_pod(in, rec.frame, "merge log frame");
    std::uint8_t action;
    io::read_pod(in, action, "merge log action");
    if (action > 2) throw DataError("merge log action out of range");
    rec.action = static_cast<MergeAction>(action);
    map.merge_log.push_back(std::move(rec));
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError("trailing bytes in map file");
  return map;
}

bool operator==(const MapEntry& a, const MapEntry& b) {
  return a.entry_id == b.entry_id && a.embedding == b.embedding &&
         a.uncertainty == b.uncertainty && a.x == b.x && a.y == b.y &&
         a.source_session == b.source_session && a.source_frame == b.source_frame;
}

bool operator==(const MergeRecord& a, const MergeRecord& b) {
  return a.session == b.session && a.frame == b.frame && a.action == b.action;
}

bool operator==(const ParentMap& a, const ParentMap& b) {
  return a.entries == b.entries && a.match_threshold == b.match_threshold &&
         a.merge_log == b.merge_log;
}

}  // namespace ipr
