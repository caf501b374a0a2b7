#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ipr {

// One slot of the parent map: an embedding with its scalar uncertainty,
// anchored at a fixed world position. Embedding and uncertainty are stored in
// float32 so the on-disk representation round-trips bit-exactly.
struct MapEntry {
  std::uint64_t entry_id = 0;
  std::vector<float> embedding;
  float uncertainty = 0.0f;
  double x = 0.0;
  double y = 0.0;
  std::string source_session;
  std::uint64_t source_frame = 0;
};

enum class MergeAction : std::uint8_t { kReplaced = 0, kDiscarded = 1, kAppended = 2 };

struct MergeRecord {
  std::string session;
  std::uint64_t frame = 0;
  MergeAction action = MergeAction::kDiscarded;
};

struct ParentMap {
  std::vector<MapEntry> entries;
  double match_threshold = 5.0;  // D_t, meters
  std::vector<MergeRecord> merge_log;
};

// Builds the map from a founding traversal, one entry per frame in frame
// order; entry ids are reassigned sequentially from 0.
ParentMap init_map(const std::vector<MapEntry>& session, double match_threshold);

// Maintenance step for one incoming scan. Every existing entry within
// match_threshold meters of the new position is a candidate; each candidate
// whose uncertainty is strictly higher than the new scan's has its embedding
// and uncertainty replaced (the slot keeps its id and position). With no
// candidate the scan is appended as a new slot. Ties keep the existing entry.
// `literal_rule` inverts the comparison (replace when the new scan is the
// more uncertain one) for studying the alternative reading.
// Returns the number of replaced slots; the action is recorded in merge_log.
int merge_scan(ParentMap& map, const MapEntry& incoming, bool literal_rule = false);

// merge_scan applied frame by frame in the given order.
void merge_session(ParentMap& map, const std::vector<MapEntry>& session,
                   bool literal_rule = false);

// Map file ("PMAP"): versioned binary holding entries and the merge log;
// round-trips exactly.
void save_map(const ParentMap& map, const std::filesystem::path& path);
ParentMap load_map(const std::filesystem::path& path);

bool operator==(const MapEntry& a, const MapEntry& b);
bool operator==(const MergeRecord& a, const MergeRecord& b);
bool operator==(const ParentMap& a, const ParentMap& b);

}  // namespace ipr
