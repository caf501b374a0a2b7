#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ipr/mapstore.hpp"
#include "ipr/model.hpp"

namespace ipr {

// Evenly spaced uncertainty thresholds centred on the unit prior variance:
// values[n] = (1 - delta) + n * (2 * delta / nlevels), n = 0..nlevels.
struct ThresholdSet {
  double delta = 0.5;
  int nlevels = 10;
  std::vector<double> values;
};
ThresholdSet make_thresholds(double delta, int nlevels);

struct Match {
  std::uint64_t entry_id = 0;
  double distance = 0.0;
};

struct KnnResult {
  std::vector<Match> matches;        // ascending distance, ties by lower id
  bool fewer_than_k = false;         // k exceeded the map size; all returned
};

// Exact linear-scan nearest neighbors. Query and map embeddings are
// L2-normalized before the Euclidean distance is taken.
KnnResult knn(const ParentMap& map, const std::vector<double>& query_embedding, int k);

// Retrieval gated by the scalar uncertainty: strictly above the threshold the
// query is rejected without touching the map.
struct QueryResult {
  enum class Status { kAccepted, kRejected };
  Status status = Status::kRejected;
  std::vector<Match> matches;  // empty when rejected
  double query_uncertainty = 0.0;
  double threshold_used = 0.0;
  bool fewer_than_k = false;
};
QueryResult introspective_query(const ParentMap& map, const Embedding& embedding, int k,
                                double threshold);

// JSON-lines serialization of per-frame query results.
struct FrameQueryResult {
  std::uint64_t frame = 0;
  QueryResult result;
};
void save_query_results(const std::vector<FrameQueryResult>& results,
                        const std::filesystem::path& path);
std::vector<FrameQueryResult> load_query_results(const std::filesystem::path& path);

}  // namespace ipr
