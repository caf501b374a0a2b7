#include "ipr/query.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ipr/errors.hpp"
#include "json.hpp"
#include "ipr/io_util.hpp"

namespace ipr {

ThresholdSet make_thresholds(double delta, int nlevels) {
  if (!(delta > 0.0)) throw ConfigError("threshold delta must be > 0");
  if (nlevels < 1) throw ConfigError("threshold level count must be >= 1");
  ThresholdSet set;
  set.delta = delta;
  set.nlevels = nlevels;
  set.values.reserve(static_cast<size_t>(nlevels) + 1);
  for (int n = 0; n <= nlevels; ++n)
    set.values.push_back((1.0 - delta) + n * (2.0 * delta / nlevels));
  return set;
}

namespace {

std::vector<double> unit_of(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> u(v.size(), 0.0);
  if (norm > 0.0)
    for (size_t i = 0; i < v.size(); ++i) u[i] = v[i] / norm;
  return u;
}

}  // namespace

KnnResult knn(const ParentMap& map, const std::vector<double>& query_embedding, int k) {
  if (k < 1) throw ConfigError("knn k must be >= 1");
  if (map.entries.empty()) throw DataError("knn against an empty map");
  for (double v : query_embedding)
    if (!std::isfinite(v)) throw DataError("query embedding is not finite");

  const std::vector<double> q = unit_of(query_embedding);
  std::vector<Match> all;
  all.reserve(map.entries.size());
  for (const MapEntry& e : map.entries) {
    if (e.embedding.size() != query_embedding.size())
      throw DataError("query embedding dim does not match the map");
    std::vector<double> raw(e.embedding.begin(), e.embedding.end());
    const std::vector<double> u = unit_of(raw);
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
      const double d = u[i] - q[i];
      acc += d * d;
    }
    all.push_back({e.entry_id, std::sqrt(acc)});
  }
  std::sort(all.begin(), all.end(), [](const Match& a, const Match& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.entry_id < b.entry_id;
  });

  KnnResult result;
  if (static_cast<size_t>(k) >= all.size()) {
    result.fewer_than_k = static_cast<size_t>(k) > all.size();
    result.matches = std::move(all);
  } else {
    result.matches.assign(all.begin(), all.begin() + k);
  }
  return result;
}

QueryResult introspective_query(const ParentMap& map, const Embedding& embedding, int k,
                                double threshold) {
  if (!std::isfinite(threshold)) throw ConfigError("query threshold must be finite");
  QueryResult qr;
  qr.query_uncertainty = embedding.u;
  qr.threshold_used = threshold;
  if (embedding.u > threshold) {
    qr.status = QueryResult::Status::kRejected;
    return qr;
  }
  KnnResult nn = knn(map, embedding.z, k);
  qr.status = QueryResult::Status::kAccepted;
  qr.matches = std::move(nn.matches);
  qr.fewer_than_k = nn.fewer_than_k;
  return qr;
}

void save_query_results(const std::vector<FrameQueryResult>& results,
                        const std::filesystem::path& path) {
  io::atomic_write(
      path,
      [&](std::ostream& out) {
        for (const FrameQueryResult& fr : results) {
          nlohmann::json j;
          j["frame"] = fr.frame;
          j["status"] =
              fr.result.status == QueryResult::Status::kAccepted ? "accepted" : "rejected";
          j["u"] = fr.result.query_uncertainty;
          j["threshold"] = fr.result.threshold_used;
          nlohmann::json matches = nlohmann::json::array();
          for (const Match& m : fr.result.matches)
            matches.push_back({{"id", m.entry_id}, {"dist", m.distance}});
          j["matches"] = std::move(matches);
          out << j.dump() << '\n';
        }
      },
      /*binary=*/false);
}

std::vector<FrameQueryResult> load_query_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open query results: " + path.string());
  std::vector<FrameQueryResult> results;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("malformed query result line: " + line);
    }
    FrameQueryResult fr;
    try {
      fr.frame = j.at("frame").get<std::uint64_t>();
      const std::string status = j.at("status").get<std::string>();
      if (status == "accepted") fr.result.status = QueryResult::Status::kAccepted;
      else if (status == "rejected") fr.result.status = QueryResult::Status::kRejected;
      else throw DataError("unknown query status: " + status);
      fr.result.query_uncertainty = j.at("u").get<double>();
      fr.result.threshold_used = j.at("threshold").get<double>();
      for (const auto& m : j.at("matches")) {
        fr.result.matches.push_back(
            {m.at("id").get<std::uint64_t>(), m.at("dist").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("query result line missing fields: " + std::string(e.what()));
    }
    results.push_back(std::move(fr));
  }
  return results;
}

}  // namespace ipr
