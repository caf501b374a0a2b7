#include "commands.hpp"

#include <cstdio>
#include <string>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"
#include "ipr/log.hpp"
#include "ipr/query.hpp"
#include "ipr/rng.hpp"
#include "ipr/training.hpp"

namespace ipr::tools {

namespace {

RouteSpec route_from(const SynthParams& synth) {
  if (synth.route == "line")
    return RouteSpec::line(synth.route_x, synth.route_y, synth.route_param);
  return RouteSpec::loop(synth.route_x, synth.route_y, synth.route_param);
}

std::string session_dir_name(int traversal) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "session_%02d", traversal);
  return buf;
}

struct SessionData {
  std::string name;
  std::vector<MapEntry> entries;
  std::vector<Pose> poses;
};

std::vector<RankedQuery> rank_against(const ParentMap& map,
                                      const std::vector<MapEntry>& queries, int k) {
  std::vector<RankedQuery> ranked;
  ranked.reserve(queries.size());
  for (const MapEntry& q : queries) {
    const std::vector<double> z(q.embedding.begin(), q.embedding.end());
    ranked.push_back({knn(map, z, k).matches});
  }
  return ranked;
}

void eval_pairs(const PipelineConfig& cfg, const std::vector<SessionData>& sessions,
                const std::filesystem::path& report_dir) {
  const ThresholdSet thresholds = make_thresholds(cfg.eval.delta, cfg.eval.nlevels);
  const auto pairs = all_ordered_pairs(static_cast<int>(sessions.size()));
  std::vector<EvalReport> reports;
  reports.reserve(pairs.size());
  for (const auto& [mi, qi] : pairs) {
    const SessionData& map_session = sessions[static_cast<size_t>(mi)];
    const SessionData& query_session = sessions[static_cast<size_t>(qi)];
    const ParentMap map = init_map(map_session.entries, cfg.map.match_threshold);
    const GroundTruth gt = ground_truth_from(map, query_session.poses, cfg.eval);
    const std::vector<RankedQuery> ranked = rank_against(map, query_session.entries, 10);
    std::vector<double> us;
    us.reserve(query_session.entries.size());
    for (const MapEntry& e : query_session.entries) us.push_back(e.uncertainty);
    EvalReport report = evaluate(ranked, us, gt, thresholds);
    save_report_json(report,
                     report_dir / ("pair_" + map_session.name + "__" + query_session.name +
                                   ".json"));
    reports.push_back(std::move(report));
  }
  const EvalReport aggregate = average_reports(reports);
  save_report_json(aggregate, report_dir / "report.json");
  save_report_csv(aggregate, report_dir / "report.csv");
  save_rr_csv(aggregate.rr_static, report_dir / "recall_rr_static.csv");
  save_rr_csv(aggregate.rr_quantile, report_dir / "recall_rr_quantile.csv");
  IPR_LOG_INFO("evaluated %zu session pairs into %s", pairs.size(),
               report_dir.string().c_str());
}

}  // namespace

std::vector<MapEntry> encode_session(const ModelParams& params, const Session& session) {
  std::vector<MapEntry> entries;
  entries.reserve(session.scans.size());
  for (size_t i = 0; i < session.scans.size(); ++i) {
    const Embedding emb = inference_embedding(params, session.scans[i]);
    MapEntry e;
    e.entry_id = i;
    e.embedding.assign(emb.z.begin(), emb.z.end());
    e.uncertainty = static_cast<float>(emb.u);
    e.x = session.poses[i].x;
    e.y = session.poses[i].y;
    e.source_session = session.name;
    e.source_frame = i;
    entries.push_back(std::move(e));
  }
  return entries;
}

GroundTruth ground_truth_from(const ParentMap& map, const std::vector<Pose>& query_poses,
                              const EvalParams& eval) {
  GroundTruth gt;
  gt.positive_radius = eval.positive_radius;
  gt.negative_radius = eval.negative_radius;
  gt.map_positions.assign(map.entries.size(), XY{});
  for (const MapEntry& e : map.entries) {
    if (e.entry_id >= map.entries.size())
      throw DataError("map entry ids are not dense; cannot index ground truth");
    gt.map_positions[static_cast<size_t>(e.entry_id)] = XY{e.x, e.y};
  }
  gt.query_positions.reserve(query_poses.size());
  for (const Pose& p : query_poses) gt.query_positions.push_back(XY{p.x, p.y});
  return gt;
}

void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const WorldModel world = WorldModel::random(cfg.seed, cfg.synth.landmarks, cfg.synth.extent);
  const std::vector<Pose> poses =
      generate_trajectory(world, route_from(cfg.synth), cfg.synth.frames, cfg.synth.spacing);

  for (int t = 0; t < cfg.synth.traversals; ++t) {
    const double scale =
        cfg.synth.noise_scales[cfg.synth.noise_scales.size() == 1 ? 0 : static_cast<size_t>(t)];
    NoiseConfig noise = scale_noise(cfg.noise, scale);

    Session session;
    session.name = session_dir_name(t);
    session.poses = poses;
    session.scans.reserve(poses.size());
    session.severities.reserve(poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
      const PolarScan polar = render_polar_scan(world, poses[i], cfg.scan.azimuths,
                                                cfg.scan.bins, cfg.scan.bin_size);
      CartesianScan cart =
          polar_to_cartesian(polar, cfg.scan.cartesian_w, cfg.scan.cell_size);
      cart.pose_index = i;
      noise.seed = mix_seed(cfg.seed, 0x400 + static_cast<std::uint64_t>(t) * 0x10000 + i);
      auto [noisy, severity] = apply_noise(cart, noise);
      noisy.pose_index = i;
      session.scans.push_back(std::move(noisy));
      session.severities.push_back(severity);
    }
    save_session(session, out_dir / session.name);
    IPR_LOG_INFO("wrote %s (%d frames, severity %s)",
                 (out_dir / session.name).string().c_str(), cfg.synth.frames,
                 io::fmt_double(noise.severity()).c_str());
  }
}

void cmd_train(const PipelineConfig& cfg,
               const std::vector<std::filesystem::path>& session_dirs,
               const std::filesystem::path& model_out, const std::filesystem::path& loss_out) {
  cfg.validate();
  if (session_dirs.empty()) throw ConfigError("train needs at least one session directory");
  std::vector<std::vector<CartesianScan>> sessions;
  sessions.reserve(session_dirs.size());
  for (const auto& dir : session_dirs) sessions.push_back(load_session(dir).scans);

  ModelParams params = ModelParams::init(cfg.model, mix_seed(cfg.seed, 0x11));
  const TrainHistory history = train(sessions, params, cfg.train);
  save_model(params, model_out);
  save_loss_history(history, loss_out);
  IPR_LOG_INFO("trained %d epochs over %zu sessions -> %s", cfg.train.epochs,
               sessions.size(), model_out.string().c_str());
}

void cmd_build_map(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                   const std::filesystem::path& session_dir,
                   const std::filesystem::path& map_out) {
  cfg.validate();
  const ModelParams params = load_model(model_path);
  const Session session = load_session(session_dir);
  const ParentMap map =
      init_map(encode_session(params, session), cfg.map.match_threshold);
  save_map(map, map_out);
  IPR_LOG_INFO("built map with %zu entries -> %s", map.entries.size(),
               map_out.string().c_str());
}

void cmd_merge(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& model_path,
               const std::filesystem::path& session_dir, const std::filesystem::path& map_out) {
  cfg.validate();
  ParentMap map = load_map(map_path);
  const ModelParams params = load_model(model_path);
  const Session session = load_session(session_dir);
  merge_session(map, encode_session(params, session), cfg.map.alg1_literal);
  save_map(map, map_out);
  IPR_LOG_INFO("merged %s (%zu frames) -> %s", session.name.c_str(), session.scans.size(),
               map_out.string().c_str());
}

void cmd_query(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& model_path,
               const std::filesystem::path& session_dir,
               const std::filesystem::path& results_out) {
  cfg.validate();
  const ParentMap map = load_map(map_path);
  const ModelParams params = load_model(model_path);
  const Session session = load_session(session_dir);

  std::vector<FrameQueryResult> results;
  results.reserve(session.scans.size());
  for (size_t i = 0; i < session.scans.size(); ++i) {
    const Embedding emb = inference_embedding(params, session.scans[i]);
    results.push_back(
        {i, introspective_query(map, emb, cfg.query.k, cfg.query.threshold)});
  }
  save_query_results(results, results_out);
  size_t rejected = 0;
  for (const auto& r : results)
    rejected += r.result.status == QueryResult::Status::kRejected ? 1 : 0;
  IPR_LOG_INFO("queried %zu frames, %zu rejected -> %s", results.size(), rejected,
               results_out.string().c_str());
}

void cmd_eval_sessions(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                       const std::vector<std::filesystem::path>& session_dirs,
                       const std::filesystem::path& report_dir) {
  cfg.validate();
  if (session_dirs.size() < 2)
    throw ConfigError("eval needs at least two session directories");
  const ModelParams params = load_model(model_path);
  std::vector<SessionData> sessions;
  sessions.reserve(session_dirs.size());
  for (const auto& dir : session_dirs) {
    const Session s = load_session(dir);
    sessions.push_back({s.name, encode_session(params, s), s.poses});
  }
  eval_pairs(cfg, sessions, report_dir);
}

void cmd_eval_dumps(const PipelineConfig& cfg,
                    const std::vector<std::filesystem::path>& dump_paths,
                    const std::filesystem::path& report_dir) {
  cfg.validate();
  if (dump_paths.size() < 2) throw ConfigError("eval needs at least two external dumps");
  std::vector<SessionData> sessions;
  sessions.reserve(dump_paths.size());
  size_t dim = 0;
  for (const auto& path : dump_paths) {
    const ExternalDump dump = load_external_dump(path);
    if (dim == 0) dim = dump.embeddings[0].size();
    else if (dump.embeddings[0].size() != dim)
      throw DataError("external dump embedding dim mismatch: " + path.string());
    SessionData data;
    data.name = path.stem().string();
    for (size_t i = 0; i < dump.frames.size(); ++i) {
      MapEntry e;
      e.entry_id = i;
      e.embedding.assign(dump.embeddings[i].begin(), dump.embeddings[i].end());
      e.uncertainty = static_cast<float>(dump.us[i]);
      e.x = dump.positions[i].x;
      e.y = dump.positions[i].y;
      e.source_session = data.name;
      e.source_frame = dump.frames[i];
      data.entries.push_back(std::move(e));
      Pose p;
      p.x = dump.positions[i].x;
      p.y = dump.positions[i].y;
      data.poses.push_back(p);
    }
    sessions.push_back(std::move(data));
  }
  eval_pairs(cfg, sessions, report_dir);
}

void cmd_sweep(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& results_path,
               const std::filesystem::path& session_dir,
               const std::filesystem::path& out_static,
               const std::filesystem::path& out_quantile) {
  cfg.validate();
  const ParentMap map = load_map(map_path);
  const std::vector<Pose> poses = load_trajectory(session_dir / "trajectory.csv");
  const std::vector<FrameQueryResult> results = load_query_results(results_path);
  if (results.empty()) throw DataError("sweep needs at least one query result");

  GroundTruth gt;
  gt.positive_radius = cfg.eval.positive_radius;
  gt.negative_radius = cfg.eval.negative_radius;
  gt.map_positions.assign(map.entries.size(), XY{});
  for (const MapEntry& e : map.entries) {
    if (e.entry_id >= map.entries.size())
      throw DataError("map entry ids are not dense; cannot index ground truth");
    gt.map_positions[static_cast<size_t>(e.entry_id)] = XY{e.x, e.y};
  }

  std::vector<RankedQuery> ranked;
  std::vector<double> us;
  for (const FrameQueryResult& fr : results) {
    if (fr.frame >= poses.size())
      throw DataError("query result frame exceeds the trajectory length");
    gt.query_positions.push_back(XY{poses[fr.frame].x, poses[fr.frame].y});
    ranked.push_back({fr.result.matches});
    us.push_back(fr.result.query_uncertainty);
  }

  const ThresholdSet thresholds = make_thresholds(cfg.eval.delta, cfg.eval.nlevels);
  save_rr_csv(recall_at_rejection(ranked, us, gt, thresholds.values), out_static);
  save_rr_csv(recall_at_rejection(ranked, us, gt, quantile_thresholds(us)), out_quantile);
  IPR_LOG_INFO("sweep over %zu queries -> %s, %s", ranked.size(),
               out_static.string().c_str(), out_quantile.string().c_str());
}

}  // namespace ipr::tools
