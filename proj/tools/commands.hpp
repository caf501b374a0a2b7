#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ipr/evalkit.hpp"
#include "ipr/mapstore.hpp"
#include "ipr/model.hpp"
#include "pipeline_config.hpp"
#include "session_io.hpp"

namespace ipr::tools {

// Subcommand bodies. All throw ConfigError / DataError / NumericError; the
// CLI maps those to exit codes. Every output write is atomic and
// deterministic in the config seed.

// Renders traversals of the configured route into out_dir/session_00, ...
void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

void cmd_train(const PipelineConfig& cfg,
               const std::vector<std::filesystem::path>& session_dirs,
               const std::filesystem::path& model_out, const std::filesystem::path& loss_out);

void cmd_build_map(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                   const std::filesystem::path& session_dir,
                   const std::filesystem::path& map_out);

void cmd_merge(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& model_path,
               const std::filesystem::path& session_dir, const std::filesystem::path& map_out);

void cmd_query(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& model_path,
               const std::filesystem::path& session_dir,
               const std::filesystem::path& results_out);

// Cross-validation over every ordered (map, query) session pair; writes
// per-pair reports plus the aggregate report/CSV/curve files to report_dir.
void cmd_eval_sessions(const PipelineConfig& cfg, const std::filesystem::path& model_path,
                       const std::vector<std::filesystem::path>& session_dirs,
                       const std::filesystem::path& report_dir);

// Same cross-validation, but over precomputed external embedding dumps.
void cmd_eval_dumps(const PipelineConfig& cfg,
                    const std::vector<std::filesystem::path>& dump_paths,
                    const std::filesystem::path& report_dir);

// Rejection sweep of previously written query results: static thresholds and
// the empirical quantile sweep, one CSV each.
void cmd_sweep(const PipelineConfig& cfg, const std::filesystem::path& map_path,
               const std::filesystem::path& results_path,
               const std::filesystem::path& session_dir,
               const std::filesystem::path& out_static,
               const std::filesystem::path& out_quantile);

// Shared building blocks (also used by tests and benchmarks).
std::vector<MapEntry> encode_session(const ModelParams& params, const Session& session);
GroundTruth ground_truth_from(const ParentMap& map, const std::vector<Pose>& query_poses,
                              const EvalParams& eval);

}  // namespace ipr::tools
