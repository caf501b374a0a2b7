#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "ipr/errors.hpp"
#include "ipr/log.hpp"

namespace {

namespace fs = std::filesystem;

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
};

ipr::tools::PipelineConfig load_effective_config(const GlobalArgs& args) {
  ipr::tools::PipelineConfig cfg = ipr::tools::load_config(args.config_path);
  if (args.seed_set) cfg.apply_seed(args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware radar place recognition pipeline"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "pipeline config file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", args.seed, "override the [run] seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  app.add_option("--out", args.out_dir, "output directory (default .)");

  // Global flags may appear before or after the subcommand name.
  auto add_subcommand = [&app](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->fallthrough();
    return sub;
  };

  // synth
  CLI::App* synth = add_subcommand("synth", "render synthetic traversal sessions");

  // train
  CLI::App* train = add_subcommand("train", "train the embedding model");
  std::vector<std::string> train_sessions;
  std::string model_out = "model.vcpr";
  std::string loss_out = "loss.csv";
  train->add_option("--session", train_sessions, "training session directory (repeatable)")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--model-out", model_out, "checkpoint output (under --out)");
  train->add_option("--loss-out", loss_out, "loss CSV output (under --out)");

  // build-map
  CLI::App* build = add_subcommand("build-map", "encode a session into a new map");
  std::string model_path, session_dir;
  std::string map_out = "map.pmap";
  build->add_option("--model", model_path, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  build->add_option("--session", session_dir, "founding session directory")->required()
      ->check(CLI::ExistingDirectory);
  build->add_option("--map-out", map_out, "map output (under --out)");

  // merge
  CLI::App* merge = add_subcommand("merge", "merge a session into an existing map");
  std::string merge_map;
  merge->add_option("--map", merge_map, "existing map file")->required()
      ->check(CLI::ExistingFile);
  merge->add_option("--model", model_path, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  merge->add_option("--session", session_dir, "session to merge")->required()
      ->check(CLI::ExistingDirectory);
  merge->add_option("--map-out", map_out, "map output (under --out)");

  // query
  CLI::App* query = add_subcommand("query", "introspective retrieval for a session");
  std::string query_map, results_out = "results.jsonl";
  int k_override = 0;
  double threshold_override = 0.0;
  bool k_set = false, threshold_set = false;
  query->add_option("--map", query_map, "map file")->required()->check(CLI::ExistingFile);
  query->add_option("--model", model_path, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  query->add_option("--session", session_dir, "query session directory")->required()
      ->check(CLI::ExistingDirectory);
  query->add_option("--k", k_override, "neighbors per query (default from config)")
      ->each([&k_set](const std::string&) { k_set = true; });
  query
      ->add_option("--threshold", threshold_override,
                   "rejection threshold (default from config)")
      ->each([&threshold_set](const std::string&) { threshold_set = true; });
  query->add_option("--results-out", results_out, "JSONL output (under --out)");

  // eval
  CLI::App* eval = add_subcommand("eval", "cross-validated metric reports");
  std::vector<std::string> eval_sessions, eval_dumps;
  std::string report_dir = "eval";
  eval->add_option("--session", eval_sessions, "session directory (repeatable, >= 2)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--dump", eval_dumps, "external embedding dump CSV (repeatable, >= 2)")
      ->check(CLI::ExistingFile);
  eval->add_option("--model", model_path, "model checkpoint (session mode)");
  eval->add_option("--report-dir", report_dir, "report directory (under --out)");

  // sweep
  CLI::App* sweep = add_subcommand("sweep", "rejection sweep of query results");
  std::string sweep_results;
  std::string sweep_static = "recall_rr_static.csv";
  std::string sweep_quantile = "recall_rr_quantile.csv";
  sweep->add_option("--map", query_map, "map file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--results", sweep_results, "query results JSONL")->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--session", session_dir, "query session directory")->required()
      ->check(CLI::ExistingDirectory);
  sweep->add_option("--out-static", sweep_static, "static-threshold CSV (under --out)");
  sweep->add_option("--out-quantile", sweep_quantile, "quantile CSV (under --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ipr::tools::PipelineConfig base_cfg = load_effective_config(args);
    const fs::path out(args.out_dir);

    if (synth->parsed()) {
      ipr::tools::cmd_synth(base_cfg, out);
    } else if (train->parsed()) {
      std::vector<fs::path> dirs(train_sessions.begin(), train_sessions.end());
      ipr::tools::cmd_train(base_cfg, dirs, out / model_out, out / loss_out);
    } else if (build->parsed()) {
      ipr::tools::cmd_build_map(base_cfg, model_path, session_dir, out / map_out);
    } else if (merge->parsed()) {
      ipr::tools::cmd_merge(base_cfg, merge_map, model_path, session_dir, out / map_out);
    } else if (query->parsed()) {
      ipr::tools::PipelineConfig cfg = base_cfg;
      if (k_set) cfg.query.k = k_override;
      if (threshold_set) cfg.query.threshold = threshold_override;
      cfg.validate();
      ipr::tools::cmd_query(cfg, query_map, model_path, session_dir, out / results_out);
    } else if (eval->parsed()) {
      if (!eval_dumps.empty() && !eval_sessions.empty())
        throw ipr::ConfigError("eval takes either --session or --dump inputs, not both");
      if (!eval_dumps.empty()) {
        std::vector<fs::path> dumps(eval_dumps.begin(), eval_dumps.end());
        ipr::tools::cmd_eval_dumps(base_cfg, dumps, out / report_dir);
      } else {
        if (model_path.empty())
          throw ipr::ConfigError("eval --session mode requires --model");
        std::vector<fs::path> dirs(eval_sessions.begin(), eval_sessions.end());
        ipr::tools::cmd_eval_sessions(base_cfg, model_path, dirs, out / report_dir);
      }
    } else if (sweep->parsed()) {
      ipr::tools::cmd_sweep(base_cfg, query_map, sweep_results, session_dir,
                            out / sweep_static, out / sweep_quantile);
    }
  } catch (const ipr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ipr::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const ipr::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
