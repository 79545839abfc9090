#ifndef GNAS_CLI_HPP
#define GNAS_CLI_HPP

#include "gnas/evolution.hpp"
#include "gnas/graph.hpp"
#include "gnas/trainer.hpp"

#include <string>
#include <vector>

namespace gnas {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitEmptyResults = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyResultsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string dataset_path;  // empty when synthetic
  bool use_synthetic = false;
  SyntheticSpec synthetic;

  SplitSpec split_spec;
  SearchConfig search;
  TrainConfig train_search;
  TrainConfig train_retrain;
  std::vector<std::uint64_t> retrain_seeds{1, 2, 3};

  double high_performer_threshold = -0.35;
  int trajectory_window = 100;
  int forest_trees = 100;
  std::uint64_t forest_seed = 0;

  std::string out_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_string(const std::string& text);
std::string run_config_to_string(const RunConfig& cfg);

// Line-delimited evaluation log (one JSON object per record).
void write_log(const std::string& path, const std::vector<EvaluationRecord>& log);
std::vector<EvaluationRecord> read_log(const std::string& path);

std::vector<GraphRecord> load_run_dataset(const RunConfig& cfg);

int cmd_search(const RunConfig& cfg);
int cmd_retrain(const RunConfig& cfg, const std::string& log_path);
int cmd_analyze(const RunConfig& cfg, const std::string& log_path);
int cmd_trajectory(const RunConfig& cfg, const std::string& log_path);

// Full argv-style entry point (argv[0] excluded).
int run_cli(const std::vector<std::string>& args);

}  // namespace gnas

#endif  // GNAS_CLI_HPP
