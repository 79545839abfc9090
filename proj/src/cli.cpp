#include "gnas/cli.hpp"

#include "gnas/forest.hpp"
#include "gnas/mpnn.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace gnas {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.subset_fraction = j.value("subset_fraction", base.subset_fraction);
  base.time_budget_s = j.value("time_budget_s", base.time_budget_s);
  if (j.contains("metric")) base.metric = metric_from_name(j.at("metric").get<std::string>());
  return base;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"subset_fraction", c.subset_fraction},
              {"time_budget_s", c.time_budget_s},
              {"metric", metric_name(c.metric)}};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<EvaluationRecord> usable_records(const std::vector<EvaluationRecord>& log) {
  std::vector<EvaluationRecord> out;
  for (const auto& r : log)
    if (!r.failed && std::isfinite(r.reward)) out.push_back(r);
  return out;
}

void sort_by_finish(std::vector<EvaluationRecord>& log) {
  std::stable_sort(log.begin(), log.end(),
                   [](const EvaluationRecord& a, const EvaluationRecord& b) {
                     return a.t_finish < b.t_finish;
                   });
}

std::string csv_trajectory(const std::vector<std::pair<double, double>>& series) {
  std::ostringstream os;
  os.precision(17);
  os << "time_s,smoothed_reward\n";
  for (const auto& [t, r] : series) os << t << ',' << r << '\n';
  return os.str();
}

std::string csv_high_performers(const std::vector<std::pair<double, std::size_t>>& series) {
  std::ostringstream os;
  os.precision(17);
  os << "time_s,cumulative_count\n";
  for (const auto& [t, c] : series) os << t << ',' << c << '\n';
  return os.str();
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.train_retrain.epochs = 200;
  cfg.train_retrain.time_budget_s = 1e9;  // retraining is not budget-limited
  return cfg;
}

RunConfig parse_run_config_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
  }
  RunConfig cfg = default_run_config();
  try {
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("path") == d.contains("synthetic"))
        throw ConfigError("dataset needs exactly one of 'path' or 'synthetic'");
      if (d.contains("path")) {
        cfg.dataset_path = d.at("path").get<std::string>();
      } else {
        cfg.use_synthetic = true;
        const json& s = d.at("synthetic");
        cfg.synthetic.task = synthetic_task_from_name(s.value("task", "edge-count"));
        cfg.synthetic.n_graphs = s.value("n_graphs", cfg.synthetic.n_graphs);
        cfg.synthetic.max_nodes = s.value("max_nodes", cfg.synthetic.max_nodes);
        cfg.synthetic.seed = s.value("seed", cfg.synthetic.seed);
        cfg.synthetic.f_n = s.value("f_n", cfg.synthetic.f_n);
        cfg.synthetic.f_e = s.value("f_e", cfg.synthetic.f_e);
        cfg.synthetic.edge_prob = s.value("edge_prob", cfg.synthetic.edge_prob);
      }
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      cfg.split_spec.seed = s.value("seed", cfg.split_spec.seed);
      if (s.contains("ratios")) {
        const auto r = s.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("split.ratios needs 3 entries");
        cfg.split_spec.ratios = {r[0], r[1], r[2]};
      }
    }
    if (j.contains("search")) {
      const json& s = j.at("search");
      if (s.contains("strategy")) cfg.search.strategy = strategy_from_name(s.at("strategy"));
      cfg.search.population = s.value("population", cfg.search.population);
      cfg.search.sample_size = s.value("sample_size", cfg.search.sample_size);
      cfg.search.workers = s.value("workers", cfg.search.workers);
      cfg.search.budget_s = s.value("budget_s", cfg.search.budget_s);
      cfg.search.max_evals = s.value("max_evals", cfg.search.max_evals);
      cfg.search.seed = s.value("seed", cfg.search.seed);
    }
    if (j.contains("train_search"))
      cfg.train_search = train_config_from_json(j.at("train_search"), cfg.train_search);
    if (j.contains("train_retrain")) {
      cfg.train_retrain = train_config_from_json(j.at("train_retrain"), cfg.train_retrain);
      if (j.at("train_retrain").contains("seeds"))
        cfg.retrain_seeds = j.at("train_retrain").at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("analysis")) {
      const json& a = j.at("analysis");
      cfg.high_performer_threshold = a.value("high_performer_threshold", cfg.high_performer_threshold);
      cfg.trajectory_window = a.value("window", cfg.trajectory_window);
      cfg.forest_trees = a.value("trees", cfg.forest_trees);
      cfg.forest_seed = a.value("seed", cfg.forest_seed);
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  if (cfg.retrain_seeds.empty()) throw ConfigError("train_retrain.seeds must not be empty");
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_string(buf.str());
}

std::string run_config_to_string(const RunConfig& cfg) {
  json j;
  if (cfg.use_synthetic) {
    j["dataset"]["synthetic"] = {{"task", synthetic_task_name(cfg.synthetic.task)},
                                 {"n_graphs", cfg.synthetic.n_graphs},
                                 {"max_nodes", cfg.synthetic.max_nodes},
                                 {"seed", cfg.synthetic.seed},
                                 {"f_n", cfg.synthetic.f_n},
                                 {"f_e", cfg.synthetic.f_e},
                                 {"edge_prob", cfg.synthetic.edge_prob}};
  } else {
    j["dataset"]["path"] = cfg.dataset_path;
  }
  j["split"] = {{"seed", cfg.split_spec.seed},
                {"ratios", {cfg.split_spec.ratios[0], cfg.split_spec.ratios[1], cfg.split_spec.ratios[2]}}};
  j["search"] = {{"strategy", strategy_name(cfg.search.strategy)},
                 {"population", cfg.search.population},
                 {"sample_size", cfg.search.sample_size},
                 {"workers", cfg.search.workers},
                 {"budget_s", cfg.search.budget_s},
                 {"max_evals", cfg.search.max_evals},
                 {"seed", cfg.search.seed}};
  j["train_search"] = train_config_to_json(cfg.train_search);
  j["train_retrain"] = train_config_to_json(cfg.train_retrain);
  j["train_retrain"]["seeds"] = cfg.retrain_seeds;
  j["analysis"] = {{"high_performer_threshold", cfg.high_performer_threshold},
                   {"window", cfg.trajectory_window},
                   {"trees", cfg.forest_trees},
                   {"seed", cfg.forest_seed}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

void write_log(const std::string& path, const std::vector<EvaluationRecord>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write log file: " + path);
  out.precision(17);
  for (const auto& r : log) {
    json j;
    j["p"] = r.p.to_string();
    if (r.failed) j["reward"] = nullptr;
    else j["reward"] = r.reward;
    j["metrics"] = r.metrics;
    j["t_submit"] = r.t_submit;
    j["t_start"] = r.t_start;
    j["t_finish"] = r.t_finish;
    j["seed"] = r.seed;
    j["status"] = r.failed ? "failed" : "ok";
    out << j.dump() << '\n';
  }
}

std::vector<EvaluationRecord> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file: " + path);
  std::vector<EvaluationRecord> log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      EvaluationRecord r;
      r.p = ArchitectureVector::parse(j.at("p").get<std::string>());
      r.failed = j.value("status", "ok") == std::string("failed");
      if (j.at("reward").is_null()) {
        r.failed = true;
        r.reward = EvaluationRecord::worst_reward();
      } else {
        r.reward = j.at("reward").get<double>();
      }
      r.metrics = j.value("metrics", std::vector<double>{});
      r.t_submit = j.value("t_submit", 0.0);
      r.t_start = j.value("t_start", 0.0);
      r.t_finish = j.value("t_finish", 0.0);
      r.seed = j.value("seed", std::uint64_t{0});
      log.push_back(std::move(r));
    } catch (const std::exception& ex) {
      throw std::runtime_error("log line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

std::vector<GraphRecord> load_run_dataset(const RunConfig& cfg) {
  if (cfg.use_synthetic) return make_synthetic(cfg.synthetic);
  if (cfg.dataset_path.empty()) throw ConfigError("config names no dataset");
  if (!fs::exists(cfg.dataset_path))
    throw ConfigError("dataset file not found: " + cfg.dataset_path);
  return load_dataset(cfg.dataset_path);
}

int cmd_search(const RunConfig& cfg) {
  const std::vector<GraphRecord> raw = load_run_dataset(cfg);
  const PreparedData data =
      prepare_data(raw, cfg.split_spec, cfg.train_search.batch_size, cfg.train_search.subset_fraction);
  if (data.train.empty() || data.valid.empty())
    throw EmptyResultsError("dataset too small to split into train/valid batches");

  const ChoiceTable table = ChoiceTable::standard();
  const ModelDims mdims{data.dims.f_n, data.dims.f_e, data.dims.k, data.dims.n_max};
  const TrainConfig base_train = cfg.train_search;

  Evaluator evaluator = [&](const ArchitectureVector& p, std::uint64_t seed) {
    CompiledModel model(p, table, mdims, seed);
    TrainConfig tc = base_train;
    tc.seed = seed;
    return train_model(model, data.train, data.valid, tc);
  };

  std::vector<EvaluationRecord> log = run_search(cfg.search, table, evaluator);
  if (log.empty()) throw EmptyResultsError("search produced no finished evaluations");
  sort_by_finish(log);

  fs::create_directories(cfg.out_dir);
  write_log(cfg.out_dir + "/eval_log.jsonl", log);
  write_text_file(cfg.out_dir + "/trajectory.csv",
                  csv_trajectory(trajectory(log, cfg.trajectory_window)));
  write_text_file(cfg.out_dir + "/high_performers.csv",
                  csv_high_performers(count_high_performers(log, cfg.high_performer_threshold)));
  write_text_file(cfg.out_dir + "/config_effective.json", run_config_to_string(cfg));

  const std::vector<EvaluationRecord> ok = usable_records(log);
  if (ok.empty()) throw EmptyResultsError("every evaluation failed");
  const EvaluationRecord* best = &ok.front();
  for (const auto& r : ok)
    if (r.reward > best->reward || (r.reward == best->reward && r.t_finish < best->t_finish))
      best = &r;
  json bj;
  bj["p"] = best->p.to_string();
  bj["reward"] = best->reward;
  bj["metrics"] = best->metrics;
  bj["evaluations"] = log.size();
  write_text_file(cfg.out_dir + "/best.json", bj.dump(2) + "\n");

  std::cout << "search finished: " << log.size() << " evaluations, best reward " << best->reward
            << " (p=" << best->p.to_string() << ")\n";
  return kExitOk;
}

int cmd_retrain(const RunConfig& cfg, const std::string& log_path) {
  std::vector<EvaluationRecord> log = read_log(log_path);
  if (log.empty()) throw EmptyResultsError("evaluation log " + log_path + " is empty");
  if (usable_records(log).empty())
    throw EmptyResultsError("evaluation log " + log_path + " holds only failed records");

  RetrainOptions opts;
  opts.ratios = cfg.split_spec.ratios;
  opts.seeds = cfg.retrain_seeds;
  opts.train = cfg.train_retrain;

  const std::vector<GraphRecord> raw = load_run_dataset(cfg);
  const RetrainResult result = retrain_best(log, raw, opts);

  json j;
  j["p"] = result.champion.p.to_string();
  j["search_reward"] = result.champion.reward;
  j["metric"] = metric_name(cfg.train_retrain.metric);
  for (std::size_t s = 0; s < opts.seeds.size(); ++s)
    j["per_seed"].push_back({{"seed", opts.seeds[s]},
                             {"test_metrics", result.per_seed_metrics[s]},
                             {"test_metric_mean", result.per_seed_mean[s]}});
  j["test_metric_mean"] = result.mean;
  j["test_metric_std"] = result.stddev;

  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/final_metrics.json", j.dump(2) + "\n");
  std::cout << "retrained " << result.champion.p.to_string() << ": test "
            << metric_name(cfg.train_retrain.metric) << " = " << result.mean << " +/- "
            << result.stddev << "\n";
  return kExitOk;
}

int cmd_analyze(const RunConfig& cfg, const std::string& log_path) {
  std::vector<EvaluationRecord> log = read_log(log_path);
  const std::vector<EvaluationRecord> ok = usable_records(log);
  if (ok.size() < 10)
    throw EmptyResultsError("need at least 10 usable records to fit the forest, got " +
                            std::to_string(ok.size()));

  const ChoiceTable table = ChoiceTable::standard();
  const OperationCoding coding = OperationCoding::standard(table);
  Eigen::MatrixXd x(static_cast<Index>(ok.size()), coding.k());
  Eigen::VectorXd y(static_cast<Index>(ok.size()));
  for (std::size_t i = 0; i < ok.size(); ++i) {
    x.row(static_cast<Index>(i)) = encode_operations(ok[i].p, table).transpose();
    y[static_cast<Index>(i)] = ok[i].reward;
  }

  RandomForest forest;
  forest.fit(x, y, cfg.forest_trees, cfg.forest_seed);
  const ImportanceReport rep = importance_report(forest, x);

  std::vector<Index> order(static_cast<std::size_t>(coding.k()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return rep.values[a] > rep.values[b]; });

  std::ostringstream csv;
  csv.precision(17);
  csv << "coordinate_name,importance\n";
  for (Index i : order) csv << coding.names[static_cast<std::size_t>(i)] << ',' << rep.values[i] << '\n';

  std::ostringstream summary;
  summary.precision(6);
  summary << "top positive operations:\n";
  for (std::size_t i = 0; i < rep.top_positive.size(); ++i)
    summary << "  " << i + 1 << ". " << coding.names[static_cast<std::size_t>(rep.top_positive[i])]
            << "  " << rep.values[rep.top_positive[i]] << "\n";
  summary << "top negative operations:\n";
  for (std::size_t i = 0; i < rep.top_negative.size(); ++i)
    summary << "  " << i + 1 << ". " << coding.names[static_cast<std::size_t>(rep.top_negative[i])]
            << "  " << rep.values[rep.top_negative[i]] << "\n";

  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/importance.csv", csv.str());
  write_text_file(cfg.out_dir + "/summary.txt", summary.str());
  std::cout << summary.str();
  return kExitOk;
}

int cmd_trajectory(const RunConfig& cfg, const std::string& log_path) {
  std::vector<EvaluationRecord> log = read_log(log_path);
  if (log.empty()) throw EmptyResultsError("evaluation log " + log_path + " is empty");
  sort_by_finish(log);
  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/trajectory.csv",
                  csv_trajectory(trajectory(log, cfg.trajectory_window)));
  write_text_file(cfg.out_dir + "/high_performers.csv",
                  csv_high_performers(count_high_performers(log, cfg.high_performer_threshold)));
  std::cout << "wrote trajectory.csv and high_performers.csv for " << log.size() << " records\n";
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"neural-architecture search for stacked message-passing networks"};
  app.require_subcommand(1);

  std::string config_path, log_path, out_dir, strategy;
  std::uint64_t seed = 0;
  int workers = 0, window = 0;
  double budget_s = 0.0;
  bool have_seed = false, have_workers = false, have_budget = false, have_window = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", config_path, "run configuration (JSON)");
    if (needs_config) c->required();
    cmd->add_option("--out", out_dir, "output directory override");
  };

  CLI::App* search = app.add_subcommand("search", "run an architecture search");
  add_common(search, true);
  search->add_option("--seed", seed, "search seed override")->each([&](const std::string&) { have_seed = true; });
  search->add_option("--workers", workers, "worker count override")->each([&](const std::string&) { have_workers = true; });
  search->add_option("--budget-s", budget_s, "wall-clock budget override (seconds)")
      ->each([&](const std::string&) { have_budget = true; });
  search->add_option("--strategy", strategy, "re or rs")->check(CLI::IsMember({"re", "rs"}));

  CLI::App* retrain = app.add_subcommand("retrain", "retrain the best logged architecture");
  add_common(retrain, true);
  retrain->add_option("--log", log_path, "evaluation log (jsonl)")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "operation-importance analysis of a log");
  add_common(analyze, false);
  analyze->add_option("--log", log_path, "evaluation log (jsonl)")->required();

  CLI::App* traj = app.add_subcommand("trajectory", "recompute trajectory CSVs from a log");
  add_common(traj, false);
  traj->add_option("--log", log_path, "evaluation log (jsonl)")->required();
  traj->add_option("--window", window, "running-average window")
      ->each([&](const std::string&) { have_window = true; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    RunConfig cfg = config_path.empty() ? default_run_config() : parse_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (have_seed) cfg.search.seed = seed;
    if (have_workers) cfg.search.workers = workers;
    if (have_budget) cfg.search.budget_s = budget_s;
    if (!strategy.empty()) cfg.search.strategy = strategy_from_name(strategy);
    if (have_window) cfg.trajectory_window = window;

    if (search->parsed()) return cmd_search(cfg);
    if (retrain->parsed()) return cmd_retrain(cfg, log_path);
    if (analyze->parsed()) return cmd_analyze(cfg, log_path);
    if (traj->parsed()) return cmd_trajectory(cfg, log_path);
    return kExitConfigError;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfigError;
  } catch (const EmptyResultsError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitEmptyResults;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace gnas
