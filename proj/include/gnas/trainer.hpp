#ifndef GNAS_TRAINER_HPP
#define GNAS_TRAINER_HPP

#include "gnas/graph.hpp"
#include "gnas/mpnn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gnas {

enum class MetricKind { kMae, kRmse };

MetricKind metric_from_name(const std::string& name);
const char* metric_name(MetricKind m);

struct TrainConfig {
  int epochs = 50;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double subset_fraction = 1.0;     // search-time training uses a subset
  double time_budget_s = 600.0;     // per-evaluation wall-clock cap
  MetricKind metric = MetricKind::kMae;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct EvaluationRecord {
  ArchitectureVector p;
  double reward = 0.0;                 // -(mean metric over tasks); -inf when failed
  std::vector<double> metrics;         // per task, original target scale
  std::vector<double> train_loss;      // per epoch, standardized scale
  std::vector<double> valid_loss;      // per epoch, standardized scale
  double t_submit = 0.0, t_start = 0.0, t_finish = 0.0;  // seconds since search start
  std::uint64_t seed = 0;
  bool failed = false;
  int steps = 0;

  static double worst_reward();
};

class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(ParamRegistry& params);

 private:
  TrainConfig cfg_;
  long t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

// Per-task standardization fitted on the training targets; predictions are
// mapped back to the original scale before any metric.
struct TargetScaler {
  Eigen::ArrayXd mean, stddev;
  static TargetScaler fit(const std::vector<GraphBatch>& train);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& y) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& y) const;
};

// Negative metric: mae -> -mean|pred-target| over all entries; rmse -> the
// per-task root-mean-square errors averaged across tasks, negated.
double reward(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, MetricKind metric);
// Per-task metric values (positive, original scale).
Eigen::ArrayXd task_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets,
                            MetricKind metric);

// Stacks model predictions over a batch list, inverse-scaled, against the raw
// targets.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict_all(const CompiledModel& model,
                                                        const std::vector<GraphBatch>& batches,
                                                        const TargetScaler& scaler);

// Adam training with the metric-matched loss (L1 for mae, squared for rmse).
// Stops at cfg.epochs or cfg.time_budget_s, whichever comes first. A
// non-finite loss marks the record failed with the worst reward.
EvaluationRecord train_model(CompiledModel& model, const std::vector<GraphBatch>& train,
                             const std::vector<GraphBatch>& valid, const TrainConfig& cfg);

struct RetrainOptions {
  ChoiceTable table = ChoiceTable::standard();
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;  // epochs default 200 at the call site
};

struct RetrainResult {
  EvaluationRecord champion;
  std::vector<std::vector<double>> per_seed_metrics;  // seed -> per-task metric
  std::vector<double> per_seed_mean;                  // seed -> metric averaged over tasks
  double mean = 0.0;
  double stddev = 0.0;  // population std over the seed runs
};

// Picks the argmax-reward record (ties: earliest finish), then re-splits the
// raw records with each seed and trains from scratch on the full train split.
RetrainResult retrain_best(const std::vector<EvaluationRecord>& log,
                           const std::vector<GraphRecord>& raw_records, const RetrainOptions& opts);

// Shared batching path: augment, measure, split, subset, batch.
struct PreparedData {
  DatasetDims dims;
  std::vector<GraphBatch> train, valid, test;
};
PreparedData prepare_data(const std::vector<GraphRecord>& raw_records, const SplitSpec& split_spec,
                          Index batch_size, double train_fraction = 1.0);

}  // namespace gnas

#endif  // GNAS_TRAINER_HPP
