#include "gnas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

namespace gnas {

MetricKind metric_from_name(const std::string& name) {
  if (name == "mae") return MetricKind::kMae;
  if (name == "rmse") return MetricKind::kRmse;
  throw std::invalid_argument("unknown metric '" + name + "' (expected mae or rmse)");
}

const char* metric_name(MetricKind m) { return m == MetricKind::kMae ? "mae" : "rmse"; }

double EvaluationRecord::worst_reward() { return -std::numeric_limits<double>::infinity(); }

void Adam::step(ParamRegistry& params) {
  const auto& items = params.items();
  if (m_.empty()) {
    m_.resize(items.size());
    v_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      m_[i] = Eigen::ArrayXd::Zero(items[i].second.numel());
      v_[i] = Eigen::ArrayXd::Zero(items[i].second.numel());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor p = items[i].second;
    const Eigen::ArrayXd& g = p.grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
    p.value() -= cfg_.learning_rate * (m_[i] / c1) / ((v_[i] / c2).sqrt() + cfg_.epsilon);
  }
}

TargetScaler TargetScaler::fit(const std::vector<GraphBatch>& train) {
  if (train.empty()) throw std::invalid_argument("TargetScaler: no training batches");
  const Index k = train.front().k;
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(k), sumsq = Eigen::ArrayXd::Zero(k);
  double n = 0.0;
  for (const auto& b : train) {
    ConstMatMap y(b.y.value().data(), b.b, k);
    sum += y.colwise().sum().transpose().array();
    sumsq += y.array().square().colwise().sum().transpose();
    n += static_cast<double>(b.b);
  }
  TargetScaler s;
  s.mean = sum / n;
  Eigen::ArrayXd var = sumsq / n - s.mean.square();
  s.stddev = var.max(0.0).sqrt();
  for (Index i = 0; i < k; ++i)
    if (s.stddev[i] < 1e-12) s.stddev[i] = 1.0;
  return s;
}

Eigen::MatrixXd TargetScaler::apply(const Eigen::MatrixXd& y) const {
  return ((y.array().rowwise() - mean.transpose()).rowwise() / stddev.transpose()).matrix();
}

Eigen::MatrixXd TargetScaler::invert(const Eigen::MatrixXd& y) const {
  return ((y.array().rowwise() * stddev.transpose()).rowwise() + mean.transpose()).matrix();
}

Eigen::ArrayXd task_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets,
                            MetricKind metric) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw std::invalid_argument("metrics: prediction shape (" + std::to_string(predictions.rows()) +
                                "," + std::to_string(predictions.cols()) + ") vs target shape (" +
                                std::to_string(targets.rows()) + "," + std::to_string(targets.cols()) +
                                ")");
  const Eigen::ArrayXXd diff = (predictions - targets).array();
  if (metric == MetricKind::kMae) return diff.abs().colwise().mean().transpose();
  return diff.square().colwise().mean().transpose().sqrt();
}

double reward(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, MetricKind metric) {
  return -task_metrics(predictions, targets, metric).mean();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict_all(const CompiledModel& model,
                                                        const std::vector<GraphBatch>& batches,
                                                        const TargetScaler& scaler) {
  Index total = 0;
  for (const auto& b : batches) total += b.b;
  const Index k = batches.empty() ? 0 : batches.front().k;
  Eigen::MatrixXd pred(total, k), target(total, k);
  Index row = 0;
  for (const auto& b : batches) {
    Tensor out = model.forward(nullptr, b);
    pred.middleRows(row, b.b) = scaler.invert(ConstMatMap(out.value().data(), b.b, k));
    target.middleRows(row, b.b) = ConstMatMap(b.y.value().data(), b.b, k);
    row += b.b;
  }
  return {pred, target};
}

namespace {

Tensor loss_tensor(Tape* tape, const Tensor& pred, const Tensor& target, MetricKind metric) {
  Tensor diff = sub(tape, pred, target);
  return metric == MetricKind::kMae ? reduce_mean_all(tape, abs_val(tape, diff))
                                    : reduce_mean_all(tape, square(tape, diff));
}

}  // namespace

EvaluationRecord train_model(CompiledModel& model, const std::vector<GraphBatch>& train,
                             const std::vector<GraphBatch>& valid, const TrainConfig& cfg) {
  if (train.empty() || valid.empty())
    throw std::invalid_argument("train_model: train and valid batches must be non-empty");
  if (train.front().k != model.dims().k)
    throw std::invalid_argument("train_model: model output width " + std::to_string(model.dims().k) +
                                " does not match task count " + std::to_string(train.front().k));

  EvaluationRecord rec;
  rec.p = model.vector();
  rec.seed = cfg.seed;

  const TargetScaler scaler = TargetScaler::fit(train);
  auto scaled_targets = [&](const GraphBatch& b) {
    Eigen::MatrixXd y = scaler.apply(ConstMatMap(b.y.value().data(), b.b, b.k));
    Tensor t = Tensor::zeros({b.b, b.k});
    MatMap(t.value().data(), b.b, b.k) = y;
    return t;
  };
  std::vector<Tensor> train_y, valid_y;
  for (const auto& b : train) train_y.push_back(scaled_targets(b));
  for (const auto& b : valid) valid_y.push_back(scaled_targets(b));

  Adam opt(cfg);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  bool out_of_time = false;
  for (int epoch = 0; epoch < cfg.epochs && !out_of_time && !rec.failed; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batches_done = 0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const GraphBatch& b = train[order[oi]];
      Tape tape;
      model.params().zero_grads();
      Tensor pred = model.forward(&tape, b);
      Tensor loss = loss_tensor(&tape, pred, train_y[order[oi]], cfg.metric);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        rec.failed = true;
        break;
      }
      tape.backward(loss);
      opt.step(model.params());
      ++rec.steps;
      loss_sum += lv;
      ++batches_done;
      if (elapsed() >= cfg.time_budget_s) {
        out_of_time = true;
        break;
      }
    }
    if (batches_done > 0) rec.train_loss.push_back(loss_sum / batches_done);

    double vloss = 0.0, vcount = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      Tensor pred = model.forward(nullptr, valid[i]);
      vloss += loss_tensor(nullptr, pred, valid_y[i], cfg.metric).item() *
               static_cast<double>(valid[i].b);
      vcount += static_cast<double>(valid[i].b);
    }
    rec.valid_loss.push_back(vloss / vcount);
  }

  if (rec.failed) {
    rec.reward = EvaluationRecord::worst_reward();
    return rec;
  }

  auto [pred, target] = predict_all(model, valid, scaler);
  const Eigen::ArrayXd metrics = task_metrics(pred, target, cfg.metric);
  if (!metrics.isFinite().all()) {
    rec.failed = true;
    rec.reward = EvaluationRecord::worst_reward();
    return rec;
  }
  rec.metrics.assign(metrics.data(), metrics.data() + metrics.size());
  rec.reward = -metrics.mean();
  return rec;
}

PreparedData prepare_data(const std::vector<GraphRecord>& raw_records, const SplitSpec& split_spec,
                          Index batch_size, double train_fraction) {
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw std::invalid_argument("prepare_data: train fraction must be in (0,1]");
  std::vector<GraphRecord> augmented = augment_all(raw_records);
  PreparedData out;
  out.dims = measure_dims(augmented);
  SplitResult parts = split(augmented, split_spec);
  if (train_fraction < 1.0) {
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(parts.train.size()) * train_fraction));
    parts.train.resize(keep);
  }
  out.train = pad_and_batch(parts.train, out.dims, batch_size);
  out.valid = pad_and_batch(parts.valid, out.dims, batch_size);
  out.test = pad_and_batch(parts.test, out.dims, batch_size);
  return out;
}

RetrainResult retrain_best(const std::vector<EvaluationRecord>& log,
                           const std::vector<GraphRecord>& raw_records, const RetrainOptions& opts) {
  if (log.empty()) throw std::invalid_argument("retrain_best: empty evaluation log");
  const EvaluationRecord* champion = nullptr;
  for (const auto& r : log) {
    if (r.failed) continue;
    if (!champion || r.reward > champion->reward ||
        (r.reward == champion->reward && r.t_finish < champion->t_finish))
      champion = &r;
  }
  if (!champion) throw std::runtime_error("retrain_best: all evaluations failed");

  RetrainResult result;
  result.champion = *champion;
  result.per_seed_metrics.resize(opts.seeds.size());
  result.per_seed_mean.resize(opts.seeds.size());

  // The seed runs are independent end to end, so they train in parallel.
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(opts.seeds.size());
  for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
    threads.emplace_back([&, s] {
      try {
        const std::uint64_t seed = opts.seeds[s];
        PreparedData data =
            prepare_data(raw_records, SplitSpec{seed, opts.ratios}, opts.train.batch_size);
        ModelDims mdims{data.dims.f_n, data.dims.f_e, data.dims.k, data.dims.n_max};
        CompiledModel model(champion->p, opts.table, mdims, seed);
        TrainConfig cfg = opts.train;
        cfg.seed = seed;
        cfg.subset_fraction = 1.0;
        EvaluationRecord rec = train_model(model, data.train, data.valid, cfg);
        if (rec.failed)
          throw std::runtime_error("retrain_best: training diverged for seed " +
                                   std::to_string(seed));

        const TargetScaler scaler = TargetScaler::fit(data.train);
        auto [pred, target] = predict_all(model, data.test, scaler);
        const Eigen::ArrayXd metrics = task_metrics(pred, target, cfg.metric);
        result.per_seed_metrics[s].assign(metrics.data(), metrics.data() + metrics.size());
        result.per_seed_mean[s] = metrics.mean();
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double n = static_cast<double>(result.per_seed_mean.size());
  double mean = 0.0;
  for (double v : result.per_seed_mean) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : result.per_seed_mean) var += (v - mean) * (v - mean);
  result.mean = mean;
  result.stddev = std::sqrt(var / n);
  return result;
}

}  // namespace gnas
