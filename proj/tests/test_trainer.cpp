#include "gnas/trainer.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace gnas;
using test_util::batch_records;
using test_util::make_record;

namespace {

ArchitectureVector plain_arch(Index d, Act act, Update upd, int t, GatherOp gather) {
  DecodedArch arch;
  for (auto& c : arch.cells) {
    c.state_dim = d;
    c.attention = Attention::kConstant;
    c.heads = 1;
    c.aggregate = Aggregate::kSum;
    c.activation = act;
    c.update = upd;
    c.repetitions = t;
  }
  arch.gather = gather;
  return encode(arch, ChoiceTable::standard());
}

}  // namespace

TEST_CASE("reward definitions") {
  Eigen::MatrixXd a(3, 2), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;

  SUBCASE("perfect predictions score zero") {
    CHECK(reward(a, a, MetricKind::kMae) == 0.0);
    CHECK(reward(a, a, MetricKind::kRmse) == 0.0);
  }
  SUBCASE("uniform offset of 2 gives mae reward -2") {
    b = a.array() + 2.0;
    CHECK(reward(b, a, MetricKind::kMae) == doctest::Approx(-2.0));
  }
  SUBCASE("single-task rmse of residuals [0,2] is -sqrt(2)") {
    Eigen::MatrixXd p(2, 1), t(2, 1);
    p << 0, 2;
    t << 0, 0;
    CHECK(reward(p, t, MetricKind::kRmse) == doctest::Approx(-std::sqrt(2.0)));
  }
  SUBCASE("shape mismatch is an error") {
    Eigen::MatrixXd c(2, 2);
    CHECK_THROWS_AS(reward(a, c, MetricKind::kMae), std::invalid_argument);
  }
  SUBCASE("batch permutation leaves the reward unchanged") {
    b = a.array() * 0.5 + 1.0;
    Eigen::MatrixXd ap = a, bp = b;
    ap.row(0).swap(ap.row(2));
    bp.row(0).swap(bp.row(2));
    CHECK(reward(b, a, MetricKind::kMae) == reward(bp, ap, MetricKind::kMae));
    CHECK(reward(b, a, MetricKind::kRmse) == reward(bp, ap, MetricKind::kRmse));
  }
}

TEST_CASE("training bookkeeping and budgets") {
  SyntheticSpec spec;
  spec.task = SyntheticTask::kEdgeCount;
  spec.n_graphs = 13;
  spec.max_nodes = 5;
  spec.seed = 3;
  spec.f_n = 4;
  spec.f_e = 3;
  auto records = make_synthetic(spec);
  auto train_batches = batch_records(records, 4);  // 13 graphs -> 4 batches
  auto valid_batches = batch_records(records, 4);
  const ChoiceTable table = ChoiceTable::standard();
  const ModelDims dims{4, 3, 1, train_batches[0].n_max};

  SUBCASE("one epoch performs ceil(|train|/B) optimizer steps") {
    CompiledModel model(plain_arch(4, Act::kRelu, Update::kMlp, 1, GatherOp::kGatherSum), table, dims,
                        1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    EvaluationRecord rec = train_model(model, train_batches, valid_batches, cfg);
    CHECK(rec.steps == 4);
    CHECK(rec.train_loss.size() == 1);
    CHECK(rec.valid_loss.size() == 1);
  }

  SUBCASE("a constant zero predictor on zero targets earns reward 0") {
    auto zero_records = records;
    for (auto& r : zero_records) r.targets.setZero();
    auto zb = batch_records(zero_records, 4);
    CompiledModel model(plain_arch(4, Act::kRelu, Update::kMlp, 1, GatherOp::kGatherSum), table, dims,
                        1);
    for (const auto& [name, t] : model.params().items()) t.value().setZero();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;  // keep it a constant predictor
    EvaluationRecord rec = train_model(model, zb, zb, cfg);
    CHECK(rec.reward == 0.0);
    CHECK_FALSE(rec.failed);
  }

  SUBCASE("a zero time budget stops after the first optimizer step") {
    CompiledModel model(plain_arch(4, Act::kRelu, Update::kMlp, 1, GatherOp::kGatherSum), table, dims,
                        1);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.time_budget_s = 0.0;
    EvaluationRecord rec = train_model(model, train_batches, valid_batches, cfg);
    CHECK(rec.steps == 1);
    CHECK_FALSE(rec.failed);
  }

  SUBCASE("divergent parameters mark the record failed with the worst reward") {
    CompiledModel model(plain_arch(4, Act::kRelu, Update::kMlp, 1, GatherOp::kGatherSum), table, dims,
                        1);
    model.params().find("head/out/b")->value().setConstant(1e200);  // squared residual overflows
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.metric = MetricKind::kRmse;
    EvaluationRecord rec = train_model(model, train_batches, valid_batches, cfg);
    CHECK(rec.failed);
    CHECK(rec.reward == EvaluationRecord::worst_reward());
  }

  SUBCASE("two sequential runs from one seed produce bitwise-identical losses") {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 9;
    ArchitectureVector p = plain_arch(8, Act::kTanh, Update::kGru, 2, GatherOp::kAttnSumPool);
    CompiledModel m1(p, table, dims, cfg.seed);
    EvaluationRecord r1 = train_model(m1, train_batches, valid_batches, cfg);
    CompiledModel m2(p, table, dims, cfg.seed);
    EvaluationRecord r2 = train_model(m2, train_batches, valid_batches, cfg);
    REQUIRE(r1.train_loss.size() == r2.train_loss.size());
    for (std::size_t e = 0; e < r1.train_loss.size(); ++e) {
      CHECK(r1.train_loss[e] == r2.train_loss[e]);
      CHECK(r1.valid_loss[e] == r2.valid_loss[e]);
    }
    CHECK(r1.reward == r2.reward);
  }
}

TEST_CASE("an edge-count model beats the best constant predictor") {
  SyntheticSpec spec;
  spec.task = SyntheticTask::kEdgeCount;
  spec.n_graphs = 80;
  spec.max_nodes = 6;
  spec.seed = 5;
  spec.f_n = 4;
  spec.f_e = 3;
  auto records = make_synthetic(spec);
  PreparedData data = prepare_data(records, SplitSpec{1, {0.8, 0.1, 0.1}}, 8);

  CompiledModel model(plain_arch(16, Act::kRelu, Update::kGru, 2, GatherOp::kGatherSum),
                      ChoiceTable::standard(),
                      ModelDims{data.dims.f_n, data.dims.f_e, data.dims.k, data.dims.n_max}, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.seed = 2;
  EvaluationRecord rec = train_model(model, data.train, data.valid, cfg);
  REQUIRE_FALSE(rec.failed);

  // best constant for MAE = median of the validation targets
  std::vector<double> targets;
  for (const auto& b : data.valid)
    for (Index g = 0; g < b.b; ++g) targets.push_back(b.y.value()[g * b.k]);
  std::sort(targets.begin(), targets.end());
  const double median = targets[targets.size() / 2];
  double const_mae = 0.0;
  for (double t : targets) const_mae += std::abs(t - median);
  const_mae /= static_cast<double>(targets.size());

  CHECK(rec.metrics[0] < const_mae);
}

TEST_CASE("training loss decreases early on the feature-sum task") {
  SyntheticSpec spec;
  spec.task = SyntheticTask::kFeatureSum;
  spec.n_graphs = 60;
  spec.max_nodes = 7;
  spec.f_n = 8;
  spec.f_e = 3;
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = 100 + seed;
    auto records = make_synthetic(spec);
    auto batches = batch_records(records);  // full batch keeps the descent smooth
    CompiledModel model(plain_arch(16, Act::kRelu, Update::kGru, 2, GatherOp::kGatherSum),
                        ChoiceTable::standard(), ModelDims{8, 3, 1, batches[0].n_max}, seed);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = static_cast<Index>(records.size());
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    cfg.metric = MetricKind::kRmse;
    EvaluationRecord rec = train_model(model, batches, batches, cfg);
    bool decreasing = true;
    for (std::size_t e = 1; e < rec.train_loss.size(); ++e)
      decreasing = decreasing && rec.train_loss[e] < rec.train_loss[e - 1];
    if (decreasing) ++monotone;
  }
  CHECK(monotone >= 9);
}

TEST_CASE("retrain_best") {
  SyntheticSpec spec;
  spec.task = SyntheticTask::kEdgeCount;
  spec.n_graphs = 60;
  spec.max_nodes = 5;
  spec.seed = 8;
  spec.f_n = 4;
  spec.f_e = 3;
  auto records = make_synthetic(spec);

  auto rec_with = [&](double reward, double finish, bool failed = false) {
    EvaluationRecord r;
    r.p = plain_arch(4, Act::kRelu, Update::kMlp, 1, GatherOp::kGatherSum);
    r.reward = failed ? EvaluationRecord::worst_reward() : reward;
    r.t_finish = finish;
    r.failed = failed;
    return r;
  };

  SUBCASE("champion is the argmax reward") {
    std::vector<EvaluationRecord> log{rec_with(-3, 1), rec_with(-1, 2), rec_with(-2, 3)};
    RetrainOptions opts;
    opts.train.epochs = 2;
    opts.train.batch_size = 8;
    RetrainResult res = retrain_best(log, records, opts);
    CHECK(res.champion.reward == -1.0);
    CHECK(res.per_seed_mean.size() == 3);
    CHECK(std::isfinite(res.mean));
    CHECK(res.stddev >= 0.0);
  }
  SUBCASE("ties break toward the earliest finish") {
    std::vector<EvaluationRecord> log{rec_with(-1, 5), rec_with(-1, 2), rec_with(-4, 1)};
    RetrainOptions opts;
    opts.train.epochs = 1;
    opts.train.batch_size = 8;
    opts.seeds = {1};
    RetrainResult res = retrain_best(log, records, opts);
    CHECK(res.champion.t_finish == 2.0);
  }
  SUBCASE("three seeds give three distinct splits and metrics") {
    std::vector<EvaluationRecord> log{rec_with(-1, 1)};
    RetrainOptions opts;
    opts.train.epochs = 2;
    opts.train.batch_size = 8;
    opts.seeds = {1, 2, 3};
    RetrainResult res = retrain_best(log, records, opts);
    CHECK(res.per_seed_metrics.size() == 3);
    CHECK(res.per_seed_mean.size() == 3);
  }
  SUBCASE("all-failed log is an error") {
    std::vector<EvaluationRecord> log{rec_with(0, 1, true), rec_with(0, 2, true)};
    CHECK_THROWS_AS(retrain_best(log, records, RetrainOptions{}), std::runtime_error);
    CHECK_THROWS_AS(retrain_best({}, records, RetrainOptions{}), std::invalid_argument);
  }
}

TEST_CASE("target scaler round trip") {
  auto records = make_synthetic(SyntheticSpec{SyntheticTask::kFeatureSum, 30, 5, 17, 4, 3, 0.4});
  auto batches = batch_records(records, 8);
  TargetScaler s = TargetScaler::fit(batches);
  Eigen::MatrixXd y(3, 1);
  y << 0.5, 1.5, -2.0;
  CHECK((s.invert(s.apply(y)) - y).cwiseAbs().maxCoeff() < 1e-12);
}
