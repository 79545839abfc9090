#include "gnas/forest.hpp"

#include <doctest.h>

#include <random>

using namespace gnas;

namespace {

Eigen::MatrixXd random_ops(const ChoiceTable& table, Index n, std::uint64_t seed,
                           std::vector<ArchitectureVector>* vectors = nullptr) {
  const OperationCoding coding = OperationCoding::standard(table);
  Eigen::MatrixXd x(n, coding.k());
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n; ++i) {
    ArchitectureVector p = sample_uniform(table, rng);
    x.row(i) = encode_operations(p, table).transpose();
    if (vectors) vectors->push_back(p);
  }
  return x;
}

}  // namespace

TEST_CASE("operation coding of the standard table") {
  const ChoiceTable table = ChoiceTable::standard();
  const OperationCoding coding = OperationCoding::standard(table);

  SUBCASE("125 coordinates: 3*34 + 6*2 + 11") {
    CHECK(coding.k() == 125);
  }
  SUBCASE("names follow the paper scheme") {
    CHECK_NOTHROW(coding.index_of("dim(32)[cell1]"));
    CHECK_NOTHROW(coding.index_of("attn(gat)[cell2]"));
    CHECK_NOTHROW(coding.index_of("act(elu)[cell3]"));
    CHECK_NOTHROW(coding.index_of("skip(input->cell2)"));
    CHECK_NOTHROW(coding.index_of("gather(flatten)"));
    CHECK_NOTHROW(coding.index_of("T(6)[cell1]"));
    CHECK_THROWS_AS(coding.index_of("dim(5)[cell1]"), std::invalid_argument);
  }
  SUBCASE("dim(32) on cell1 sets exactly that dim coordinate positive") {
    MpnnCellConfig cfg;
    cfg.state_dim = 32;
    DecodedArch arch;
    arch.cells[0] = cfg;
    const Eigen::ArrayXd a = encode_operations(encode(arch, table), table);
    CHECK(a[coding.index_of("dim(32)[cell1]")] == 1.0);
    CHECK(a[coding.index_of("dim(4)[cell1]")] == -1.0);
    CHECK(a[coding.index_of("dim(8)[cell1]")] == -1.0);
    CHECK(a[coding.index_of("dim(16)[cell1]")] == -1.0);
  }
  SUBCASE("exactly one +1 per block and round trip recovers p") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
      ArchitectureVector p = sample_uniform(table, rng);
      const Eigen::ArrayXd a = encode_operations(p, table);
      CHECK(a.abs().maxCoeff() == 1.0);
      CHECK(decode_operations(a, table) == p);
    }
  }
}

TEST_CASE("forest fitting") {
  const ChoiceTable table = ChoiceTable::standard();

  SUBCASE("constant responses give single-leaf trees and zero contributions") {
    Eigen::MatrixXd x = random_ops(table, 30, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 0.3);
    RandomForest forest;
    forest.fit(x, y, 20, 7);
    for (const auto& t : forest.trees()) CHECK(t.nodes().size() == 1);
    const Eigen::ArrayXd a = x.row(4).array().transpose();
    CHECK(forest.predict(a) == doctest::Approx(0.3).epsilon(1e-14));
    ContributionVector c = forest.decompose(a);
    CHECK(c.bias == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(c.contrib.abs().maxCoeff() == 0.0);
  }
  SUBCASE("requesting 100 trees fits exactly 100") {
    Eigen::MatrixXd x = random_ops(table, 40, 2);
    Eigen::VectorXd y = x.col(10);
    RandomForest forest;
    forest.fit(x, y, 100, 3);
    CHECK(forest.tree_count() == 100);
  }
  SUBCASE("a single informative coordinate dominates the importance") {
    const OperationCoding coding = OperationCoding::standard(table);
    const Index j = coding.index_of("act(relu)[cell1]");
    Eigen::MatrixXd x = random_ops(table, 200, 3);
    Eigen::VectorXd y = x.col(j);
    RandomForest forest;
    forest.fit(x, y, 50, 11);
    const Eigen::ArrayXd imp = importance(forest, x);
    Index argmax = 0;
    imp.maxCoeff(&argmax);
    CHECK(argmax == j);
    CHECK(imp[j] > 0.35);  // analytic value 2*q*(1-q)*2 = 0.4375 at q = 1/8
  }
  SUBCASE("too few samples is an error") {
    Eigen::MatrixXd x = random_ops(table, 9, 4);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(9);
    RandomForest forest;
    CHECK_THROWS_AS(forest.fit(x, y, 10, 1), std::invalid_argument);
  }
}

TEST_CASE("decomposition is exactly additive") {
  const ChoiceTable table = ChoiceTable::standard();
  Eigen::MatrixXd x = random_ops(table, 120, 9);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 0.1);
  Eigen::VectorXd y(120);
  for (Index i = 0; i < 120; ++i)
    y[i] = 0.4 * x(i, 3) - 0.2 * x(i, 40) + 0.1 * x(i, 100) + noise(rng);
  RandomForest forest;
  forest.fit(x, y, 100, 5);

  std::mt19937_64 rng2(11);
  for (int i = 0; i < 100; ++i) {
    const Eigen::ArrayXd a = encode_operations(sample_uniform(table, rng2), table);
    const ContributionVector c = forest.decompose(a);
    CHECK(std::abs(c.bias + c.contrib.sum() - forest.predict(a)) <= 1e-10);
  }
}

TEST_CASE("hand-built tree reproduces the worked decision-path arithmetic") {
  // root mean -0.52; +0.08 for dim(32)[cell1] present; +0.18 for
  // attn(gat)[cell1] absent; -0.07 for act(elu)[cell1] present. The path
  // telescopes to the leaf mean, -0.33.
  const ChoiceTable table = ChoiceTable::standard();
  const OperationCoding coding = OperationCoding::standard(table);
  const int f_dim = static_cast<int>(coding.index_of("dim(32)[cell1]"));
  const int f_gat = static_cast<int>(coding.index_of("attn(gat)[cell1]"));
  const int f_elu = static_cast<int>(coding.index_of("act(elu)[cell1]"));

  RegressionTree tree;
  tree.set_nodes({
      {f_dim, 1, 2, -0.52},   // 0: root
      {-1, -1, -1, -0.60},    // 1: dim(32) absent
      {f_gat, 3, 4, -0.44},   // 2: dim(32) present
      {f_elu, 5, 6, -0.26},   // 3: attn(gat) absent
      {-1, -1, -1, -0.50},    // 4: attn(gat) present
      {-1, -1, -1, -0.19},    // 5: act(elu) absent
      {-1, -1, -1, -0.33},    // 6: act(elu) present
  });
  RandomForest forest;
  forest.set_trees({tree});

  Eigen::ArrayXd a = Eigen::ArrayXd::Constant(coding.k(), -1.0);
  a[f_dim] = 1.0;
  a[f_elu] = 1.0;

  const ContributionVector c = forest.decompose(a);
  CHECK(c.bias == doctest::Approx(-0.52).epsilon(1e-12));
  CHECK(c.contrib[f_dim] == doctest::Approx(0.08).epsilon(1e-9));
  CHECK(c.contrib[f_gat] == doctest::Approx(0.18).epsilon(1e-9));
  CHECK(c.contrib[f_elu] == doctest::Approx(-0.07).epsilon(1e-9));
  // bias + contributions telescope exactly to the leaf value
  CHECK(std::abs(c.bias + c.contrib.sum() - forest.predict(a)) <= 1e-12);
  CHECK(forest.predict(a) == doctest::Approx(-0.33).epsilon(1e-12));
}

TEST_CASE("importance is the mean Hadamard product of operations and contributions") {
  SUBCASE("single sample definition") {
    RegressionTree tree;
    tree.set_nodes({
        {0, 1, 2, 0.0},
        {-1, -1, -1, -0.4},
        {1, 3, 4, 0.2},
        {-1, -1, -1, 0.5},
        {-1, -1, -1, 0.1},
    });
    RandomForest forest;
    forest.set_trees({tree});
    Eigen::MatrixXd x(1, 2);
    x << 1.0, -1.0;  // decompose gives b = [0.2, 0.3]
    const Eigen::ArrayXd imp = importance(forest, x);
    CHECK(imp[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(-0.3).epsilon(1e-12));
  }
  SUBCASE("zero contributions give zero importance") {
    const ChoiceTable table = ChoiceTable::standard();
    Eigen::MatrixXd x = random_ops(table, 20, 6);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 1.0);
    RandomForest forest;
    forest.fit(x, y, 10, 2);
    CHECK(importance(forest, x).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("skip(input->cell2) oracle ranks first when it alone pays") {
  const ChoiceTable table = ChoiceTable::standard();
  const OperationCoding coding = OperationCoding::standard(table);
  std::vector<ArchitectureVector> vectors;
  Eigen::MatrixXd x = random_ops(table, 300, 21, &vectors);
  Eigen::VectorXd y(300);
  for (Index i = 0; i < 300; ++i) y[i] = vectors[static_cast<std::size_t>(i)].p[3] == 1 ? 0.5 : 0.0;

  RandomForest forest;
  forest.fit(x, y, 100, 9);
  const ImportanceReport rep = importance_report(forest, x);

  const Index skip_coord = coding.index_of("skip(input->cell2)");
  REQUIRE_FALSE(rep.top_positive.empty());
  CHECK(rep.top_positive[0] == skip_coord);
  double best_other = 0.0;
  for (Index c = 0; c < rep.values.size(); ++c)
    if (c != skip_coord) best_other = std::max(best_other, std::abs(rep.values[c]));
  CHECK(rep.values[skip_coord] >= 2.0 * best_other);
}

TEST_CASE("importance of a fixed forest is invariant to sample order") {
  const ChoiceTable table = ChoiceTable::standard();
  Eigen::MatrixXd x = random_ops(table, 60, 31);
  Eigen::VectorXd y = x.col(7) * 0.3 + x.col(90) * 0.1;
  RandomForest forest;
  forest.fit(x, y, 30, 4);

  Eigen::MatrixXd shuffled = x;
  std::mt19937_64 rng(8);
  std::vector<Index> order(60);
  for (Index i = 0; i < 60; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (Index i = 0; i < 60; ++i) shuffled.row(i) = x.row(order[static_cast<std::size_t>(i)]);

  const Eigen::ArrayXd a = importance(forest, x);
  const Eigen::ArrayXd b = importance(forest, shuffled);
  CHECK((a - b).abs().maxCoeff() <= 1e-12);
}
