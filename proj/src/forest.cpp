#include "gnas/forest.hpp"

#include "gnas/evolution.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace gnas {

namespace {

constexpr Index kMinLeaf = 2;

struct BlockWriter {
  std::vector<std::string>& names;
  void block(const std::string& prefix, const std::vector<std::string>& labels,
             const std::string& suffix) {
    for (const auto& l : labels) names.push_back(prefix + "(" + l + ")" + suffix);
  }
};

std::vector<std::string> cell_factor_labels(const CellChoices& c, int factor) {
  std::vector<std::string> out;
  switch (factor) {
    case 0: for (Index d : c.dims) out.push_back(std::to_string(d)); break;
    case 1: for (Attention a : c.attentions) out.push_back(attention_name(a)); break;
    case 2: for (int h : c.heads) out.push_back(std::to_string(h)); break;
    case 3: for (Aggregate a : c.aggregates) out.push_back(aggregate_name(a)); break;
    case 4: for (Act a : c.activations) out.push_back(act_name(a)); break;
    case 5: for (Update u : c.updates) out.push_back(update_name(u)); break;
    case 6: for (int t : c.repetitions) out.push_back(std::to_string(t)); break;
  }
  return out;
}

const char* cell_factor_prefix(int factor) {
  static const char* prefixes[7] = {"dim", "attn", "heads", "agg", "act", "update", "T"};
  return prefixes[factor];
}

// Factor indices of a packed cell choice, most significant first.
std::array<Index, 7> cell_digits(Index packed) {
  std::array<Index, 7> digits{};
  static const Index radix[7] = {4, 7, 4, 3, 8, 2, 6};
  for (int f = 6; f >= 0; --f) {
    digits[static_cast<std::size_t>(f)] = packed % radix[f];
    packed /= radix[f];
  }
  return digits;
}

Index cell_from_digits(const std::array<Index, 7>& digits) {
  static const Index radix[7] = {4, 7, 4, 3, 8, 2, 6};
  Index packed = 0;
  for (int f = 0; f < 7; ++f) packed = packed * radix[f] + digits[static_cast<std::size_t>(f)];
  return packed;
}

}  // namespace

OperationCoding OperationCoding::standard(const ChoiceTable& table) {
  OperationCoding coding;
  BlockWriter w{coding.names};
  int cell_i = 0, skip_i = 0;
  for (const auto& node : table.nodes) {
    switch (node.kind) {
      case NodeKind::kMpnnCell: {
        const std::string suffix = "[cell" + std::to_string(++cell_i) + "]";
        for (int f = 0; f < 7; ++f)
          w.block(cell_factor_prefix(f), cell_factor_labels(table.cell, f), suffix);
        break;
      }
      case NodeKind::kSkip: {
        const std::string anchor = skip_anchor_name(skip_i++);
        coding.names.push_back("skip(" + anchor + ")");
        coding.names.push_back("no-skip(" + anchor + ")");
        break;
      }
      case NodeKind::kGather:
        for (int g = 0; g < 11; ++g)
          coding.names.push_back("gather(" + std::string(gather_name(static_cast<GatherOp>(g))) + ")");
        break;
      case NodeKind::kGeneric:
        for (Index c = 0; c < node.num_choices; ++c)
          coding.names.push_back(node.name + "(op" + std::to_string(c) + ")");
        break;
    }
  }
  return coding;
}

Index OperationCoding::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Index>(i);
  throw std::invalid_argument("OperationCoding: no coordinate named '" + name + "'");
}

Eigen::ArrayXd encode_operations(const ArchitectureVector& p, const ChoiceTable& table) {
  validate(p, table);
  const OperationCoding coding = OperationCoding::standard(table);
  Eigen::ArrayXd a = Eigen::ArrayXd::Constant(coding.k(), -1.0);
  Index at = 0;
  std::size_t coord = 0;
  auto mark = [&](Index block_size, Index hot) {
    a[at + hot] = 1.0;
    at += block_size;
  };
  for (const auto& node : table.nodes) {
    const Index v = p.p[coord++];
    switch (node.kind) {
      case NodeKind::kMpnnCell: {
        const auto digits = cell_digits(v);
        static const Index radix[7] = {4, 7, 4, 3, 8, 2, 6};
        for (int f = 0; f < 7; ++f) mark(radix[f], digits[static_cast<std::size_t>(f)]);
        break;
      }
      case NodeKind::kSkip:
        // coordinate order is [identity, empty]
        mark(2, v == 1 ? 0 : 1);
        break;
      case NodeKind::kGather:
      case NodeKind::kGeneric:
        mark(node.num_choices, v);
        break;
    }
  }
  return a;
}

ArchitectureVector decode_operations(const Eigen::ArrayXd& a, const ChoiceTable& table) {
  ArchitectureVector p;
  Index at = 0;
  auto hot = [&](Index block_size) {
    Index found = -1;
    for (Index i = 0; i < block_size; ++i)
      if (a[at + i] > 0.0) {
        if (found >= 0) throw std::invalid_argument("decode_operations: multiple +1 entries in a block");
        found = i;
      }
    if (found < 0) throw std::invalid_argument("decode_operations: block with no +1 entry");
    at += block_size;
    return found;
  };
  for (const auto& node : table.nodes) {
    switch (node.kind) {
      case NodeKind::kMpnnCell: {
        std::array<Index, 7> digits{};
        static const Index radix[7] = {4, 7, 4, 3, 8, 2, 6};
        for (int f = 0; f < 7; ++f) digits[static_cast<std::size_t>(f)] = hot(radix[f]);
        p.p.push_back(cell_from_digits(digits));
        break;
      }
      case NodeKind::kSkip:
        p.p.push_back(hot(2) == 0 ? 1 : 0);
        break;
      case NodeKind::kGather:
      case NodeKind::kGeneric:
        p.p.push_back(hot(node.num_choices));
        break;
    }
  }
  return p;
}

void RegressionTree::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const std::vector<Index>& sample_idx) {
  nodes_.clear();
  std::vector<Index> idx = sample_idx;
  build(x, y, idx, 0, static_cast<Index>(idx.size()));
}

int RegressionTree::build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<Index>& idx,
                          Index lo, Index hi) {
  const Index n = hi - lo;
  double sum = 0.0;
  for (Index i = lo; i < hi; ++i) sum += y[idx[static_cast<std::size_t>(i)]];
  const int me = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[static_cast<std::size_t>(me)].value = sum / static_cast<double>(n);

  bool pure = true;
  for (Index i = lo + 1; i < hi && pure; ++i)
    pure = y[idx[static_cast<std::size_t>(i)]] == y[idx[static_cast<std::size_t>(lo)]];
  if (pure || n < 2 * kMinLeaf) return me;

  // Best variance-reduction split; first feature wins exact ties, so twin
  // coordinates resolve to the lower index.
  const double no_split = sum * sum / static_cast<double>(n);
  int best_f = -1;
  double best_gain = no_split;
  for (Index f = 0; f < x.cols(); ++f) {
    Index n_l = 0;
    double sum_l = 0.0;
    for (Index i = lo; i < hi; ++i)
      if (x(idx[static_cast<std::size_t>(i)], f) < 0.0) {
        ++n_l;
        sum_l += y[idx[static_cast<std::size_t>(i)]];
      }
    const Index n_r = n - n_l;
    if (n_l < kMinLeaf || n_r < kMinLeaf) continue;
    const double sum_r = sum - sum_l;
    const double gain = sum_l * sum_l / static_cast<double>(n_l) + sum_r * sum_r / static_cast<double>(n_r);
    if (gain > best_gain) {
      best_gain = gain;
      best_f = static_cast<int>(f);
    }
  }
  if (best_f < 0) return me;

  auto mid_it = std::stable_partition(
      idx.begin() + lo, idx.begin() + hi,
      [&](Index i) { return x(i, best_f) < 0.0; });
  const Index mid = static_cast<Index>(mid_it - idx.begin());

  nodes_[static_cast<std::size_t>(me)].feature = best_f;
  const int left = build(x, y, idx, lo, mid);
  nodes_[static_cast<std::size_t>(me)].left = left;
  const int right = build(x, y, idx, mid, hi);
  nodes_[static_cast<std::size_t>(me)].right = right;
  return me;
}

double RegressionTree::predict(const Eigen::ArrayXd& a) const {
  int at = 0;
  while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
    const Node& nd = nodes_[static_cast<std::size_t>(at)];
    at = a[nd.feature] < 0.0 ? nd.left : nd.right;
  }
  return nodes_[static_cast<std::size_t>(at)].value;
}

void RegressionTree::decompose(const Eigen::ArrayXd& a, double& bias, Eigen::ArrayXd& contrib) const {
  bias = nodes_[0].value;
  int at = 0;
  while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
    const Node& nd = nodes_[static_cast<std::size_t>(at)];
    const int next = a[nd.feature] < 0.0 ? nd.left : nd.right;
    contrib[nd.feature] += nodes_[static_cast<std::size_t>(next)].value - nd.value;
    at = next;
  }
}

void RandomForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_trees,
                       std::uint64_t seed) {
  const Index n = x.rows();
  if (n != y.size()) throw std::invalid_argument("RandomForest::fit: |X| != |y|");
  if (n < 10) throw std::invalid_argument("RandomForest::fit: need at least 10 samples, got " +
                                          std::to_string(n));
  if (n_trees < 1) throw std::invalid_argument("RandomForest::fit: need at least one tree");
  trees_.assign(static_cast<std::size_t>(n_trees), {});
  for (int j = 0; j < n_trees; ++j) {
    std::mt19937_64 rng(eval_seed(seed, static_cast<std::uint64_t>(j)));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> bootstrap(static_cast<std::size_t>(n));
    for (auto& b : bootstrap) b = pick(rng);
    trees_[static_cast<std::size_t>(j)].fit(x, y, bootstrap);
  }
}

double RandomForest::predict(const Eigen::ArrayXd& a) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(a);
  return sum / static_cast<double>(trees_.size());
}

ContributionVector RandomForest::decompose(const Eigen::ArrayXd& a) const {
  if (trees_.empty()) throw std::logic_error("RandomForest::decompose: forest not fitted");
  ContributionVector out;
  out.contrib = Eigen::ArrayXd::Zero(a.size());
  double bias_sum = 0.0;
  for (const auto& t : trees_) {
    double b = 0.0;
    t.decompose(a, b, out.contrib);
    bias_sum += b;
  }
  out.bias = bias_sum / static_cast<double>(trees_.size());
  out.contrib /= static_cast<double>(trees_.size());
  return out;
}

Eigen::ArrayXd importance(const RandomForest& forest, const Eigen::MatrixXd& x) {
  if (x.rows() < 1) throw std::invalid_argument("importance: need at least one sample");
  Eigen::ArrayXd total = Eigen::ArrayXd::Zero(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Eigen::ArrayXd a = x.row(i).array().transpose();
    total += a * forest.decompose(a).contrib;
  }
  return total / static_cast<double>(x.rows());
}

ImportanceReport importance_report(const RandomForest& forest, const Eigen::MatrixXd& x) {
  ImportanceReport rep;
  rep.values = importance(forest, x);
  std::vector<Index> order(static_cast<std::size_t>(rep.values.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return rep.values[a] > rep.values[b]; });
  for (Index i : order) {
    if (rep.values[i] > 0.0 && rep.top_positive.size() < 5) rep.top_positive.push_back(i);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (rep.values[*it] < 0.0 && rep.top_negative.size() < 5) rep.top_negative.push_back(*it);
  }
  return rep;
}

}  // namespace gnas
