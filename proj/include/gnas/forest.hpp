#ifndef GNAS_FOREST_HPP
#define GNAS_FOREST_HPP

#include "gnas/search_space.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gnas {

// Coordinate layout of the +/-1 operation vector. Cells expand into their
// seven factor blocks; each skip node has two coordinates with the identity
// ("skip(...)") coordinate listed before the empty one; the gather node has
// one coordinate per operation.
struct OperationCoding {
  std::vector<std::string> names;
  static OperationCoding standard(const ChoiceTable& table);
  Index k() const { return static_cast<Index>(names.size()); }
  Index index_of(const std::string& name) const;
};

// One-hot-in-{-1,+1} encoding: within every block exactly one entry is +1.
Eigen::ArrayXd encode_operations(const ArchitectureVector& p, const ChoiceTable& table);
// Inverse of encode_operations; used by the round-trip checks.
ArchitectureVector decode_operations(const Eigen::ArrayXd& a, const ChoiceTable& table);

struct ContributionVector {
  double bias = 0.0;
  Eigen::ArrayXd contrib;
};

// CART regression tree on +/-1 features, variance-reduction splits, grown to
// purity with at least two samples per leaf. Every node keeps its region
// mean so the prediction can be decomposed along the decision path.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    int left = -1, right = -1;
    double value = 0.0;  // mean response of the region
  };

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<Index>& sample_idx);
  double predict(const Eigen::ArrayXd& a) const;
  // bias = root mean; each step credits (child mean - parent mean) to the
  // coordinate tested at the parent.
  void decompose(const Eigen::ArrayXd& a, double& bias, Eigen::ArrayXd& contrib) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  // Test hook: install an explicit tree (root at index 0).
  void set_nodes(std::vector<Node> nodes) { nodes_ = std::move(nodes); }

 private:
  int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<Index>& idx, Index lo,
            Index hi);
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_trees, std::uint64_t seed);
  double predict(const Eigen::ArrayXd& a) const;
  ContributionVector decompose(const Eigen::ArrayXd& a) const;
  std::size_t tree_count() const { return trees_.size(); }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  void set_trees(std::vector<RegressionTree> trees) { trees_ = std::move(trees); }

 private:
  std::vector<RegressionTree> trees_;
};

// Mean over samples of a_i (Hadamard) contrib_i.
Eigen::ArrayXd importance(const RandomForest& forest, const Eigen::MatrixXd& x);

struct ImportanceReport {
  Eigen::ArrayXd values;
  std::vector<Index> top_positive;  // up to 5, descending
  std::vector<Index> top_negative;  // up to 5, ascending
};

ImportanceReport importance_report(const RandomForest& forest, const Eigen::MatrixXd& x);

}  // namespace gnas

#endif  // GNAS_FOREST_HPP
