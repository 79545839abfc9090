#ifndef GNAS_TESTS_TEST_UTIL_HPP
#define GNAS_TESTS_TEST_UTIL_HPP

#include "gnas/graph.hpp"
#include "gnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace test_util {

// Central finite differences (step h) against the taped gradients of every
// listed tensor. Returns the worst relative error; differences below the
// 1e-8 absolute floor count as zero.
inline double max_grad_rel_error(const std::function<gnas::Tensor(gnas::Tape*)>& f,
                                 const std::vector<gnas::Tensor>& params, double h = 1e-5) {
  using gnas::Index;
  for (const auto& p : params) p.zero_grad();
  gnas::Tape tape;
  gnas::Tensor loss = f(&tape);
  tape.backward(loss);

  double worst = 0.0;
  for (const auto& p : params) {
    for (Index i = 0; i < p.numel(); ++i) {
      const double orig = p.value()[i];
      p.value()[i] = orig + h;
      const double up = f(nullptr).item();
      p.value()[i] = orig - h;
      const double down = f(nullptr).item();
      p.value()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad()[i];
      const double diff = std::abs(numeric - analytic);
      if (diff <= 1e-8) continue;
      worst = std::max(worst, diff / std::max(std::abs(numeric), std::abs(analytic)));
    }
  }
  return worst;
}

// Like max_grad_rel_error, but coordinates that miss the tolerance at the
// first step are re-verified at smaller steps. A central difference that
// straddles an activation kink is wrong by O(1) at any fixed step; shrinking
// the step pulls it back onto the true derivative, while a genuinely wrong
// gradient keeps failing. Reports the worst per-coordinate error after
// refinement and how many coordinates needed it.
struct FdRefinedReport {
  double worst = 0.0;
  int refined = 0;
};

inline FdRefinedReport max_grad_rel_error_refined(const std::function<gnas::Tensor(gnas::Tape*)>& f,
                                                  const std::vector<gnas::Tensor>& params,
                                                  double tolerance = 1e-3) {
  using gnas::Index;
  for (const auto& p : params) p.zero_grad();
  gnas::Tape tape;
  gnas::Tensor loss = f(&tape);
  tape.backward(loss);

  FdRefinedReport report;
  const double steps[] = {1e-5, 1e-6, 1e-7};
  for (const auto& p : params) {
    for (Index i = 0; i < p.numel(); ++i) {
      const double analytic = p.grad()[i];
      double err = 0.0;
      for (std::size_t s = 0; s < std::size(steps); ++s) {
        const double h = steps[s];
        const double orig = p.value()[i];
        p.value()[i] = orig + h;
        const double up = f(nullptr).item();
        p.value()[i] = orig - h;
        const double down = f(nullptr).item();
        p.value()[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double diff = std::abs(numeric - analytic);
        err = diff <= 1e-8 ? 0.0 : diff / std::max(std::abs(numeric), std::abs(analytic));
        if (err <= tolerance) {
          if (s > 0) ++report.refined;
          break;
        }
      }
      report.worst = std::max(report.worst, err);
    }
  }
  return report;
}

inline gnas::Tensor random_tensor(gnas::Shape shape, std::mt19937_64& rng, double lo = -2.0,
                                  double hi = 2.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  gnas::Tensor t = gnas::Tensor::zeros(std::move(shape), requires_grad);
  for (gnas::Index i = 0; i < t.numel(); ++i) t.value()[i] = u(rng);
  return t;
}

inline gnas::GraphRecord make_record(gnas::Index n_nodes, gnas::Index f_n,
                                     const std::vector<std::pair<gnas::Index, gnas::Index>>& edges,
                                     gnas::Index f_e, std::vector<double> targets,
                                     std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  gnas::GraphRecord rec;
  rec.node_feat.resize(n_nodes, f_n);
  for (gnas::Index i = 0; i < n_nodes; ++i)
    for (gnas::Index c = 0; c < f_n; ++c) rec.node_feat(i, c) = u(rng);
  for (const auto& [s, d] : edges) {
    gnas::GraphEdge e;
    e.src = s;
    e.dst = d;
    e.feat.resize(f_e);
    for (gnas::Index c = 0; c < f_e; ++c) e.feat[c] = u(rng);
    rec.edges.push_back(std::move(e));
  }
  rec.targets = Eigen::Map<Eigen::VectorXd>(targets.data(), static_cast<gnas::Index>(targets.size()));
  return rec;
}

// Augments, measures and batches a record list in one go.
inline std::vector<gnas::GraphBatch> batch_records(const std::vector<gnas::GraphRecord>& records,
                                                   gnas::Index batch_size = 0) {
  auto augmented = gnas::augment_all(records);
  const gnas::DatasetDims dims = gnas::measure_dims(augmented);
  return gnas::pad_and_batch(augmented, dims,
                             batch_size > 0 ? batch_size : static_cast<gnas::Index>(records.size()));
}

}  // namespace test_util

#endif  // GNAS_TESTS_TEST_UTIL_HPP
