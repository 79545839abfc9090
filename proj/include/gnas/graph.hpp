#ifndef GNAS_GRAPH_HPP
#define GNAS_GRAPH_HPP

#include "gnas/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gnas {

struct GraphEdge {
  Index src = 0;
  Index dst = 0;
  Eigen::VectorXd feat;
};

struct GraphRecord {
  Eigen::MatrixXd node_feat;  // n x F_n, one row per node
  std::vector<GraphEdge> edges;
  Eigen::VectorXd targets;  // K

  Index num_nodes() const { return node_feat.rows(); }
  Index num_edges() const { return static_cast<Index>(edges.size()); }
};

struct DatasetDims {
  Index f_n = 0;
  Index f_e = 0;
  Index k = 0;
  // Maxima measured over the augmented dataset (bidirectional + self-loops).
  Index n_max = 0;
  Index e_max = 0;
};

// Padded batch of B graphs plus the flattened real-edge view the model runs
// on. Node slot i of graph b lives at flat row b*n_max + i.
struct GraphBatch {
  Index b = 0, n_max = 0, e_max = 0, f_n = 0, f_e = 0, k = 0;

  Tensor h;     // (B, N, F_n) zero-padded node features
  Tensor e;     // (B, E_max, F_e) zero-padded edge features
  Tensor mask;  // (B, N) 1 for real nodes
  Tensor y;     // (B, K)
  Eigen::Matrix<Index, Eigen::Dynamic, 2, Eigen::RowMajor> p;  // (B*E_max, 2), padded rows (0,0)
  std::vector<Index> edges_per_graph;

  // Flattened real edges with node offsets applied.
  std::vector<Index> edge_src, edge_dst;
  std::vector<Index> edge_reverse;  // position of (dst,src) for each (src,dst)
  Tensor edge_feat;                 // (R, F_e)
  std::vector<Index> node_graph;    // (B*N) graph id per node slot
  std::vector<std::uint8_t> node_valid;
  Tensor mask_flat;                 // (B*N, 1)
  Eigen::ArrayXd in_degree;         // (B*N) incoming real edges (self-loop counts)
  Eigen::ArrayXd real_nodes;        // (B) real node count per graph

  Index num_graphs() const { return b; }
  Index total_nodes() const { return b * n_max; }

  // Rebuilds every derived field from the padded tensors. Used after
  // constructing or editing a batch by hand.
  void derive();
};

struct SplitSpec {
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};

  bool operator==(const SplitSpec&) const = default;
};

struct SplitResult {
  std::vector<GraphRecord> train, valid, test;
};

struct DatasetMeta {
  Index n_max = 0;  // 0 = not pinned by the file
  Index e_max = 0;
  std::vector<std::string> task_names;
};

// Line-delimited dataset file; see README for the record schema. An optional
// first-line manifest ({"meta": ...}) is returned through `meta`.
std::vector<GraphRecord> load_dataset(const std::string& path, DatasetMeta* meta = nullptr);

// Bidirectional edges plus one zero-featured self-loop per node. Reverse
// edges copy the forward features; idempotent up to edge order.
GraphRecord augment(const GraphRecord& record);
std::vector<GraphRecord> augment_all(std::vector<GraphRecord> records);

DatasetDims measure_dims(const std::vector<GraphRecord>& augmented);

// Pads each record to (n_max, e_max) and groups them into batches of at most
// `batch_size` graphs. Records must already be augmented.
std::vector<GraphBatch> pad_and_batch(const std::vector<GraphRecord>& records, const DatasetDims& dims,
                                      Index batch_size);

SplitResult split(const std::vector<GraphRecord>& records, const SplitSpec& spec);

enum class SyntheticTask { kEdgeCount, kTriangleCount, kFeatureSum };

SyntheticTask synthetic_task_from_name(const std::string& name);
const char* synthetic_task_name(SyntheticTask t);

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::kEdgeCount;
  Index n_graphs = 100;
  Index max_nodes = 8;
  std::uint64_t seed = 0;
  Index f_n = 75;  // paper-sized feature widths by default
  Index f_e = 14;
  double edge_prob = 0.35;

  bool operator==(const SyntheticSpec&) const = default;
};

// Exact combinatorial target of an un-augmented record (each undirected edge
// listed once): edge count, triangle count, or sum over edges of
// dot(src features, dst features).
double synthetic_target(SyntheticTask task, const GraphRecord& record);

// Random graphs whose target is an exactly computed combinatorial quantity.
std::vector<GraphRecord> make_synthetic(const SyntheticSpec& spec);

}  // namespace gnas

#endif  // GNAS_GRAPH_HPP
