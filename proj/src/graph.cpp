#include "gnas/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace gnas {

namespace {

using nlohmann::json;

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + what);
}

GraphRecord parse_record(const json& j, std::size_t line_no) {
  if (!j.contains("nodes") || !j.contains("edges") || !j.contains("y"))
    line_error(line_no, "record needs keys 'nodes', 'edges', 'y'");
  const auto& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) line_error(line_no, "'nodes' must be a non-empty list");

  GraphRecord rec;
  const Index n = static_cast<Index>(nodes.size());
  const Index f_n = static_cast<Index>(nodes.at(0).size());
  rec.node_feat.resize(n, f_n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = nodes.at(i);
    if (static_cast<Index>(row.size()) != f_n)
      line_error(line_no, "node feature width varies within the record");
    for (Index c = 0; c < f_n; ++c) rec.node_feat(i, c) = row.at(c).get<double>();
  }

  for (const auto& je : j.at("edges")) {
    GraphEdge e;
    e.src = je.at("src").get<Index>();
    e.dst = je.at("dst").get<Index>();
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      line_error(line_no, "edge index (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                              ") out of range for " + std::to_string(n) + " nodes");
    const auto& f = je.at("f");
    e.feat.resize(static_cast<Index>(f.size()));
    for (Index c = 0; c < e.feat.size(); ++c) e.feat[c] = f.at(c).get<double>();
    rec.edges.push_back(std::move(e));
  }

  const auto& y = j.at("y");
  if (!y.is_array() || y.empty()) line_error(line_no, "'y' must be a non-empty list");
  rec.targets.resize(static_cast<Index>(y.size()));
  for (Index c = 0; c < rec.targets.size(); ++c) rec.targets[c] = y.at(c).get<double>();
  return rec;
}

}  // namespace

std::vector<GraphRecord> load_dataset(const std::string& path, DatasetMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::vector<GraphRecord> records;
  Index f_n = -1, f_e = -1, k = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      line_error(line_no, std::string("malformed record: ") + ex.what());
    }
    if (j.contains("meta")) {
      if (line_no != 1) line_error(line_no, "'meta' manifest allowed on the first line only");
      if (meta) {
        const auto& m = j.at("meta");
        meta->n_max = m.value("n_max", Index{0});
        meta->e_max = m.value("e_max", Index{0});
        if (m.contains("task_names"))
          meta->task_names = m.at("task_names").get<std::vector<std::string>>();
      }
      continue;
    }
    GraphRecord rec;
    try {
      rec = parse_record(j, line_no);
    } catch (const json::exception& ex) {
      line_error(line_no, std::string("malformed record: ") + ex.what());
    }
    const Index rec_fe = rec.edges.empty() ? f_e : rec.edges.front().feat.size();
    for (const auto& e : rec.edges)
      if (e.feat.size() != rec_fe) line_error(line_no, "edge feature width varies within the record");
    if (f_n < 0) {
      f_n = rec.node_feat.cols();
      k = rec.targets.size();
    }
    if (rec_fe >= 0) {
      if (f_e < 0) f_e = rec_fe;
      else if (rec_fe != f_e)
        line_error(line_no, "edge feature width " + std::to_string(rec_fe) +
                                " differs from dataset width " + std::to_string(f_e));
    }
    if (rec.node_feat.cols() != f_n)
      line_error(line_no, "node feature width " + std::to_string(rec.node_feat.cols()) +
                              " differs from dataset width " + std::to_string(f_n));
    if (rec.targets.size() != k)
      line_error(line_no, "target width " + std::to_string(rec.targets.size()) +
                              " differs from dataset width " + std::to_string(k));
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::runtime_error("dataset " + path + ": no records");
  return records;
}

GraphRecord augment(const GraphRecord& record) {
  GraphRecord out;
  out.node_feat = record.node_feat;
  out.targets = record.targets;

  const Index n = record.num_nodes();
  Index f_e = 0;
  for (const auto& e : record.edges) f_e = std::max<Index>(f_e, e.feat.size());

  // Unique undirected pairs, first-seen features win; input self-loops are
  // dropped and re-added with zero features below.
  std::unordered_map<std::uint64_t, const GraphEdge*> seen;
  std::vector<const GraphEdge*> pairs;
  for (const auto& e : record.edges) {
    if (e.src == e.dst) continue;
    const Index a = std::min(e.src, e.dst), b = std::max(e.src, e.dst);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
    if (seen.emplace(key, &e).second) pairs.push_back(&e);
  }
  for (const GraphEdge* e : pairs) {
    out.edges.push_back({e->src, e->dst, e->feat});
    out.edges.push_back({e->dst, e->src, e->feat});
  }
  for (Index v = 0; v < n; ++v) out.edges.push_back({v, v, Eigen::VectorXd::Zero(f_e)});
  return out;
}

std::vector<GraphRecord> augment_all(std::vector<GraphRecord> records) {
  for (auto& r : records) r = augment(r);
  return records;
}

DatasetDims measure_dims(const std::vector<GraphRecord>& augmented) {
  DatasetDims d;
  if (augmented.empty()) return d;
  d.f_n = augmented.front().node_feat.cols();
  d.k = augmented.front().targets.size();
  for (const auto& r : augmented) {
    d.n_max = std::max(d.n_max, r.num_nodes());
    d.e_max = std::max(d.e_max, r.num_edges());
    for (const auto& e : r.edges) d.f_e = std::max<Index>(d.f_e, e.feat.size());
  }
  return d;
}

void GraphBatch::derive() {
  edge_src.clear();
  edge_dst.clear();
  edge_reverse.clear();
  node_graph.assign(static_cast<std::size_t>(b * n_max), 0);
  node_valid.assign(static_cast<std::size_t>(b * n_max), 0);
  in_degree = Eigen::ArrayXd::Zero(b * n_max);
  real_nodes = Eigen::ArrayXd::Zero(b);

  for (Index g = 0; g < b; ++g)
    for (Index i = 0; i < n_max; ++i) {
      node_graph[static_cast<std::size_t>(g * n_max + i)] = g;
      const bool real = mask.value()[g * n_max + i] != 0.0;
      node_valid[static_cast<std::size_t>(g * n_max + i)] = real ? 1 : 0;
      if (real) real_nodes[g] += 1.0;
    }

  Index total_edges = 0;
  for (Index g = 0; g < b; ++g) total_edges += edges_per_graph[static_cast<std::size_t>(g)];
  edge_feat = Tensor::zeros({total_edges, f_e});
  edge_src.reserve(total_edges);
  edge_dst.reserve(total_edges);

  std::unordered_map<std::uint64_t, Index> pos;
  pos.reserve(static_cast<std::size_t>(total_edges));
  Index row = 0;
  for (Index g = 0; g < b; ++g) {
    const Index ne = edges_per_graph[static_cast<std::size_t>(g)];
    for (Index j = 0; j < ne; ++j, ++row) {
      const Index s = p(g * e_max + j, 0) + g * n_max;
      const Index d = p(g * e_max + j, 1) + g * n_max;
      edge_src.push_back(s);
      edge_dst.push_back(d);
      in_degree[d] += 1.0;
      for (Index c = 0; c < f_e; ++c)
        edge_feat.value()[row * f_e + c] = e.value()[(g * e_max + j) * f_e + c];
      pos[(static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(d)] = row;
    }
  }
  edge_reverse.resize(static_cast<std::size_t>(total_edges));
  for (Index i = 0; i < total_edges; ++i) {
    const auto it =
        pos.find((static_cast<std::uint64_t>(edge_dst[i]) << 32) | static_cast<std::uint64_t>(edge_src[i]));
    edge_reverse[static_cast<std::size_t>(i)] = it == pos.end() ? i : it->second;
  }

  mask_flat = Tensor::zeros({b * n_max, 1});
  for (Index i = 0; i < b * n_max; ++i) mask_flat.value()[i] = node_valid[static_cast<std::size_t>(i)];
}

std::vector<GraphBatch> pad_and_batch(const std::vector<GraphRecord>& records, const DatasetDims& dims,
                                      Index batch_size) {
  if (batch_size < 1) throw std::invalid_argument("pad_and_batch: batch size must be >= 1");
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].num_nodes() > dims.n_max)
      throw std::runtime_error("record " + std::to_string(r) + " has " +
                               std::to_string(records[r].num_nodes()) + " nodes, exceeding n_max=" +
                               std::to_string(dims.n_max));
    if (records[r].num_edges() > dims.e_max)
      throw std::runtime_error("record " + std::to_string(r) + " has " +
                               std::to_string(records[r].num_edges()) + " edges, exceeding e_max=" +
                               std::to_string(dims.e_max));
  }

  std::vector<GraphBatch> batches;
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch_size)) {
    const Index bsz = static_cast<Index>(
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), records.size() - start));
    GraphBatch batch;
    batch.b = bsz;
    batch.n_max = dims.n_max;
    batch.e_max = dims.e_max;
    batch.f_n = dims.f_n;
    batch.f_e = dims.f_e;
    batch.k = dims.k;
    batch.h = Tensor::zeros({bsz, dims.n_max, dims.f_n});
    batch.e = Tensor::zeros({bsz, dims.e_max, dims.f_e});
    batch.mask = Tensor::zeros({bsz, dims.n_max});
    batch.y = Tensor::zeros({bsz, dims.k});
    batch.p.setZero(bsz * dims.e_max, 2);
    batch.edges_per_graph.resize(static_cast<std::size_t>(bsz));

    for (Index g = 0; g < bsz; ++g) {
      const GraphRecord& rec = records[start + static_cast<std::size_t>(g)];
      for (Index i = 0; i < rec.num_nodes(); ++i) {
        batch.mask.value()[g * dims.n_max + i] = 1.0;
        for (Index c = 0; c < dims.f_n; ++c)
          batch.h.value()[(g * dims.n_max + i) * dims.f_n + c] = rec.node_feat(i, c);
      }
      for (Index j = 0; j < rec.num_edges(); ++j) {
        const GraphEdge& e = rec.edges[static_cast<std::size_t>(j)];
        batch.p(g * dims.e_max + j, 0) = e.src;
        batch.p(g * dims.e_max + j, 1) = e.dst;
        for (Index c = 0; c < e.feat.size(); ++c)
          batch.e.value()[(g * dims.e_max + j) * dims.f_e + c] = e.feat[c];
      }
      batch.edges_per_graph[static_cast<std::size_t>(g)] = rec.num_edges();
      for (Index c = 0; c < dims.k; ++c) batch.y.value()[g * dims.k + c] = rec.targets[c];
    }
    batch.derive();
    batches.push_back(std::move(batch));
  }
  return batches;
}

SplitResult split(const std::vector<GraphRecord>& records, const SplitSpec& spec) {
  const double rsum = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1, got " + std::to_string(rsum));
  if (records.size() < 10)
    throw std::invalid_argument("split: need at least 10 records, got " + std::to_string(records.size()));

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n = records.size();
  const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * spec.ratios[0]);
  const std::size_t n_valid = static_cast<std::size_t>(static_cast<double>(n) * spec.ratios[1]);

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const GraphRecord& r = records[order[i]];
    if (i < n_train) out.train.push_back(r);
    else if (i < n_train + n_valid) out.valid.push_back(r);
    else out.test.push_back(r);
  }
  return out;
}

SyntheticTask synthetic_task_from_name(const std::string& name) {
  if (name == "edge-count") return SyntheticTask::kEdgeCount;
  if (name == "triangle-count") return SyntheticTask::kTriangleCount;
  if (name == "feature-sum") return SyntheticTask::kFeatureSum;
  throw std::invalid_argument("unknown synthetic task '" + name +
                              "' (expected edge-count, triangle-count, or feature-sum)");
}

const char* synthetic_task_name(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::kEdgeCount: return "edge-count";
    case SyntheticTask::kTriangleCount: return "triangle-count";
    case SyntheticTask::kFeatureSum: return "feature-sum";
  }
  return "?";
}

double synthetic_target(SyntheticTask task, const GraphRecord& record) {
  switch (task) {
    case SyntheticTask::kEdgeCount:
      return static_cast<double>(record.edges.size());
    case SyntheticTask::kTriangleCount: {
      const Index n = record.num_nodes();
      Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(n, n);
      for (const auto& e : record.edges) adj(e.src, e.dst) = adj(e.dst, e.src) = 1;
      double count = 0.0;
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
          for (Index l = j + 1; l < n; ++l)
            if (adj(i, j) && adj(j, l) && adj(i, l)) count += 1.0;
      return count;
    }
    case SyntheticTask::kFeatureSum: {
      double total = 0.0;
      for (const auto& e : record.edges)
        total += record.node_feat.row(e.src).dot(record.node_feat.row(e.dst));
      return total;
    }
  }
  throw std::invalid_argument("synthetic_target: unknown task");
}

std::vector<GraphRecord> make_synthetic(const SyntheticSpec& spec) {
  if (spec.max_nodes < 3) throw std::invalid_argument("make_synthetic: max_nodes must be >= 3");
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<Index> n_dist(3, spec.max_nodes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<GraphRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_graphs));
  for (Index g = 0; g < spec.n_graphs; ++g) {
    const Index n = n_dist(rng);
    GraphRecord rec;
    rec.node_feat.resize(n, spec.f_n);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < spec.f_n; ++c) rec.node_feat(i, c) = unit(rng);

    std::vector<std::pair<Index, Index>> undirected;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        if (unit(rng) < spec.edge_prob) undirected.emplace_back(i, j);
    for (const auto& [i, j] : undirected) {
      GraphEdge e;
      e.src = i;
      e.dst = j;
      e.feat.resize(spec.f_e);
      for (Index c = 0; c < spec.f_e; ++c) e.feat[c] = unit(rng);
      rec.edges.push_back(std::move(e));
    }

    rec.targets = Eigen::VectorXd::Constant(1, synthetic_target(spec.task, rec));
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace gnas
