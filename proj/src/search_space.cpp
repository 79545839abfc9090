#include "gnas/search_space.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace gnas {

const char* attention_name(Attention a) {
  switch (a) {
    case Attention::kConstant: return "const";
    case Attention::kGcn: return "gcn";
    case Attention::kGat: return "gat";
    case Attention::kSymGat: return "sym-gat";
    case Attention::kCos: return "cos";
    case Attention::kLinear: return "linear";
    case Attention::kGenLinear: return "gen-linear";
  }
  return "?";
}

const char* aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::kMean: return "mean";
    case Aggregate::kSum: return "sum";
    case Aggregate::kMax: return "max";
  }
  return "?";
}

const char* update_name(Update u) { return u == Update::kGru ? "gru" : "mlp"; }

const char* gather_name(GatherOp g) {
  switch (g) {
    case GatherOp::kPoolSum: return "pool-sum";
    case GatherOp::kPoolMean: return "pool-mean";
    case GatherOp::kPoolMax: return "pool-max";
    case GatherOp::kGatherSum: return "sum";
    case GatherOp::kGatherMean: return "mean";
    case GatherOp::kGatherMax: return "max";
    case GatherOp::kAttnPool16: return "attn-pool-16";
    case GatherOp::kAttnPool32: return "attn-pool-32";
    case GatherOp::kAttnPool64: return "attn-pool-64";
    case GatherOp::kAttnSumPool: return "attn-sum-pool";
    case GatherOp::kFlatten: return "flatten";
  }
  return "?";
}

std::string skip_anchor_name(int slot) {
  static const char* names[kNumSkips] = {"input->cell2",  "input->cell3",  "cell1->cell3",
                                         "input->gather", "cell1->gather", "cell2->gather"};
  return names[slot];
}

int skip_source(int slot) {
  static const int src[kNumSkips] = {0, 0, 1, 0, 1, 2};
  return src[slot];
}

int skip_destination(int slot) {
  static const int dst[kNumSkips] = {2, 3, 3, 4, 4, 4};
  return dst[slot];
}

ChoiceTable ChoiceTable::standard() {
  ChoiceTable t;
  for (int c = 0; c < kNumCells; ++c)
    t.nodes.push_back({NodeKind::kMpnnCell, t.cell.count(), "cell" + std::to_string(c + 1)});
  for (int s = 0; s < kNumSkips; ++s)
    t.nodes.push_back({NodeKind::kSkip, 2, "skip(" + skip_anchor_name(s) + ")"});
  t.nodes.push_back({NodeKind::kGather, 11, "gather"});
  return t;
}

ChoiceTable ChoiceTable::uniform(Index n, Index c) {
  if (n < 1 || c < 1) throw std::invalid_argument("ChoiceTable::uniform: need n >= 1 and c >= 1");
  ChoiceTable t;
  for (Index i = 0; i < n; ++i)
    t.nodes.push_back({NodeKind::kGeneric, c, "node" + std::to_string(i)});
  return t;
}

std::string ArchitectureVector::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
  return os.str();
}

ArchitectureVector ArchitectureVector::parse(const std::string& s) {
  ArchitectureVector v;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) throw std::invalid_argument("architecture vector: empty coordinate in '" + s + "'");
    v.p.push_back(static_cast<Index>(std::stoll(tok)));
  }
  if (v.p.empty()) throw std::invalid_argument("architecture vector: no coordinates in '" + s + "'");
  return v;
}

Index DecodedArch::attn_pool_dim() const {
  switch (gather) {
    case GatherOp::kAttnPool16: return 16;
    case GatherOp::kAttnPool32: return 32;
    case GatherOp::kAttnPool64: return 64;
    default: return 0;
  }
}

unsigned __int128 cardinality(const ChoiceTable& table) {
  unsigned __int128 total = 1;
  const unsigned __int128 cap = ~static_cast<unsigned __int128>(0);
  for (const auto& node : table.nodes) {
    const auto c = static_cast<unsigned __int128>(node.num_choices);
    if (c == 0) return 0;
    if (total > cap / c) throw std::overflow_error("cardinality: product exceeds 128 bits");
    total *= c;
  }
  return total;
}

std::string cardinality_str(const ChoiceTable& table) {
  unsigned __int128 v = cardinality(table);
  if (v == 0) return "0";
  std::string digits;
  while (v > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return std::string(digits.rbegin(), digits.rend());
}

void validate(const ArchitectureVector& p, const ChoiceTable& table) {
  if (static_cast<Index>(p.p.size()) != table.num_nodes())
    throw std::invalid_argument("architecture vector has " + std::to_string(p.p.size()) +
                                " coordinates, table has " + std::to_string(table.num_nodes()) +
                                " nodes");
  for (Index i = 0; i < table.num_nodes(); ++i)
    if (p.p[static_cast<std::size_t>(i)] < 0 ||
        p.p[static_cast<std::size_t>(i)] >= table.nodes[static_cast<std::size_t>(i)].num_choices)
      throw std::invalid_argument("coordinate " + std::to_string(i) + " = " +
                                  std::to_string(p.p[static_cast<std::size_t>(i)]) +
                                  " out of range [0," +
                                  std::to_string(table.nodes[static_cast<std::size_t>(i)].num_choices) +
                                  ")");
}

ArchitectureVector sample_uniform(const ChoiceTable& table, std::mt19937_64& rng) {
  ArchitectureVector v;
  v.p.reserve(static_cast<std::size_t>(table.num_nodes()));
  for (const auto& node : table.nodes) {
    std::uniform_int_distribution<Index> d(0, node.num_choices - 1);
    v.p.push_back(d(rng));
  }
  return v;
}

ArchitectureVector sample_uniform(const ChoiceTable& table, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_uniform(table, rng);
}

ArchitectureVector mutate(const ArchitectureVector& parent, const ChoiceTable& table,
                          std::mt19937_64& rng) {
  validate(parent, table);
  std::uniform_int_distribution<Index> pick_node(0, table.num_nodes() - 1);
  const Index i = pick_node(rng);
  const Index n = table.nodes[static_cast<std::size_t>(i)].num_choices;
  if (n < 2)
    throw std::invalid_argument("mutate: node " + std::to_string(i) + " has a single choice");
  std::uniform_int_distribution<Index> pick_alt(0, n - 2);
  Index alt = pick_alt(rng);
  if (alt >= parent.p[static_cast<std::size_t>(i)]) ++alt;  // skip the current value
  ArchitectureVector child = parent;
  child.p[static_cast<std::size_t>(i)] = alt;
  return child;
}

ArchitectureVector mutate(const ArchitectureVector& parent, const ChoiceTable& table,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mutate(parent, table, rng);
}

MpnnCellConfig decode_cell(Index packed, const CellChoices& cell) {
  if (packed < 0 || packed >= cell.count())
    throw std::invalid_argument("cell index " + std::to_string(packed) + " out of range [0," +
                                std::to_string(cell.count()) + ")");
  // Mixed radix, most significant first: dim, attention, heads, agg, act, update, T.
  const Index t_i = packed % 6;
  packed /= 6;
  const Index upd_i = packed % 2;
  packed /= 2;
  const Index act_i = packed % 8;
  packed /= 8;
  const Index agg_i = packed % 3;
  packed /= 3;
  const Index head_i = packed % 4;
  packed /= 4;
  const Index attn_i = packed % 7;
  packed /= 7;
  const Index dim_i = packed;

  MpnnCellConfig cfg;
  cfg.state_dim = cell.dims[static_cast<std::size_t>(dim_i)];
  cfg.attention = cell.attentions[static_cast<std::size_t>(attn_i)];
  cfg.heads = cell.heads[static_cast<std::size_t>(head_i)];
  cfg.aggregate = cell.aggregates[static_cast<std::size_t>(agg_i)];
  cfg.activation = cell.activations[static_cast<std::size_t>(act_i)];
  cfg.update = cell.updates[static_cast<std::size_t>(upd_i)];
  cfg.repetitions = cell.repetitions[static_cast<std::size_t>(t_i)];
  return cfg;
}

namespace {

template <typename C, typename V>
Index index_of(const C& list, const V& v, const char* what) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == v) return static_cast<Index>(i);
  throw std::invalid_argument(std::string("encode_cell: value not in the ") + what + " choice set");
}

}  // namespace

Index encode_cell(const MpnnCellConfig& cfg, const CellChoices& cell) {
  Index idx = index_of(cell.dims, cfg.state_dim, "dim");
  idx = idx * 7 + index_of(cell.attentions, cfg.attention, "attention");
  idx = idx * 4 + index_of(cell.heads, cfg.heads, "heads");
  idx = idx * 3 + index_of(cell.aggregates, cfg.aggregate, "aggregate");
  idx = idx * 8 + index_of(cell.activations, cfg.activation, "activation");
  idx = idx * 2 + index_of(cell.updates, cfg.update, "update");
  idx = idx * 6 + index_of(cell.repetitions, cfg.repetitions, "repetitions");
  return idx;
}

DecodedArch decode(const ArchitectureVector& p, const ChoiceTable& table) {
  validate(p, table);
  DecodedArch arch;
  std::size_t at = 0;
  int cell_i = 0, skip_i = 0;
  for (const auto& node : table.nodes) {
    const Index v = p.p[at++];
    switch (node.kind) {
      case NodeKind::kMpnnCell:
        arch.cells[static_cast<std::size_t>(cell_i++)] = decode_cell(v, table.cell);
        break;
      case NodeKind::kSkip:
        arch.skips[static_cast<std::size_t>(skip_i++)] = (v == 1);
        break;
      case NodeKind::kGather:
        arch.gather = static_cast<GatherOp>(v);
        break;
      case NodeKind::kGeneric:
        throw std::invalid_argument("decode: table contains generic nodes with no MPNN meaning");
    }
  }
  return arch;
}

ArchitectureVector encode(const DecodedArch& arch, const ChoiceTable& table) {
  ArchitectureVector p;
  int cell_i = 0, skip_i = 0;
  for (const auto& node : table.nodes) {
    switch (node.kind) {
      case NodeKind::kMpnnCell:
        p.p.push_back(encode_cell(arch.cells[static_cast<std::size_t>(cell_i++)], table.cell));
        break;
      case NodeKind::kSkip:
        p.p.push_back(arch.skips[static_cast<std::size_t>(skip_i++)] ? 1 : 0);
        break;
      case NodeKind::kGather:
        p.p.push_back(static_cast<Index>(arch.gather));
        break;
      case NodeKind::kGeneric:
        throw std::invalid_argument("encode: table contains generic nodes with no MPNN meaning");
    }
  }
  return p;
}

}  // namespace gnas
