#ifndef GNAS_SEARCH_SPACE_HPP
#define GNAS_SEARCH_SPACE_HPP

#include "gnas/tensor.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gnas {

enum class NodeKind { kMpnnCell, kSkip, kGather, kGeneric };

enum class Attention { kConstant, kGcn, kGat, kSymGat, kCos, kLinear, kGenLinear };
enum class Aggregate { kMean, kSum, kMax };
enum class Update { kGru, kMlp };
enum class GatherOp {
  kPoolSum,
  kPoolMean,
  kPoolMax,
  kGatherSum,
  kGatherMean,
  kGatherMax,
  kAttnPool16,
  kAttnPool32,
  kAttnPool64,
  kAttnSumPool,
  kFlatten,
};

const char* attention_name(Attention a);
const char* aggregate_name(Aggregate a);
const char* update_name(Update u);
const char* gather_name(GatherOp g);

// Per-cell choice sets (Table-style factor lists). Cell choices are packed
// into one mixed-radix integer per cell, most significant digit first:
// dim, attention, heads, aggregator, activation, update, repetitions.
struct CellChoices {
  std::array<Index, 4> dims{4, 8, 16, 32};
  std::array<Attention, 7> attentions{Attention::kConstant, Attention::kGcn,    Attention::kGat,
                                      Attention::kSymGat,   Attention::kCos,    Attention::kLinear,
                                      Attention::kGenLinear};
  std::array<int, 4> heads{1, 2, 4, 6};
  std::array<Aggregate, 3> aggregates{Aggregate::kMean, Aggregate::kSum, Aggregate::kMax};
  std::array<Act, 8> activations{Act::kSigmoid,  Act::kTanh,      Act::kRelu,  Act::kLinear,
                                 Act::kSoftplus, Act::kLeakyRelu, Act::kRelu6, Act::kElu};
  std::array<Update, 2> updates{Update::kGru, Update::kMlp};
  std::array<int, 6> repetitions{1, 2, 3, 4, 5, 6};

  Index count() const { return 4 * 7 * 4 * 3 * 8 * 2 * 6; }  // 32,256
};

struct VariableNode {
  NodeKind kind;
  Index num_choices;
  std::string name;
};

// The DAG chain is input -> cell1 -> cell2 -> cell3 -> gather -> dense head.
// Skip nodes attach to the six (source, destination) anchor pairs spanning
// at most three intermediate nodes; see skip_anchor_name().
struct ChoiceTable {
  std::vector<VariableNode> nodes;
  CellChoices cell;

  static ChoiceTable standard();
  // n generic nodes with c choices each; usable with sampling, mutation and
  // cardinality but not with decode().
  static ChoiceTable uniform(Index n, Index c);
  Index num_nodes() const { return static_cast<Index>(nodes.size()); }
};

constexpr int kNumCells = 3;
constexpr int kNumSkips = 6;

// Skip slot order: destinations in chain order, sources in chain order.
//   0: input->cell2   1: input->cell3   2: cell1->cell3
//   3: input->gather  4: cell1->gather  5: cell2->gather
std::string skip_anchor_name(int slot);
// Source index for a skip slot: 0 = input, 1 = cell1, 2 = cell2 outputs.
int skip_source(int slot);
// Destination: 2 = cell2 input, 3 = cell3 input, 4 = gather input.
int skip_destination(int slot);

struct ArchitectureVector {
  std::vector<Index> p;

  bool operator==(const ArchitectureVector& o) const { return p == o.p; }
  std::string to_string() const;  // comma-separated indices
  static ArchitectureVector parse(const std::string& s);
};

struct MpnnCellConfig {
  Index state_dim = 4;
  Attention attention = Attention::kConstant;
  int heads = 1;
  Aggregate aggregate = Aggregate::kMean;
  Act activation = Act::kSigmoid;
  Update update = Update::kGru;
  int repetitions = 1;
};

struct DecodedArch {
  std::array<MpnnCellConfig, kNumCells> cells;
  std::array<bool, kNumSkips> skips{};  // true = identity connection
  GatherOp gather = GatherOp::kPoolSum;
  Index attn_pool_dim() const;  // F' for the attention-pool gathers
};

// Exact product of per-node choice counts, 128-bit to stay exact for any
// sane table. Throws on overflow.
unsigned __int128 cardinality(const ChoiceTable& table);
std::string cardinality_str(const ChoiceTable& table);

ArchitectureVector sample_uniform(const ChoiceTable& table, std::mt19937_64& rng);
ArchitectureVector sample_uniform(const ChoiceTable& table, std::uint64_t seed);

// Re-draws exactly one coordinate, excluding its current value.
ArchitectureVector mutate(const ArchitectureVector& parent, const ChoiceTable& table,
                          std::mt19937_64& rng);
ArchitectureVector mutate(const ArchitectureVector& parent, const ChoiceTable& table,
                          std::uint64_t seed);

MpnnCellConfig decode_cell(Index packed, const CellChoices& cell);
Index encode_cell(const MpnnCellConfig& cfg, const CellChoices& cell);

DecodedArch decode(const ArchitectureVector& p, const ChoiceTable& table);
ArchitectureVector encode(const DecodedArch& arch, const ChoiceTable& table);

void validate(const ArchitectureVector& p, const ChoiceTable& table);

}  // namespace gnas

#endif  // GNAS_SEARCH_SPACE_HPP
