#ifndef GNAS_MPNN_HPP
#define GNAS_MPNN_HPP

#include "gnas/graph.hpp"
#include "gnas/nn.hpp"
#include "gnas/search_space.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gnas {

struct ModelDims {
  Index f_n = 0;
  Index f_e = 0;
  Index k = 1;
  // Node capacity of the batches this model will see. Only the pool-* and
  // flatten gathers bind it into the head shape.
  Index n_max = 0;
};

// One attention-parameter set. Only the tensors the kind needs are allocated.
struct AttentionHead {
  Attention kind = Attention::kConstant;
  Tensor w;        // (d, d) state projection for trainable kinds
  Tensor a;        // (2d, 1) gat / sym-gat / cos
  Tensor a_left;   // (d, 1) linear
  Tensor a_right;  // (d, 1) linear
  Tensor w_g;      // (d, 1) gen-linear
};

// Normalized coefficient per flattened real edge, shape (R, 1). Trainable
// kinds are softmax-normalized over each node's incoming edges; constant and
// gcn are used raw.
Tensor attention_coefficients(Tape* tape, const AttentionHead& head, const Tensor& h,
                              const GraphBatch& batch);

// Edge network of Eq.-3 style messages: F_e -> 2d (relu) -> d*d, reshaped to
// a d x d weight per edge.
struct EdgeNet {
  Dense hidden;
  Dense out;
};

struct UpdateLayer {
  Update kind = Update::kGru;
  GruCell gru;
  Dense mlp;  // (2d, d), linear; the cell activation is applied after
};

struct MpnnCellLayer {
  MpnnCellConfig cfg;
  Index in_dim = 0;
  Dense embed;  // d_in -> d
  EdgeNet edge_net;
  std::vector<AttentionHead> heads;
  UpdateLayer update;

  // h_in is the flat (B*N, d_in) node-state matrix, masked rows zero.
  Tensor forward(Tape* tape, const Tensor& h_in, const GraphBatch& batch) const;
};

struct GatherLayer {
  GatherOp kind = GatherOp::kPoolSum;
  Index in_dim = 0;
  Index out_dim = 0;
  Dense w1, w2;    // attention-pool gate / value maps
  Tensor attn_a;   // (d, 1) attention-sum-pool scores

  Tensor forward(Tape* tape, const Tensor& h, const GraphBatch& batch) const;
};

Tensor gather_forward(Tape* tape, const GatherLayer& layer, const Tensor& h, const GraphBatch& batch);

class CompiledModel {
 public:
  CompiledModel() = default;
  CompiledModel(const ArchitectureVector& p, const ChoiceTable& table, const ModelDims& dims,
                std::uint64_t seed);

  Tensor forward(Tape* tape, const GraphBatch& batch) const;

  const DecodedArch& arch() const { return arch_; }
  const ArchitectureVector& vector() const { return p_; }
  const ModelDims& dims() const { return dims_; }
  const MpnnCellLayer& cell(int i) const { return cells_.at(static_cast<std::size_t>(i)); }
  const GatherLayer& gather_layer() const { return gather_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  Index param_count() const { return params_.total_size(); }
  std::string summary() const;

 private:
  ArchitectureVector p_;
  DecodedArch arch_;
  ModelDims dims_;
  ParamRegistry params_;
  std::array<MpnnCellLayer, kNumCells> cells_;
  std::array<std::optional<Dense>, kNumSkips> skips_;
  GatherLayer gather_;
  Dense head1_, head2_, head_out_;
};

CompiledModel build_model(const ArchitectureVector& p, const ChoiceTable& table, const ModelDims& dims,
                          std::uint64_t seed);

}  // namespace gnas

#endif  // GNAS_MPNN_HPP
