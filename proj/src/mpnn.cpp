#include "gnas/mpnn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gnas {

namespace {

bool attention_is_trainable(Attention k) {
  return k != Attention::kConstant && k != Attention::kGcn;
}

AttentionHead make_head(ParamRegistry& reg, ParamInit& init, const std::string& name, Attention kind,
                        Index d) {
  AttentionHead head;
  head.kind = kind;
  switch (kind) {
    case Attention::kConstant:
    case Attention::kGcn:
      break;
    case Attention::kGat:
    case Attention::kSymGat:
    case Attention::kCos:
      head.w = reg.add(name + "/w", init.weight(d, d));
      head.a = reg.add(name + "/a", init.vec(2 * d, 2 * d, 1));
      break;
    case Attention::kLinear:
      head.w = reg.add(name + "/w", init.weight(d, d));
      head.a_left = reg.add(name + "/al", init.vec(d, d, 1));
      head.a_right = reg.add(name + "/ar", init.vec(d, d, 1));
      break;
    case Attention::kGenLinear:
      head.w = reg.add(name + "/w", init.weight(d, d));
      head.w_g = reg.add(name + "/wg", init.vec(d, d, 1));
      break;
  }
  return head;
}

}  // namespace

Tensor attention_coefficients(Tape* tape, const AttentionHead& head, const Tensor& h,
                              const GraphBatch& batch) {
  const Index r = static_cast<Index>(batch.edge_src.size());
  const Index n_nodes = batch.total_nodes();

  switch (head.kind) {
    case Attention::kConstant:
      return Tensor::full({r, 1}, 1.0);
    case Attention::kGcn: {
      Tensor alpha = Tensor::zeros({r, 1});
      for (Index i = 0; i < r; ++i) {
        const double dv = batch.in_degree[batch.edge_dst[static_cast<std::size_t>(i)]];
        const double dw = batch.in_degree[batch.edge_src[static_cast<std::size_t>(i)]];
        alpha.value()[i] = (dv > 0.0 && dw > 0.0) ? 1.0 / std::sqrt(dv * dw) : 0.0;
      }
      return alpha;
    }
    case Attention::kGat:
    case Attention::kSymGat:
    case Attention::kCos: {
      Tensor wh = matmul(tape, h, head.w);
      Tensor cat = concat_cols(tape, gather_rows(tape, wh, batch.edge_dst),
                               gather_rows(tape, wh, batch.edge_src));
      Tensor scores = matmul(tape, cat, head.a);
      if (head.kind != Attention::kCos) scores = activation(tape, scores, Act::kLeakyRelu);
      if (head.kind == Attention::kSymGat)
        scores = add(tape, scores, gather_rows(tape, scores, batch.edge_reverse));
      return masked_segment_softmax(tape, scores, batch.edge_dst, n_nodes);
    }
    case Attention::kLinear: {
      Tensor wh = matmul(tape, h, head.w);
      Tensor s_left = matmul(tape, wh, head.a_left);
      Tensor s_right = matmul(tape, wh, head.a_right);
      Tensor scores = activation(tape,
                                 add(tape, gather_rows(tape, s_left, batch.edge_dst),
                                     gather_rows(tape, s_right, batch.edge_src)),
                                 Act::kTanh);
      return masked_segment_softmax(tape, scores, batch.edge_dst, n_nodes);
    }
    case Attention::kGenLinear: {
      Tensor wh = matmul(tape, h, head.w);
      Tensor t = activation(tape,
                            add(tape, gather_rows(tape, wh, batch.edge_dst),
                                gather_rows(tape, wh, batch.edge_src)),
                            Act::kTanh);
      Tensor scores = matmul(tape, t, head.w_g);
      return masked_segment_softmax(tape, scores, batch.edge_dst, n_nodes);
    }
  }
  throw std::invalid_argument("attention_coefficients: unknown attention kind");
}

Tensor MpnnCellLayer::forward(Tape* tape, const Tensor& h_in, const GraphBatch& batch) const {
  if (h_in.ndim() != 2 || h_in.cols() != in_dim)
    throw std::invalid_argument("cell forward: expected (" + std::to_string(batch.total_nodes()) + "," +
                                std::to_string(in_dim) + ") input, got " + shape_str(h_in.shape()));
  const Index n_nodes = batch.total_nodes();

  Tensor h = rowwise_scale(tape, embed.forward(tape, h_in), batch.mask_flat);

  // Per-edge d x d message weights from the edge features; fixed across steps.
  Tensor edge_w = edge_net.out.forward(tape, edge_net.hidden.forward(tape, batch.edge_feat));

  // Constant and gcn attention have no per-head parameters; every head would
  // produce the same output, so one pass suffices.
  const std::size_t active_heads = attention_is_trainable(cfg.attention) ? heads.size() : 1;

  for (int t = 0; t < cfg.repetitions; ++t) {
    Tensor h_acc;
    for (std::size_t k = 0; k < active_heads; ++k) {
      Tensor alpha = attention_coefficients(tape, heads[k], h, batch);
      Tensor msg = rowwise_scale(tape, rowwise_matvec(tape, edge_w, gather_rows(tape, h, batch.edge_src)),
                                 alpha);
      Tensor m;
      switch (cfg.aggregate) {
        case Aggregate::kMean: m = segment_mean(tape, msg, batch.edge_dst, n_nodes); break;
        case Aggregate::kSum: m = segment_sum(tape, msg, batch.edge_dst, n_nodes); break;
        case Aggregate::kMax: m = segment_max(tape, msg, batch.edge_dst, n_nodes); break;
      }
      Tensor u = update.kind == Update::kGru ? update.gru.forward(tape, h, m)
                                             : update.mlp.forward(tape, concat_cols(tape, h, m));
      Tensor h_k = activation(tape, u, cfg.activation);
      h_acc = h_acc.defined() ? add(tape, h_acc, h_k) : h_k;
    }
    if (active_heads > 1) h_acc = scale(tape, h_acc, 1.0 / static_cast<double>(active_heads));
    h = rowwise_scale(tape, h_acc, batch.mask_flat);
  }
  return h;
}

Tensor GatherLayer::forward(Tape* tape, const Tensor& h, const GraphBatch& batch) const {
  const Index b = batch.num_graphs();
  // Padded node rows must never contribute; masking here keeps that true even
  // when the caller hands in an unmasked state.
  Tensor hm = rowwise_scale(tape, h, batch.mask_flat);
  switch (kind) {
    case GatherOp::kPoolSum:
      return reshape(tape, reduce_cols(tape, hm, Reduce::kSum), {b, batch.n_max});
    case GatherOp::kPoolMean:
      return reshape(tape, reduce_cols(tape, hm, Reduce::kMean), {b, batch.n_max});
    case GatherOp::kPoolMax:
      return reshape(tape, reduce_cols(tape, hm, Reduce::kMax), {b, batch.n_max});
    case GatherOp::kGatherSum:
      return segment_sum(tape, hm, batch.node_graph, b);
    case GatherOp::kGatherMean: {
      Tensor sums = segment_sum(tape, hm, batch.node_graph, b);
      Tensor inv = Tensor::zeros({b, 1});
      for (Index g = 0; g < b; ++g)
        inv.value()[g] = batch.real_nodes[g] > 0.0 ? 1.0 / batch.real_nodes[g] : 0.0;
      return rowwise_scale(tape, sums, inv);
    }
    case GatherOp::kGatherMax:
      return segment_max(tape, hm, batch.node_graph, b, &batch.node_valid);
    case GatherOp::kAttnPool16:
    case GatherOp::kAttnPool32:
    case GatherOp::kAttnPool64: {
      Tensor gate = activation(tape, w1.forward(tape, hm), Act::kSigmoid);
      Tensor val = w2.forward(tape, hm);
      Tensor prod = rowwise_scale(tape, mul(tape, gate, val), batch.mask_flat);
      return segment_sum(tape, prod, batch.node_graph, b);
    }
    case GatherOp::kAttnSumPool: {
      Tensor scores = matmul(tape, hm, attn_a);
      Tensor alpha = masked_segment_softmax(tape, scores, batch.node_graph, b, &batch.node_valid);
      return segment_sum(tape, rowwise_scale(tape, hm, alpha), batch.node_graph, b);
    }
    case GatherOp::kFlatten:
      return reshape(tape, hm, {b, batch.n_max * in_dim});
  }
  throw std::invalid_argument("gather_forward: unknown gather kind");
}

Tensor gather_forward(Tape* tape, const GatherLayer& layer, const Tensor& h, const GraphBatch& batch) {
  return layer.forward(tape, h, batch);
}

CompiledModel::CompiledModel(const ArchitectureVector& p, const ChoiceTable& table,
                             const ModelDims& dims, std::uint64_t seed)
    : p_(p), arch_(decode(p, table)), dims_(dims) {
  ParamInit init(seed);

  Index width = dims_.f_n;
  for (int c = 0; c < kNumCells; ++c) {
    MpnnCellLayer& cell = cells_[static_cast<std::size_t>(c)];
    cell.cfg = arch_.cells[static_cast<std::size_t>(c)];
    cell.in_dim = width;
    const Index d = cell.cfg.state_dim;
    const std::string name = "cell" + std::to_string(c + 1);

    cell.embed = Dense(params_, init, name + "/embed", width, d);
    cell.edge_net.hidden = Dense(params_, init, name + "/edgenet/hidden", dims_.f_e, 2 * d, Act::kRelu);
    cell.edge_net.out = Dense(params_, init, name + "/edgenet/out", 2 * d, d * d);
    for (int k = 0; k < cell.cfg.heads; ++k)
      cell.heads.push_back(
          make_head(params_, init, name + "/head" + std::to_string(k), cell.cfg.attention, d));
    cell.update.kind = cell.cfg.update;
    if (cell.cfg.update == Update::kGru)
      cell.update.gru = GruCell(params_, init, name + "/gru", d);
    else
      cell.update.mlp = Dense(params_, init, name + "/mlp", 2 * d, d);
    width = d;
  }

  // Widths along the chain, indexed by skip source/destination ids.
  const Index src_width[3] = {dims_.f_n, arch_.cells[0].state_dim, arch_.cells[1].state_dim};
  const Index dst_width[5] = {0, 0, arch_.cells[0].state_dim, arch_.cells[1].state_dim,
                              arch_.cells[2].state_dim};
  for (int s = 0; s < kNumSkips; ++s)
    if (arch_.skips[static_cast<std::size_t>(s)])
      skips_[static_cast<std::size_t>(s)] =
          Dense(params_, init, "skip" + std::to_string(s) + "(" + skip_anchor_name(s) + ")",
                src_width[skip_source(s)], dst_width[skip_destination(s)]);

  const Index d3 = arch_.cells[2].state_dim;
  gather_.kind = arch_.gather;
  gather_.in_dim = d3;
  switch (arch_.gather) {
    case GatherOp::kPoolSum:
    case GatherOp::kPoolMean:
    case GatherOp::kPoolMax:
      gather_.out_dim = dims_.n_max;
      break;
    case GatherOp::kGatherSum:
    case GatherOp::kGatherMean:
    case GatherOp::kGatherMax:
      gather_.out_dim = d3;
      break;
    case GatherOp::kAttnPool16:
    case GatherOp::kAttnPool32:
    case GatherOp::kAttnPool64: {
      const Index fp = arch_.attn_pool_dim();
      gather_.w1 = Dense(params_, init, "gather/gate", d3, fp);
      gather_.w2 = Dense(params_, init, "gather/value", d3, fp);
      gather_.out_dim = fp;
      break;
    }
    case GatherOp::kAttnSumPool:
      gather_.attn_a = params_.add("gather/a", init.vec(d3, d3, 1));
      gather_.out_dim = d3;
      break;
    case GatherOp::kFlatten:
      gather_.out_dim = dims_.n_max * d3;
      break;
  }

  head1_ = Dense(params_, init, "head/dense1", gather_.out_dim, 32, Act::kRelu);
  head2_ = Dense(params_, init, "head/dense2", 32, 32, Act::kRelu);
  head_out_ = Dense(params_, init, "head/out", 32, dims_.k);
}

Tensor CompiledModel::forward(Tape* tape, const GraphBatch& batch) const {
  if (batch.f_n != dims_.f_n || batch.f_e != dims_.f_e)
    throw std::invalid_argument("model/batch feature widths differ");
  const bool n_bound = arch_.gather == GatherOp::kFlatten || arch_.gather == GatherOp::kPoolSum ||
                       arch_.gather == GatherOp::kPoolMean || arch_.gather == GatherOp::kPoolMax;
  if (n_bound && batch.n_max != dims_.n_max)
    throw std::invalid_argument("model built for n_max=" + std::to_string(dims_.n_max) +
                                " cannot gather a batch with n_max=" + std::to_string(batch.n_max));

  const Index flat_nodes = batch.total_nodes();
  Tensor h0 = reshape(tape, batch.h, {flat_nodes, batch.f_n});

  // Outputs along the chain; index 0 is the raw input, 1..3 the cells.
  std::array<Tensor, 4> out;
  out[0] = h0;
  for (int c = 0; c < kNumCells; ++c) {
    Tensor x = out[static_cast<std::size_t>(c)];
    bool summed = false;
    for (int s = 0; s < kNumSkips; ++s)
      if (skips_[static_cast<std::size_t>(s)] && skip_destination(s) == c + 1) {
        x = add(tape, x,
                skips_[static_cast<std::size_t>(s)]->forward(
                    tape, out[static_cast<std::size_t>(skip_source(s))]));
        summed = true;
      }
    if (summed) x = rowwise_scale(tape, x, batch.mask_flat);  // projection bias leaks into padding
    out[static_cast<std::size_t>(c + 1)] = cells_[static_cast<std::size_t>(c)].forward(tape, x, batch);
  }

  Tensor g_in = out[3];
  bool summed = false;
  for (int s = 0; s < kNumSkips; ++s)
    if (skips_[static_cast<std::size_t>(s)] && skip_destination(s) == 4) {
      g_in = add(tape, g_in,
                 skips_[static_cast<std::size_t>(s)]->forward(
                     tape, out[static_cast<std::size_t>(skip_source(s))]));
      summed = true;
    }
  if (summed) g_in = rowwise_scale(tape, g_in, batch.mask_flat);

  Tensor g = gather_.forward(tape, g_in, batch);
  return head_out_.forward(tape, head2_.forward(tape, head1_.forward(tape, g)));
}

std::string CompiledModel::summary() const {
  std::ostringstream os;
  auto params_with_prefix = [&](const std::string& prefix) {
    Index n = 0;
    for (const auto& [name, t] : params_.items())
      if (name.rfind(prefix, 0) == 0) n += t.numel();
    return n;
  };
  os << "input: F_n=" << dims_.f_n << " F_e=" << dims_.f_e << " n_max=" << dims_.n_max << "\n";
  for (int c = 0; c < kNumCells; ++c) {
    const MpnnCellConfig& cfg = arch_.cells[static_cast<std::size_t>(c)];
    os << "cell" << c + 1 << ": d=" << cfg.state_dim << " attn=" << attention_name(cfg.attention)
       << " heads=" << cfg.heads << " agg=" << aggregate_name(cfg.aggregate)
       << " act=" << act_name(cfg.activation) << " update=" << update_name(cfg.update)
       << " T=" << cfg.repetitions << "  [" << params_with_prefix("cell" + std::to_string(c + 1) + "/")
       << " params]\n";
  }
  for (int s = 0; s < kNumSkips; ++s)
    if (arch_.skips[static_cast<std::size_t>(s)])
      os << "skip(" << skip_anchor_name(s) << ")  ["
         << params_with_prefix("skip" + std::to_string(s) + "(") << " params]\n";
  os << "gather: " << gather_name(arch_.gather) << " -> " << gather_.out_dim << "  ["
     << params_with_prefix("gather/") << " params]\n";
  os << "head: dense(32) relu, dense(32) relu, dense(" << dims_.k << ")  ["
     << params_with_prefix("head/") << " params]\n";
  os << "total params: " << param_count() << "\n";
  return os.str();
}

CompiledModel build_model(const ArchitectureVector& p, const ChoiceTable& table, const ModelDims& dims,
                          std::uint64_t seed) {
  return CompiledModel(p, table, dims, seed);
}

}  // namespace gnas
