#include "gnas/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gnas {

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  for (const auto& [n, _] : items_)
    if (n == name) throw std::invalid_argument("ParamRegistry: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

Tensor* ParamRegistry::find(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

Index ParamRegistry::total_size() const {
  Index n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParamRegistry::zero_grads() {
  for (auto& [_, t] : items_) t.zero_grad();
}

Tensor ParamInit::weight(Index fan_in, Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (Index i = 0; i < t.numel(); ++i) t.value()[i] = u(rng_);
  return t;
}

Tensor ParamInit::vec(Index n, Index fan_in, Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros({n, 1});
  for (Index i = 0; i < n; ++i) t.value()[i] = u(rng_);
  return t;
}

Tensor ParamInit::bias(Index n, Index fan_in, Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros({n});
  for (Index i = 0; i < n; ++i) t.value()[i] = u(rng_);
  return t;
}

Dense::Dense(ParamRegistry& reg, ParamInit& init, const std::string& name, Index in, Index out,
             Act act_kind)
    : act(act_kind) {
  w = reg.add(name + "/w", init.weight(in, out));
  b = reg.add(name + "/b", init.bias(out, in, out));
}

Tensor Dense::forward(Tape* tape, const Tensor& x) const {
  return activation(tape, add_rowvec(tape, matmul(tape, x, w), b), act);
}

GruCell::GruCell(ParamRegistry& reg, ParamInit& init, const std::string& name, Index d) {
  wz = reg.add(name + "/wz", init.weight(d, d));
  uz = reg.add(name + "/uz", init.weight(d, d));
  bz = reg.add(name + "/bz", init.bias(d, d, d));
  wr = reg.add(name + "/wr", init.weight(d, d));
  ur = reg.add(name + "/ur", init.weight(d, d));
  br = reg.add(name + "/br", init.bias(d, d, d));
  wc = reg.add(name + "/wc", init.weight(d, d));
  uc = reg.add(name + "/uc", init.weight(d, d));
  bc = reg.add(name + "/bc", init.bias(d, d, d));
}

Tensor GruCell::forward(Tape* tape, const Tensor& h, const Tensor& x) const {
  if (h.ndim() != 2 || x.ndim() != 2 || h.cols() != x.cols() || h.cols() != dim() ||
      h.rows() != x.rows())
    throw std::invalid_argument("gru_cell: state " + shape_str(h.shape()) + " and input " +
                                shape_str(x.shape()) + " must both be (rows, " +
                                std::to_string(dim()) + ")");
  Tensor z = activation(tape, add_rowvec(tape, add(tape, matmul(tape, x, wz), matmul(tape, h, uz)), bz),
                        Act::kSigmoid);
  Tensor r = activation(tape, add_rowvec(tape, add(tape, matmul(tape, x, wr), matmul(tape, h, ur)), br),
                        Act::kSigmoid);
  Tensor c = activation(
      tape, add_rowvec(tape, add(tape, matmul(tape, x, wc), matmul(tape, mul(tape, r, h), uc)), bc),
      Act::kTanh);
  // h' = h - z*h + z*c
  return add(tape, sub(tape, h, mul(tape, z, h)), mul(tape, z, c));
}

Tensor gru_cell(Tape* tape, const GruCell& cell, const Tensor& h, const Tensor& x) {
  return cell.forward(tape, h, x);
}

}  // namespace gnas
