#ifndef GNAS_NN_HPP
#define GNAS_NN_HPP

#include "gnas/tensor.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gnas {

// Named trainable tensors of one model, in construction order. The order is
// part of the model's deterministic identity: Adam state and seeded init both
// follow it.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  Tensor* find(const std::string& name);
  Index total_size() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Every parameter draws from U(-sqrt(6/(fan_in+fan_out)), +...), biases
// included with the fans of their owning layer. Nonzero biases keep the
// relu-style kinks off the exact points the zero-featured self-loops hit.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}
  Tensor weight(Index fan_in, Index fan_out);          // shape {fan_in, fan_out}
  Tensor vec(Index n, Index fan_in, Index fan_out);    // shape {n, 1}, glorot fans
  Tensor bias(Index n, Index fan_in, Index fan_out);   // shape {n}, glorot fans

 private:
  std::mt19937_64 rng_;
};

struct Dense {
  Tensor w;  // (in, out)
  Tensor b;  // (out)
  Act act = Act::kLinear;

  Dense() = default;
  Dense(ParamRegistry& reg, ParamInit& init, const std::string& name, Index in, Index out,
        Act act_kind = Act::kLinear);
  Tensor forward(Tape* tape, const Tensor& x) const;
  Index in_dim() const { return w.rows(); }
  Index out_dim() const { return w.cols(); }
};

// Standard GRU step: update gate, reset gate, tanh candidate.
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   c = tanh(x Wc + (r*h) Uc + bc)
//   h' = (1-z)*h + z*c
struct GruCell {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wc, uc, bc;

  GruCell() = default;
  GruCell(ParamRegistry& reg, ParamInit& init, const std::string& name, Index d);
  Tensor forward(Tape* tape, const Tensor& h, const Tensor& x) const;
  Index dim() const { return wz.rows(); }
};

// Free-function form used by update layers and tests.
Tensor gru_cell(Tape* tape, const GruCell& cell, const Tensor& h, const Tensor& x);

}  // namespace gnas

#endif  // GNAS_NN_HPP
