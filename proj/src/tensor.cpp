#include "gnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace gnas {

namespace {

[[noreturn]] void shape_error(const std::string& prim, const std::string& detail) {
  throw std::invalid_argument(prim + ": " + detail);
}

void require_2d(const char* prim, const Tensor& t) {
  if (t.ndim() != 2) shape_error(prim, "expected a 2-D tensor, got shape " + shape_str(t.shape()));
}

bool want_grad(Tape* tape, const Tensor& a) { return tape != nullptr && a.requires_grad(); }
bool want_grad(Tape* tape, const Tensor& a, const Tensor& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace

Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

const char* act_name(Act a) {
  switch (a) {
    case Act::kSigmoid: return "sigmoid";
    case Act::kTanh: return "tanh";
    case Act::kRelu: return "relu";
    case Act::kLinear: return "linear";
    case Act::kSoftplus: return "softplus";
    case Act::kLeakyRelu: return "leakyrelu";
    case Act::kRelu6: return "relu6";
    case Act::kElu: return "elu";
  }
  return "?";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->value = Eigen::ArrayXd::Zero(shape_numel(t.s_->shape));
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.s_->value.setConstant(v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  return from_array(std::move(shape),
                    Eigen::Map<const Eigen::ArrayXd>(data.data(), static_cast<Index>(data.size())),
                    requires_grad);
}

Tensor Tensor::from_array(Shape shape, Eigen::ArrayXd data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    shape_error("Tensor::from", "shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(data.size()) + " values");
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->value = std::move(data);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
  if (numel() != 1) shape_error("Tensor::item", "tensor has " + std::to_string(numel()) + " values");
  return s_->value[0];
}

Eigen::ArrayXd& Tensor::grad() const {
  if (s_->grad.size() != s_->value.size()) s_->grad = Eigen::ArrayXd::Zero(s_->value.size());
  return s_->grad;
}

void Tensor::zero_grad() const {
  if (s_ && s_->grad.size()) s_->grad.setZero();
}

MatMap Tensor::mat() const {
  require_2d("Tensor::mat", *this);
  return MatMap(s_->value.data(), s_->shape[0], s_->shape[1]);
}

void Tape::backward(Tensor loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  // A loss built from constants records nothing; backward is then a no-op
  // and the gradient set stays empty.
  loss.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  clear();
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  if (a.cols() != b.rows())
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  out.mat().noalias() = a.mat() * b.mat();
  if (want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      if (a.requires_grad()) MatMap(a.grad().data(), a.rows(), a.cols()).noalias() += g * b.mat().transpose();
      if (b.requires_grad()) MatMap(b.grad().data(), b.rows(), b.cols()).noalias() += a.mat().transpose() * g;
    });
  }
  return out;
}

Tensor transpose(Tape* tape, const Tensor& a) {
  require_2d("transpose", a);
  Tensor out = Tensor::zeros({a.cols(), a.rows()});
  out.mat() = a.mat().transpose();
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      MatMap(a.grad().data(), a.rows(), a.cols()) += g.transpose();
    });
  }
  return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error("add", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::from_array(a.shape(), a.value() + b.value());
  if (want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad();
    });
  }
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error("sub", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::from_array(a.shape(), a.value() - b.value());
  if (want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() -= out.grad();
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error("mul", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::from_array(a.shape(), a.value() * b.value());
  if (want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad() * b.value();
      if (b.requires_grad()) b.grad() += out.grad() * a.value();
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
  Tensor out = Tensor::from_array(a.shape(), a.value() * c);
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, c]() mutable { a.grad() += out.grad() * c; });
  }
  return out;
}

Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& bias) {
  require_2d("add_rowvec", a);
  if (bias.numel() != a.cols())
    shape_error("add_rowvec", "bias " + shape_str(bias.shape()) + " does not match columns of " +
                                  shape_str(a.shape()));
  Tensor out = Tensor::zeros(a.shape());
  out.mat() = a.mat().rowwise() + Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), bias.numel());
  if (want_grad(tape, a, bias)) {
    out.set_requires_grad(true);
    tape->record([a, bias, out]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      if (a.requires_grad()) a.grad() += out.grad();
      if (bias.requires_grad())
        Eigen::Map<Eigen::RowVectorXd>(bias.grad().data(), bias.numel()) += g.colwise().sum();
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b) {
  require_2d("concat_cols", a);
  require_2d("concat_cols", b);
  if (a.rows() != b.rows())
    shape_error("concat_cols", "row counts differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({a.rows(), a.cols() + b.cols()});
  out.mat().leftCols(a.cols()) = a.mat();
  out.mat().rightCols(b.cols()) = b.mat();
  if (want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      if (a.requires_grad()) MatMap(a.grad().data(), a.rows(), a.cols()) += g.leftCols(a.cols());
      if (b.requires_grad()) MatMap(b.grad().data(), b.rows(), b.cols()) += g.rightCols(b.cols());
    });
  }
  return out;
}

Tensor reshape(Tape* tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    shape_error("reshape", shape_str(a.shape()) + " cannot be viewed as " + shape_str(shape));
  Tensor out = Tensor::from_array(std::move(shape), a.value());
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable { a.grad() += out.grad(); });
  }
  return out;
}

Tensor gather_rows(Tape* tape, const Tensor& a, const std::vector<Index>& idx) {
  require_2d("gather_rows", a);
  const Index k = static_cast<Index>(idx.size());
  for (Index i : idx)
    if (i < 0 || i >= a.rows())
      shape_error("gather_rows", "row index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  Tensor out = Tensor::zeros({k, a.cols()});
  for (Index i = 0; i < k; ++i) out.mat().row(i) = a.mat().row(idx[i]);
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, idx]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      MatMap ag(a.grad().data(), a.rows(), a.cols());
      for (Index i = 0; i < static_cast<Index>(idx.size()); ++i) ag.row(idx[i]) += g.row(i);
    });
  }
  return out;
}

namespace {

void check_segments(const char* prim, const Tensor& a, const std::vector<Index>& seg, Index n) {
  require_2d(prim, a);
  if (static_cast<Index>(seg.size()) != a.rows())
    shape_error(prim, "segment vector length " + std::to_string(seg.size()) + " does not match rows of " +
                          shape_str(a.shape()));
  for (Index s : seg)
    if (s < 0 || s >= n) shape_error(prim, "segment id " + std::to_string(s) + " out of range [0," +
                                               std::to_string(n) + ")");
}

}  // namespace

Tensor segment_sum(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments) {
  check_segments("segment_sum", a, seg, n_segments);
  Tensor out = Tensor::zeros({n_segments, a.cols()});
  for (Index i = 0; i < a.rows(); ++i) out.mat().row(seg[i]) += a.mat().row(i);
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, seg]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      MatMap ag(a.grad().data(), a.rows(), a.cols());
      for (Index i = 0; i < a.rows(); ++i) ag.row(i) += g.row(seg[i]);
    });
  }
  return out;
}

Tensor segment_mean(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments) {
  check_segments("segment_mean", a, seg, n_segments);
  Eigen::ArrayXd count = Eigen::ArrayXd::Zero(n_segments);
  for (Index s : seg) count[s] += 1.0;
  Tensor out = Tensor::zeros({n_segments, a.cols()});
  for (Index i = 0; i < a.rows(); ++i) out.mat().row(seg[i]) += a.mat().row(i);
  for (Index s = 0; s < n_segments; ++s)
    if (count[s] > 0.0) out.mat().row(s) /= count[s];
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, seg, count]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      MatMap ag(a.grad().data(), a.rows(), a.cols());
      for (Index i = 0; i < a.rows(); ++i) ag.row(i) += g.row(seg[i]) / count[seg[i]];
    });
  }
  return out;
}

Tensor segment_max(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments,
                   const std::vector<std::uint8_t>* valid) {
  check_segments("segment_max", a, seg, n_segments);
  if (valid && static_cast<Index>(valid->size()) != a.rows())
    shape_error("segment_max", "validity vector length mismatch");
  const Index cols = a.cols();
  // argmax per (segment, column); -1 marks an empty slot, which yields 0.
  std::vector<Index> argmax(static_cast<std::size_t>(n_segments * cols), -1);
  Tensor out = Tensor::zeros({n_segments, cols});
  for (Index i = 0; i < a.rows(); ++i) {
    if (valid && !(*valid)[i]) continue;
    const Index s = seg[i];
    for (Index c = 0; c < cols; ++c) {
      Index& am = argmax[static_cast<std::size_t>(s * cols + c)];
      const double v = a.mat()(i, c);
      if (am < 0 || v > a.mat()(am, c)) {
        am = i;
        out.mat()(s, c) = v;
      }
    }
  }
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, argmax, cols]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      MatMap ag(a.grad().data(), a.rows(), a.cols());
      for (Index s = 0; s < out.rows(); ++s)
        for (Index c = 0; c < cols; ++c) {
          const Index am = argmax[static_cast<std::size_t>(s * cols + c)];
          if (am >= 0) ag(am, c) += g(s, c);
        }
    });
  }
  return out;
}

Tensor masked_segment_softmax(Tape* tape, const Tensor& scores, const std::vector<Index>& seg,
                              Index n_segments, const std::vector<std::uint8_t>* valid) {
  check_segments("masked_segment_softmax", scores, seg, n_segments);
  if (scores.cols() != 1)
    shape_error("masked_segment_softmax", "scores must be a column, got " + shape_str(scores.shape()));
  if (valid && static_cast<Index>(valid->size()) != scores.rows())
    shape_error("masked_segment_softmax", "validity vector length mismatch");
  const Index k = scores.rows();
  auto ok = [&](Index i) { return !valid || (*valid)[i]; };

  Eigen::ArrayXd seg_max = Eigen::ArrayXd::Constant(n_segments, -std::numeric_limits<double>::infinity());
  for (Index i = 0; i < k; ++i)
    if (ok(i)) seg_max[seg[i]] = std::max(seg_max[seg[i]], scores.value()[i]);

  Tensor out = Tensor::zeros({k, 1});
  Eigen::ArrayXd denom = Eigen::ArrayXd::Zero(n_segments);
  for (Index i = 0; i < k; ++i)
    if (ok(i)) {
      out.value()[i] = std::exp(scores.value()[i] - seg_max[seg[i]]);
      denom[seg[i]] += out.value()[i];
    }
  for (Index i = 0; i < k; ++i)
    if (ok(i)) out.value()[i] /= denom[seg[i]];

  if (want_grad(tape, scores)) {
    out.set_requires_grad(true);
    std::vector<std::uint8_t> valid_copy = valid ? *valid : std::vector<std::uint8_t>();
    tape->record([scores, out, seg, n_segments, valid_copy]() mutable {
      // ds_i = p_i * (g_i - sum_j p_j g_j) within each segment
      Eigen::ArrayXd dot = Eigen::ArrayXd::Zero(n_segments);
      const Index k2 = scores.rows();
      auto ok2 = [&](Index i) { return valid_copy.empty() || valid_copy[i]; };
      for (Index i = 0; i < k2; ++i)
        if (ok2(i)) dot[seg[i]] += out.value()[i] * out.grad()[i];
      for (Index i = 0; i < k2; ++i)
        if (ok2(i)) scores.grad()[i] += out.value()[i] * (out.grad()[i] - dot[seg[i]]);
    });
  }
  return out;
}

Tensor rowwise_matvec(Tape* tape, const Tensor& a, const Tensor& x) {
  require_2d("rowwise_matvec", a);
  require_2d("rowwise_matvec", x);
  const Index d = x.cols();
  if (a.rows() != x.rows() || a.cols() != d * d)
    shape_error("rowwise_matvec", "expected (k,d*d) x (k,d), got " + shape_str(a.shape()) + " x " +
                                      shape_str(x.shape()));
  Tensor out = Tensor::zeros({x.rows(), d});
  for (Index i = 0; i < x.rows(); ++i) {
    ConstMatMap w(a.value().data() + i * d * d, d, d);
    out.mat().row(i) = (w * x.mat().row(i).transpose()).transpose();
  }
  if (want_grad(tape, a, x)) {
    out.set_requires_grad(true);
    tape->record([a, x, out, d]() mutable {
      for (Index i = 0; i < x.rows(); ++i) {
        Eigen::Map<const Eigen::VectorXd> gy(out.grad().data() + i * d, d);
        Eigen::Map<const Eigen::VectorXd> xi(x.value().data() + i * d, d);
        ConstMatMap w(a.value().data() + i * d * d, d, d);
        if (a.requires_grad()) {
          MatMap gw(a.grad().data() + i * d * d, d, d);
          gw.noalias() += gy * xi.transpose();
        }
        if (x.requires_grad()) {
          Eigen::Map<Eigen::VectorXd> gx(x.grad().data() + i * d, d);
          gx.noalias() += w.transpose() * gy;
        }
      }
    });
  }
  return out;
}

Tensor rowwise_scale(Tape* tape, const Tensor& x, const Tensor& s) {
  require_2d("rowwise_scale", x);
  if (s.numel() != x.rows())
    shape_error("rowwise_scale", "scale column " + shape_str(s.shape()) + " does not match rows of " +
                                     shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  out.mat() = x.mat().array().colwise() * Eigen::Map<const Eigen::ArrayXd>(s.value().data(), s.numel());
  if (want_grad(tape, x, s)) {
    out.set_requires_grad(true);
    tape->record([x, s, out]() mutable {
      ConstMatMap g(out.grad().data(), out.rows(), out.cols());
      if (x.requires_grad())
        MatMap(x.grad().data(), x.rows(), x.cols()).array() +=
            g.array().colwise() * Eigen::Map<const Eigen::ArrayXd>(s.value().data(), s.numel());
      if (s.requires_grad())
        Eigen::Map<Eigen::ArrayXd>(s.grad().data(), s.numel()) +=
            (g.array() * x.mat().array()).rowwise().sum();
    });
  }
  return out;
}

Tensor reduce_cols(Tape* tape, const Tensor& a, Reduce kind) {
  require_2d("reduce_cols", a);
  Tensor out = Tensor::zeros({a.rows(), 1});
  std::vector<Index> argmax;
  switch (kind) {
    case Reduce::kSum:
      out.mat().col(0) = a.mat().rowwise().sum();
      break;
    case Reduce::kMean:
      out.mat().col(0) = a.mat().rowwise().mean();
      break;
    case Reduce::kMax: {
      argmax.resize(a.rows());
      for (Index i = 0; i < a.rows(); ++i) {
        Index c;
        out.mat()(i, 0) = a.mat().row(i).maxCoeff(&c);
        argmax[i] = c;
      }
      break;
    }
  }
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, kind, argmax]() mutable {
      MatMap ag(a.grad().data(), a.rows(), a.cols());
      for (Index i = 0; i < a.rows(); ++i) {
        const double g = out.grad()[i];
        switch (kind) {
          case Reduce::kSum: ag.row(i).array() += g; break;
          case Reduce::kMean: ag.row(i).array() += g / static_cast<double>(a.cols()); break;
          case Reduce::kMax: ag(i, argmax[i]) += g; break;
        }
      }
    });
  }
  return out;
}

Tensor reduce_sum_all(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::from({1}, {a.value().sum()});
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable { a.grad() += out.grad()[0]; });
  }
  return out;
}

Tensor reduce_mean_all(Tape* tape, const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  Tensor out = Tensor::from({1}, {a.value().sum() / n});
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, n]() mutable { a.grad() += out.grad()[0] / n; });
  }
  return out;
}

namespace {

constexpr double kLeakySlope = 0.2;  // conventional graph-attention slope

double act_fwd(double x, Act k) {
  switch (k) {
    case Act::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Act::kTanh: return std::tanh(x);
    case Act::kRelu: return x > 0.0 ? x : 0.0;
    case Act::kLinear: return x;
    case Act::kSoftplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Act::kLeakyRelu: return x > 0.0 ? x : kLeakySlope * x;
    case Act::kRelu6: return x < 0.0 ? 0.0 : (x > 6.0 ? 6.0 : x);
    case Act::kElu: return x > 0.0 ? x : std::expm1(x);
  }
  return x;
}

double act_bwd(double x, double y, Act k) {
  switch (k) {
    case Act::kSigmoid: return y * (1.0 - y);
    case Act::kTanh: return 1.0 - y * y;
    case Act::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Act::kLinear: return 1.0;
    case Act::kSoftplus: return 1.0 / (1.0 + std::exp(-x));
    case Act::kLeakyRelu: return x > 0.0 ? 1.0 : kLeakySlope;
    case Act::kRelu6: return (x > 0.0 && x < 6.0) ? 1.0 : 0.0;
    case Act::kElu: return x > 0.0 ? 1.0 : y + 1.0;
  }
  return 1.0;
}

}  // namespace

Tensor activation(Tape* tape, const Tensor& a, Act kind) {
  if (kind == Act::kLinear && !want_grad(tape, a)) return a;
  Tensor out = Tensor::zeros(a.shape());
  for (Index i = 0; i < a.numel(); ++i) out.value()[i] = act_fwd(a.value()[i], kind);
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out, kind]() mutable {
      for (Index i = 0; i < a.numel(); ++i)
        a.grad()[i] += out.grad()[i] * act_bwd(a.value()[i], out.value()[i], kind);
    });
  }
  return out;
}

Tensor abs_val(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::from_array(a.shape(), a.value().abs());
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable {
      a.grad() += out.grad() * a.value().sign();  // sign(0) = 0
    });
  }
  return out;
}

Tensor square(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::from_array(a.shape(), a.value().square());
  if (want_grad(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() mutable { a.grad() += out.grad() * 2.0 * a.value(); });
  }
  return out;
}

}  // namespace gnas
