#ifndef GNAS_TENSOR_HPP
#define GNAS_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gnas {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Row-major matrix view used by every 2-D kernel.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Index shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense f64 tensor with shared storage. Copies are shallow; gradients
// accumulate into the shared buffer during Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor from_array(Shape shape, Eigen::ArrayXd data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  Index ndim() const { return static_cast<Index>(s_->shape.size()); }
  Index numel() const { return s_->value.size(); }
  // 2-D accessors; valid only when ndim() == 2.
  Index rows() const { return s_->shape[0]; }
  Index cols() const { return s_->shape[1]; }

  // Tensor is a handle: const applies to the handle, not the shared buffers
  // (same convention as shared_ptr).
  Eigen::ArrayXd& value() const { return s_->value; }
  double item() const;

  bool requires_grad() const { return s_ && s_->requires_grad; }
  void set_requires_grad(bool b) const { s_->requires_grad = b; }

  // Lazily allocated, zero-initialized gradient buffer.
  Eigen::ArrayXd& grad() const;
  bool has_grad() const { return s_ && s_->grad.size() == s_->value.size(); }
  void zero_grad() const;

  MatMap mat() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    Eigen::ArrayXd value;
    Eigen::ArrayXd grad;  // empty until touched
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Append-only record of primitive applications. Entries are pushed in
// forward execution order, so replaying them back-to-front visits the
// DAG in reverse topological order exactly once.
class Tape {
 public:
  void record(std::function<void()> backward_step) { entries_.push_back(std::move(backward_step)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss)=1 and replays the tape. The tape is cleared
  // afterwards; gradients are left on every tensor that required them.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> entries_;
};

enum class Act { kSigmoid, kTanh, kRelu, kLinear, kSoftplus, kLeakyRelu, kRelu6, kElu };
enum class Reduce { kSum, kMean, kMax };

const char* act_name(Act a);

// ---- primitives -----------------------------------------------------------
// Every primitive checks shapes up front, computes the forward value, and
// records its local gradient rule on `tape` when any input requires grad.
// Passing tape == nullptr runs inference-only.

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape* tape, const Tensor& a);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double c);
// Broadcasts a length-n bias over the rows of an (m, n) input.
Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& bias);
Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b);
Tensor reshape(Tape* tape, const Tensor& a, Shape shape);

Tensor gather_rows(Tape* tape, const Tensor& a, const std::vector<Index>& idx);
Tensor segment_sum(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments);
Tensor segment_mean(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments);
// Empty segments yield 0, not -inf, so padded graphs stay finite. An
// optional validity byte per row restricts the reduction.
Tensor segment_max(Tape* tape, const Tensor& a, const std::vector<Index>& seg, Index n_segments,
                   const std::vector<std::uint8_t>* valid = nullptr);
// Softmax of a (k, 1) score column within each segment, over valid rows
// only. Invalid rows get exactly 0; each non-empty segment sums to 1.
Tensor masked_segment_softmax(Tape* tape, const Tensor& scores, const std::vector<Index>& seg,
                              Index n_segments, const std::vector<std::uint8_t>* valid = nullptr);

// y_i = reshape(a_i, d, d) * x_i for each row i; a is (k, d*d), x is (k, d).
Tensor rowwise_matvec(Tape* tape, const Tensor& a, const Tensor& x);
// y_i = s_i * x_i with s a (k, 1) column. Also used for node masking.
Tensor rowwise_scale(Tape* tape, const Tensor& x, const Tensor& s);

Tensor reduce_cols(Tape* tape, const Tensor& a, Reduce kind);  // (m, n) -> (m, 1)
Tensor reduce_sum_all(Tape* tape, const Tensor& a);            // -> {1}
Tensor reduce_mean_all(Tape* tape, const Tensor& a);           // -> {1}

Tensor activation(Tape* tape, const Tensor& a, Act kind);
Tensor abs_val(Tape* tape, const Tensor& a);
Tensor square(Tape* tape, const Tensor& a);

}  // namespace gnas

#endif  // GNAS_TENSOR_HPP
