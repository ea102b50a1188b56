#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rereadnet {

// Deterministic 64-bit generator. Draws are derived from raw engine bits so
// results do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform draw in [lo, hi).
  double uniform(double lo, double hi);
  // Integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);
  // Independent child stream.
  Rng fork(std::uint64_t salt);

 private:
  std::uint64_t state_[2];
};

struct TensorNode;

// Dense 64-bit float tensor participating in a reverse-mode graph.
// Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<std::int64_t>& shape, bool requires_grad = false);
  static Tensor ones(const std::vector<std::int64_t>& shape, bool requires_grad = false);
  static Tensor uniform(const std::vector<std::int64_t>& shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);
  static Tensor values(const std::vector<std::int64_t>& shape, std::vector<double> data,
                       bool requires_grad = false);
  // Uniform in +-sqrt(6/(nin+nout)), fans derived from the shape
  // (vector [d]: (d,1); matrix [m,n]: (n,m); conv kernel [k,din,dout]: (k*din,dout)).
  static Tensor glorot_uniform(const std::vector<std::int64_t>& shape, Rng& rng,
                               bool requires_grad = true);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& shape() const;
  std::int64_t size() const;
  int rank() const;
  std::int64_t dim(int axis) const;
  bool requires_grad() const;

  std::span<const double> data() const;
  std::span<double> raw_data();  // in-place mutation (optimizer updates); not recorded
  std::span<const double> grad() const;
  std::span<double> raw_grad();
  void zero_grad();

  double item() const;              // size-1 tensors only
  double at(std::int64_t i) const;  // flat index

  // Detached copy with fresh storage.
  Tensor clone(bool requires_grad = false) const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Ordered record of the operations reaching a root, in execution order.
// Backward runs the record once, in reverse.
class Graph {
 public:
  static Graph trace(const Tensor& root);
  void run_backward();
  std::size_t node_count() const { return order_.size(); }

 private:
  std::vector<std::shared_ptr<TensorNode>> order_;
};

// --- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const std::vector<std::int64_t>& shape);

// Elementwise add/sub/mul. b may equal a's shape, be a single element
// (broadcast everywhere), or be a column [m,1] against a [m,n]
// (the repeat-l-times pattern); gradients sum over broadcast axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor scalar_minus(double c, const Tensor& a);  // c - a
Tensor reciprocal(const Tensor& a);

Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// weights_i = exp(beta*(x_i - max_unmasked)) / sum over unmasked; masked
// entries are exactly 0. mask empty means all positions live; mask[i] true
// marks position i live. Rank-1 input.
Tensor softmax_sharp(const Tensor& logits, double beta, const std::vector<std::uint8_t>& mask);
inline Tensor softmax(const Tensor& logits, const std::vector<std::uint8_t>& mask = {}) {
  return softmax_sharp(logits, 1.0, mask);
}

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len);
Tensor take_rows(const Tensor& a, const std::vector<std::int64_t>& rows);

// Same-length 1d convolution over x[len,d_in] with kernel[k,d_in,d_out].
// Odd k pads symmetrically; even k pads one extra zero on the left.
Tensor conv1d_same(const Tensor& x, const Tensor& kernel, const Tensor& bias);

Tensor pool_max(const Tensor& x, const std::vector<std::uint8_t>& mask);
Tensor pool_avg(const Tensor& x, const std::vector<std::uint8_t>& mask);

Tensor sum_all(const Tensor& a);
Tensor log_clamped(const Tensor& a, double floor = 1e-12);
Tensor clamp01(const Tensor& a);

// Populates grads of every requires_grad leaf reachable from loss.
// Grads accumulate; callers reset with zero_grad between steps.
void backward(const Tensor& loss);

// Max over entries of |analytic - central difference| /
// max(|analytic|, |cd|, 1e-8). f must map x to a scalar tensor and be
// differentiable around x (keep relu/max/clamp kinks out of the probe).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

// Shape helpers.
Tensor as_col(const Tensor& v);  // [d] -> [d,1]
Tensor as_row(const Tensor& v);  // [d] -> [1,d]

namespace testing {
// Corrupts the tanh backward rule so oracle tests can confirm detection.
void set_tanh_backward_corrupted(bool corrupted);
}  // namespace testing

}  // namespace rereadnet
