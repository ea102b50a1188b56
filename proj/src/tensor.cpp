#include "rereadnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <cblas.h>

// Present in OpenBLAS builds; absent symbols leave the pointer null.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace rereadnet {

namespace {

std::once_flag g_blas_init;

void ensure_blas_single_thread() {
  std::call_once(g_blas_init, [] {
    if (&openblas_set_num_threads != nullptr) openblas_set_num_threads(1);
  });
}

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("tensor: " + msg); }

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  if (shape.empty()) fail("empty shape rejected");
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 1) fail("non-positive dim in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::atomic<bool> g_tanh_corrupted{false};

}  // namespace

namespace testing {
void set_tanh_backward_corrupted(bool corrupted) { g_tanh_corrupted.store(corrupted); }
}  // namespace testing

// --- Rng (xoroshiro128++, splitmix64 seeding) ------------------------------

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  state_[0] = splitmix64(s);
  state_[1] = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t s0 = state_[0];
  std::uint64_t s1 = state_[1];
  const std::uint64_t result = rotl64(s0 + s1, 17) + s0;
  s1 ^= s0;
  state_[0] = rotl64(s0, 49) ^ s1 ^ (s1 << 21);
  state_[1] = rotl64(s1, 28);
  return result;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) fail("uniform bounds require lo < hi");
  const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

std::uint64_t Rng::next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

Rng Rng::fork(std::uint64_t salt) { return Rng(next_u64() ^ (salt * 0x9E3779B97F4A7C15ull)); }

// --- TensorNode ------------------------------------------------------------

struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const TensorNode&)> backward_fn;
  const char* op = "";

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
};

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_leaf(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->data.size(), 0.0);
  n->op = "leaf";
  return n;
}

NodePtr make_node(std::vector<std::int64_t> shape, std::vector<double> data,
                  std::vector<NodePtr> parents, const char* op,
                  std::function<void(const TensorNode&)> bw) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = rg;
  n->op = op;
  if (rg) {
    n->grad.assign(n->data.size(), 0.0);
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

void accum_into(const NodePtr& p, const double* g, std::int64_t n) {
  if (!p->requires_grad) return;
  double* dst = p->grad.data();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

void gemm_rm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
             const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
             double* c, std::int64_t ldc) {
  ensure_blas_single_thread();
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

}  // namespace

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(const std::vector<std::int64_t>& shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(shape, std::vector<double>(static_cast<std::size_t>(n), 0.0),
                          requires_grad));
}

Tensor Tensor::ones(const std::vector<std::int64_t>& shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(shape, std::vector<double>(static_cast<std::size_t>(n), 1.0),
                          requires_grad));
}

Tensor Tensor::uniform(const std::vector<std::int64_t>& shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  const auto n = shape_numel(shape);
  std::vector<double> d(static_cast<std::size_t>(n));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor(make_leaf(shape, std::move(d), requires_grad));
}

Tensor Tensor::values(const std::vector<std::int64_t>& shape, std::vector<double> data,
                      bool requires_grad) {
  const auto n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(data.size()))
    fail("values: " + std::to_string(data.size()) + " entries for shape " + shape_str(shape));
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::glorot_uniform(const std::vector<std::int64_t>& shape, Rng& rng,
                              bool requires_grad) {
  shape_numel(shape);
  double fan_in = 1.0, fan_out = 1.0;
  if (shape.size() == 1) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = 1.0;
  } else if (shape.size() == 2) {
    fan_in = static_cast<double>(shape[1]);
    fan_out = static_cast<double>(shape[0]);
  } else if (shape.size() == 3) {
    fan_in = static_cast<double>(shape[0] * shape[1]);
    fan_out = static_cast<double>(shape[2]);
  } else {
    fail("glorot_uniform supports rank 1..3, got " + shape_str(shape));
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  return uniform(shape, -bound, bound, rng, requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return values({1}, {v}, requires_grad);
}

const std::vector<std::int64_t>& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::size() const { return node_->size(); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
std::int64_t Tensor::dim(int axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::data() const { return {node_->data.data(), node_->data.size()}; }
std::span<double> Tensor::raw_data() { return {node_->data.data(), node_->data.size()}; }

std::span<const double> Tensor::grad() const {
  if (!node_->requires_grad) fail("grad() on tensor without requires_grad");
  return {node_->grad.data(), node_->grad.size()};
}

std::span<double> Tensor::raw_grad() {
  if (!node_->requires_grad) fail("raw_grad() on tensor without requires_grad");
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) fail("item() requires size 1, shape is " + shape_str(node_->shape));
  return node_->data[0];
}

double Tensor::at(std::int64_t i) const { return node_->data.at(static_cast<std::size_t>(i)); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(make_leaf(node_->shape, node_->data, requires_grad));
}

// --- Graph ------------------------------------------------------------------

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.node()->requires_grad) return g;
  std::unordered_set<TensorNode*> seen;
  // Iterative post-order; recursion depth over long recurrences is unbounded.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr p = node->parents[next++];
      if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void Graph::run_backward() {
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) fail("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // nothing reachable needs grads
  loss.node()->grad[0] += 1.0;
  Graph::trace(loss).run_backward();
}

// --- elementwise binary -----------------------------------------------------

namespace {

enum class Bcast { Same, Scalar, Col };

Bcast classify(const NodePtr& a, const NodePtr& b, const char* op) {
  if (a->shape == b->shape) return Bcast::Same;
  if (b->size() == 1) return Bcast::Scalar;
  if (a->shape.size() == 2 && b->shape.size() == 2 && b->shape[0] == a->shape[0] &&
      b->shape[1] == 1)
    return Bcast::Col;
  fail(std::string(op) + ": incompatible shapes " + shape_str(a->shape) + " vs " +
       shape_str(b->shape));
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor ew_binary(const Tensor& ta, const Tensor& tb, const char* op, Fwd fwd, BwdA bwd_a,
                 BwdB bwd_b) {
  NodePtr a = ta.node(), b = tb.node();
  const Bcast kind = classify(a, b, op);
  const std::int64_t n = a->size();
  const std::int64_t cols = (kind == Bcast::Col) ? a->shape[1] : 1;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t bi = (kind == Bcast::Same) ? i : (kind == Bcast::Scalar ? 0 : i / cols);
    out[static_cast<std::size_t>(i)] = fwd(a->data[static_cast<std::size_t>(i)],
                                           b->data[static_cast<std::size_t>(bi)]);
  }
  return Tensor(make_node(
      a->shape, std::move(out), {a, b}, op,
      [a, b, kind, cols, n, bwd_a, bwd_b](const TensorNode& self) {
        if (a->requires_grad) {
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t bi =
                (kind == Bcast::Same) ? i : (kind == Bcast::Scalar ? 0 : i / cols);
            a->grad[static_cast<std::size_t>(i)] +=
                bwd_a(self.grad[static_cast<std::size_t>(i)],
                      a->data[static_cast<std::size_t>(i)],
                      b->data[static_cast<std::size_t>(bi)]);
          }
        }
        if (b->requires_grad) {
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t bi =
                (kind == Bcast::Same) ? i : (kind == Bcast::Scalar ? 0 : i / cols);
            b->grad[static_cast<std::size_t>(bi)] +=
                bwd_b(self.grad[static_cast<std::size_t>(i)],
                      a->data[static_cast<std::size_t>(i)],
                      b->data[static_cast<std::size_t>(bi)]);
          }
        }
      }));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

// --- unary ops ---------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor ew_unary(const Tensor& tx, const char* op, Fwd fwd, Bwd bwd) {
  NodePtr x = tx.node();
  const std::int64_t n = x->size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = fwd(x->data[static_cast<std::size_t>(i)]);
  return Tensor(make_node(x->shape, std::move(out), {x}, op, [x, n, bwd](const TensorNode& self) {
    for (std::int64_t i = 0; i < n; ++i)
      x->grad[static_cast<std::size_t>(i)] +=
          bwd(self.grad[static_cast<std::size_t>(i)], x->data[static_cast<std::size_t>(i)],
              self.data[static_cast<std::size_t>(i)]);
  }));
}

}  // namespace

Tensor add_scalar(const Tensor& a, double c) {
  return ew_unary(
      a, "add_scalar", [c](double x) { return x + c; },
      [](double g, double, double) { return g; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return ew_unary(
      a, "mul_scalar", [c](double x) { return x * c; },
      [c](double g, double, double) { return g * c; });
}

Tensor scalar_minus(double c, const Tensor& a) {
  return ew_unary(
      a, "scalar_minus", [c](double x) { return c - x; },
      [](double g, double, double) { return -g; });
}

Tensor reciprocal(const Tensor& a) {
  return ew_unary(
      a, "reciprocal", [](double x) { return 1.0 / x; },
      [](double g, double, double y) { return -g * y * y; });
}

Tensor tanh_op(const Tensor& x) {
  return ew_unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double g, double, double y) {
        const double d = 1.0 - y * y;
        return g_tanh_corrupted.load() ? -g * d : g * d;
      });
}

Tensor sigmoid(const Tensor& x) {
  return ew_unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return ew_unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return ew_unary(
      a, "log_clamped", [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double g, double v, double) { return v > floor ? g / v : 0.0; });
}

Tensor clamp01(const Tensor& a) {
  return ew_unary(
      a, "clamp01", [](double v) { return std::clamp(v, 0.0, 1.0); },
      [](double g, double v, double) { return (v > 0.0 && v <= 1.0) ? g : 0.0; });
}

// --- matmul / transpose / reshape -------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  NodePtr a = ta.node(), b = tb.node();
  if (a->shape.size() != 2 || b->shape.size() != 2)
    fail("matmul expects rank-2 operands, got " + shape_str(a->shape) + " and " +
         shape_str(b->shape));
  const std::int64_t m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
  if (k != k2)
    fail("matmul inner dims differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  gemm_rm(false, false, m, n, k, 1.0, a->data.data(), k, b->data.data(), n, 0.0, out.data(), n);
  return Tensor(make_node(
      {m, n}, std::move(out), {a, b}, "matmul", [a, b, m, n, k](const TensorNode& self) {
        if (a->requires_grad)
          gemm_rm(false, true, m, k, n, 1.0, self.grad.data(), n, b->data.data(), n, 1.0,
                  a->grad.data(), k);
        if (b->requires_grad)
          gemm_rm(true, false, k, n, m, 1.0, a->data.data(), k, self.grad.data(), n, 1.0,
                  b->grad.data(), n);
      }));
}

Tensor transpose(const Tensor& ta) {
  NodePtr a = ta.node();
  if (a->shape.size() != 2) fail("transpose expects rank 2, got " + shape_str(a->shape));
  const std::int64_t m = a->shape[0], n = a->shape[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j * m + i)] = a->data[static_cast<std::size_t>(i * n + j)];
  return Tensor(
      make_node({n, m}, std::move(out), {a}, "transpose", [a, m, n](const TensorNode& self) {
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j)
            a->grad[static_cast<std::size_t>(i * n + j)] +=
                self.grad[static_cast<std::size_t>(j * m + i)];
      }));
}

Tensor reshape(const Tensor& ta, const std::vector<std::int64_t>& shape) {
  NodePtr a = ta.node();
  const auto n = shape_numel(shape);
  if (n != a->size())
    fail("reshape " + shape_str(a->shape) + " -> " + shape_str(shape) + " changes size");
  return Tensor(make_node(shape, a->data, {a}, "reshape", [a](const TensorNode& self) {
    accum_into(a, self.grad.data(), self.size());
  }));
}

Tensor as_col(const Tensor& v) {
  if (v.rank() != 1) fail("as_col expects rank 1, got " + shape_str(v.shape()));
  return reshape(v, {v.dim(0), 1});
}

Tensor as_row(const Tensor& v) {
  if (v.rank() != 1) fail("as_row expects rank 1, got " + shape_str(v.shape()));
  return reshape(v, {1, v.dim(0)});
}

// --- softmax ----------------------------------------------------------------

Tensor softmax_sharp(const Tensor& tl, double beta, const std::vector<std::uint8_t>& mask) {
  NodePtr x = tl.node();
  if (x->shape.size() != 1) fail("softmax_sharp expects rank 1, got " + shape_str(x->shape));
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("softmax_sharp requires finite beta > 0");
  const std::int64_t n = x->size();
  if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != n)
    fail("softmax_sharp mask length mismatch");
  auto live = [&mask](std::int64_t i) {
    return mask.empty() || mask[static_cast<std::size_t>(i)] != 0;
  };
  double mx = -std::numeric_limits<double>::infinity();
  std::int64_t live_count = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!live(i)) continue;
    ++live_count;
    mx = std::max(mx, x->data[static_cast<std::size_t>(i)]);
  }
  if (live_count == 0) throw std::runtime_error("softmax_sharp: all positions masked");
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!live(i)) continue;
    const double e = std::exp(beta * (x->data[static_cast<std::size_t>(i)] - mx));
    out[static_cast<std::size_t>(i)] = e;
    sum += e;
  }
  for (auto& v : out) v /= sum;
  std::vector<std::uint8_t> mask_copy = mask;
  return Tensor(make_node(
      x->shape, std::move(out), {x}, "softmax_sharp",
      [x, beta, n, mask_copy = std::move(mask_copy)](const TensorNode& self) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
          dot += self.grad[static_cast<std::size_t>(i)] * self.data[static_cast<std::size_t>(i)];
        for (std::int64_t i = 0; i < n; ++i) {
          if (!mask_copy.empty() && mask_copy[static_cast<std::size_t>(i)] == 0) continue;
          const double y = self.data[static_cast<std::size_t>(i)];
          x->grad[static_cast<std::size_t>(i)] +=
              beta * y * (self.grad[static_cast<std::size_t>(i)] - dot);
        }
      }));
}

// --- concat / slice / take_rows ----------------------------------------------

namespace {

// Views shape as [outer, shape[axis], inner].
void axis_split(const std::vector<std::int64_t>& shape, int axis, std::int64_t& outer,
                std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i)
    inner *= shape[static_cast<std::size_t>(i)];
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) fail("concat of zero tensors");
  const auto& s0 = parts[0].shape();
  const int r = parts[0].rank();
  if (axis < 0 || axis >= r) fail("concat axis out of range");
  std::int64_t axis_total = 0;
  for (const auto& t : parts) {
    if (t.rank() != r) fail("concat rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && t.shape()[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
        fail("concat side dims differ: " + shape_str(s0) + " vs " + shape_str(t.shape()));
    axis_total += t.dim(axis);
  }
  std::vector<std::int64_t> out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  std::int64_t outer, inner;
  axis_split(out_shape, axis, outer, inner);

  std::vector<double> out(static_cast<std::size_t>(outer * axis_total * inner));
  std::vector<NodePtr> parents;
  std::vector<std::int64_t> axis_dims;
  parents.reserve(parts.size());
  for (const auto& t : parts) {
    parents.push_back(t.node());
    axis_dims.push_back(t.dim(axis));
  }
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parents.size(); ++p) {
    const auto& src = parents[p]->data;
    const std::int64_t ad = axis_dims[p];
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * axis_total + offset) * inner, src.data() + o * ad * inner,
                  static_cast<std::size_t>(ad * inner) * sizeof(double));
    offset += ad;
  }
  return Tensor(make_node(
      out_shape, std::move(out), parents, "concat",
      [parents, axis_dims, outer, inner, axis_total](const TensorNode& self) {
        std::int64_t off = 0;
        for (std::size_t p = 0; p < parents.size(); ++p) {
          const std::int64_t ad = axis_dims[p];
          if (parents[p]->requires_grad) {
            for (std::int64_t o = 0; o < outer; ++o) {
              const double* g = self.grad.data() + (o * axis_total + off) * inner;
              double* dst = parents[p]->grad.data() + o * ad * inner;
              for (std::int64_t i = 0; i < ad * inner; ++i) dst[i] += g[i];
            }
          }
          off += ad;
        }
      }));
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v.data(), v.size()), axis);
}

Tensor slice(const Tensor& ta, int axis, std::int64_t start, std::int64_t len) {
  NodePtr a = ta.node();
  const int r = static_cast<int>(a->shape.size());
  if (axis < 0 || axis >= r) fail("slice axis out of range");
  const std::int64_t ad = a->shape[static_cast<std::size_t>(axis)];
  if (start < 0 || len < 1 || start + len > ad)
    fail("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
         ") out of range for axis size " + std::to_string(ad));
  std::vector<std::int64_t> out_shape = a->shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer, inner;
  axis_split(a->shape, axis, outer, inner);
  std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, a->data.data() + (o * ad + start) * inner,
                static_cast<std::size_t>(len * inner) * sizeof(double));
  return Tensor(make_node(out_shape, std::move(out), {a}, "slice",
                          [a, outer, inner, ad, start, len](const TensorNode& self) {
                            for (std::int64_t o = 0; o < outer; ++o) {
                              const double* g = self.grad.data() + o * len * inner;
                              double* dst = a->grad.data() + (o * ad + start) * inner;
                              for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
                            }
                          }));
}

Tensor take_rows(const Tensor& ta, const std::vector<std::int64_t>& rows) {
  NodePtr a = ta.node();
  if (a->shape.size() != 2) fail("take_rows expects rank 2, got " + shape_str(a->shape));
  if (rows.empty()) fail("take_rows with no indices");
  const std::int64_t v = a->shape[0], d = a->shape[1];
  for (auto r : rows)
    if (r < 0 || r >= v) fail("take_rows index " + std::to_string(r) + " out of range");
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * d, a->data.data() + rows[static_cast<std::size_t>(i)] * d,
                static_cast<std::size_t>(d) * sizeof(double));
  return Tensor(
      make_node({n, d}, std::move(out), {a}, "take_rows", [a, rows, d](const TensorNode& self) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
          double* dst = a->grad.data() + rows[i] * d;
          for (std::int64_t c = 0; c < d; ++c) dst[c] += g[c];
        }
      }));
}

// --- conv1d -------------------------------------------------------------------

namespace {

// Unfolds x[len,din] into u[len, k*din] with zero padding (left-heavy for even k).
void im2col(const double* x, std::int64_t len, std::int64_t din, std::int64_t k,
            std::int64_t left, std::vector<double>& u) {
  u.assign(static_cast<std::size_t>(len * k * din), 0.0);
  for (std::int64_t t = 0; t < len; ++t)
    for (std::int64_t j = 0; j < k; ++j) {
      const std::int64_t src = t + j - left;
      if (src < 0 || src >= len) continue;
      std::memcpy(u.data() + (t * k + j) * din, x + src * din,
                  static_cast<std::size_t>(din) * sizeof(double));
    }
}

}  // namespace

Tensor conv1d_same(const Tensor& tx, const Tensor& tk, const Tensor& tb) {
  NodePtr x = tx.node(), kn = tk.node(), b = tb.node();
  if (x->shape.size() != 2) fail("conv1d_same input must be [len,d_in], got " + shape_str(x->shape));
  if (kn->shape.size() != 3)
    fail("conv1d_same kernel must be [k,d_in,d_out], got " + shape_str(kn->shape));
  const std::int64_t len = x->shape[0], din = x->shape[1];
  const std::int64_t k = kn->shape[0], kdin = kn->shape[1], dout = kn->shape[2];
  if (kdin != din)
    fail("conv1d_same channel mismatch: input " + shape_str(x->shape) + " kernel " +
         shape_str(kn->shape));
  if (b->shape != std::vector<std::int64_t>{dout})
    fail("conv1d_same bias must be [d_out], got " + shape_str(b->shape));
  if (k > 2 * len + 1)
    fail("conv1d_same kernel size " + std::to_string(k) + " exceeds 2*len+1 for len " +
         std::to_string(len));
  const std::int64_t left = k / 2;  // even k: one extra zero on the left

  std::vector<double> u;
  im2col(x->data.data(), len, din, k, left, u);
  std::vector<double> out(static_cast<std::size_t>(len * dout));
  for (std::int64_t t = 0; t < len; ++t)
    std::memcpy(out.data() + t * dout, b->data.data(),
                static_cast<std::size_t>(dout) * sizeof(double));
  gemm_rm(false, false, len, dout, k * din, 1.0, u.data(), k * din, kn->data.data(), dout, 1.0,
          out.data(), dout);

  return Tensor(make_node(
      {len, dout}, std::move(out), {x, kn, b}, "conv1d_same",
      [x, kn, b, len, din, k, dout, left](const TensorNode& self) {
        const double* gy = self.grad.data();
        if (b->requires_grad) {
          for (std::int64_t t = 0; t < len; ++t)
            for (std::int64_t c = 0; c < dout; ++c) b->grad[static_cast<std::size_t>(c)] +=
                gy[t * dout + c];
        }
        if (kn->requires_grad || x->requires_grad) {
          std::vector<double> u;
          im2col(x->data.data(), len, din, k, left, u);
          if (kn->requires_grad)
            gemm_rm(true, false, k * din, dout, len, 1.0, u.data(), k * din, gy, dout, 1.0,
                    kn->grad.data(), dout);
          if (x->requires_grad) {
            std::vector<double> du(static_cast<std::size_t>(len * k * din), 0.0);
            gemm_rm(false, true, len, k * din, dout, 1.0, gy, dout, kn->data.data(), dout, 0.0,
                    du.data(), k * din);
            for (std::int64_t t = 0; t < len; ++t)
              for (std::int64_t j = 0; j < k; ++j) {
                const std::int64_t src = t + j - left;
                if (src < 0 || src >= len) continue;
                const double* g = du.data() + (t * k + j) * din;
                double* dst = x->grad.data() + src * din;
                for (std::int64_t c = 0; c < din; ++c) dst[c] += g[c];
              }
          }
        }
      }));
}

// --- pooling -----------------------------------------------------------------

namespace {

void check_pool_args(const NodePtr& x, const std::vector<std::uint8_t>& mask) {
  if (x->shape.size() != 2) fail("pool expects [len,d], got " + shape_str(x->shape));
  if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != x->shape[0])
    fail("pool mask length mismatch");
}

bool row_live(const std::vector<std::uint8_t>& mask, std::int64_t t) {
  return mask.empty() || mask[static_cast<std::size_t>(t)] != 0;
}

}  // namespace

Tensor pool_max(const Tensor& tx, const std::vector<std::uint8_t>& mask) {
  NodePtr x = tx.node();
  check_pool_args(x, mask);
  const std::int64_t len = x->shape[0], d = x->shape[1];
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<std::int64_t> arg(static_cast<std::size_t>(d), -1);
  for (std::int64_t c = 0; c < d; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t t = 0; t < len; ++t) {
      if (!row_live(mask, t)) continue;
      const double v = x->data[static_cast<std::size_t>(t * d + c)];
      if (v > best) {
        best = v;
        arg[static_cast<std::size_t>(c)] = t;
      }
    }
    if (arg[static_cast<std::size_t>(c)] < 0)
      throw std::runtime_error("pool_max: all rows masked");
    out[static_cast<std::size_t>(c)] = best;
  }
  return Tensor(make_node({d}, std::move(out), {x}, "pool_max",
                          [x, d, arg = std::move(arg)](const TensorNode& self) {
                            for (std::int64_t c = 0; c < d; ++c)
                              x->grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(c)] *
                                                               d + c)] +=
                                  self.grad[static_cast<std::size_t>(c)];
                          }));
}

Tensor pool_avg(const Tensor& tx, const std::vector<std::uint8_t>& mask) {
  NodePtr x = tx.node();
  check_pool_args(x, mask);
  const std::int64_t len = x->shape[0], d = x->shape[1];
  std::int64_t cnt = 0;
  for (std::int64_t t = 0; t < len; ++t) cnt += row_live(mask, t) ? 1 : 0;
  if (cnt == 0) throw std::runtime_error("pool_avg: all rows masked");
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t t = 0; t < len; ++t) {
    if (!row_live(mask, t)) continue;
    for (std::int64_t c = 0; c < d; ++c)
      out[static_cast<std::size_t>(c)] += x->data[static_cast<std::size_t>(t * d + c)];
  }
  const double inv = 1.0 / static_cast<double>(cnt);
  for (auto& v : out) v *= inv;
  std::vector<std::uint8_t> mask_copy = mask;
  return Tensor(make_node({d}, std::move(out), {x}, "pool_avg",
                          [x, len, d, inv, mask_copy = std::move(mask_copy)](
                              const TensorNode& self) {
                            for (std::int64_t t = 0; t < len; ++t) {
                              if (!row_live(mask_copy, t)) continue;
                              for (std::int64_t c = 0; c < d; ++c)
                                x->grad[static_cast<std::size_t>(t * d + c)] +=
                                    inv * self.grad[static_cast<std::size_t>(c)];
                            }
                          }));
}

// --- reductions ----------------------------------------------------------------

Tensor sum_all(const Tensor& ta) {
  NodePtr a = ta.node();
  double s = 0.0;
  for (double v : a->data) s += v;
  return Tensor(make_node({1}, {s}, {a}, "sum_all", [a](const TensorNode& self) {
    const double g = self.grad[0];
    for (auto& v : a->grad) v += g;
  }));
}

// --- grad_check -----------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  std::vector<double> base(x.data().begin(), x.data().end());
  Tensor probe = Tensor::values(x.shape(), base, true);
  Tensor loss = f(probe);
  if (loss.size() != 1) fail("grad_check: f must produce a scalar");
  backward(loss);
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> d = base;
    d[i] = base[i] + eps;
    const double fp = f(Tensor::values(x.shape(), d, false)).item();
    d[i] = base[i] - eps;
    const double fm = f(Tensor::values(x.shape(), d, false)).item();
    const double cd = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - cd) / denom);
  }
  return worst;
}

}  // namespace rereadnet
