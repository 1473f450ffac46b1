#include "langtime/autodiff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace langtime::ad {

const char* OpName(Op op) {
  switch (op) {
    case Op::kLeaf: return "input";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kShift: return "shift";
    case Op::kTanh: return "tanh";
    case Op::kGelu: return "gelu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kReciprocal: return "reciprocal";
    case Op::kSquare: return "square";
    case Op::kAbs: return "abs";
    case Op::kClampMin: return "clamp_min";
    case Op::kClip: return "clip";
    case Op::kMinimum: return "minimum";
    case Op::kSoftmax: return "softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kIndexSelect: return "index_select";
    case Op::kConcat: return "concat";
    case Op::kReshape: return "reshape";
    case Op::kPermute: return "permute";
    case Op::kExpandLast: return "expand_last";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMeanLastAxis: return "mean_last_axis";
    case Op::kHuber: return "huber";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

GraphError::GraphError(std::size_t node, Op op, const std::string& what)
    : std::runtime_error("node " + std::to_string(node) + " (" + OpName(op) +
                         "): " + what),
      node_(node),
      op_(op) {}

Gradients::Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
    : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

Tensor Gradients::operator[](Var v) const {
  if (v.id >= grads_.size()) throw std::out_of_range("gradient for unknown node");
  if (grads_[v.id].size() == 0) return Tensor(shapes_[v.id]);
  return grads_[v.id];
}

bool Gradients::Reached(Var v) const {
  if (v.id >= grads_.size()) throw std::out_of_range("gradient for unknown node");
  return grads_[v.id].size() != 0;
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

// c[m, n] += a[m, k] * b[k, n]
void GemmNN(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double s = ai[p];
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// c[m, n] += a[m, k] * b[n, k]^T
void GemmNT(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  std::vector<double> bt(static_cast<std::size_t>(k * n));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  GemmNN(a, bt.data(), c, m, k, n);
}

// c[k, n] += a[m, k]^T * b[m, n]
void GemmTN(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double s = ai[p];
      double* cp = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) cp[j] += s * bi[j];
    }
  }
}

bool Broadcastable(const Shape& a, const Shape& b) {
  if (NumElements(b) == 1) return true;
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

// Splits a shape around `axis` into (outer, dim, inner).
struct AxisView {
  std::int64_t outer = 1;
  std::int64_t dim = 1;
  std::int64_t inner = 1;
};

AxisView ViewAround(const Shape& shape, std::int64_t axis) {
  AxisView v;
  for (std::int64_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

std::vector<std::int64_t> Strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * shape[i + 1];
  }
  return s;
}

// Walks the permuted layout `out_shape` of a tensor whose natural layout is
// `in_shape`. Forward: dst[flat] = src[offset]. Inverse: dst[offset] += src[flat].
void PermuteCopy(std::span<const double> src, const Shape& in_shape,
                 const std::vector<std::int64_t>& perm, const Shape& out_shape,
                 std::span<double> dst, bool inverse) {
  const auto in_strides = Strides(in_shape);
  const std::size_t r = perm.size();
  // Stride in the input for each output axis.
  std::vector<std::int64_t> step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = in_strides[perm[i]];
  std::vector<std::int64_t> idx(r, 0);
  const std::size_t n = src.size();
  std::int64_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    if (inverse) {
      dst[offset] += src[flat];
    } else {
      dst[flat] = src[offset];
    }
    for (std::int64_t ax = static_cast<std::int64_t>(r) - 1; ax >= 0; --ax) {
      if (++idx[ax] < out_shape[ax]) {
        offset += step[ax];
        break;
      }
      offset -= step[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
}

}  // namespace

void Graph::Fail(std::size_t index, const std::string& what) const {
  const Op op = index < nodes_.size() ? nodes_[index].op : Op::kLeaf;
  throw GraphError(index, op, what);
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw std::out_of_range("invalid graph variable " + std::to_string(v.id));
  }
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
Op Graph::op(Var v) const { return node(v).op; }

void Graph::Name(Var v, std::string name) {
  node(v);
  nodes_[v.id].name = std::move(name);
}

Var Graph::Push(Node n) {
  n.requires_grad = false;
  if (n.op == Op::kLeaf) {
    n.requires_grad = true;
  } else if (n.op != Op::kConstant && n.op != Op::kStopGradient) {
    for (auto p : n.parents) n.requires_grad |= nodes_[p].requires_grad;
  }
  nodes_.push_back(std::move(n));
  const std::size_t index = nodes_.size() - 1;
  try {
    Forward(index);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{index};
}

Var Graph::Input(std::string name, Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.name = std::move(name);
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Graph::Constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return Push(std::move(n));
}

namespace {

template <typename NodeT>
NodeT MakeNode(Op op, std::initializer_list<Var> parents) {
  NodeT n;
  n.op = op;
  for (Var p : parents) n.parents.push_back(p.id);
  return n;
}

}  // namespace

#define LT_CHECK_PARENTS(...)                                 \
  for (Var v_ : {__VA_ARGS__}) node(v_)

Var Graph::MatMul(Var a, Var b, bool transpose_b) {
  LT_CHECK_PARENTS(a, b);
  auto n = MakeNode<Node>(Op::kMatMul, {a, b});
  n.ints = {transpose_b ? 1 : 0};
  return Push(std::move(n));
}

Var Graph::Add(Var a, Var b) {
  LT_CHECK_PARENTS(a, b);
  return Push(MakeNode<Node>(Op::kAdd, {a, b}));
}

Var Graph::Sub(Var a, Var b) {
  LT_CHECK_PARENTS(a, b);
  return Push(MakeNode<Node>(Op::kSub, {a, b}));
}

Var Graph::Mul(Var a, Var b) {
  LT_CHECK_PARENTS(a, b);
  return Push(MakeNode<Node>(Op::kMul, {a, b}));
}

Var Graph::Scale(Var a, double factor) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kScale, {a});
  n.p0 = factor;
  return Push(std::move(n));
}

Var Graph::Shift(Var a, double offset) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kShift, {a});
  n.p0 = offset;
  return Push(std::move(n));
}

Var Graph::Tanh(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kTanh, {a}));
}

Var Graph::Gelu(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kGelu, {a}));
}

Var Graph::Exp(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kExp, {a}));
}

Var Graph::Log(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kLog, {a}));
}

Var Graph::Reciprocal(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kReciprocal, {a}));
}

Var Graph::Square(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kSquare, {a}));
}

Var Graph::Abs(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kAbs, {a}));
}

Var Graph::ClampMin(Var a, double lo) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kClampMin, {a});
  n.p0 = lo;
  return Push(std::move(n));
}

Var Graph::Clip(Var a, double lo, double hi) {
  LT_CHECK_PARENTS(a);
  if (!(lo <= hi)) throw std::invalid_argument("clip requires lo <= hi");
  auto n = MakeNode<Node>(Op::kClip, {a});
  n.p0 = lo;
  n.p1 = hi;
  return Push(std::move(n));
}

Var Graph::Minimum(Var a, Var b) {
  LT_CHECK_PARENTS(a, b);
  return Push(MakeNode<Node>(Op::kMinimum, {a, b}));
}

Var Graph::Softmax(Var a, bool causal) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kSoftmax, {a});
  n.ints = {causal ? 1 : 0};
  return Push(std::move(n));
}

Var Graph::LayerNorm(Var x, Var gamma, Var beta, double eps) {
  LT_CHECK_PARENTS(x, gamma, beta);
  auto n = MakeNode<Node>(Op::kLayerNorm, {x, gamma, beta});
  n.p0 = eps;
  return Push(std::move(n));
}

Var Graph::IndexSelect(Var a, std::int64_t axis,
                       std::vector<std::int64_t> indices) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kIndexSelect, {a});
  if (axis < 0) axis += value(a).rank();
  n.p0 = static_cast<double>(axis);
  n.ints = std::move(indices);
  return Push(std::move(n));
}

Var Graph::Concat(const std::vector<Var>& parts, std::int64_t axis) {
  Node n;
  n.op = Op::kConcat;
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  for (Var p : parts) {
    node(p);
    n.parents.push_back(p.id);
  }
  if (axis < 0) axis += value(parts.front()).rank();
  n.p0 = static_cast<double>(axis);
  return Push(std::move(n));
}

Var Graph::Reshape(Var a, Shape shape) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kReshape, {a});
  n.shape = std::move(shape);
  return Push(std::move(n));
}

Var Graph::Permute(Var a, std::vector<std::int64_t> perm) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kPermute, {a});
  n.ints = std::move(perm);
  return Push(std::move(n));
}

Var Graph::ExpandLast(Var a, std::int64_t count) {
  LT_CHECK_PARENTS(a);
  auto n = MakeNode<Node>(Op::kExpandLast, {a});
  n.p0 = static_cast<double>(count);
  return Push(std::move(n));
}

Var Graph::Sum(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kSum, {a}));
}

Var Graph::Mean(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kMean, {a}));
}

Var Graph::MeanLastAxis(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kMeanLastAxis, {a}));
}

Var Graph::Huber(Var residual, double delta) {
  LT_CHECK_PARENTS(residual);
  if (!(delta > 0.0)) throw std::invalid_argument("huber delta must be > 0");
  auto n = MakeNode<Node>(Op::kHuber, {residual});
  n.p0 = delta;
  return Push(std::move(n));
}

Var Graph::StopGradient(Var a) {
  LT_CHECK_PARENTS(a);
  return Push(MakeNode<Node>(Op::kStopGradient, {a}));
}

#undef LT_CHECK_PARENTS

std::vector<Var> Graph::Leaves() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::kLeaf) out.push_back(Var{i});
  }
  return out;
}

void Graph::SetLeafValue(Var leaf, Tensor value) {
  const Node& n = node(leaf);
  if (n.op != Op::kLeaf && n.op != Op::kConstant) {
    Fail(leaf.id, "only leaves can be rebound");
  }
  if (value.shape() != n.value.shape()) {
    Fail(leaf.id, "rebinding changes shape from " +
                      ShapeToString(n.value.shape()) + " to " +
                      ShapeToString(value.shape()));
  }
  nodes_[leaf.id].value = std::move(value);
}

std::map<std::string, Tensor> Graph::Evaluate(
    const std::map<std::string, Tensor>& inputs) {
  std::size_t bound = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op != Op::kLeaf || n.name.empty()) continue;
    auto it = inputs.find(n.name);
    if (it == inputs.end()) continue;
    SetLeafValue(Var{i}, it->second);
    ++bound;
  }
  if (bound < inputs.size()) {
    for (const auto& [name, t] : inputs) {
      bool found = false;
      for (const Node& n : nodes_) found |= (n.op == Op::kLeaf && n.name == name);
      if (!found) throw std::invalid_argument("no input named '" + name + "'");
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::kLeaf && nodes_[i].op != Op::kConstant) Forward(i);
  }
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (!n.name.empty()) out[n.name] = n.value;
  }
  return out;
}

void Graph::Forward(std::size_t index) {
  Node& n = nodes_[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      if (n.value.size() == 0) Fail(index, "leaf without a value");
      break;

    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool tb = n.ints[0] != 0;
      if (b.rank() == 2) {
        const std::int64_t k = a.shape().back();
        const std::int64_t bk = tb ? b.dim(1) : b.dim(0);
        const std::int64_t bn = tb ? b.dim(0) : b.dim(1);
        if (k != bk) {
          Fail(index, "inner dimensions differ: " + ShapeToString(a.shape()) +
                          " x " + ShapeToString(b.shape()));
        }
        Shape out = a.shape();
        out.back() = bn;
        const std::int64_t rows = static_cast<std::int64_t>(a.size()) / k;
        Tensor c(out);
        if (tb) {
          GemmNT(a.data().data(), b.data().data(), c.data().data(), rows, k, bn);
        } else {
          GemmNN(a.data().data(), b.data().data(), c.data().data(), rows, k, bn);
        }
        n.value = std::move(c);
      } else if (b.rank() == 3 && a.rank() == 3) {
        const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
        const std::int64_t bk = tb ? b.dim(2) : b.dim(1);
        const std::int64_t bn = tb ? b.dim(1) : b.dim(2);
        if (b.dim(0) != batch || bk != k) {
          Fail(index, "batched shapes incompatible: " + ShapeToString(a.shape()) +
                          " x " + ShapeToString(b.shape()));
        }
        Tensor c({batch, m, bn});
        for (std::int64_t i = 0; i < batch; ++i) {
          const double* ap = a.data().data() + i * m * k;
          const double* bp = b.data().data() + i * k * bn;
          double* cp = c.data().data() + i * m * bn;
          if (tb) {
            GemmNT(ap, bp, cp, m, k, bn);
          } else {
            GemmNN(ap, bp, cp, m, k, bn);
          }
        }
        n.value = std::move(c);
      } else {
        Fail(index, "unsupported operand ranks " + ShapeToString(a.shape()) +
                        " x " + ShapeToString(b.shape()));
      }
      break;
    }

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!Broadcastable(a.shape(), b.shape())) {
        Fail(index, "cannot broadcast " + ShapeToString(b.shape()) + " onto " +
                        ShapeToString(a.shape()));
      }
      Tensor c(a.shape());
      const std::size_t nb = b.size();
      auto av = a.data();
      auto bv = b.data();
      auto cv = c.data();
      for (std::size_t i = 0; i < av.size(); ++i) {
        const double y = bv[i % nb];
        cv[i] = n.op == Op::kAdd   ? av[i] + y
                : n.op == Op::kSub ? av[i] - y
                                   : av[i] * y;
      }
      n.value = std::move(c);
      break;
    }

    case Op::kMinimum: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) {
        Fail(index, "shape mismatch " + ShapeToString(a.shape()) + " vs " +
                        ShapeToString(b.shape()));
      }
      Tensor c(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) c[i] = std::min(a[i], b[i]);
      n.value = std::move(c);
      break;
    }

    case Op::kScale:
    case Op::kShift:
    case Op::kTanh:
    case Op::kGelu:
    case Op::kExp:
    case Op::kLog:
    case Op::kReciprocal:
    case Op::kSquare:
    case Op::kAbs:
    case Op::kClampMin:
    case Op::kClip:
    case Op::kHuber:
    case Op::kStopGradient: {
      const Tensor& a = in(0);
      Tensor c(a.shape());
      const double p0 = n.p0;
      const double p1 = n.p1;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        double y = x;
        switch (n.op) {
          case Op::kScale: y = x * p0; break;
          case Op::kShift: y = x + p0; break;
          case Op::kTanh: y = std::tanh(x); break;
          case Op::kGelu: y = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); break;
          case Op::kExp: y = std::exp(x); break;
          case Op::kLog: y = std::log(std::max(x, kNumericFloor)); break;
          case Op::kReciprocal:
            y = std::abs(x) < kNumericFloor ? (x < 0.0 ? -1.0 : 1.0) / kNumericFloor : 1.0 / x;
            break;
          case Op::kSquare: y = x * x; break;
          case Op::kAbs: y = std::abs(x); break;
          case Op::kClampMin: y = std::max(x, p0); break;
          case Op::kClip: y = std::clamp(x, p0, p1); break;
          case Op::kHuber: {
            const double r = std::abs(x);
            y = r <= p0 ? 0.5 * x * x : p0 * (r - 0.5 * p0);
            break;
          }
          default: break;
        }
        c[i] = y;
      }
      n.value = std::move(c);
      break;
    }

    case Op::kSoftmax: {
      const Tensor& a = in(0);
      const bool causal = n.ints[0] != 0;
      const std::int64_t cols = a.shape().back();
      std::int64_t block = 1;
      if (causal) {
        if (a.rank() < 2 || a.dim(-2) != cols) {
          Fail(index, "causal softmax needs a square trailing block, got " +
                          ShapeToString(a.shape()));
        }
        block = cols;
      }
      Tensor c(a.shape());
      const std::int64_t rows = static_cast<std::int64_t>(a.size()) / cols;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * cols;
        double* y = c.data().data() + r * cols;
        const std::int64_t valid = causal ? (r % block) + 1 : cols;
        double mx = x[0];
        for (std::int64_t j = 1; j < valid; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < valid; ++j) {
          y[j] = std::exp(x[j] - mx);
          sum += y[j];
        }
        for (std::int64_t j = 0; j < valid; ++j) y[j] /= sum;
      }
      n.value = std::move(c);
      break;
    }

    case Op::kLayerNorm: {
      const Tensor& x = in(0);
      const Tensor& gamma = in(1);
      const Tensor& beta = in(2);
      const std::int64_t d = x.shape().back();
      if (gamma.size() != static_cast<std::size_t>(d) ||
          beta.size() != static_cast<std::size_t>(d)) {
        Fail(index, "gain/bias must have " + std::to_string(d) + " entries");
      }
      const std::int64_t rows = static_cast<std::int64_t>(x.size()) / d;
      Tensor c(x.shape());
      n.cache.assign(static_cast<std::size_t>(rows), 0.0);
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double* yr = c.data().data() + r * d;
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + n.p0);
        n.cache[r] = rstd;
        for (std::int64_t j = 0; j < d; ++j) {
          yr[j] = (xr[j] - mean) * rstd * gamma[j] + beta[j];
        }
      }
      n.value = std::move(c);
      break;
    }

    case Op::kIndexSelect: {
      const Tensor& a = in(0);
      const auto axis = static_cast<std::int64_t>(n.p0);
      if (axis < 0 || axis >= a.rank()) Fail(index, "axis out of range");
      const AxisView v = ViewAround(a.shape(), axis);
      for (auto ix : n.ints) {
        if (ix < 0 || ix >= v.dim) {
          Fail(index, "index " + std::to_string(ix) + " out of range for axis of size " +
                          std::to_string(v.dim));
        }
      }
      if (n.ints.empty()) Fail(index, "empty index list");
      Shape out = a.shape();
      out[axis] = static_cast<std::int64_t>(n.ints.size());
      Tensor c(out);
      const auto sel = static_cast<std::int64_t>(n.ints.size());
      for (std::int64_t o = 0; o < v.outer; ++o) {
        for (std::int64_t s = 0; s < sel; ++s) {
          const double* src = a.data().data() + (o * v.dim + n.ints[s]) * v.inner;
          double* dst = c.data().data() + (o * sel + s) * v.inner;
          std::copy(src, src + v.inner, dst);
        }
      }
      n.value = std::move(c);
      break;
    }

    case Op::kConcat: {
      const auto axis = static_cast<std::int64_t>(n.p0);
      const Tensor& first = in(0);
      if (axis < 0 || axis >= first.rank()) Fail(index, "axis out of range");
      Shape out = first.shape();
      out[axis] = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const Shape& s = in(k).shape();
        if (s.size() != first.shape().size()) Fail(index, "rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
          if (static_cast<std::int64_t>(d) != axis && s[d] != first.shape()[d]) {
            Fail(index, "shape mismatch " + ShapeToString(s) + " vs " +
                            ShapeToString(first.shape()));
          }
        }
        out[axis] += s[axis];
      }
      Tensor c(out);
      const AxisView ov = ViewAround(out, axis);
      std::int64_t at = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const Tensor& p = in(k);
        const AxisView pv = ViewAround(p.shape(), axis);
        for (std::int64_t o = 0; o < pv.outer; ++o) {
          const double* src = p.data().data() + o * pv.dim * pv.inner;
          double* dst = c.data().data() + (o * ov.dim + at) * ov.inner;
          std::copy(src, src + pv.dim * pv.inner, dst);
        }
        at += pv.dim;
      }
      n.value = std::move(c);
      break;
    }

    case Op::kReshape: {
      const Tensor& a = in(0);
      if (NumElements(n.shape) != static_cast<std::int64_t>(a.size())) {
        Fail(index, "cannot reshape " + ShapeToString(a.shape()) + " to " +
                        ShapeToString(n.shape));
      }
      n.value = a.Reshaped(n.shape);
      break;
    }

    case Op::kPermute: {
      const Tensor& a = in(0);
      if (n.ints.size() != a.shape().size()) Fail(index, "permutation rank mismatch");
      std::vector<bool> seen(n.ints.size(), false);
      Shape out(n.ints.size());
      for (std::size_t i = 0; i < n.ints.size(); ++i) {
        const auto p = n.ints[i];
        if (p < 0 || p >= a.rank() || seen[p]) Fail(index, "invalid permutation");
        seen[p] = true;
        out[i] = a.shape()[p];
      }
      Tensor c(out);
      PermuteCopy(a.data(), a.shape(), n.ints, out, c.data(), false);
      n.value = std::move(c);
      break;
    }

    case Op::kExpandLast: {
      const Tensor& a = in(0);
      const auto count = static_cast<std::int64_t>(n.p0);
      if (count <= 0) Fail(index, "expansion count must be positive");
      Shape out = a.shape();
      if (out.size() == 1 && out[0] == 1) {
        out = {count};
      } else {
        out.push_back(count);
      }
      Tensor c(out);
      for (std::size_t i = 0; i < a.size(); ++i) {
        std::fill_n(c.data().data() + i * count, count, a[i]);
      }
      n.value = std::move(c);
      break;
    }

    case Op::kSum:
    case Op::kMean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double x : a.data()) s += x;
      if (n.op == Op::kMean) s /= static_cast<double>(a.size());
      n.value = Tensor::Scalar(s);
      break;
    }

    case Op::kMeanLastAxis: {
      const Tensor& a = in(0);
      const std::int64_t d = a.shape().back();
      Shape out(a.shape().begin(), a.shape().end() - 1);
      if (out.empty()) out = {1};
      Tensor c(out);
      for (std::size_t r = 0; r < c.size(); ++r) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += a[r * d + j];
        c[r] = s / static_cast<double>(d);
      }
      n.value = std::move(c);
      break;
    }
  }

  if (!n.value.AllFinite()) {
    throw NonFiniteError(index, n.op, "produced a non-finite value");
  }
}

void Graph::BackwardNode(std::size_t index, std::vector<Tensor>& grads) const {
  const Node& n = nodes_[index];
  const Tensor& g = grads[index];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
  auto acc = [&](std::size_t k) -> Tensor& {
    Tensor& t = grads[n.parents[k]];
    if (t.size() == 0) t = Tensor(nodes_[n.parents[k]].value.shape());
    return t;
  };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
    case Op::kStopGradient:
      break;

    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool tb = n.ints[0] != 0;
      if (b.rank() == 2) {
        const std::int64_t k = a.shape().back();
        const std::int64_t bn = tb ? b.dim(0) : b.dim(1);
        const std::int64_t rows = static_cast<std::int64_t>(a.size()) / k;
        if (wants(0)) {
          double* da = acc(0).data().data();
          if (tb) {
            GemmNN(g.data().data(), b.data().data(), da, rows, bn, k);
          } else {
            GemmNT(g.data().data(), b.data().data(), da, rows, bn, k);
          }
        }
        if (wants(1)) {
          double* db = acc(1).data().data();
          if (tb) {
            GemmTN(g.data().data(), a.data().data(), db, rows, bn, k);
          } else {
            GemmTN(a.data().data(), g.data().data(), db, rows, k, bn);
          }
        }
      } else {
        const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
        const std::int64_t bn = tb ? b.dim(1) : b.dim(2);
        for (std::int64_t i = 0; i < batch; ++i) {
          const double* ap = a.data().data() + i * m * k;
          const double* bp = b.data().data() + i * k * bn;
          const double* gp = g.data().data() + i * m * bn;
          if (wants(0)) {
            double* da = acc(0).data().data() + i * m * k;
            if (tb) {
              GemmNN(gp, bp, da, m, bn, k);
            } else {
              GemmNT(gp, bp, da, m, bn, k);
            }
          }
          if (wants(1)) {
            double* db = acc(1).data().data() + i * k * bn;
            if (tb) {
              GemmTN(gp, ap, db, m, bn, k);
            } else {
              GemmTN(ap, gp, db, m, k, bn);
            }
          }
        }
      }
      break;
    }

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t nb = b.size();
      if (wants(0)) {
        Tensor& da = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += n.op == Op::kMul ? g[i] * b[i % nb] : g[i];
        }
      }
      if (wants(1)) {
        Tensor& db = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = n.op == Op::kAdd   ? g[i]
                           : n.op == Op::kSub ? -g[i]
                                              : g[i] * a[i];
          db[i % nb] += d;
        }
      }
      break;
    }

    case Op::kMinimum: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      // Ties route the gradient to the first operand.
      if (wants(0)) {
        Tensor& da = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] <= b[i]) da[i] += g[i];
        }
      }
      if (wants(1)) {
        Tensor& db = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(a[i] <= b[i])) db[i] += g[i];
        }
      }
      break;
    }

    case Op::kScale:
    case Op::kShift:
    case Op::kTanh:
    case Op::kGelu:
    case Op::kExp:
    case Op::kLog:
    case Op::kReciprocal:
    case Op::kSquare:
    case Op::kAbs:
    case Op::kClampMin:
    case Op::kClip:
    case Op::kHuber: {
      if (!wants(0)) break;
      const Tensor& a = in(0);
      const Tensor& y = n.value;
      Tensor& da = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a[i];
        double d = 0.0;
        switch (n.op) {
          case Op::kScale: d = n.p0; break;
          case Op::kShift: d = 1.0; break;
          case Op::kTanh: d = 1.0 - y[i] * y[i]; break;
          case Op::kGelu: {
            const double u = kGeluC * (x + 0.044715 * x * x * x);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
            d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            break;
          }
          case Op::kExp: d = y[i]; break;
          case Op::kLog: d = x < kNumericFloor ? 0.0 : 1.0 / x; break;
          case Op::kReciprocal: d = std::abs(x) < kNumericFloor ? 0.0 : -y[i] * y[i]; break;
          case Op::kSquare: d = 2.0 * x; break;
          case Op::kAbs: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
          case Op::kClampMin: d = x < n.p0 ? 0.0 : 1.0; break;
          case Op::kClip: d = (x < n.p0 || x > n.p1) ? 0.0 : 1.0; break;
          case Op::kHuber:
            d = std::abs(x) <= n.p0 ? x : (x > 0.0 ? n.p0 : -n.p0);
            break;
          default: break;
        }
        da[i] += g[i] * d;
      }
      break;
    }

    case Op::kSoftmax: {
      if (!wants(0)) break;
      const Tensor& y = n.value;
      const bool causal = n.ints[0] != 0;
      const std::int64_t cols = y.shape().back();
      const std::int64_t rows = static_cast<std::int64_t>(y.size()) / cols;
      Tensor& da = acc(0);
      for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t valid = causal ? (r % cols) + 1 : cols;
        const double* yr = y.data().data() + r * cols;
        const double* gr = g.data().data() + r * cols;
        double* dr = da.data().data() + r * cols;
        double dot = 0.0;
        for (std::int64_t j = 0; j < valid; ++j) dot += gr[j] * yr[j];
        for (std::int64_t j = 0; j < valid; ++j) dr[j] += yr[j] * (gr[j] - dot);
      }
      break;
    }

    case Op::kLayerNorm: {
      const Tensor& x = in(0);
      const Tensor& gamma = in(1);
      const std::int64_t d = x.shape().back();
      const std::int64_t rows = static_cast<std::int64_t>(x.size()) / d;
      std::vector<double> xhat(static_cast<std::size_t>(d));
      std::vector<double> dxhat(static_cast<std::size_t>(d));
      Tensor* dx = wants(0) ? &acc(0) : nullptr;
      Tensor* dgamma = wants(1) ? &acc(1) : nullptr;
      Tensor* dbeta = wants(2) ? &acc(2) : nullptr;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        const double* gr = g.data().data() + r * d;
        const double rstd = n.cache[r];
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          xhat[j] = (xr[j] - mean) * rstd;
          dxhat[j] = gr[j] * gamma[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * xhat[j];
          if (dgamma) (*dgamma)[j] += gr[j] * xhat[j];
          if (dbeta) (*dbeta)[j] += gr[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        if (dx) {
          double* dxr = dx->data().data() + r * d;
          for (std::int64_t j = 0; j < d; ++j) {
            dxr[j] += rstd * (dxhat[j] - m1 - xhat[j] * m2);
          }
        }
      }
      break;
    }

    case Op::kIndexSelect: {
      if (!wants(0)) break;
      const Tensor& a = in(0);
      const auto axis = static_cast<std::int64_t>(n.p0);
      const AxisView v = ViewAround(a.shape(), axis);
      const auto sel = static_cast<std::int64_t>(n.ints.size());
      Tensor& da = acc(0);
      for (std::int64_t o = 0; o < v.outer; ++o) {
        for (std::int64_t s = 0; s < sel; ++s) {
          double* dst = da.data().data() + (o * v.dim + n.ints[s]) * v.inner;
          const double* src = g.data().data() + (o * sel + s) * v.inner;
          for (std::int64_t j = 0; j < v.inner; ++j) dst[j] += src[j];
        }
      }
      break;
    }

    case Op::kConcat: {
      const auto axis = static_cast<std::int64_t>(n.p0);
      const AxisView ov = ViewAround(n.value.shape(), axis);
      std::int64_t at = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const AxisView pv = ViewAround(in(k).shape(), axis);
        if (wants(k)) {
          Tensor& dp = acc(k);
          for (std::int64_t o = 0; o < pv.outer; ++o) {
            const double* src = g.data().data() + (o * ov.dim + at) * ov.inner;
            double* dst = dp.data().data() + o * pv.dim * pv.inner;
            for (std::int64_t j = 0; j < pv.dim * pv.inner; ++j) dst[j] += src[j];
          }
        }
        at += pv.dim;
      }
      break;
    }

    case Op::kReshape: {
      if (!wants(0)) break;
      Tensor& da = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      break;
    }

    case Op::kPermute: {
      if (!wants(0)) break;
      PermuteCopy(g.data(), in(0).shape(), n.ints, n.value.shape(),
                  acc(0).data(), true);
      break;
    }

    case Op::kExpandLast: {
      if (!wants(0)) break;
      const auto count = static_cast<std::int64_t>(n.p0);
      Tensor& da = acc(0);
      for (std::size_t i = 0; i < da.size(); ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < count; ++j) s += g[i * count + j];
        da[i] += s;
      }
      break;
    }

    case Op::kSum:
    case Op::kMean: {
      if (!wants(0)) break;
      Tensor& da = acc(0);
      const double s = n.op == Op::kMean ? g[0] / static_cast<double>(da.size()) : g[0];
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += s;
      break;
    }

    case Op::kMeanLastAxis: {
      if (!wants(0)) break;
      Tensor& da = acc(0);
      const std::int64_t d = in(0).shape().back();
      for (std::size_t i = 0; i < da.size(); ++i) {
        da[i] += g[i / d] / static_cast<double>(d);
      }
      break;
    }
  }
}

Gradients Graph::Backpropagate(Var loss) const {
  const Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw GraphError(loss.id, ln.op,
                     "loss must be a single element, got shape " +
                         ShapeToString(ln.value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = nodes_[i].value.shape();
  if (ln.requires_grad) {
    grads[loss.id] = Tensor(ln.value.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (grads[i].size() == 0 || !nodes_[i].requires_grad) continue;
      BackwardNode(i, grads);
      if (nodes_[i].op != Op::kLeaf) grads[i] = Tensor();
    }
  }
  return Gradients(std::move(grads), std::move(shapes));
}

}  // namespace langtime::ad
