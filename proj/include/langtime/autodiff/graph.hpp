#ifndef LANGTIME_AUTODIFF_GRAPH_HPP_
#define LANGTIME_AUTODIFF_GRAPH_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "langtime/autodiff/tensor.hpp"

namespace langtime::ad {

// Floor applied to the inputs of Log and Reciprocal: |x| < kNumericFloor is
// clamped to +-kNumericFloor (x == 0 goes to the positive side).
inline constexpr double kNumericFloor = 1e-8;

enum class Op {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kShift,
  kTanh,
  kGelu,
  kExp,
  kLog,
  kReciprocal,
  kSquare,
  kAbs,
  kClampMin,
  kClip,
  kMinimum,
  kSoftmax,
  kLayerNorm,
  kIndexSelect,
  kConcat,
  kReshape,
  kPermute,
  kExpandLast,
  kSum,
  kMean,
  kMeanLastAxis,
  kHuber,
  kStopGradient,
};

const char* OpName(Op op);

// Handle to a node inside one Graph.
struct Var {
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
  friend bool operator==(Var, Var) = default;
};

class GraphError : public std::runtime_error {
 public:
  GraphError(std::size_t node, Op op, const std::string& what);
  std::size_t node() const { return node_; }
  Op op() const { return op_; }

 private:
  std::size_t node_;
  Op op_;
};

// Raised when a forward evaluation produces NaN or Inf.
class NonFiniteError : public GraphError {
 public:
  using GraphError::GraphError;
};

class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes);

  // Gradient with respect to `v`; exact zeros when the loss does not depend
  // on `v`.
  Tensor operator[](Var v) const;
  // False when no gradient flowed into `v` at all.
  bool Reached(Var v) const;

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

// Reverse-mode automatic differentiation over dense tensors.
//
// Nodes are appended in topological order and evaluated as they are added, so
// model code can inspect shapes and values while building. Evaluate() replays
// the whole graph against rebound inputs, which is what the finite-difference
// checker relies on.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Differentiable leaf. Named leaves can be rebound in Evaluate().
  Var Input(std::string name, Tensor value);
  // Leaf excluded from differentiation.
  Var Constant(Tensor value);

  // a[..., K] x b[K, N] -> [..., N], or batched a[B, M, K] x b[B, K, N].
  // With transpose_b the last two axes of b are swapped.
  Var MatMul(Var a, Var b, bool transpose_b = false);

  // Elementwise with b broadcast when its shape is a suffix of a's shape or b
  // holds a single element.
  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  Var Mul(Var a, Var b);

  Var Scale(Var a, double factor);
  Var Shift(Var a, double offset);

  Var Tanh(Var a);
  Var Gelu(Var a);
  Var Exp(Var a);
  Var Log(Var a);
  Var Reciprocal(Var a);
  Var Square(Var a);
  Var Abs(Var a);
  Var ClampMin(Var a, double lo);
  Var Clip(Var a, double lo, double hi);
  Var Minimum(Var a, Var b);

  // Softmax over the last axis. With causal set, the last two axes are a
  // square [query, key] block and keys after the query get probability 0.
  Var Softmax(Var a, bool causal = false);
  Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);

  Var IndexSelect(Var a, std::int64_t axis, std::vector<std::int64_t> indices);
  Var Concat(const std::vector<Var>& parts, std::int64_t axis);
  Var Reshape(Var a, Shape shape);
  Var Permute(Var a, std::vector<std::int64_t> perm);
  // [...] -> [..., n] by repeating each element n times.
  Var ExpandLast(Var a, std::int64_t n);

  Var Sum(Var a);
  Var Mean(Var a);
  // [..., D] -> [...]; a rank-1 input reduces to shape [1].
  Var MeanLastAxis(Var a);

  // Elementwise Huber penalty of residuals.
  Var Huber(Var residual, double delta);
  Var StopGradient(Var a);

  void Name(Var v, std::string name);
  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  Op op(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Differentiable leaves in creation order.
  std::vector<Var> Leaves() const;
  void SetLeafValue(Var leaf, Tensor value);

  // Rebinds the named inputs, re-runs every node, and returns the value of
  // every named node.
  std::map<std::string, Tensor> Evaluate(
      const std::map<std::string, Tensor>& inputs = {});

  // Requires a single-element loss node.
  Gradients Backpropagate(Var loss) const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> parents;
    Tensor value;
    bool requires_grad = false;
    std::string name;
    double p0 = 0.0;
    double p1 = 0.0;
    std::vector<std::int64_t> ints;
    Shape shape;
    std::vector<double> cache;
  };

  Var Push(Node node);
  const Node& node(Var v) const;
  void Forward(std::size_t index);
  void BackwardNode(std::size_t index, std::vector<Tensor>& grads) const;
  [[noreturn]] void Fail(std::size_t index, const std::string& what) const;

  std::vector<Node> nodes_;
};

}  // namespace langtime::ad

#endif  // LANGTIME_AUTODIFF_GRAPH_HPP_
