#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "vitals/tensor.hpp"

namespace vitals {

enum class OpKind {
  kLeaf,
  kAdd,
  kAddBias,
  kMul,
  kScale,
  kSum,
  kMatMul,
  kDilatedConv1d,
  kRelu,
  kDropout,
  kSoftmaxRows,
  kConcatCols,
  kChunkedAttention,
  kCrossEntropy,
  kSmoothingLoss,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Records a computation as it is evaluated. Nodes are appended in evaluation
// order, so node ids are a topological order; backward() walks them once in
// reverse. A tape is owned by a single training context.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Tensor<T> value, bool requires_grad = false);

  // Appends an op node. The backward closure is dropped when no input needs
  // a gradient.
  Var record(OpKind kind, Tensor<T> value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(OpKind kind, Tensor<T> value, std::vector<Var> inputs,
             BackwardFn backward);

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }
  const std::vector<Var>& inputs(Var v) const { return node(v).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() call. Zero-filled for nodes the sweep
  // did not reach; throws for nodes that do not require a gradient.
  const Tensor<T>& grad(Var v) const;

  // Adds `delta` into the gradient slot of `v`; no-op when `v` does not
  // require a gradient. Used by backward closures.
  void accumulate(Var v, std::span<const T> delta);
  Tensor<T>& grad_slot(Var v);

  // Reverse sweep from a scalar node.
  void backward(Var loss);

  // Test fixture: scales the upstream gradient handed to every `kind` node
  // during backward, which corrupts that op's input gradients.
  void corrupt_backward(OpKind kind, T factor) { corruption_ = {kind, factor}; }

 private:
  struct Node {
    OpKind kind;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  std::optional<std::pair<OpKind, T>> corruption_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace vitals
