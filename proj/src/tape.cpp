#include "vitals/tape.hpp"

#include <array>
#include <string>

namespace vitals {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 15> kOpNames{{
    {OpKind::kLeaf, "leaf"},
    {OpKind::kAdd, "add"},
    {OpKind::kAddBias, "add_bias"},
    {OpKind::kMul, "mul"},
    {OpKind::kScale, "scale"},
    {OpKind::kSum, "sum"},
    {OpKind::kMatMul, "matmul"},
    {OpKind::kDilatedConv1d, "dilated_conv1d"},
    {OpKind::kRelu, "relu"},
    {OpKind::kDropout, "dropout"},
    {OpKind::kSoftmaxRows, "softmax_rows"},
    {OpKind::kConcatCols, "concat_cols"},
    {OpKind::kChunkedAttention, "chunked_attention"},
    {OpKind::kCrossEntropy, "cross_entropy"},
    {OpKind::kSmoothingLoss, "smoothing_loss"},
}};

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ContractError("variable " + std::to_string(v.id) +
                        " does not belong to this tape");
  }
  return nodes_[v.id];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  return const_cast<Node&>(std::as_const(*this).node(v));
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::kLeaf, std::move(value), {}, requires_grad, {}, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(OpKind kind, Tensor<T> value,
                    std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(kind, std::move(value), std::vector<Var>(inputs),
                std::move(backward));
}

template <typename T>
Var Tape<T>::record(OpKind kind, Tensor<T> value, std::vector<Var> inputs,
                    BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  Node n{kind, std::move(value), {}, needs, std::move(inputs), {}};
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) {
    throw ContractError("node " + std::to_string(v.id) +
                        " does not require a gradient");
  }
  return n.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, std::span<const T> delta) {
  if (!node(v).requires_grad) return;
  Tensor<T>& g = grad_slot(v);
  if (delta.size() != g.numel()) {
    throw ShapeError("gradient of length " + std::to_string(delta.size()) +
                     " for node of shape " + shape_str(g.shape()));
  }
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(root.value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor<T>(n.value.shape());
  }
  if (!root.requires_grad) return;
  nodes_[loss.id].grad[0] = T{1};

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    if (corruption_ && corruption_->first == n.kind) {
      Tensor<T> scaled = n.grad;
      for (T& g : scaled.data()) g *= corruption_->second;
      n.backward(*this, scaled);
    } else {
      n.backward(*this, n.grad);
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace vitals
