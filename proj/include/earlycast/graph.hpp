#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "earlycast/tensor.hpp"

namespace earlycast {

using NodeId = std::size_t;

enum class OpKind {
  kConstant,
  kParameter,
  kMatMul,
  kAdd,
  kMul,
  kSigmoid,
  kTanh,
  kRelu,
  kConcat,
  kSliceCols,
  kTimeSlice,
  kStackTime,
  kReshape,
  kDropout,
  kCausalConv,
  kLstmCell,
  kSum,
  kBce,
  kMse,
};

std::string_view op_name(OpKind kind);

/// Lower clamp applied to predictions inside the binary cross-entropy.
inline constexpr double kBceClamp = 1e-7;

/// Append-only reverse-mode differentiation tape.
///
/// Operations evaluate eagerly as they are appended, so building the graph is
/// the forward pass. Node inputs always reference earlier nodes; backward()
/// walks the tape once in reverse, which visits every consumer of a node
/// before the node itself.
///
/// Rank conventions: matrices are [rows x cols]; sequences are
/// [batch x time x features].
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value);

  /// Leaf bound to an external tensor; backward() writes its grad field.
  /// Binding the same tensor twice returns the same node.
  NodeId parameter(Tensor& param);

  NodeId matmul(NodeId a, NodeId b);
  /// Elementwise sum. `b` may also be a vector broadcast across the rows of `a`.
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  /// Joins two matrices with equal row counts side by side.
  NodeId concat(NodeId a, NodeId b);
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
  /// [B x T x F] -> [B x F] at step t.
  NodeId time_slice(NodeId sequence, std::size_t t);
  /// Stacks [B x F] steps into [B x T x F].
  NodeId stack_time(std::span<const NodeId> steps);
  NodeId reshape(NodeId a, Shape shape);
  /// Multiplies by a fixed mask generated outside the graph.
  NodeId dropout(NodeId a, Tensor mask);

  /// out[b,t,:] = bias + sum_j in[b, t - j*d, :] * kernel[:, k-1-j, :] with
  /// zero frames before t = 0. Input [B x T x Cin], kernel [Cin x k x Cout].
  NodeId causal_conv(NodeId input, NodeId kernel, NodeId bias, std::size_t dilation);

  /// Fused LSTM cell (see kernels::lstm_forward). `state` holds [h | c] as a
  /// [B x 2H] matrix and so does the result. `rec_mask` may be null.
  NodeId lstm_cell(NodeId x, NodeId state, NodeId w, NodeId u, NodeId b, const Tensor* rec_mask);

  NodeId sum(NodeId a);
  /// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
  NodeId bce(NodeId predictions, const Tensor& targets);
  NodeId mse(NodeId predictions, const Tensor& targets);

  /// Fills the gradient of every bound parameter, zeroing it first, so
  /// parameters that do not influence the loss end with zero gradients.
  /// Throws if the loss is not a scalar.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  /// Gradient held by a parameter leaf after backward(); intermediate
  /// gradients are released as the reverse sweep passes them.
  std::span<const double> grad(NodeId id) const { return nodes_.at(id).grad; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    std::vector<Tensor> saved;
    std::vector<std::size_t> attrs;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value);
  const Node& node(NodeId id) const;
  std::vector<double>& grad_buffer(NodeId id);
  void propagate(NodeId id);

  std::vector<Node> nodes_;
  std::vector<std::pair<const Tensor*, NodeId>> bound_params_;
  std::vector<char> live_;
};

}  // namespace earlycast
