// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advreg/tensor.hpp"

namespace advreg {

/// Which parameter set a leaf belongs to. Gradient routing is expressed as a
/// set of these tags.
enum class Partition : std::uint8_t { kF = 0, kG = 1, kH = 2, kFQ = 3, kData = 4 };

std::string_view partition_name(Partition p);
Partition parse_partition(std::string_view name);

class PartitionSet {
 public:
  constexpr PartitionSet() = default;
  constexpr PartitionSet(std::initializer_list<Partition> parts) {
    for (auto p : parts) insert(p);
  }
  static constexpr PartitionSet all() {
    return {Partition::kF, Partition::kG, Partition::kH, Partition::kFQ, Partition::kData};
  }
  static constexpr PartitionSet trainable() {
    return {Partition::kF, Partition::kG, Partition::kH, Partition::kFQ};
  }

  constexpr void insert(Partition p) { bits_ |= bit(p); }
  constexpr bool contains(Partition p) const { return (bits_ & bit(p)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  /// Complement relative to all five tags.
  constexpr PartitionSet complement() const {
    PartitionSet out;
    out.bits_ = static_cast<std::uint8_t>(~bits_ & all().bits_);
    return out;
  }

 private:
  static constexpr std::uint8_t bit(Partition p) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(p));
  }
  std::uint8_t bits_ = 0;
};

/// A named trainable tensor with its routing tag.
struct Parameter {
  std::string name;
  Partition partition;
  Tensor value;
};

/// Parameter-name -> gradient. Ordered so iteration is deterministic.
class GradientMap {
 public:
  void accumulate(const std::string& name, const Tensor& grad);
  bool contains(const std::string& name) const { return grads_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  GradientMap& add_scaled(const GradientMap& other, double factor);
  const std::map<std::string, Tensor>& entries() const { return grads_; }

 private:
  std::map<std::string, Tensor> grads_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Input gradient slots handed to a backward rule; null entries need no gradient.
using GradSlots = std::span<Tensor* const>;
using BackwardRule = std::function<void(const Tensor& upstream, GradSlots inputs)>;

/// Result of one backward pass. Leaf gradients are zero-filled when the leaf
/// was masked out or unreachable.
class Gradients {
 public:
  const Tensor& wrt(Var leaf) const;
  /// Gradients of every parameter leaf in the graph, keyed by parameter name.
  GradientMap parameters() const;

 private:
  friend class Graph;
  const Graph* graph_ = nullptr;
  std::unordered_map<std::size_t, Tensor> leaf_grads_;
};

/// Dynamic tape: nodes are appended in evaluation order, so inputs always
/// precede their consumers.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding data (tag DATA unless another tag is given).
  Var input(Tensor value, Partition tag = Partition::kData);
  /// Leaf for a model parameter; registering the same name twice returns the
  /// existing node so that all uses share one gradient.
  Var parameter(const Parameter& param);

  /// Appends an operation node. Used by the op library below.
  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs,
             BackwardRule rule, bool stops_gradient = false);

  /// Reverse pass from a scalar loss. Only leaves tagged with one of
  /// `active` accumulate gradient; everything else stays exactly zero.
  Gradients backward(Var loss, PartitionSet active) const;

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  friend class Gradients;
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool is_leaf = false;
    bool stops_gradient = false;
    Partition tag = Partition::kData;
    std::string param_name;
  };
  // A deque keeps references from Var::value() valid while the tape grows.
  std::deque<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// Operations. All of them record onto the graph that owns their inputs.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x[m x n] + bias broadcast over rows; bias is [n] or [1 x n].
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var scale(Var x, double factor);
/// Column-wise concatenation of [m x p] and [m x q].
Var concat_cols(Var a, Var b);
/// Rows of `table` selected by `indices`.
Var embedding_lookup(Var table, std::span<const std::uint32_t> indices);
/// Mean of consecutive row segments. offsets has one entry per segment plus
/// a final end offset.
Var mean_pool(Var x, std::span<const std::size_t> offsets);
/// Mean over fixed-size row groups.
Var mean_pool(Var x, std::size_t group_size);
/// Mean of all elements, as a [1] tensor.
Var mean(Var x);
Var log_softmax(Var logits);
/// Batch-mean negative log-likelihood of `labels`.
Var cross_entropy(Var log_probs, std::span<const std::size_t> labels);
/// Per-row Shannon entropy (nats) of softmax(logits), shape [m].
Var entropy_of_softmax(Var logits);
/// Identity forward; backward multiplies the upstream gradient by -lambda_q.
Var grad_reverse(Var x, double lambda_q);

}  // namespace advreg
