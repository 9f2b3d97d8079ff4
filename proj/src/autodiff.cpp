// SPDX-License-Identifier: Apache-2.0
#include "advreg/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "advreg/errors.hpp"

namespace advreg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

Graph& owner(Var a) {
  if (a.graph() == nullptr) throw ContractError("operation on an unbound Var");
  return *a.graph();
}

Graph& owner(Var a, Var b) {
  if (a.graph() != b.graph()) throw ContractError("operands belong to different graphs");
  return owner(a);
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

}  // namespace

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::kF: return "F_PARAMS";
    case Partition::kG: return "G_PARAMS";
    case Partition::kH: return "H_PARAMS";
    case Partition::kFQ: return "FQ_PARAMS";
    case Partition::kData: return "DATA";
  }
  return "?";
}

Partition parse_partition(std::string_view name) {
  for (auto p : {Partition::kF, Partition::kG, Partition::kH, Partition::kFQ, Partition::kData})
    if (partition_name(p) == name) return p;
  throw ParseError("unknown partition tag '" + std::string(name) + "'");
}

// --- GradientMap -----------------------------------------------------------

void GradientMap::accumulate(const std::string& name, const Tensor& grad) {
  auto it = grads_.find(name);
  if (it == grads_.end())
    grads_.emplace(name, grad);
  else
    it->second += grad;
}

const Tensor& GradientMap::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ContractError("no gradient recorded for parameter '" + name + "'");
  return it->second;
}

GradientMap& GradientMap::add_scaled(const GradientMap& other, double factor) {
  for (const auto& [name, grad] : other.grads_) {
    Tensor scaled = grad;
    scaled.scale(factor);
    accumulate(name, scaled);
  }
  return *this;
}

// --- Var / Gradients -------------------------------------------------------

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw ContractError("value() on an unbound Var");
  return graph_->value(id_);
}

const Tensor& Gradients::wrt(Var leaf) const {
  auto it = leaf_grads_.find(leaf.id());
  if (it == leaf_grads_.end())
    throw ContractError("node " + std::to_string(leaf.id()) + " is not a leaf");
  return it->second;
}

GradientMap Gradients::parameters() const {
  GradientMap out;
  for (const auto& [name, id] : graph_->param_nodes_) out.accumulate(name, leaf_grads_.at(id));
  return out;
}

// --- Graph -----------------------------------------------------------------

Var Graph::input(Tensor value, Partition tag) {
  Node node;
  node.op = "input";
  node.value = std::move(value);
  node.is_leaf = true;
  node.tag = tag;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const Parameter& param) {
  if (auto it = param_nodes_.find(param.name); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.op = "parameter";
  node.value = param.value;
  node.is_leaf = true;
  node.tag = param.partition;
  node.param_name = param.name;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(param.name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardRule rule,
                  bool stops_gradient) {
  for (auto id : inputs)
    if (id >= nodes_.size()) throw ContractError("node input refers to a later node");
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.rule = std::move(rule);
  node.stops_gradient = stops_gradient;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(Var loss, PartitionSet active) const {
  if (loss.graph() != this) throw ContractError("loss does not belong to this graph");
  if (nodes_.at(loss.id()).value.size() != 1)
    throw ContractError("backward needs a scalar loss, got " +
                        shape_string(nodes_[loss.id()].value.shape()));
  if (active.empty()) throw ContractError("backward needs at least one active partition");

  const std::size_t end = loss.id() + 1;
  // A node needs a gradient iff some active leaf is reachable through it.
  std::vector<char> needs(end, 0);
  for (std::size_t i = 0; i < end; ++i) {
    const Node& n = nodes_[i];
    if (n.is_leaf) {
      needs[i] = active.contains(n.tag);
    } else if (!n.stops_gradient) {
      needs[i] = std::any_of(n.inputs.begin(), n.inputs.end(), [&](auto in) { return needs[in]; });
    }
  }

  std::vector<Tensor> grads(end);
  grads[loss.id()] = Tensor(nodes_[loss.id()].value.shape(), 1.0);
  std::vector<Tensor*> slots;
  for (std::size_t i = end; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.is_leaf || !needs[i] || grads[i].size() == 0) continue;
    slots.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const auto in = n.inputs[k];
      if (!needs[in]) continue;
      if (grads[in].size() == 0) grads[in] = Tensor::zeros_like(nodes_[in].value);
      slots[k] = &grads[in];
    }
    n.rule(grads[i], slots);
  }

  Gradients out;
  out.graph_ = this;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf) continue;
    if (i < end && needs[i] && grads[i].size() != 0)
      out.leaf_grads_.emplace(i, std::move(grads[i]));
    else
      out.leaf_grads_.emplace(i, Tensor::zeros_like(nodes_[i].value));
  }
  return out;
}

// --- Operations --------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = owner(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows())
    throw ShapeError("matmul shape mismatch: " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {ia, ib},
                  [&g, ia, ib](const Tensor& up, GradSlots in) {
                    if (in[0]) as_matrix(*in[0]).noalias() += as_matrix(up) * as_matrix(g.value(ib)).transpose();
                    if (in[1]) as_matrix(*in[1]).noalias() += as_matrix(g.value(ia)).transpose() * as_matrix(up);
                  });
}

Var add(Var a, Var b) {
  Graph& g = owner(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("add shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  Tensor out = a.value();
  out += b.value();
  return g.record("add", std::move(out), {a.id(), b.id()}, [](const Tensor& up, GradSlots in) {
    if (in[0]) *in[0] += up;
    if (in[1]) *in[1] += up;
  });
}

Var sub(Var a, Var b) {
  Graph& g = owner(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("sub shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.record("sub", std::move(out), {a.id(), b.id()}, [](const Tensor& up, GradSlots in) {
    if (in[0]) *in[0] += up;
    if (in[1])
      for (std::size_t i = 0; i < up.size(); ++i) (*in[1])[i] -= up[i];
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = owner(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias");
  if (bias.value().size() != xv.cols())
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                     shape_string(xv.shape()));
  Tensor out = xv;
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return g.record("add_bias", std::move(out), {x.id(), bias.id()},
                  [](const Tensor& up, GradSlots in) {
                    if (in[0]) *in[0] += up;
                    if (in[1])
                      for (std::size_t r = 0; r < up.rows(); ++r) {
                        auto row = up.row(r);
                        for (std::size_t c = 0; c < row.size(); ++c) (*in[1])[c] += row[c];
                      }
                  });
}

Var relu(Var x) {
  Graph& g = owner(x);
  Tensor out = x.value();
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  const std::size_t ix = x.id();
  return g.record("relu", std::move(out), {ix}, [&g, ix](const Tensor& up, GradSlots in) {
    if (!in[0]) return;
    const Tensor& xv = g.value(ix);
    for (std::size_t i = 0; i < up.size(); ++i)
      if (xv[i] > 0.0) (*in[0])[i] += up[i];
  });
}

Var scale(Var x, double factor) {
  Graph& g = owner(x);
  Tensor out = x.value();
  out.scale(factor);
  return g.record("scale", std::move(out), {x.id()}, [factor](const Tensor& up, GradSlots in) {
    if (!in[0]) return;
    for (std::size_t i = 0; i < up.size(); ++i) (*in[0])[i] += factor * up[i];
  });
}

Var concat_cols(Var a, Var b) {
  Graph& g = owner(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_cols");
  require_matrix(bv, "concat_cols");
  if (av.rows() != bv.rows())
    throw ShapeError("concat_cols row mismatch: " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  const std::size_t p = av.cols(), q = bv.cols();
  Tensor out({av.rows(), p + q});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto dst = out.row(r);
    std::copy_n(av.row(r).begin(), p, dst.begin());
    std::copy_n(bv.row(r).begin(), q, dst.begin() + static_cast<std::ptrdiff_t>(p));
  }
  return g.record("concat_cols", std::move(out), {a.id(), b.id()},
                  [p, q](const Tensor& up, GradSlots in) {
                    for (std::size_t r = 0; r < up.rows(); ++r) {
                      auto src = up.row(r);
                      if (in[0])
                        for (std::size_t c = 0; c < p; ++c) in[0]->at(r, c) += src[c];
                      if (in[1])
                        for (std::size_t c = 0; c < q; ++c) in[1]->at(r, c) += src[p + c];
                    }
                  });
}

Var embedding_lookup(Var table, std::span<const std::uint32_t> indices) {
  Graph& g = owner(table);
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding_lookup");
  if (indices.empty()) throw ShapeError("embedding_lookup needs at least one index");
  const std::size_t width = tv.cols();
  Tensor out({indices.size(), width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows())
      throw IndexError("token " + std::to_string(indices[i]) + " outside vocabulary of size " +
                       std::to_string(tv.rows()));
    auto src = tv.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::uint32_t> rows(indices.begin(), indices.end());
  return g.record("embedding_lookup", std::move(out), {table.id()},
                  [rows = std::move(rows)](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      auto src = up.row(i);
                      auto dst = in[0]->row(rows[i]);
                      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

Var mean_pool(Var x, std::span<const std::size_t> offsets) {
  Graph& g = owner(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "mean_pool");
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != xv.rows())
    throw ShapeError("mean_pool offsets must run from 0 to " + std::to_string(xv.rows()));
  const std::size_t segments = offsets.size() - 1;
  for (std::size_t s = 0; s < segments; ++s)
    if (offsets[s + 1] <= offsets[s]) throw ShapeError("mean_pool segments must be nonempty");
  Tensor out({segments, xv.cols()});
  for (std::size_t s = 0; s < segments; ++s) {
    auto dst = out.row(s);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      auto src = xv.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
    for (double& v : dst) v *= inv;
  }
  std::vector<std::size_t> bounds(offsets.begin(), offsets.end());
  return g.record("mean_pool", std::move(out), {x.id()},
                  [bounds = std::move(bounds)](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
                      const double inv = 1.0 / static_cast<double>(bounds[s + 1] - bounds[s]);
                      auto src = up.row(s);
                      for (std::size_t r = bounds[s]; r < bounds[s + 1]; ++r) {
                        auto dst = in[0]->row(r);
                        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += inv * src[c];
                      }
                    }
                  });
}

Var mean_pool(Var x, std::size_t group_size) {
  const std::size_t rows = x.value().rows();
  if (group_size == 0 || rows % group_size != 0)
    throw ShapeError("mean_pool: " + std::to_string(rows) + " rows not divisible into groups of " +
                     std::to_string(group_size));
  std::vector<std::size_t> offsets;
  for (std::size_t r = 0; r <= rows; r += group_size) offsets.push_back(r);
  return mean_pool(x, offsets);
}

Var mean(Var x) {
  Graph& g = owner(x);
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.values()) total += v;
  const double inv = 1.0 / static_cast<double>(xv.size());
  return g.record("mean", Tensor::scalar(total * inv), {x.id()},
                  [inv](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    const double d = up[0] * inv;
                    for (double& v : in[0]->values()) v += d;
                  });
}

Var log_softmax(Var logits) {
  Graph& g = owner(logits);
  const Tensor& z = logits.value();
  require_matrix(z, "log_softmax");
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto src = z.row(r);
    auto dst = out.row(r);
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (double v : src) total += std::exp(v - peak);
    const double lse = peak + std::log(total);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] - lse;
  }
  const std::size_t self = g.size();
  return g.record("log_softmax", std::move(out), {logits.id()},
                  [&g, self](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    const Tensor& lp = g.value(self);
                    for (std::size_t r = 0; r < lp.rows(); ++r) {
                      auto lrow = lp.row(r);
                      auto urow = up.row(r);
                      double total = 0.0;
                      for (double u : urow) total += u;
                      auto dst = in[0]->row(r);
                      for (std::size_t c = 0; c < lrow.size(); ++c)
                        dst[c] += urow[c] - std::exp(lrow[c]) * total;
                    }
                  });
}

Var cross_entropy(Var log_probs, std::span<const std::size_t> labels) {
  Graph& g = owner(log_probs);
  const Tensor& lp = log_probs.value();
  require_matrix(lp, "cross_entropy");
  if (labels.size() != lp.rows())
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_string(lp.shape()));
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= lp.cols())
      throw IndexError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(lp.cols()) + ")");
    total -= lp.at(i, labels[i]);
  }
  const double inv = 1.0 / static_cast<double>(labels.size());
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return g.record("cross_entropy", Tensor::scalar(total * inv), {log_probs.id()},
                  [inv, targets = std::move(targets)](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    for (std::size_t i = 0; i < targets.size(); ++i)
                      in[0]->at(i, targets[i]) -= up[0] * inv;
                  });
}

Var entropy_of_softmax(Var logits) {
  Graph& g = owner(logits);
  const Tensor& z = logits.value();
  require_matrix(z, "entropy_of_softmax");
  // Entropy from log-probabilities: -sum exp(lp) * lp. exp(lp) underflows to
  // exactly 0 where p -> 0, which is the p ln p -> 0 limit.
  Tensor lp(z.shape());
  Tensor out({z.rows()});
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto src = z.row(r);
    auto dst = lp.row(r);
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (double v : src) total += std::exp(v - peak);
    const double lse = peak + std::log(total);
    double h = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = src[c] - lse;
      h -= std::exp(dst[c]) * dst[c];
    }
    out[r] = std::max(h, 0.0);
  }
  const std::size_t self = g.size();
  return g.record("entropy_of_softmax", std::move(out), {logits.id()},
                  [&g, self, lp = std::move(lp)](const Tensor& up, GradSlots in) {
                    if (!in[0]) return;
                    const Tensor& h = g.value(self);
                    // dH/dz_j = -p_j (ln p_j + H)
                    for (std::size_t r = 0; r < lp.rows(); ++r) {
                      auto lrow = lp.row(r);
                      auto dst = in[0]->row(r);
                      for (std::size_t c = 0; c < lrow.size(); ++c)
                        dst[c] -= up[r] * std::exp(lrow[c]) * (lrow[c] + h[r]);
                    }
                  });
}

Var grad_reverse(Var x, double lambda_q) {
  Graph& g = owner(x);
  if (!(lambda_q >= 0.0) || !std::isfinite(lambda_q))
    throw ConfigError("grad_reverse: lambda_q must be a finite value >= 0, got " +
                      std::to_string(lambda_q));
  const double factor = -lambda_q;
  // lambda_q == 0 cuts the path entirely rather than propagating signed zeros.
  return g.record(
      "grad_reverse", x.value(), {x.id()},
      [factor](const Tensor& up, GradSlots in) {
        if (!in[0]) return;
        for (std::size_t i = 0; i < up.size(); ++i) (*in[0])[i] += factor * up[i];
      },
      lambda_q == 0.0);
}

}  // namespace advreg
