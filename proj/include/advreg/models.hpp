// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advreg/autodiff.hpp"
#include "advreg/tensor.hpp"

namespace advreg {

/// Layer sizes for the four maps g, h, f and f_Q.
struct ModelDims {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;         // e
  std::size_t question_dim = 32;      // d, width of q = g(Q)
  std::size_t feature_dim = 16;       // r, raw image feature width
  std::size_t image_dim = 32;         // k, width of v = h(I)
  std::size_t fusion_hidden = 64;
  std::size_t adversary_hidden = 256;
  std::size_t num_answers = 40;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// A minibatch in model-ready form. Questions are concatenated token runs
/// delimited by `offsets` (size() + 1 entries).
struct Batch {
  std::vector<std::uint32_t> tokens;
  std::vector<std::size_t> offsets{0};
  Tensor features;  // [n x r]
  std::vector<std::size_t> answers;
  std::vector<std::size_t> types;

  std::size_t size() const { return answers.size(); }
};

/// Parameters of g (question encoder), h (image encoder), f (fusion answerer)
/// and f_Q (question-only adversary), each tagged with its partition.
class ModelBundle {
 public:
  /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
  /// Each component draws from its own stream, so g/h/f do not depend on f_Q.
  static ModelBundle initialize(const ModelDims& dims, std::uint64_t seed);
  static ModelBundle zeros(const ModelDims& dims);
  /// Rebuilds a bundle from loaded parameters; checks names, shapes and tags.
  static ModelBundle from_parameters(std::vector<Parameter> params);

  const ModelDims& dims() const { return dims_; }
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  const Parameter& parameter(std::string_view name) const;
  Parameter& parameter(std::string_view name);

  /// Every parameter carries exactly one trainable tag and every expected
  /// parameter is present once.
  void validate() const;

 private:
  ModelBundle(ModelDims dims, std::vector<Parameter> params)
      : dims_(dims), params_(std::move(params)) {}
  ModelDims dims_;
  std::vector<Parameter> params_;
};

/// Canonical parameter names, shapes and tags for a given set of dimensions.
std::vector<Parameter> parameter_layout(const ModelDims& dims);

struct VqaForward {
  Var q;       // [n x d]
  Var v;       // [n x k]
  Var logits;  // [n x |A|]
};

/// q = g(Q), v = h(I), logits of P(A | Q, I) = f(v, q).
VqaForward forward_vqa(Graph& graph, const ModelBundle& bundle, const Batch& batch);
Var encode_question(Graph& graph, const ModelBundle& bundle, const Batch& batch);
/// f_Q applied to q with no reversal in between.
Var adversary_logits(Graph& graph, const ModelBundle& bundle, Var q);
/// f_Q applied after grad_reverse(q, lambda_q). Forward value equals
/// adversary_logits(q).
Var forward_qonly(Graph& graph, const ModelBundle& bundle, Var q, double lambda_q);

}  // namespace advreg
