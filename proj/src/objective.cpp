// SPDX-License-Identifier: Apache-2.0
#include "advreg/objective.hpp"

#include <cmath>
#include <string>

#include "advreg/errors.hpp"

namespace advreg {

namespace {

struct ObjectiveGraph {
  VqaForward vqa;
  Var l_vqa;
  Var l_qa;
  Var h_qonly;  // batch means
  Var h_vqa;
  Var l_h;
};

/// Builds every loss node. `entropy_path` decides whether the entropy of f_Q
/// is taken on a separate, non-reversed adversary branch (needed whenever
/// L_H is differentiated) or read off the reversed branch (values only).
ObjectiveGraph build(Graph& graph, const ModelBundle& bundle, const Batch& batch,
                     double lambda_q, bool entropy_path) {
  ObjectiveGraph out;
  out.vqa = forward_vqa(graph, bundle, batch);
  out.l_vqa = cross_entropy(log_softmax(out.vqa.logits), batch.answers);
  Var qonly = forward_qonly(graph, bundle, out.vqa.q, lambda_q);
  out.l_qa = cross_entropy(log_softmax(qonly), batch.answers);
  Var plain = entropy_path ? adversary_logits(graph, bundle, out.vqa.q) : qonly;
  out.h_qonly = mean(entropy_of_softmax(plain));
  out.h_vqa = mean(entropy_of_softmax(out.vqa.logits));
  out.l_h = sub(out.h_qonly, out.h_vqa);
  return out;
}

LossTerms read_terms(const ObjectiveGraph& g) {
  return LossTerms{g.l_vqa.value().item(), g.l_qa.value().item(), g.l_h.value().item(),
                   g.h_qonly.value().item(), g.h_vqa.value().item()};
}

void check_finite(const LossTerms& t) {
  const std::pair<const char*, double> named[] = {
      {"l_vqa", t.l_vqa}, {"l_qa", t.l_qa}, {"l_h", t.l_h}, {"h_qonly", t.h_qonly}, {"h_vqa", t.h_vqa}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value)) throw TrainingError(std::string("non-finite loss term ") + name);
}

}  // namespace

void RegularizerConfig::validate() const {
  if (!(lambda_q >= 0.0) || !std::isfinite(lambda_q))
    throw ConfigError("lambda_q must be finite and >= 0");
  if (!(lambda_h >= 0.0) || !std::isfinite(lambda_h))
    throw ConfigError("lambda_h must be finite and >= 0");
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = best;
  }
  return out;
}

LossTerms compute_losses(const ModelBundle& bundle, const Batch& batch,
                         const RegularizerConfig& config) {
  config.validate();
  if (batch.size() == 0) throw ContractError("compute_losses on an empty batch");
  Graph graph;
  return read_terms(build(graph, bundle, batch, config.lambda_q, false));
}

RoutedGradients routed_gradients(const ModelBundle& bundle, const Batch& batch,
                                 const RegularizerConfig& config) {
  config.validate();
  if (batch.size() == 0) throw ContractError("training step on an empty batch");
  const bool use_entropy = config.lambda_h > 0.0;
  Graph graph;
  const ObjectiveGraph g = build(graph, bundle, batch, config.lambda_q, use_entropy);

  RoutedGradients out;
  out.terms = read_terms(g);
  out.predictions = argmax_rows(g.vqa.logits.value());

  // L_VQA feeds F, G, H; L_QA feeds FQ directly and G through the reversal.
  out.grads = graph.backward(add(g.l_vqa, g.l_qa), PartitionSet::trainable()).parameters();
  if (use_entropy) {
    Var ascent = scale(g.l_h, -config.lambda_h);
    out.grads.add_scaled(graph.backward(ascent, {Partition::kG}).parameters(), 1.0);
  }
  return out;
}

StepResult train_step(ModelBundle& bundle, const Batch& batch, const RegularizerConfig& config,
                      AdamState& optimizer, double learning_rate) {
  RoutedGradients routed = routed_gradients(bundle, batch, config);
  check_finite(routed.terms);
  for (const auto& [name, grad] : routed.grads.entries())
    if (!grad.all_finite()) throw TrainingError("non-finite gradient for '" + name + "'");
  adam_step(bundle.parameters(), routed.grads, optimizer, learning_rate);

  StepResult result;
  result.terms = routed.terms;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (routed.predictions[i] == batch.answers[i]) ++result.correct;
  return result;
}

}  // namespace advreg
