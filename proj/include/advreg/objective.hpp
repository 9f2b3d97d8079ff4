// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "advreg/autodiff.hpp"
#include "advreg/models.hpp"
#include "advreg/optim.hpp"

namespace advreg {

/// Strengths of the question-only adversary (lambda_q) and the
/// difference-of-entropies term (lambda_h).
struct RegularizerConfig {
  double lambda_q = 0.0;
  double lambda_h = 0.0;

  void validate() const;
  friend bool operator==(const RegularizerConfig&, const RegularizerConfig&) = default;
};

/// Batch-mean loss values. l_h is computed as h_qonly - h_vqa.
struct LossTerms {
  double l_vqa = 0.0;
  double l_qa = 0.0;
  double l_h = 0.0;
  double h_qonly = 0.0;
  double h_vqa = 0.0;
};

/// Forward-only evaluation of all three terms.
LossTerms compute_losses(const ModelBundle& bundle, const Batch& batch,
                         const RegularizerConfig& config);

struct RoutedGradients {
  LossTerms terms;
  GradientMap grads;
  std::vector<std::size_t> predictions;  // argmax of the VQA logits, lowest index on ties
};

/// Gradients for one step under the routing contract:
///   F, H   <- grad L_VQA
///   G      <- grad (L_VQA - lambda_q L_QA - lambda_h L_H)
///   FQ     <- grad L_QA
/// The adversarial part reaches G through grad_reverse on q; the L_H part is
/// back-propagated with every partition except G masked.
RoutedGradients routed_gradients(const ModelBundle& bundle, const Batch& batch,
                                 const RegularizerConfig& config);

struct StepResult {
  LossTerms terms;
  std::size_t correct = 0;
};

/// routed_gradients followed by one Adam update of all partitions. Throws
/// TrainingError, leaving the bundle untouched, if any term is non-finite.
StepResult train_step(ModelBundle& bundle, const Batch& batch, const RegularizerConfig& config,
                      AdamState& optimizer, double learning_rate);

/// Row-wise argmax with lowest-index tie-breaking.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

}  // namespace advreg
