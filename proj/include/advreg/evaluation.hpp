// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advreg/harness.hpp"
#include "advreg/models.hpp"
#include "advreg/synthcp.hpp"

namespace advreg {

/// Per-example outputs of a frozen bundle.
struct ModelOutputs {
  std::vector<std::size_t> predictions;  // argmax, lowest index on ties
  Tensor probabilities;                  // [n x |A|] softmax of the VQA logits
  std::vector<double> h_vqa;             // entropy of f's distribution
  std::vector<double> h_qonly;           // entropy of f_Q's distribution
};

ModelOutputs run_model(const ModelBundle& bundle, const Dataset& data, std::size_t chunk = 1024);

struct Divergence {
  double tv = 0.0;  // 0.5 * sum |p - q|
  double kl = 0.0;  // KL(reference || smoothed prediction)
};

struct MetricsReport {
  std::size_t examples = 0;
  double overall_accuracy = 0.0;
  std::vector<double> per_type_accuracy;
  std::vector<std::size_t> per_type_count;
  std::optional<double> probe_train_accuracy;
  std::optional<double> probe_test_accuracy;
  /// T x |A| empirical distribution of predicted answers per question type.
  std::vector<std::vector<double>> per_type_marginals;
  /// Per type, against the world's train and test priors (empty when the
  /// world tables are not supplied). Types with no examples hold NaN.
  std::vector<Divergence> vs_train_prior;
  std::vector<Divergence> vs_test_prior;
  double mean_tv_train_prior = 0.0;
  double mean_tv_test_prior = 0.0;
  double mean_h_vqa = 0.0;
  double mean_h_qonly = 0.0;
};

/// Scores argmax predictions; fills accuracy fields and marginals only.
MetricsReport score_predictions(const std::vector<std::size_t>& predictions, const Dataset& data);

/// Full evaluation of a frozen bundle. Probe fields stay empty. When `world`
/// is given, divergences against its prior tables are filled in.
MetricsReport evaluate(const ModelBundle& bundle, const Dataset& data,
                       const WorldSpec* world = nullptr);

constexpr double kKlSmoothing = 1e-6;

/// TV and smoothed KL between a predicted marginal and a reference row
/// (both over the same support).
Divergence divergence(std::span<const double> predicted, std::span<const double> reference);

/// Reference prior rows embedded in the full answer space: row t is zero
/// outside type t's answers.
std::vector<std::vector<double>> embedded_prior(const WorldSpec& world, Split split);

/// Per-type divergences of a bundle's predicted marginals from `reference`
/// (T rows over |A| answers).
std::vector<Divergence> distribution_divergence(const ModelBundle& bundle, const Dataset& data,
                                                const std::vector<std::vector<double>>& reference);

// ---------------------------------------------------------------------------
// Question-only probe.

struct ProbeConfig {
  std::size_t hidden = 256;
  std::size_t epochs = 30;
  std::size_t batch_size = 150;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct ProbeReport {
  double train_accuracy = 0.0;
  std::vector<double> eval_accuracy;  // one per eval dataset
};

/// Trains a fresh two-layer classifier on frozen q = g(Q) encodings of
/// `train` and reports its accuracy. The bundle is only read.
ProbeReport qonly_probe(const ModelBundle& bundle, const Dataset& train,
                        const std::vector<const Dataset*>& evals, const ProbeConfig& config = {});

/// q = g(Q) for every record, [n x d].
Tensor question_encodings(const ModelBundle& bundle, const Dataset& data, std::size_t chunk = 1024);

// ---------------------------------------------------------------------------
// Ensembles.

struct EnsembleReport {
  double accuracy_a = 0.0;
  double accuracy_b = 0.0;
  double oracle_accuracy = 0.0;  // correct if either member's argmax is correct
  double mean_accuracy = 0.0;    // argmax of the averaged distributions
};

EnsembleReport ensembles(const Tensor& probs_a, const Tensor& probs_b,
                         std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// Experiments.

struct RunResult {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::optional<ProbeReport> probe;  // probe.eval_accuracy[0] is on the test set
  std::string bundle_hash;
};

/// Fresh bundle (seeded from config.seed), train, evaluate on test, and
/// optionally probe. The single-run and sweep paths both go through here.
RunResult run_experiment(const Dataset& train, const Dataset& test, const TrainConfig& config,
                         const std::optional<ProbeConfig>& probe, ModelBundle* trained = nullptr);

struct SweepPoint {
  double lambda_q = 0.0;
  double lambda_h = 0.0;
};

struct SweepRow {
  double lambda_q = 0.0;
  double lambda_h = 0.0;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double probe_train_accuracy = 0.0;
  double probe_test_accuracy = 0.0;
  std::string error;  // empty on success
};

/// One run per (grid point, seed), rows in grid-major then seed order. Runs
/// execute on up to `jobs` threads; a failed run is recorded and the sweep
/// continues.
std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const std::vector<SweepPoint>& grid,
                                   const std::vector<std::uint64_t>& seeds, const Dataset& train,
                                   const Dataset& test, const std::optional<ProbeConfig>& probe,
                                   std::size_t jobs = 1);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace advreg
