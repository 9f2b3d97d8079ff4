// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advreg/models.hpp"
#include "advreg/objective.hpp"
#include "advreg/optim.hpp"
#include "advreg/synthcp.hpp"

namespace advreg {

struct TrainConfig {
  RegularizerConfig regularizer;
  double learning_rate = 1e-3;
  std::size_t batch_size = 150;
  std::size_t epochs = 60;
  AdamConfig adam;
  /// Multiplicative learning-rate factor applied after every epoch; 1 = off.
  double lr_decay_per_epoch = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms mean_terms;  // example-weighted over the epoch's batches
  double train_accuracy = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  double total_seconds = 0.0;
};

/// Visiting order of the training set in a given epoch. Pure in
/// (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Seed used for a fresh bundle in a run configured with `run_seed`.
std::uint64_t init_seed_for(std::uint64_t run_seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// epochs x ceil(N / batch) routed train steps with one shared Adam state.
/// The last partial batch is kept. Throws TrainingError naming the epoch,
/// step and term if a loss goes non-finite; the bundle is then left at its
/// last finite state.
TrainTrace train(ModelBundle& bundle, const Dataset& data, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

/// Trace as CSV: epoch,l_vqa,l_qa,l_h,h_qonly,h_vqa,train_accuracy,learning_rate.
/// Wall-clock time is left out so that the file is reproducible.
std::string trace_to_csv(const TrainTrace& trace);

}  // namespace advreg
