// SPDX-License-Identifier: Apache-2.0
#include "advreg/harness.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "advreg/errors.hpp"
#include "advreg/kvtext.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
}  // namespace

void TrainConfig::validate() const {
  regularizer.validate();
  adam.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0))
    throw ConfigError("lr_decay_per_epoch must lie in (0, 1]");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(mix_seed(seed, kShuffleStream), epoch));
  rng.shuffle(order);
  return order;
}

std::uint64_t init_seed_for(std::uint64_t run_seed) { return mix_seed(run_seed, kInitStream); }

TrainTrace train(ModelBundle& bundle, const Dataset& data, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw ContractError("cannot train on an empty dataset");
  check_compatible(bundle.dims(), data);

  using Clock = std::chrono::steady_clock;
  const auto run_start = Clock::now();
  TrainTrace trace;
  trace.config = config;
  AdamState optimizer = AdamState::for_parameters(bundle.parameters(), config.adam);
  double lr = config.learning_rate;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = epoch_order(data.size(), config.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    std::size_t correct = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const Batch batch =
          make_batch(data, std::span<const std::size_t>(order).subspan(start, stop - start));
      StepResult result;
      try {
        result = train_step(bundle, batch, config.regularizer, optimizer, lr);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                            ": " + e.what());
      }
      const double w = static_cast<double>(batch.size());
      rec.mean_terms.l_vqa += w * result.terms.l_vqa;
      rec.mean_terms.l_qa += w * result.terms.l_qa;
      rec.mean_terms.l_h += w * result.terms.l_h;
      rec.mean_terms.h_qonly += w * result.terms.h_qonly;
      rec.mean_terms.h_vqa += w * result.terms.h_vqa;
      correct += result.correct;
    }
    const double n = static_cast<double>(data.size());
    rec.mean_terms.l_vqa /= n;
    rec.mean_terms.l_qa /= n;
    rec.mean_terms.l_h /= n;
    rec.mean_terms.h_qonly /= n;
    rec.mean_terms.h_vqa /= n;
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
    trace.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    lr *= config.lr_decay_per_epoch;
  }
  trace.total_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
  return trace;
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "epoch,l_vqa,l_qa,l_h,h_qonly,h_vqa,train_accuracy,learning_rate\n";
  for (const auto& e : trace.epochs) {
    out << e.epoch << ',' << format_double(e.mean_terms.l_vqa) << ','
        << format_double(e.mean_terms.l_qa) << ',' << format_double(e.mean_terms.l_h) << ','
        << format_double(e.mean_terms.h_qonly) << ',' << format_double(e.mean_terms.h_vqa) << ','
        << format_double(e.train_accuracy) << ',' << format_double(e.learning_rate) << '\n';
  }
  return out.str();
}

}  // namespace advreg
