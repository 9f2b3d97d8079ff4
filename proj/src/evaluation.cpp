// SPDX-License-Identifier: Apache-2.0
#include "advreg/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "advreg/checkpoint.hpp"
#include "advreg/errors.hpp"
#include "advreg/kvtext.hpp"
#include "advreg/optim.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, Fn&& fn) {
  if (chunk == 0) throw ContractError("chunk size must be positive");
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    fn(start, std::span<const std::size_t>(idx));
  }
}

double mean_ignoring_nan(const std::vector<Divergence>& rows) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& d : rows)
    if (!std::isnan(d.tv)) {
      total += d.tv;
      ++n;
    }
  return n ? total / static_cast<double>(n) : kNaN;
}

std::vector<Divergence> divergences(const std::vector<std::vector<double>>& marginals,
                                    const std::vector<std::size_t>& counts,
                                    const std::vector<std::vector<double>>& reference) {
  if (reference.size() != marginals.size())
    throw ShapeError("reference prior has " + std::to_string(reference.size()) + " rows, expected " +
                     std::to_string(marginals.size()));
  std::vector<Divergence> out;
  for (std::size_t t = 0; t < marginals.size(); ++t) {
    if (counts[t] == 0)
      out.push_back({kNaN, kNaN});
    else
      out.push_back(divergence(marginals[t], reference[t]));
  }
  return out;
}

// Two-layer probe with the adversary's shape.
struct Probe {
  std::vector<Parameter> params;

  Probe(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
    auto glorot = [](Tensor& w, Rng& rng) {
      const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (double& v : w.values()) v = rng.uniform(-a, a);
    };
    Rng rng(seed);
    params.push_back({"probe.hidden.weight", Partition::kFQ, Tensor({in, hidden})});
    params.push_back({"probe.hidden.bias", Partition::kFQ, Tensor({hidden})});
    params.push_back({"probe.out.weight", Partition::kFQ, Tensor({hidden, out})});
    params.push_back({"probe.out.bias", Partition::kFQ, Tensor({out})});
    glorot(params[0].value, rng);
    glorot(params[2].value, rng);
  }

  Var logits(Graph& g, Var x) const {
    Var h = relu(add_bias(matmul(x, g.parameter(params[0])), g.parameter(params[1])));
    return add_bias(matmul(h, g.parameter(params[2])), g.parameter(params[3]));
  }
};

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), src.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto s = src.row(rows[i]);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

double probe_accuracy(const Probe& probe, const Tensor& encodings, const Dataset& data) {
  std::size_t correct = 0;
  for_each_chunk(data.size(), 1024, [&](std::size_t, std::span<const std::size_t> idx) {
    Graph g;
    Var out = probe.logits(g, g.input(gather_rows(encodings, idx)));
    const auto pred = argmax_rows(out.value());
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (pred[i] == data.records[idx[i]].answer) ++correct;
  });
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

ModelOutputs run_model(const ModelBundle& bundle, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw ContractError("cannot evaluate on an empty dataset");
  check_compatible(bundle.dims(), data);
  ModelOutputs out;
  out.probabilities = Tensor({data.size(), bundle.dims().num_answers});
  out.predictions.reserve(data.size());
  out.h_vqa.reserve(data.size());
  out.h_qonly.reserve(data.size());
  for_each_chunk(data.size(), chunk, [&](std::size_t start, std::span<const std::size_t> idx) {
    const Batch batch = make_batch(data, idx);
    Graph g;
    const VqaForward fwd = forward_vqa(g, bundle, batch);
    const Tensor& logp = log_softmax(fwd.logits).value();
    const Tensor& hv = entropy_of_softmax(fwd.logits).value();
    const Tensor& hq = entropy_of_softmax(adversary_logits(g, bundle, fwd.q)).value();
    const auto pred = argmax_rows(fwd.logits.value());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = out.probabilities.row(start + i);
      auto src = logp.row(i);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = std::exp(src[c]);
      out.predictions.push_back(pred[i]);
      out.h_vqa.push_back(hv[i]);
      out.h_qonly.push_back(hq[i]);
    }
  });
  return out;
}

MetricsReport score_predictions(const std::vector<std::size_t>& predictions, const Dataset& data) {
  if (data.size() == 0) throw ContractError("cannot score an empty dataset");
  if (predictions.size() != data.size())
    throw ContractError("got " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(data.size()) + " records");
  MetricsReport report;
  report.examples = data.size();
  const std::size_t types = data.num_types;
  std::vector<std::size_t> correct(types, 0);
  report.per_type_count.assign(types, 0);
  report.per_type_marginals.assign(types, std::vector<double>(data.num_answers, 0.0));
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Record& rec = data.records[i];
    if (predictions[i] >= data.num_answers) throw IndexError("prediction outside answer range");
    ++report.per_type_count[rec.type];
    report.per_type_marginals[rec.type][predictions[i]] += 1.0;
    if (predictions[i] == rec.answer) {
      ++correct[rec.type];
      ++total_correct;
    }
  }
  report.overall_accuracy = static_cast<double>(total_correct) / static_cast<double>(data.size());
  for (std::size_t t = 0; t < types; ++t) {
    const double n = static_cast<double>(report.per_type_count[t]);
    report.per_type_accuracy.push_back(n > 0 ? static_cast<double>(correct[t]) / n : kNaN);
    if (n > 0)
      for (double& p : report.per_type_marginals[t]) p /= n;
  }
  return report;
}

MetricsReport evaluate(const ModelBundle& bundle, const Dataset& data, const WorldSpec* world) {
  const ModelOutputs out = run_model(bundle, data);
  MetricsReport report = score_predictions(out.predictions, data);
  report.mean_h_vqa = std::accumulate(out.h_vqa.begin(), out.h_vqa.end(), 0.0) /
                      static_cast<double>(data.size());
  report.mean_h_qonly = std::accumulate(out.h_qonly.begin(), out.h_qonly.end(), 0.0) /
                        static_cast<double>(data.size());
  if (world != nullptr) {
    report.vs_train_prior = divergences(report.per_type_marginals, report.per_type_count,
                                        embedded_prior(*world, Split::kTrain));
    report.vs_test_prior = divergences(report.per_type_marginals, report.per_type_count,
                                       embedded_prior(*world, Split::kTest));
    report.mean_tv_train_prior = mean_ignoring_nan(report.vs_train_prior);
    report.mean_tv_test_prior = mean_ignoring_nan(report.vs_test_prior);
  }
  return report;
}

Divergence divergence(std::span<const double> predicted, std::span<const double> reference) {
  if (predicted.size() != reference.size())
    throw ShapeError("divergence over supports of size " + std::to_string(predicted.size()) +
                     " and " + std::to_string(reference.size()));
  const double k = static_cast<double>(predicted.size());
  Divergence d;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    d.tv += std::abs(predicted[i] - reference[i]);
    if (reference[i] > 0.0) {
      const double smoothed = (predicted[i] + kKlSmoothing) / (1.0 + k * kKlSmoothing);
      d.kl += reference[i] * std::log(reference[i] / smoothed);
    }
  }
  d.tv *= 0.5;
  return d;
}

std::vector<std::vector<double>> embedded_prior(const WorldSpec& world, Split split) {
  std::vector<std::vector<double>> out(world.num_types,
                                       std::vector<double>(world.num_answers(), 0.0));
  const auto& prior = world.prior(split);
  for (std::size_t t = 0; t < world.num_types; ++t)
    for (std::size_t k = 0; k < world.answers_per_type; ++k)
      out[t][t * world.answers_per_type + k] = prior[t][k];
  return out;
}

std::vector<Divergence> distribution_divergence(const ModelBundle& bundle, const Dataset& data,
                                                const std::vector<std::vector<double>>& reference) {
  for (const auto& row : reference) {
    double total = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError("reference prior has a negative entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("reference prior row does not sum to 1");
  }
  const MetricsReport scored = score_predictions(run_model(bundle, data).predictions, data);
  return divergences(scored.per_type_marginals, scored.per_type_count, reference);
}

Tensor question_encodings(const ModelBundle& bundle, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw ContractError("cannot encode an empty dataset");
  check_compatible(bundle.dims(), data);
  Tensor out({data.size(), bundle.dims().question_dim});
  for_each_chunk(data.size(), chunk, [&](std::size_t start, std::span<const std::size_t> idx) {
    const Batch batch = make_batch(data, idx);
    Graph g;
    const Tensor& q = encode_question(g, bundle, batch).value();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = q.row(i);
      std::copy(src.begin(), src.end(), out.row(start + i).begin());
    }
  });
  return out;
}

ProbeReport qonly_probe(const ModelBundle& bundle, const Dataset& train,
                        const std::vector<const Dataset*>& evals, const ProbeConfig& config) {
  if (config.epochs == 0 || config.batch_size == 0 || config.hidden == 0)
    throw ConfigError("probe epochs, batch size and width must be positive");
  const Tensor encodings = question_encodings(bundle, train);
  Probe probe(encodings.cols(), config.hidden, bundle.dims().num_answers,
              mix_seed(config.seed, 0x70726f6265ULL));
  AdamState optimizer = AdamState::for_parameters(probe.params);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          start, std::min(config.batch_size, order.size() - start));
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train.records[i].answer);
      Graph g;
      Var loss = cross_entropy(log_softmax(probe.logits(g, g.input(gather_rows(encodings, idx)))),
                               labels);
      adam_step(probe.params, g.backward(loss, {Partition::kFQ}).parameters(), optimizer,
                config.learning_rate);
    }
  }
  ProbeReport report;
  report.train_accuracy = probe_accuracy(probe, encodings, train);
  for (const Dataset* eval : evals)
    report.eval_accuracy.push_back(probe_accuracy(probe, question_encodings(bundle, *eval), *eval));
  return report;
}

EnsembleReport ensembles(const Tensor& probs_a, const Tensor& probs_b,
                         std::span<const std::size_t> labels) {
  if (probs_a.shape() != probs_b.shape() || probs_a.rank() != 2 || probs_a.rows() != labels.size())
    throw ContractError("ensemble members " + shape_string(probs_a.shape()) + " and " +
                        shape_string(probs_b.shape()) + " do not match " +
                        std::to_string(labels.size()) + " labels");
  Tensor averaged = probs_a;
  averaged += probs_b;
  averaged.scale(0.5);
  const auto pa = argmax_rows(probs_a);
  const auto pb = argmax_rows(probs_b);
  const auto pm = argmax_rows(averaged);
  std::size_t a = 0, b = 0, oracle = 0, mean = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ca = pa[i] == labels[i];
    const bool cb = pb[i] == labels[i];
    a += ca;
    b += cb;
    oracle += ca || cb;
    mean += pm[i] == labels[i];
  }
  const double n = static_cast<double>(labels.size());
  return {a / n, b / n, oracle / n, mean / n};
}

RunResult run_experiment(const Dataset& train, const Dataset& test, const TrainConfig& config,
                         const std::optional<ProbeConfig>& probe, ModelBundle* trained) {
  ModelBundle bundle = ModelBundle::initialize(dims_for(train), init_seed_for(config.seed));
  const TrainTrace trace = advreg::train(bundle, train, config);
  RunResult result;
  result.train_accuracy = trace.epochs.empty() ? 0.0 : trace.epochs.back().train_accuracy;
  result.test_accuracy = evaluate(bundle, test).overall_accuracy;
  if (probe) {
    ProbeConfig pc = *probe;
    pc.seed = config.seed;
    result.probe = qonly_probe(bundle, train, {&test}, pc);
  }
  result.bundle_hash = bundle_hash(bundle);
  if (trained != nullptr) *trained = std::move(bundle);
  return result;
}

std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const std::vector<SweepPoint>& grid,
                                   const std::vector<std::uint64_t>& seeds, const Dataset& train,
                                   const Dataset& test, const std::optional<ProbeConfig>& probe,
                                   std::size_t jobs) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::vector<SweepRow> rows;
  for (const auto& point : grid)
    for (auto seed : seeds) rows.push_back(SweepRow{point.lambda_q, point.lambda_h, seed, 0.0, 0.0, 0.0, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SweepRow& row = rows[i];
      try {
        TrainConfig config = base;
        config.regularizer = {row.lambda_q, row.lambda_h};
        config.seed = row.seed;
        const RunResult r = run_experiment(train, test, config, probe);
        row.test_accuracy = r.test_accuracy;
        if (r.probe) {
          row.probe_train_accuracy = r.probe->train_accuracy;
          row.probe_test_accuracy = r.probe->eval_accuracy.at(0);
        } else {
          row.probe_train_accuracy = row.probe_test_accuracy = kNaN;
        }
      } catch (const std::exception& e) {
        row.error = e.what();
        row.test_accuracy = row.probe_train_accuracy = row.probe_test_accuracy = kNaN;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, rows.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "lambda_q,lambda_h,seed,test_accuracy,probe_train_accuracy,probe_test_accuracy,status\n";
  for (const auto& r : rows) {
    std::string status = r.error.empty() ? "ok" : "failed: " + r.error;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    out << format_double(r.lambda_q) << ',' << format_double(r.lambda_h) << ',' << r.seed << ','
        << format_double(r.test_accuracy) << ',' << format_double(r.probe_train_accuracy) << ','
        << format_double(r.probe_test_accuracy) << ',' << status << '\n';
  }
  return out.str();
}

}  // namespace advreg
