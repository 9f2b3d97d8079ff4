// SPDX-License-Identifier: Apache-2.0
#include "advreg/synthcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "advreg/errors.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {

constexpr std::uint64_t kSpecStream = 0x73706563;  // "spec"

std::uint64_t split_code(Split s) { return s == Split::kTrain ? 1 : 2; }

void check_prior(const std::vector<std::vector<double>>& rows, const WorldSpec& spec,
                 const char* which) {
  if (rows.size() != spec.num_types)
    throw ConfigError(std::string(which) + " has " + std::to_string(rows.size()) +
                      " rows, expected " + std::to_string(spec.num_types));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != spec.answers_per_type)
      throw ConfigError(std::string(which) + " row " + std::to_string(t) + " has " +
                        std::to_string(rows[t].size()) + " entries, expected " +
                        std::to_string(spec.answers_per_type));
    double total = 0.0;
    for (double p : rows[t]) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw ConfigError(std::string(which) + " row " + std::to_string(t) +
                          " has a negative or non-finite entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError(std::string(which) + " row " + std::to_string(t) + " sums to " +
                        std::to_string(total));
  }
}

std::size_t nearest_prototype(const Tensor& prototypes, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < prototypes.rows(); ++a) {
    auto p = prototypes.row(a);
    double d = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) d += (x[c] - p[c]) * (x[c] - p[c]);
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  return best;
}

}  // namespace

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw ConfigError("invalid split tag '" + std::string(name) + "' (expected train or test)");
}

double round_to_9_decimals(double x) { return std::nearbyint(x * 1e9) / 1e9; }

void WorldSpec::validate() const {
  if (num_types == 0 || answers_per_type == 0) throw ConfigError("need at least one type and answer");
  if (num_answers() < 2) throw ConfigError("need at least two answers in total");
  if (question_length == 0) throw ConfigError("question_length must be >= 1");
  if (feature_dim == 0) throw ConfigError("feature_dim must be >= 1");
  if (vocab_size < num_types + (question_length > 1 ? 1 : 0))
    throw ConfigError("vocab_size must cover the type tokens plus at least one distractor");
  if (!(grounding >= 0.0 && grounding <= 1.0)) throw ConfigError("grounding must lie in [0, 1]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
  check_prior(train_prior, *this, "train_prior");
  check_prior(test_prior, *this, "test_prior");
  if (prototypes.rank() != 2 || prototypes.rows() != num_answers() ||
      prototypes.cols() != feature_dim)
    throw ConfigError("prototypes must be [" + std::to_string(num_answers()) + "x" +
                      std::to_string(feature_dim) + "], got " + shape_string(prototypes.shape()));
  if (!prototypes.all_finite()) throw ConfigError("prototypes must be finite");
  for (std::size_t a = 0; a < num_answers(); ++a)
    for (std::size_t b = a + 1; b < num_answers(); ++b) {
      auto pa = prototypes.row(a);
      auto pb = prototypes.row(b);
      if (std::equal(pa.begin(), pa.end(), pb.begin()))
        throw ConfigError("prototypes " + std::to_string(a) + " and " + std::to_string(b) +
                          " coincide");
    }
}

WorldSpec default_cp_spec(std::uint64_t seed) {
  WorldSpec spec;
  spec.seed = seed;
  Rng rng(mix_seed(seed, kSpecStream));
  const std::size_t m = spec.answers_per_type;
  for (std::size_t t = 0; t < spec.num_types; ++t) {
    const std::size_t majority = rng.below(m);
    std::vector<double> train(m, 0.045);
    train[majority] = 0.82;
    std::vector<double> test(m);
    for (std::size_t k = 0; k < m; ++k) test[(k + 1) % m] = train[k];
    spec.train_prior.push_back(std::move(train));
    spec.test_prior.push_back(std::move(test));
  }
  spec.prototypes = Tensor({spec.num_answers(), spec.feature_dim});
  for (double& v : spec.prototypes.values()) v = round_to_9_decimals(rng.normal());
  spec.validate();
  return spec;
}

Dataset generate_split(const WorldSpec& spec, Split split, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  Dataset data;
  data.split = split;
  data.seed = seed;
  data.spec_hash = spec_hash(spec);
  data.num_types = spec.num_types;
  data.num_answers = spec.num_answers();
  data.vocab_size = spec.vocab_size;
  data.feature_dim = spec.feature_dim;
  data.records.resize(n);

  const auto& prior = spec.prior(split);
  const std::uint64_t base = mix_seed(seed, split_code(split));
  const std::size_t distractors = spec.vocab_size - spec.num_types;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(base, i));
    Record& rec = data.records[i];
    rec.type = static_cast<std::uint32_t>(rng.below(spec.num_types));
    const std::size_t slot = rng.categorical(prior[rec.type]);
    rec.answer = static_cast<std::uint32_t>(rec.type * spec.answers_per_type + slot);
    rec.tokens.reserve(spec.question_length);
    rec.tokens.push_back(rec.type);
    for (std::size_t k = 1; k < spec.question_length; ++k)
      rec.tokens.push_back(static_cast<std::uint32_t>(spec.num_types + rng.below(distractors)));
    const std::size_t source =
        rng.uniform() < spec.grounding ? rec.answer : rng.below(spec.num_answers());
    auto proto = spec.prototypes.row(source);
    rec.features.resize(spec.feature_dim);
    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
      const double noise = spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0;
      rec.features[c] = round_to_9_decimals(proto[c] + noise);
    }
  }
  return data;
}

double bayes_qonly_accuracy(const WorldSpec& spec, Split eval_split, Split train_split) {
  const auto& fit = spec.prior(train_split);
  const auto& eval = spec.prior(eval_split);
  double total = 0.0;
  for (std::size_t t = 0; t < spec.num_types; ++t) {
    const auto& row = fit[t];
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    total += eval[t][best];
  }
  return total / static_cast<double>(spec.num_types);
}

double bayes_grounded_accuracy(const WorldSpec& spec, Split split, std::size_t samples,
                               std::uint64_t oracle_seed) {
  spec.validate();
  const double answers = static_cast<double>(spec.num_answers());
  if (spec.noise == 0.0) return spec.grounding + (1.0 - spec.grounding) / answers;
  if (samples == 0) throw ContractError("bayes_grounded_accuracy needs samples > 0");

  Rng rng(mix_seed(oracle_seed, split_code(split)));
  const auto& prior = spec.prior(split);
  std::vector<double> x(spec.feature_dim);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t t = rng.below(spec.num_types);
    const std::size_t a = t * spec.answers_per_type + rng.categorical(prior[t]);
    const std::size_t source = rng.uniform() < spec.grounding ? a : rng.below(spec.num_answers());
    auto proto = spec.prototypes.row(source);
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = proto[c] + spec.noise * rng.normal();
    if (nearest_prototype(spec.prototypes, x) == a) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples);
}

ModelDims dims_for(const WorldSpec& spec) {
  ModelDims dims;
  dims.vocab_size = spec.vocab_size;
  dims.feature_dim = spec.feature_dim;
  dims.num_answers = spec.num_answers();
  return dims;
}

ModelDims dims_for(const Dataset& data) {
  ModelDims dims;
  dims.vocab_size = data.vocab_size;
  dims.feature_dim = data.feature_dim;
  dims.num_answers = data.num_answers;
  return dims;
}

void check_compatible(const ModelDims& dims, const Dataset& data) {
  std::string problems;
  auto check = [&](const char* what, std::size_t model, std::size_t file) {
    if (model != file)
      problems += std::string(problems.empty() ? "" : "; ") + what + ": model " +
                  std::to_string(model) + " vs data " + std::to_string(file);
  };
  check("vocab_size", dims.vocab_size, data.vocab_size);
  check("feature_dim", dims.feature_dim, data.feature_dim);
  check("num_answers", dims.num_answers, data.num_answers);
  if (!problems.empty()) throw ShapeError("incompatible model and dataset (" + problems + ")");
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch batch;
  if (indices.empty()) return batch;
  batch.features = Tensor({indices.size(), data.feature_dim});
  batch.answers.reserve(indices.size());
  batch.types.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Record& rec = data.records.at(indices[i]);
    if (rec.features.size() != data.feature_dim)
      throw ShapeError("record " + std::to_string(indices[i]) + " has " +
                       std::to_string(rec.features.size()) + " features, expected " +
                       std::to_string(data.feature_dim));
    if (rec.tokens.empty()) throw ShapeError("record " + std::to_string(indices[i]) + " has no tokens");
    batch.tokens.insert(batch.tokens.end(), rec.tokens.begin(), rec.tokens.end());
    batch.offsets.push_back(batch.tokens.size());
    std::copy(rec.features.begin(), rec.features.end(), batch.features.row(i).begin());
    batch.answers.push_back(rec.answer);
    batch.types.push_back(rec.type);
  }
  return batch;
}

Batch make_batch(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(data, all);
}

}  // namespace advreg
