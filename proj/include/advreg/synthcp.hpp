// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advreg/models.hpp"
#include "advreg/tensor.hpp"

namespace advreg {

enum class Split { kTrain, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

/// Generative tables of the synthetic changing-priors world.
///
/// Answers are disjoint across question types: answer index = type * m + slot.
/// Vocabulary ids [0, T) are type-indicator tokens, [T, V) are distractors.
struct WorldSpec {
  std::size_t num_types = 8;         // T
  std::size_t answers_per_type = 5;  // m
  std::size_t vocab_size = 64;       // V
  std::size_t question_length = 6;   // L
  std::size_t feature_dim = 16;      // r
  double grounding = 0.95;           // beta
  double noise = 0.25;               // sigma
  std::uint64_t seed = 0;            // seed the tables were drawn from
  std::vector<std::vector<double>> train_prior;  // T x m, P_train(slot | type)
  std::vector<std::vector<double>> test_prior;   // T x m
  Tensor prototypes;                             // |A| x r

  std::size_t num_answers() const { return num_types * answers_per_type; }
  const std::vector<std::vector<double>>& prior(Split split) const {
    return split == Split::kTrain ? train_prior : test_prior;
  }
  void validate() const;
};

/// The canonical benchmark: T=8, m=5, V=64, L=6, r=16, beta=0.95, sigma=0.25.
/// Each type gets a seeded majority slot with train mass 0.82 (0.045 on the
/// others); the test row is the train row rotated by one slot, so the train
/// majority carries minority mass at test time.
WorldSpec default_cp_spec(std::uint64_t seed);

struct Record {
  std::uint32_t type = 0;
  std::vector<std::uint32_t> tokens;
  std::vector<double> features;
  std::uint32_t answer = 0;
};

struct Dataset {
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::size_t num_types = 0;
  std::size_t num_answers = 0;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
};

/// Draws n records. Each record uses its own stream derived from
/// (seed, split, index); features are rounded to 9 decimals so that the file
/// form reproduces them exactly.
Dataset generate_split(const WorldSpec& spec, Split split, std::size_t n, std::uint64_t seed);

/// Exact accuracy on `eval_split` of answering argmax_a P_train(a | type).
double bayes_qonly_accuracy(const WorldSpec& spec, Split eval_split, Split train_split);

/// Accuracy of nearest-prototype classification of image features. Closed
/// form beta + (1 - beta) / |A| at sigma = 0, otherwise Monte Carlo on an
/// oracle stream that is independent of any dataset stream.
double bayes_grounded_accuracy(const WorldSpec& spec, Split split,
                               std::size_t samples = 100000,
                               std::uint64_t oracle_seed = 0x6f7261636c65ULL);

/// Model dimensions compatible with the world (vocab, features, answers).
ModelDims dims_for(const WorldSpec& spec);
/// Default model sizes with the input and output widths of `data`.
ModelDims dims_for(const Dataset& data);
/// Checks that a bundle can consume this dataset; throws ShapeError naming
/// the mismatching dimensions.
void check_compatible(const ModelDims& dims, const Dataset& data);

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data);

double round_to_9_decimals(double x);

// ---------------------------------------------------------------------------
// File formats.

/// Key-value text, one field per line ("key = value"), '#' comments.
std::string spec_to_text(const WorldSpec& spec);
WorldSpec spec_from_text(std::string_view text);
/// Fingerprint of the canonical spec text.
std::string spec_hash(const WorldSpec& spec);
void write_spec(const WorldSpec& spec, const std::filesystem::path& path);
WorldSpec read_spec(const std::filesystem::path& path);

/// JSON lines: a header object, then one object per record.
std::string dataset_to_text(const Dataset& data);
Dataset dataset_from_text(std::string_view text);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace advreg
