// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "advreg/errors.hpp"
#include "advreg/hash.hpp"
#include "advreg/kvtext.hpp"
#include "advreg/synthcp.hpp"

namespace advreg {

namespace {

constexpr const char* kSpecFormat = "advreg-worldspec/1";
constexpr const char* kDatasetFormat = "advreg-dataset/1";

std::string join(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::string indexed(const char* base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

}  // namespace

std::string spec_to_text(const WorldSpec& spec) {
  std::ostringstream out;
  out << "# synthetic changing-priors world\n";
  out << "format = " << kSpecFormat << '\n';
  out << "num_types = " << spec.num_types << '\n';
  out << "answers_per_type = " << spec.answers_per_type << '\n';
  out << "vocab_size = " << spec.vocab_size << '\n';
  out << "question_length = " << spec.question_length << '\n';
  out << "feature_dim = " << spec.feature_dim << '\n';
  out << "grounding = " << format_double(spec.grounding) << '\n';
  out << "noise = " << format_double(spec.noise) << '\n';
  out << "seed = " << spec.seed << '\n';
  for (std::size_t t = 0; t < spec.train_prior.size(); ++t)
    out << indexed("train_prior", t) << " = " << join(spec.train_prior[t]) << '\n';
  for (std::size_t t = 0; t < spec.test_prior.size(); ++t)
    out << indexed("test_prior", t) << " = " << join(spec.test_prior[t]) << '\n';
  for (std::size_t a = 0; a < spec.prototypes.rows(); ++a)
    out << indexed("prototype", a) << " = " << join(spec.prototypes.row(a)) << '\n';
  return out.str();
}

WorldSpec spec_from_text(std::string_view text) {
  const auto kv = KeyValueText::parse(text, "spec");
  kv.reject_unknown({"format", "num_types", "answers_per_type", "vocab_size", "question_length",
                     "feature_dim", "grounding", "noise", "seed", "train_prior[", "test_prior[",
                     "prototype["});
  if (kv.get_string("format") != kSpecFormat)
    throw ParseError("spec:" + std::to_string(kv.line_of("format")) + ": unsupported format '" +
                     kv.get_string("format") + "'");
  WorldSpec spec;
  spec.num_types = kv.get_uint("num_types");
  spec.answers_per_type = kv.get_uint("answers_per_type");
  spec.vocab_size = kv.get_uint("vocab_size");
  spec.question_length = kv.get_uint("question_length");
  spec.feature_dim = kv.get_uint("feature_dim");
  spec.grounding = kv.get_double("grounding");
  spec.noise = kv.get_double("noise");
  spec.seed = kv.get_uint("seed");
  if (spec.num_types == 0 || spec.answers_per_type == 0 || spec.feature_dim == 0)
    throw ParseError("spec: num_types, answers_per_type and feature_dim must be positive");
  for (std::size_t t = 0; t < spec.num_types; ++t) {
    spec.train_prior.push_back(kv.get_doubles(indexed("train_prior", t)));
    spec.test_prior.push_back(kv.get_doubles(indexed("test_prior", t)));
  }
  std::vector<double> protos;
  for (std::size_t a = 0; a < spec.num_answers(); ++a) {
    const auto key = indexed("prototype", a);
    auto row = kv.get_doubles(key);
    if (row.size() != spec.feature_dim)
      throw ParseError("spec:" + std::to_string(kv.line_of(key)) + ": field '" + key + "' has " +
                       std::to_string(row.size()) + " values, expected " +
                       std::to_string(spec.feature_dim));
    protos.insert(protos.end(), row.begin(), row.end());
  }
  // Reject stray indexed rows beyond the declared sizes.
  const std::size_t expected = 9 + 2 * spec.num_types + spec.num_answers();
  if (kv.keys().size() != expected)
    throw ParseError("spec: expected " + std::to_string(expected) + " fields, found " +
                     std::to_string(kv.keys().size()));
  spec.prototypes = Tensor({spec.num_answers(), spec.feature_dim}, std::move(protos));
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("spec: ") + e.what());
  }
  return spec;
}

std::string spec_hash(const WorldSpec& spec) { return hex64(fnv1a64(spec_to_text(spec))); }

void write_spec(const WorldSpec& spec, const std::filesystem::path& path) {
  write_file_atomic(path, spec_to_text(spec));
}

WorldSpec read_spec(const std::filesystem::path& path) { return spec_from_text(read_file(path)); }

std::string dataset_to_text(const Dataset& data) {
  std::string out;
  nlohmann::ordered_json header;
  header["format"] = kDatasetFormat;
  header["spec_hash"] = data.spec_hash;
  header["split"] = std::string(split_name(data.split));
  header["seed"] = data.seed;
  header["count"] = data.records.size();
  header["num_types"] = data.num_types;
  header["num_answers"] = data.num_answers;
  header["vocab_size"] = data.vocab_size;
  header["feature_dim"] = data.feature_dim;
  out += header.dump();
  out += '\n';
  char buf[40];
  for (const auto& rec : data.records) {
    out += "{\"type\":" + std::to_string(rec.type) + ",\"tokens\":[";
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(rec.tokens[i]);
    }
    out += "],\"features\":[";
    for (std::size_t i = 0; i < rec.features.size(); ++i) {
      if (i) out += ',';
      std::snprintf(buf, sizeof buf, "%.9f", rec.features[i]);
      out += buf;
    }
    out += "],\"answer\":" + std::to_string(rec.answer) + "}\n";
  }
  return out;
}

Dataset dataset_from_text(std::string_view text) {
  Dataset data;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      if (line_no == 1) {
        if (obj.at("format").get<std::string>() != kDatasetFormat)
          throw ParseError("dataset:1: unsupported format");
        data.spec_hash = obj.at("spec_hash").get<std::string>();
        data.split = parse_split(obj.at("split").get<std::string>());
        data.seed = obj.at("seed").get<std::uint64_t>();
        expected = obj.at("count").get<std::size_t>();
        data.num_types = obj.at("num_types").get<std::size_t>();
        data.num_answers = obj.at("num_answers").get<std::size_t>();
        data.vocab_size = obj.at("vocab_size").get<std::size_t>();
        data.feature_dim = obj.at("feature_dim").get<std::size_t>();
        data.records.reserve(expected);
        continue;
      }
      Record rec;
      rec.type = obj.at("type").get<std::uint32_t>();
      rec.tokens = obj.at("tokens").get<std::vector<std::uint32_t>>();
      rec.features = obj.at("features").get<std::vector<double>>();
      rec.answer = obj.at("answer").get<std::uint32_t>();
      data.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset:" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ParseError("dataset:" + std::to_string(line_no) + ": " + e.what());
    }
    const Record& rec = data.records.back();
    if (rec.type >= data.num_types || rec.answer >= data.num_answers ||
        rec.features.size() != data.feature_dim || rec.tokens.empty())
      throw ParseError("dataset:" + std::to_string(line_no) + ": record inconsistent with header");
    for (auto tok : rec.tokens)
      if (tok >= data.vocab_size)
        throw ParseError("dataset:" + std::to_string(line_no) + ": token outside vocabulary");
  }
  if (line_no == 0) throw ParseError("dataset: empty file");
  if (data.records.size() != expected)
    throw ParseError("dataset: header announces " + std::to_string(expected) + " records, found " +
                     std::to_string(data.records.size()));
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_text(data));
}

Dataset read_dataset(const std::filesystem::path& path) {
  return dataset_from_text(read_file(path));
}

}  // namespace advreg
