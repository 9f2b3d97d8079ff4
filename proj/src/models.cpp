// SPDX-License-Identifier: Apache-2.0
#include "advreg/models.hpp"

#include <cmath>
#include <set>

#include "advreg/errors.hpp"
#include "advreg/rng.hpp"

namespace advreg {

namespace {

struct Slot {
  const char* name;
  Partition partition;
  int stream;  // init stream: 0 = g, 1 = h, 2 = f, 3 = f_Q
};

Parameter make(std::string name, Partition p, Shape shape) {
  return Parameter{std::move(name), p, Tensor(std::move(shape))};
}

void glorot(Tensor& w, Rng& rng) {
  const double fan_in = static_cast<double>(w.rows());
  const double fan_out = static_cast<double>(w.cols());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w.values()) v = rng.uniform(-a, a);
}

int stream_of(Partition p) {
  switch (p) {
    case Partition::kG: return 0;
    case Partition::kH: return 1;
    case Partition::kF: return 2;
    default: return 3;
  }
}

Var dense(Graph& graph, Var x, const Parameter& w, const Parameter& b) {
  return add_bias(matmul(x, graph.parameter(w)), graph.parameter(b));
}

}  // namespace

void ModelDims::validate() const {
  const std::size_t all[] = {vocab_size, embed_dim,        question_dim, feature_dim,
                             image_dim,  fusion_hidden,    adversary_hidden, num_answers};
  for (auto d : all)
    if (d == 0) throw ConfigError("model dimensions must be positive");
  if (num_answers < 2) throw ConfigError("need at least two answers");
}

std::vector<Parameter> parameter_layout(const ModelDims& d) {
  using P = Partition;
  return {
      make("g.embedding", P::kG, {d.vocab_size, d.embed_dim}),
      make("g.proj.weight", P::kG, {d.embed_dim, d.question_dim}),
      make("g.proj.bias", P::kG, {d.question_dim}),
      make("h.weight", P::kH, {d.feature_dim, d.image_dim}),
      make("h.bias", P::kH, {d.image_dim}),
      make("f.hidden.weight", P::kF, {d.image_dim + d.question_dim, d.fusion_hidden}),
      make("f.hidden.bias", P::kF, {d.fusion_hidden}),
      make("f.out.weight", P::kF, {d.fusion_hidden, d.num_answers}),
      make("f.out.bias", P::kF, {d.num_answers}),
      make("fq.hidden.weight", P::kFQ, {d.question_dim, d.adversary_hidden}),
      make("fq.hidden.bias", P::kFQ, {d.adversary_hidden}),
      make("fq.out.weight", P::kFQ, {d.adversary_hidden, d.num_answers}),
      make("fq.out.bias", P::kFQ, {d.num_answers}),
  };
}

ModelBundle ModelBundle::zeros(const ModelDims& dims) {
  dims.validate();
  return ModelBundle(dims, parameter_layout(dims));
}

ModelBundle ModelBundle::initialize(const ModelDims& dims, std::uint64_t seed) {
  ModelBundle bundle = zeros(dims);
  std::vector<Rng> streams;
  for (std::uint64_t s = 0; s < 4; ++s) streams.emplace_back(mix_seed(seed, s));
  for (auto& p : bundle.params_)
    if (p.value.rank() == 2) glorot(p.value, streams[stream_of(p.partition)]);
  return bundle;
}

ModelBundle ModelBundle::from_parameters(std::vector<Parameter> params) {
  auto find = [&](std::string_view name) -> const Parameter& {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw ParseError("missing parameter '" + std::string(name) + "'");
  };
  ModelDims dims;
  const auto& emb = find("g.embedding").value;
  const auto& h = find("h.weight").value;
  const auto& f_out = find("f.out.weight").value;
  const auto& fq_hidden = find("fq.hidden.weight").value;
  if (emb.rank() != 2 || h.rank() != 2 || f_out.rank() != 2 || fq_hidden.rank() != 2)
    throw ParseError("weight parameters must be matrices");
  dims.vocab_size = emb.rows();
  dims.embed_dim = emb.cols();
  dims.question_dim = fq_hidden.rows();
  dims.adversary_hidden = fq_hidden.cols();
  dims.feature_dim = h.rows();
  dims.image_dim = h.cols();
  dims.fusion_hidden = f_out.rows();
  dims.num_answers = f_out.cols();
  dims.validate();

  ModelBundle bundle(dims, std::move(params));
  bundle.validate();
  return bundle;
}

void ModelBundle::validate() const {
  const auto layout = parameter_layout(dims_);
  if (layout.size() != params_.size())
    throw ContractError("bundle has " + std::to_string(params_.size()) + " parameters, expected " +
                        std::to_string(layout.size()));
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (!seen.insert(p.name).second) throw ContractError("parameter '" + p.name + "' appears twice");
    if (p.partition == Partition::kData)
      throw ContractError("parameter '" + p.name + "' carries the DATA tag");
  }
  for (const auto& expected : layout) {
    const Parameter& p = parameter(expected.name);
    if (p.partition != expected.partition)
      throw ContractError("parameter '" + p.name + "' tagged " +
                          std::string(partition_name(p.partition)) + ", expected " +
                          std::string(partition_name(expected.partition)));
    if (p.value.shape() != expected.value.shape())
      throw ShapeError("parameter '" + p.name + "' has shape " + shape_string(p.value.shape()) +
                       ", expected " + shape_string(expected.value.shape()));
  }
}

const Parameter& ModelBundle::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

Parameter& ModelBundle::parameter(std::string_view name) {
  return const_cast<Parameter&>(std::as_const(*this).parameter(name));
}

Var encode_question(Graph& graph, const ModelBundle& bundle, const Batch& batch) {
  if (batch.offsets.size() != batch.size() + 1)
    throw ShapeError("batch offsets do not match " + std::to_string(batch.size()) + " examples");
  Var embedded = embedding_lookup(graph.parameter(bundle.parameter("g.embedding")), batch.tokens);
  Var pooled = mean_pool(embedded, batch.offsets);
  return relu(dense(graph, pooled, bundle.parameter("g.proj.weight"),
                    bundle.parameter("g.proj.bias")));
}

VqaForward forward_vqa(Graph& graph, const ModelBundle& bundle, const Batch& batch) {
  if (batch.size() == 0) throw ContractError("empty batch");
  const auto& dims = bundle.dims();
  if (batch.features.rank() != 2 || batch.features.rows() != batch.size() ||
      batch.features.cols() != dims.feature_dim)
    throw ShapeError("image features " + shape_string(batch.features.shape()) + " do not match [" +
                     std::to_string(batch.size()) + "x" + std::to_string(dims.feature_dim) + "]");
  Var q = encode_question(graph, bundle, batch);
  Var v = dense(graph, graph.input(batch.features), bundle.parameter("h.weight"),
                bundle.parameter("h.bias"));
  Var hidden = relu(dense(graph, concat_cols(v, q), bundle.parameter("f.hidden.weight"),
                          bundle.parameter("f.hidden.bias")));
  Var logits =
      dense(graph, hidden, bundle.parameter("f.out.weight"), bundle.parameter("f.out.bias"));
  return {q, v, logits};
}

Var adversary_logits(Graph& graph, const ModelBundle& bundle, Var q) {
  Var hidden = relu(dense(graph, q, bundle.parameter("fq.hidden.weight"),
                          bundle.parameter("fq.hidden.bias")));
  return dense(graph, hidden, bundle.parameter("fq.out.weight"), bundle.parameter("fq.out.bias"));
}

Var forward_qonly(Graph& graph, const ModelBundle& bundle, Var q, double lambda_q) {
  return adversary_logits(graph, bundle, grad_reverse(q, lambda_q));
}

}  // namespace advreg
