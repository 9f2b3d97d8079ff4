// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests. Nothing here uses the autodiff engine:
// the finite-difference gradients and the straight-line loss code are the
// independent references the engine is checked against.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "advreg/models.hpp"
#include "advreg/rng.hpp"
#include "advreg/synthcp.hpp"
#include "advreg/tensor.hpp"

namespace advreg::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Central differences of a scalar function of `x`, perturbing x in place.
inline Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h = 1e-5) {
  Tensor grad = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||), with a small floor so that two tiny
/// gradients compare absolutely.
inline double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

inline ModelDims small_dims() {
  ModelDims d;
  d.vocab_size = 11;
  d.embed_dim = 4;
  d.question_dim = 5;
  d.feature_dim = 3;
  d.image_dim = 4;
  d.fusion_hidden = 6;
  d.adversary_hidden = 7;
  d.num_answers = 6;
  return d;
}

/// Random batch with question lengths between 1 and 4.
inline Batch random_batch(const ModelDims& dims, std::size_t n, Rng& rng) {
  Batch b;
  b.features = random_tensor({n, dims.feature_dim}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng.below(4);
    for (std::size_t k = 0; k < len; ++k)
      b.tokens.push_back(static_cast<std::uint32_t>(rng.below(dims.vocab_size)));
    b.offsets.push_back(b.tokens.size());
    b.answers.push_back(rng.below(dims.num_answers));
    b.types.push_back(0);
  }
  return b;
}

/// Bundle with every parameter (biases too) drawn uniformly from [-1, 1].
inline ModelBundle random_bundle(const ModelDims& dims, std::uint64_t seed) {
  ModelBundle b = ModelBundle::zeros(dims);
  Rng rng(seed);
  for (auto& p : b.parameters())
    for (double& v : p.value.values()) v = rng.uniform(-1.0, 1.0);
  return b;
}

// --- straight-line reference forward pass -------------------------------------

using Matrix = std::vector<std::vector<double>>;

inline Matrix dense_ref(const Matrix& x, const Tensor& w, const Tensor& b, bool relu) {
  Matrix out(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < w.rows(); ++k) s += x[i][k] * w.at(k, j);
      out[i][j] = relu ? std::max(s, 0.0) : s;
    }
  return out;
}

struct ReferenceForward {
  Matrix q, v, logits, qonly_logits;
};

inline ReferenceForward reference_forward(const ModelBundle& m, const Batch& b) {
  ReferenceForward r;
  const Tensor& emb = m.parameter("g.embedding").value;
  Matrix pooled(b.size(), std::vector<double>(emb.cols(), 0.0));
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double count = static_cast<double>(b.offsets[i + 1] - b.offsets[i]);
    for (std::size_t t = b.offsets[i]; t < b.offsets[i + 1]; ++t)
      for (std::size_t c = 0; c < emb.cols(); ++c) pooled[i][c] += emb.at(b.tokens[t], c) / count;
  }
  r.q = dense_ref(pooled, m.parameter("g.proj.weight").value, m.parameter("g.proj.bias").value, true);
  Matrix feats(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto row = b.features.row(i);
    feats[i].assign(row.begin(), row.end());
  }
  r.v = dense_ref(feats, m.parameter("h.weight").value, m.parameter("h.bias").value, false);
  Matrix joint(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    joint[i] = r.v[i];
    joint[i].insert(joint[i].end(), r.q[i].begin(), r.q[i].end());
  }
  const Matrix hidden =
      dense_ref(joint, m.parameter("f.hidden.weight").value, m.parameter("f.hidden.bias").value, true);
  r.logits = dense_ref(hidden, m.parameter("f.out.weight").value, m.parameter("f.out.bias").value, false);
  const Matrix qh =
      dense_ref(r.q, m.parameter("fq.hidden.weight").value, m.parameter("fq.hidden.bias").value, true);
  r.qonly_logits =
      dense_ref(qh, m.parameter("fq.out.weight").value, m.parameter("fq.out.bias").value, false);
  return r;
}

inline std::vector<double> softmax_ref(const std::vector<double>& z) {
  const double peak = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp(z[i] - peak);
  for (double& x : p) x /= total;
  return p;
}

inline double entropy_ref(const std::vector<double>& z) {
  double h = 0.0;
  for (double p : softmax_ref(z))
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

struct ReferenceLosses {
  double l_vqa = 0.0, l_qa = 0.0, h_qonly = 0.0, h_vqa = 0.0;
  double l_h() const { return h_qonly - h_vqa; }
};

inline ReferenceLosses reference_losses(const ModelBundle& m, const Batch& b) {
  const ReferenceForward r = reference_forward(m, b);
  ReferenceLosses out;
  const double n = static_cast<double>(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    out.l_vqa -= std::log(softmax_ref(r.logits[i])[b.answers[i]]) / n;
    out.l_qa -= std::log(softmax_ref(r.qonly_logits[i])[b.answers[i]]) / n;
    out.h_vqa += entropy_ref(r.logits[i]) / n;
    out.h_qonly += entropy_ref(r.qonly_logits[i]) / n;
  }
  return out;
}

/// Small hand-specified world for fast end-to-end tests.
inline WorldSpec tiny_world(double grounding, double noise, std::uint64_t seed = 3) {
  WorldSpec spec = default_cp_spec(seed);
  spec.grounding = grounding;
  spec.noise = noise;
  return spec;
}

/// One question type with the given train and test priors over its answers.
inline WorldSpec one_type_world(std::vector<double> train, std::vector<double> test) {
  WorldSpec spec = default_cp_spec(0);
  spec.num_types = 1;
  spec.answers_per_type = train.size();
  spec.train_prior = {std::move(train)};
  spec.test_prior = {std::move(test)};
  Tensor protos({spec.num_answers(), spec.feature_dim});
  for (std::size_t a = 0; a < spec.num_answers(); ++a)
    for (std::size_t c = 0; c < spec.feature_dim; ++c) protos.at(a, c) = spec.prototypes.at(a, c);
  spec.prototypes = protos;
  return spec;
}

}  // namespace advreg::testing
