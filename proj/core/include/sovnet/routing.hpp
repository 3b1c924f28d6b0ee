#pragma once

// Routing-by-agreement: the generic weighted-summation pipeline (predict ->
// weights -> aggregate -> squash) with pluggable weight/agreement rules, and
// degree-centrality routing as its concrete instantiation. Degree routing is
// non-iterative: the weights are the softmaxed row sums of the cosine
// affinity matrix between predictions for the same target capsule.

#include <memory>
#include <vector>

#include "sovnet/gconv.hpp"
#include "sovnet/tensor.hpp"

namespace sovnet {

inline constexpr double kNormEps = 1e-12;    // inside sqrt; keeps two_norm differentiable at 0
inline constexpr double kCosineEps = 1e-8;   // floor on cosine denominators

// Norm-bounding nonlinearity along `pose_axis`:
//   v -> (|v| / (1 + |v|^2)) v, output norm = |v|^2/(1+|v|^2) in [0,1).
template <typename T>
Tensor<T> squash(const Tensor<T>& v, int pose_axis = 0, T eps = T(kNormEps)) {
  Tensor<T> n2 = reduce_sum(square(v), {pose_axis}, /*keep=*/true);
  Tensor<T> norm = two_norm(v, pose_axis, eps, /*keep=*/true);
  return mul(v, div(norm, n2 + T(1)));
}

// DegreeScore of Algorithm-style degree routing, over a whole grid at once.
// `predictions` holds N tensors shaped (d, ...); the result is (N, ...):
// softmax over the prediction index of the cosine-affinity row sums
// (self-affinity included). Denominators are floored at eps so a zero-norm
// prediction contributes affinity 0 instead of NaN; above the floor the
// cosine is exactly scale-free.
template <typename T>
Tensor<T> degree_weights(const std::vector<Tensor<T>>& predictions, T eps = T(kCosineEps)) {
  if (predictions.empty()) throw ShapeMismatch("degree_weights: no predictions");
  const std::size_t n = predictions.size();
  std::vector<Tensor<T>> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = two_norm(predictions[i], 0, T(0), /*keep=*/false);
  std::vector<Tensor<T>> degrees(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<T> acc;
    for (std::size_t k = 0; k < n; ++k) {
      Tensor<T> dot = reduce_sum(mul(predictions[i], predictions[k]), {0}, /*keep=*/false);
      Tensor<T> affinity = div(dot, clamp_min(mul(norms[i], norms[k]), eps));
      acc = acc.defined() ? add(acc, affinity) : affinity;
    }
    degrees[i] = acc;
  }
  return softmax(stack0(degrees), 0);
}

// f_j(g) = sum_i c_ij(g) S_ij(g). weights (N, ...), predictions N x (d, ...).
template <typename T>
Tensor<T> aggregate(const std::vector<Tensor<T>>& predictions, const Tensor<T>& weights) {
  if (weights.shape().empty() || weights.shape()[0] != predictions.size())
    throw ShapeMismatch("aggregate: weights/predictions mismatch");
  Tensor<T> acc;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    Tensor<T> term = mul(predictions[i], index0(weights, i));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Pluggable rules (Algorithm-1 seam)

template <typename T>
struct WeightRule {
  virtual ~WeightRule() = default;
  // predictions: N tensors (d, ...); returns (N, ...) on the simplex along axis 0.
  virtual Tensor<T> get_weights(const std::vector<Tensor<T>>& predictions) const = 0;
};

template <typename T>
struct AgreementRule {
  virtual ~AgreementRule() = default;
  // Activation field (...) for the aggregated capsule.
  virtual Tensor<T> agreement(const Tensor<T>& aggregated, const std::vector<Tensor<T>>& predictions) const = 0;
};

template <typename T>
struct DegreeWeightRule final : WeightRule<T> {
  T eps = T(kCosineEps);
  Tensor<T> get_weights(const std::vector<Tensor<T>>& predictions) const override {
    return degree_weights(predictions, eps);
  }
};

template <typename T>
struct UniformWeightRule final : WeightRule<T> {
  Tensor<T> get_weights(const std::vector<Tensor<T>>& predictions) const override {
    Shape s = predictions[0].shape();
    Shape out;
    out.push_back(predictions.size());
    out.insert(out.end(), s.begin() + 1, s.end());
    return Tensor<T>::full(out, T(1) / T(predictions.size()));
  }
};

// Activation by pose two-norm (capsule activation is its two-norm).
template <typename T>
struct NormAgreement final : AgreementRule<T> {
  Tensor<T> agreement(const Tensor<T>& aggregated, const std::vector<Tensor<T>>&) const override {
    return two_norm(aggregated, 0, T(kNormEps), /*keep=*/false);
  }
};

// Reference rule, not from any routing scheme in particular: mean cosine
// between the aggregate and each prediction, mapped to [0,1].
template <typename T>
struct CosineMeanAgreement final : AgreementRule<T> {
  T eps = T(kCosineEps);
  Tensor<T> agreement(const Tensor<T>& aggregated, const std::vector<Tensor<T>>& predictions) const override {
    Tensor<T> na = two_norm(aggregated, 0, T(0), /*keep=*/false);
    Tensor<T> acc;
    for (const auto& p : predictions) {
      Tensor<T> dot = reduce_sum(mul(aggregated, p), {0}, false);
      Tensor<T> np = two_norm(p, 0, T(0), false);
      Tensor<T> cosv = div(dot, clamp_min(mul(na, np), eps));
      acc = acc.defined() ? add(acc, cosv) : cosv;
    }
    return (acc * (T(1) / T(predictions.size())) + T(1)) * T(0.5);
  }
};

// ---------------------------------------------------------------------------
// Layer-level routing

// Per-layer trainable state: one prediction block per output capsule type.
// Every input type is pushed through the same block of its output type, so
// the parameter count scales with N_{l+1}, not N_l * N_{l+1}.
template <typename T>
struct RoutingLayer {
  std::vector<ResidualBlock<T>> blocks;  // size N_{l+1}

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> ps;
    for (auto& b : blocks)
      for (auto* p : b.parameters()) ps.push_back(p);
    return ps;
  }
};

template <typename T>
struct RoutingResult {
  std::vector<Tensor<T>> fields;       // per output type j: (d_out, S, H', W'), squashed
  std::vector<Tensor<T>> weights;      // per output type j: (N_in, S, H', W')
  std::vector<Tensor<T>> activations;  // per output type j: (S, H', W')
};

// Prediction stack S_ij = Psi_j(f_i) for one output type j.
template <typename T>
std::vector<Tensor<T>> predict(const std::vector<Tensor<T>>& inputs, const ResidualBlock<T>& block,
                               const GroupGrid& grid) {
  std::vector<Tensor<T>> preds;
  preds.reserve(inputs.size());
  for (const auto& f : inputs) preds.push_back(residual_block(f, block, grid));
  return preds;
}

template <typename T>
void check_simplex(const Tensor<T>& weights, T tol) {
  const auto& v = weights.values();
  std::size_t n = weights.shape()[0];
  std::size_t block = weights.size() / n;
  for (std::size_t j = 0; j < block; ++j) {
    T sum = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      T w = v[i * block + j];
      if (w < T(0)) throw RuleContractViolation("routing weight below zero");
      sum += w;
    }
    if (std::abs(sum - T(1)) > tol) throw RuleContractViolation("routing weights leave the simplex");
  }
}

template <typename T>
RoutingResult<T> route_general(const std::vector<Tensor<T>>& inputs, const RoutingLayer<T>& layer,
                               const GroupGrid& grid, const WeightRule<T>& weight_rule,
                               const AgreementRule<T>& agreement_rule, T simplex_tol = T(1e-6)) {
  if (inputs.empty()) throw ShapeMismatch("route_general: no input capsule types");
  RoutingResult<T> out;
  for (const auto& block : layer.blocks) {
    std::vector<Tensor<T>> preds = predict(inputs, block, grid);
    Tensor<T> w = weight_rule.get_weights(preds);
    check_simplex(w, simplex_tol);
    Tensor<T> f = squash(aggregate(preds, w));
    out.weights.push_back(w);
    out.activations.push_back(agreement_rule.agreement(f, preds));
    out.fields.push_back(std::move(f));
  }
  return out;
}

// Algorithm-2 layer: degree weights, norm activations, no iteration.
template <typename T>
RoutingResult<T> route_degree(const std::vector<Tensor<T>>& inputs, const RoutingLayer<T>& layer,
                              const GroupGrid& grid, T eps = T(kCosineEps)) {
  DegreeWeightRule<T> wr;
  wr.eps = eps;
  NormAgreement<T> ar;
  return route_general(inputs, layer, grid, wr, ar);
}

}  // namespace sovnet
