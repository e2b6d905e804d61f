#include "ean/predictor.hpp"

#include <cmath>
#include <stdexcept>

namespace ean {

PredictorNet PredictorNet::create(Eigen::Index embedding_dim, Eigen::Index hidden, std::mt19937_64& rng) {
  PredictorNet net;
  net.embedding_dim = embedding_dim;
  net.hidden = hidden;
  GruCell("cell", embedding_dim, hidden).init(net.params, rng);
  net.params.add("w", uniform_init(hidden, 1, std::sqrt(3.0 / static_cast<double>(hidden)), rng));
  // Typical small random initialisation; default behaviour is then ~0.5.
  net.params.add("b", uniform_init(1, 1, 0.1, rng));
  return net;
}

Var predict_masked(Tape& tape, PredictorNet& net, const Batch& batch, const EmbeddingTable& emb, const Tensor& z) {
  if (z.rows() != batch.size() || z.cols() != batch.width()) {
    throw ShapeError("predict_masked: mask is " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                     ", batch is " + std::to_string(batch.size()) + "x" + std::to_string(batch.width()));
  }
  if ((z.array() * (1.0 - batch.pad_mask.array())).abs().maxCoeff() > 0.0) {
    throw std::invalid_argument("predict_masked: mask selects padding positions");
  }
  if (emb.dim() != net.embedding_dim) throw ShapeError("predict_masked: embedding dimension mismatch");

  GruCell cell("cell", net.embedding_dim, net.hidden);
  cell.bind(tape, net.params);
  Var w = tape.param(net.params.at("w"));
  Var b = tape.param(net.params.at("b"));

  Var h = tape.constant(Tensor::Zero(batch.size(), net.hidden));
  for (Eigen::Index t = 0; t < batch.width(); ++t) {
    const Vector gate = z.col(t);
    if (gate.isZero(0.0)) continue;  // state passes through unchanged
    Var e = tape.constant(embed_column(batch, emb, t));
    h = blend(gate, cell.step(h, e), h);
  }
  return sigmoid(add_row(matmul(h, w), b));
}

Vector predict_masked(PredictorNet& net, const Batch& batch, const EmbeddingTable& emb, const Tensor& z) {
  Tape tape;
  return predict_masked(tape, net, batch, emb, z).value().col(0);
}

void set_default(PredictorNet& net, double v, bool fix) {
  if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("default value must lie strictly inside (0, 1)");
  Parameter& b = net.params.at("b");
  b.value(0, 0) = logit(v);
  b.grad.setZero();
  b.frozen = fix;
}

double adversary_default(const PredictorNet& net) { return sigmoid(net.bias()); }

Vector adversary_default(const PredictorNet& net, const Batch& batch) {
  return Vector::Constant(batch.size(), adversary_default(net));
}

Tensor antirationale(const Tensor& z, const Tensor& pad_mask) {
  if (z.rows() != pad_mask.rows() || z.cols() != pad_mask.cols()) throw ShapeError("antirationale: shape mismatch");
  return (1.0 - z.array()).matrix().cwiseProduct(pad_mask);
}

PermutationPlan draw_permutation_plan(Eigen::Index n, std::mt19937_64& rng) {
  if (n % 2 != 0) throw std::invalid_argument("mask permutation needs an even batch size");
  std::bernoulli_distribution coin(0.5);
  PermutationPlan plan;
  plan.keep.assign(static_cast<std::size_t>(n), 1);
  for (Eigen::Index i = 0; i < n; ++i) plan.partner.push_back(static_cast<int>(n - 1 - i));
  // One draw per (i, N-1-i) pair so a replaced mask is always a swap.
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const int k = coin(rng) ? 1 : 0;
    plan.keep[static_cast<std::size_t>(i)] = k;
    plan.keep[static_cast<std::size_t>(n - 1 - i)] = k;
  }
  return plan;
}

PermutedMasks permute_masks(const Batch& batch, const Tensor& masks, const PermutationPlan& plan) {
  const Eigen::Index n = batch.size();
  if (n % 2 != 0) throw std::invalid_argument("mask permutation needs an even batch size");
  if (masks.rows() != n || masks.cols() != batch.width()) throw ShapeError("permute_masks: mask shape mismatch");
  if (static_cast<Eigen::Index>(plan.keep.size()) != n) throw ShapeError("permute_masks: plan size mismatch");
  PermutedMasks out{Tensor::Zero(n, batch.width()), plan};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Eigen::Index donor = plan.keep[k] ? i : plan.partner[k];
    const int len = std::min(batch.lengths[k], batch.lengths[static_cast<std::size_t>(donor)]);
    out.masks.row(i).head(len) = masks.row(donor).head(len);
  }
  return out;
}

PermutedMasks permute_masks(const Batch& batch, const Tensor& masks, std::mt19937_64& rng) {
  return permute_masks(batch, masks, draw_permutation_plan(batch.size(), rng));
}

Var cost_f2(Tape& tape, PredictorNet& adversary, const Batch& batch, const EmbeddingTable& emb,
            const Tensor& permuted_antirationale) {
  Var pred = predict_masked(tape, adversary, batch, emb, permuted_antirationale);
  return mean(squared_error(pred, tape.constant(batch.targets)));
}

}  // namespace ean
