#pragma once

// Primary and adversarial predictors over masked text, default-behaviour bias
// control, and the batch mask permutation used to train the adversary.

#include "ean/compute.hpp"
#include "ean/corpus.hpp"

#include <random>
#include <vector>

namespace ean {

/// Gated bias-free GRU encoder with a sigmoid output head sigma(w.h_T + b).
/// Masked positions carry the previous state forward unchanged, so tokens with
/// z = 0 never reach the prediction and an all-zero mask yields sigma(b).
struct PredictorNet {
  Eigen::Index embedding_dim = 0;
  Eigen::Index hidden = 0;
  ParameterSet params;  // cell.*, w (H x 1), b (1 x 1)

  static PredictorNet create(Eigen::Index embedding_dim, Eigen::Index hidden, std::mt19937_64& rng);

  double bias() const { return params.at("b").value(0, 0); }
  bool bias_fixed() const { return params.at("b").frozen; }
};

/// N x 1 predictions in (0, 1) for the text masked by `z` (N x T, 0 on pads).
Var predict_masked(Tape& tape, PredictorNet& net, const Batch& batch, const EmbeddingTable& emb, const Tensor& z);
Vector predict_masked(PredictorNet& net, const Batch& batch, const EmbeddingTable& emb, const Tensor& z);

/// b = logit(v); when `fix` is set, b is frozen for all later updates.
void set_default(PredictorNet& net, double v, bool fix);

/// f(x, 0) = sigma(b), independent of the input.
double adversary_default(const PredictorNet& net);
Vector adversary_default(const PredictorNet& net, const Batch& batch);

inline double cost_f(double prediction, double target) { return (prediction - target) * (prediction - target); }

/// 1 - z on real tokens, 0 on pads.
Tensor antirationale(const Tensor& z, const Tensor& pad_mask);

struct PermutationPlan {
  std::vector<int> keep;     // k_i: 1 keeps its own mask, 0 takes its partner's
  std::vector<int> partner;  // N - 1 - i
};

struct PermutedMasks {
  Tensor masks;
  PermutationPlan plan;
};

PermutationPlan draw_permutation_plan(Eigen::Index n, std::mt19937_64& rng);

/// Applies `plan` to the rows of `masks` (batch ordered ascending by target).
/// A donated mask is truncated or zero-padded to the receiving row's length.
PermutedMasks permute_masks(const Batch& batch, const Tensor& masks, const PermutationPlan& plan);
PermutedMasks permute_masks(const Batch& batch, const Tensor& masks, std::mt19937_64& rng);

/// Batch-mean squared error of the adversary on the given (permuted)
/// antirationale, as a differentiable node.
Var cost_f2(Tape& tape, PredictorNet& adversary, const Batch& batch, const EmbeddingTable& emb,
            const Tensor& permuted_antirationale);

}  // namespace ean
