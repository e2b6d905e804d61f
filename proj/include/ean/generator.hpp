#pragma once

// Rationale generator: per-token selection probabilities, hard mask sampling,
// mask regularisers and the score-function gradient estimator.

#include "ean/compute.hpp"
#include "ean/corpus.hpp"

#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace ean {

enum class GeneratorKind {
  recurrent,      // bidirectional bias-free GRU + sigmoid head
  token_sigmoid,  // context-free logistic gate on each token embedding
};

struct GeneratorNet {
  GeneratorKind kind = GeneratorKind::recurrent;
  Eigen::Index embedding_dim = 0;
  Eigen::Index hidden = 0;
  ParameterSet params;

  static GeneratorNet create(GeneratorKind kind, Eigen::Index embedding_dim, Eigen::Index hidden,
                             std::mt19937_64& rng);
};

/// N x T selection probabilities; pad positions are exactly 0.
Var token_probabilities(Tape& tape, GeneratorNet& gen, const Batch& batch, const EmbeddingTable& emb);

struct RationaleSample {
  Tensor probs;     // N x T
  Tensor mask;      // N x T, entries in {0, 1}, 0 on pads
  Vector log_prob;  // per row, sum over real tokens
};

inline constexpr double kProbClamp = 1e-6;

/// Independent Bernoulli draw per real token.
RationaleSample sample_mask(const Tensor& probs, const Tensor& pad_mask, std::mt19937_64& rng);

/// Rationale by thresholding: z = 1 where p >= threshold.
Tensor threshold_mask(const Tensor& probs, const Tensor& pad_mask, double threshold = 0.5);

/// log p(z|x) per row as a differentiable node (N x 1).
Var mask_log_prob(Var probs, const Tensor& mask, const Tensor& pad_mask);
/// Same quantity evaluated on plain values.
Vector mask_log_prob(const Tensor& probs, const Tensor& mask, const Tensor& pad_mask);

/// Number of selected tokens among the first `length` positions.
double sparsity(const Tensor& mask, Eigen::Index row, int length);
/// sum_{t=1}^{length-1} |z_t - z_{t-1}|: interior transitions only.
double coherence(const Tensor& mask, Eigen::Index row, int length);

/// Accumulates the batch-averaged score-function gradient
///   mean_i cost_i * d log p(z_i | x_i) / d theta
/// into `gen` for each (log_prob node, per-row cost) sample; samples are
/// averaged. Costs are constants on this path.
void reinforce_gradient(Tape& tape, const ParameterSet& gen, const std::vector<std::pair<Var, Vector>>& samples);

inline constexpr int kMaxEnumerationLength = 12;

/// Exact E_{z ~ g(x)}[cost(z)] for a single-row batch by enumerating all 2^T
/// masks. `cost` receives the full-width (1 x T) mask.
double expected_cost_exact(GeneratorNet& gen, const Batch& single, const EmbeddingTable& emb,
                           const std::function<double(const Tensor&)>& cost);

}  // namespace ean
