#include "ean/generator.hpp"

#include <cmath>
#include <stdexcept>

namespace ean {

GeneratorNet GeneratorNet::create(GeneratorKind kind, Eigen::Index embedding_dim, Eigen::Index hidden,
                                  std::mt19937_64& rng) {
  GeneratorNet g;
  g.kind = kind;
  g.embedding_dim = embedding_dim;
  g.hidden = hidden;
  if (kind == GeneratorKind::recurrent) {
    GruCell("fwd", embedding_dim, hidden).init(g.params, rng);
    GruCell("bwd", embedding_dim, hidden).init(g.params, rng);
    g.params.add("w", uniform_init(2 * hidden, 1, std::sqrt(3.0 / static_cast<double>(2 * hidden)), rng));
  } else {
    g.params.add("w", uniform_init(embedding_dim, 1, std::sqrt(3.0 / static_cast<double>(embedding_dim)), rng));
  }
  g.params.add("b", Tensor::Zero(1, 1));
  return g;
}

Var token_probabilities(Tape& tape, GeneratorNet& gen, const Batch& batch, const EmbeddingTable& emb) {
  if (emb.dim() != gen.embedding_dim) throw ShapeError("generator: embedding dimension mismatch");
  const Eigen::Index n = batch.size();
  const Eigen::Index width = batch.width();
  Var w = tape.param(gen.params.at("w"));
  Var b = tape.param(gen.params.at("b"));

  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(width));
  for (Eigen::Index t = 0; t < width; ++t) inputs.push_back(tape.constant(embed_column(batch, emb, t)));

  std::vector<Var> columns;
  columns.reserve(static_cast<std::size_t>(width));
  if (gen.kind == GeneratorKind::token_sigmoid) {
    for (Eigen::Index t = 0; t < width; ++t) columns.push_back(add_row(matmul(inputs[static_cast<std::size_t>(t)], w), b));
  } else {
    GruCell fwd("fwd", gen.embedding_dim, gen.hidden);
    GruCell bwd("bwd", gen.embedding_dim, gen.hidden);
    fwd.bind(tape, gen.params);
    bwd.bind(tape, gen.params);
    std::vector<Var> hf(static_cast<std::size_t>(width)), hb(static_cast<std::size_t>(width));
    Var h = tape.constant(Tensor::Zero(n, gen.hidden));
    for (Eigen::Index t = 0; t < width; ++t) {
      const Vector pad = batch.pad_mask.col(t);
      h = blend(pad, fwd.step(h, inputs[static_cast<std::size_t>(t)]), h);
      hf[static_cast<std::size_t>(t)] = h;
    }
    h = tape.constant(Tensor::Zero(n, gen.hidden));
    for (Eigen::Index t = width - 1; t >= 0; --t) {
      const Vector pad = batch.pad_mask.col(t);
      h = blend(pad, bwd.step(h, inputs[static_cast<std::size_t>(t)]), h);
      hb[static_cast<std::size_t>(t)] = h;
    }
    for (Eigen::Index t = 0; t < width; ++t) {
      const auto k = static_cast<std::size_t>(t);
      columns.push_back(add_row(matmul(concat(hf[k], hb[k]), w), b));
    }
  }
  return mul_const(sigmoid(hstack(columns)), batch.pad_mask);
}

RationaleSample sample_mask(const Tensor& probs, const Tensor& pad_mask, std::mt19937_64& rng) {
  if (probs.rows() != pad_mask.rows() || probs.cols() != pad_mask.cols()) {
    throw ShapeError("sample_mask: probability and pad mask shapes differ");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RationaleSample s;
  s.probs = probs;
  s.mask = Tensor::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index t = 0; t < probs.cols(); ++t) {
      // Draw for every cell so the stream does not depend on padding layout.
      const double u = unif(rng);
      if (pad_mask(i, t) > 0.0 && u < probs(i, t)) s.mask(i, t) = 1.0;
    }
  }
  s.log_prob = mask_log_prob(probs, s.mask, pad_mask);
  return s;
}

Tensor threshold_mask(const Tensor& probs, const Tensor& pad_mask, double threshold) {
  Tensor z = (probs.array() >= threshold).cast<double>().matrix();
  return z.cwiseProduct(pad_mask);
}

Var mask_log_prob(Var probs, const Tensor& mask, const Tensor& pad_mask) {
  const Tensor off = (1.0 - mask.array()).matrix().cwiseProduct(pad_mask);
  const Tensor on = mask.cwiseProduct(pad_mask);
  Var lp = mul_const(clamped_log(probs, kProbClamp, 1.0 - kProbClamp), on);
  Var lq = mul_const(clamped_log(one_minus(probs), kProbClamp, 1.0 - kProbClamp), off);
  return row_sum(add(lp, lq));
}

Vector mask_log_prob(const Tensor& probs, const Tensor& mask, const Tensor& pad_mask) {
  Vector out = Vector::Zero(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index t = 0; t < probs.cols(); ++t) {
      if (pad_mask(i, t) <= 0.0) continue;
      const double p = std::clamp(probs(i, t), kProbClamp, 1.0 - kProbClamp);
      out(i) += mask(i, t) > 0.5 ? std::log(p) : std::log(1.0 - p);
    }
  }
  return out;
}

double sparsity(const Tensor& mask, Eigen::Index row, int length) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < length; ++t) s += mask(row, t);
  return s;
}

double coherence(const Tensor& mask, Eigen::Index row, int length) {
  double s = 0.0;
  for (Eigen::Index t = 1; t < length; ++t) s += std::abs(mask(row, t) - mask(row, t - 1));
  return s;
}

void reinforce_gradient(Tape& tape, const ParameterSet& gen, const std::vector<std::pair<Var, Vector>>& samples) {
  if (samples.empty()) throw std::invalid_argument("reinforce_gradient: no samples");
  Var total;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& [log_prob, costs] = samples[s];
    if (!tape.reaches(log_prob, gen)) {
      throw std::logic_error("reinforce_gradient: log-probability is not connected to the generator parameters");
    }
    if (log_prob.cols() != 1 || log_prob.rows() != costs.size()) {
      throw ShapeError("reinforce_gradient: expected one cost per batch row");
    }
    Var weighted = mean(mul_const(log_prob, costs));
    total = s == 0 ? weighted : add(total, weighted);
  }
  if (samples.size() > 1) total = scale(total, 1.0 / static_cast<double>(samples.size()));
  tape.backward(total);
}

double expected_cost_exact(GeneratorNet& gen, const Batch& single, const EmbeddingTable& emb,
                           const std::function<double(const Tensor&)>& cost) {
  if (single.size() != 1) throw std::invalid_argument("expected_cost_exact: batch must hold one example");
  const int len = single.lengths.front();
  if (len > kMaxEnumerationLength) {
    throw std::invalid_argument("expected_cost_exact: sequence longer than " + std::to_string(kMaxEnumerationLength));
  }
  Tape tape;
  const Tensor probs = token_probabilities(tape, gen, single, emb).value();
  double total = 0.0;
  Tensor z = Tensor::Zero(1, single.width());
  for (unsigned bits = 0; bits < (1u << len); ++bits) {
    for (int t = 0; t < len; ++t) z(0, t) = (bits >> t) & 1u ? 1.0 : 0.0;
    const double lp = mask_log_prob(probs, z, single.pad_mask)(0);
    total += std::exp(lp) * cost(z);
  }
  return total;
}

}  // namespace ean
