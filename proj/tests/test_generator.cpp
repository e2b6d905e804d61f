#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ean/generator.hpp"
#include "toy.hpp"

#include <cmath>

using namespace ean;

namespace {

struct Setup {
  std::vector<Example> examples;
  Vocabulary vocab;
  EmbeddingTable emb;
  GeneratorNet gen;
};

Setup setup(GeneratorKind kind, int n, int lo, int hi, int hidden = 3, std::uint64_t seed = 1) {
  Setup s;
  s.examples = toy::corpus(n, 6, lo, hi, seed);
  s.vocab = build_vocabulary(s.examples, 1);
  s.emb = random_embeddings(s.vocab, 4, seed + 1);
  std::mt19937_64 rng(seed + 2);
  s.gen = GeneratorNet::create(kind, 4, hidden, rng);
  return s;
}

Tensor probs_of(Setup& s, const Batch& b) {
  Tape t;
  return token_probabilities(t, s.gen, b, s.emb).value();
}

Tensor row(std::initializer_list<double> v) {
  Tensor t(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) t(0, k++) = x;
  return t;
}

// Central-difference gradient of an exactly enumerated expectation; no tape involved.
std::vector<double> expectation_gradient(Setup& s, const Batch& b, const std::function<double(const Tensor&)>& cost) {
  std::vector<double> g;
  const double eps = 1e-5;
  for (auto& [name, p] : s.gen.params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = expected_cost_exact(s.gen, b, s.emb, cost);
      x = saved - eps;
      const double down = expected_cost_exact(s.gen, b, s.emb, cost);
      x = saved;
      g.push_back((up - down) / (2 * eps));
    }
  }
  return g;
}

// E_z[cost(z) * dlog p(z)/dtheta] summed over every mask, weighted by p(z).
std::vector<double> estimator_expectation(Setup& s, const Batch& b, const std::function<double(const Tensor&)>& cost) {
  const int len = b.lengths.front();
  const Tensor probs = probs_of(s, b);
  s.gen.params.zero_grad();
  Tensor z = Tensor::Zero(1, b.width());
  for (unsigned bits = 0; bits < (1u << len); ++bits) {
    for (int t = 0; t < len; ++t) z(0, t) = (bits >> t) & 1u;
    const double pz = std::exp(mask_log_prob(probs, z, b.pad_mask)(0));
    Tape tape;
    Var lp = mask_log_prob(token_probabilities(tape, s.gen, b, s.emb), z, b.pad_mask);
    reinforce_gradient(tape, s.gen.params, {{lp, Vector::Constant(1, pz * cost(z))}});
  }
  std::vector<double> g;
  for (auto& [name, p] : s.gen.params) {
    for (Eigen::Index i = 0; i < p.grad.size(); ++i) g.push_back(p.grad.data()[i]);
  }
  s.gen.params.zero_grad();
  return g;
}

}  // namespace

TEST_CASE("zero output head gives one half on real tokens and zero on pads") {
  for (auto kind : {GeneratorKind::recurrent, GeneratorKind::token_sigmoid}) {
    Setup s = setup(kind, 4, 2, 6);
    s.gen.params.at("w").value.setZero();
    const Batch b = collate(s.examples, toy::all_rows(4), s.vocab);
    const Tensor p = probs_of(s, b);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      for (Eigen::Index t = 0; t < b.width(); ++t) CHECK(p(i, t) == (b.pad_mask(i, t) > 0 ? 0.5 : 0.0));
    }
  }
}

TEST_CASE("pad positions have zero probability for a trained-looking net") {
  Setup s = setup(GeneratorKind::recurrent, 6, 1, 7);
  const Batch b = collate(s.examples, toy::all_rows(6), s.vocab);
  const Tensor p = probs_of(s, b);
  CHECK((p.array() * (1.0 - b.pad_mask.array())).abs().maxCoeff() == 0.0);
  CHECK((p.array() * b.pad_mask.array()).maxCoeff() < 1.0);
}

TEST_CASE("probabilities do not depend on padding") {
  Setup s = setup(GeneratorKind::recurrent, 4, 2, 8);
  const Batch all = collate(s.examples, toy::all_rows(4), s.vocab);
  for (std::size_t k = 0; k < 4; ++k) {
    const Batch one = collate(s.examples, {k}, s.vocab);
    const Tensor p1 = probs_of(s, one);
    Eigen::Index r = 0;
    while (all.source[static_cast<std::size_t>(r)] != k) ++r;
    const Tensor pa = probs_of(s, all);
    CHECK((pa.row(r).head(one.width()) - p1.row(0)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("mean probability gradient matches central differences") {
  for (auto kind : {GeneratorKind::recurrent, GeneratorKind::token_sigmoid}) {
    Setup s = setup(kind, 4, 3, 8, 5);
    const Batch b = collate(s.examples, toy::all_rows(4), s.vocab);
    auto loss = [&](ParameterSet&, bool want) {
      Tape t;
      Var m = mean(token_probabilities(t, s.gen, b, s.emb));
      const double v = m.scalar();
      if (want) t.backward(m);
      return v;
    };
    CHECK(finite_difference_check(loss, s.gen.params).max_relative_error < 1e-4);
  }
}

TEST_CASE("log-probability gradient matches central differences") {
  Setup s = setup(GeneratorKind::recurrent, 4, 3, 8, 5);
  const Batch b = collate(s.examples, toy::all_rows(4), s.vocab);
  std::mt19937_64 rng(3);
  const Tensor z = sample_mask(probs_of(s, b), b.pad_mask, rng).mask;
  auto loss = [&](ParameterSet&, bool want) {
    Tape t;
    Var l = sum(mask_log_prob(token_probabilities(t, s.gen, b, s.emb), z, b.pad_mask));
    const double v = l.scalar();
    if (want) t.backward(l);
    return v;
  };
  CHECK(finite_difference_check(loss, s.gen.params).max_relative_error < 1e-4);
}

TEST_CASE("sampling at extreme probabilities is certain") {
  std::mt19937_64 rng(1);
  const Tensor pad = row({1, 1});
  for (int k = 0; k < 100; ++k) {
    const auto s = sample_mask(row({1.0, 0.0}), pad, rng);
    CHECK(s.mask == row({1, 0}));
    CHECK(std::isfinite(s.log_prob(0)));
    CHECK(s.log_prob(0) == doctest::Approx(2 * std::log(1 - 1e-6)));
  }
}

TEST_CASE("log-probability at p = 0.5") {
  std::mt19937_64 rng(2);
  const auto s = sample_mask(row({0.5, 0.5, 0.5}), row({1, 1, 1}), rng);
  CHECK(s.log_prob(0) == doctest::Approx(3 * std::log(0.5)).epsilon(1e-12));
  CHECK(s.log_prob(0) == doctest::Approx(-2.079).epsilon(1e-3));
}

TEST_CASE("pads are never sampled and contribute nothing") {
  std::mt19937_64 rng(2);
  const auto s = sample_mask(row({0.9, 0.9, 0.9}), row({1, 1, 0}), rng);
  CHECK(s.mask(0, 2) == 0.0);
  CHECK(mask_log_prob(row({0.5, 0.5, 0.123}), row({1, 0, 0}), row({1, 1, 0}))(0) ==
        doctest::Approx(2 * std::log(0.5)));
  CHECK(s.log_prob(0) <= 0.0);
}

TEST_CASE("empirical mask mean matches probabilities") {
  const Tensor p = row({0.1, 0.35, 0.5, 0.8, 0.97});
  const Tensor pad = Tensor::Ones(1, 5);
  std::mt19937_64 rng(42);
  Tensor acc = Tensor::Zero(1, 5);
  const int n = 100000;
  for (int k = 0; k < n; ++k) acc += sample_mask(p, pad, rng).mask;
  acc /= n;
  CHECK((acc - p).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("threshold mask") {
  CHECK(threshold_mask(row({0.2, 0.5, 0.7}), row({1, 1, 0})) == row({0, 1, 0}));
}

TEST_CASE("sparsity and coherence") {
  CHECK(sparsity(row({0, 1, 1, 0}), 0, 4) == 2);
  CHECK(sparsity(row({0, 0, 0}), 0, 3) == 0);
  CHECK(sparsity(Tensor::Ones(1, 10), 0, 10) == 10);
  CHECK(coherence(row({0, 1, 1, 0}), 0, 4) == 2);
  CHECK(coherence(Tensor::Ones(1, 10), 0, 10) == 0);
  CHECK(coherence(row({1, 0, 1}), 0, 3) == 2);
  // pad region content is ignored
  CHECK(sparsity(row({1, 0, 1, 1}), 0, 2) == 1);
  CHECK(coherence(row({1, 0, 1, 0}), 0, 2) == 1);
}

TEST_CASE("constant cost gives zero expected gradient") {
  Setup s = setup(GeneratorKind::recurrent, 1, 1, 1);
  const Batch b = collate(s.examples, {0}, s.vocab);
  for (double g : estimator_expectation(s, b, [](const Tensor&) { return 1.7; })) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("estimator expectation equals the derivative of the expected cost") {
  SUBCASE("T = 1") {
    Setup s = setup(GeneratorKind::recurrent, 1, 1, 1);
    const Batch b = collate(s.examples, {0}, s.vocab);
    auto cost = [](const Tensor& z) { return z(0, 0) > 0.5 ? 0.3 : 1.1; };
    const auto est = estimator_expectation(s, b, cost);
    const auto ref = expectation_gradient(s, b, cost);
    for (std::size_t i = 0; i < est.size(); ++i) CHECK(est[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }
  SUBCASE("T = 5, position-dependent cost") {
    Setup s = setup(GeneratorKind::recurrent, 1, 5, 5);
    const Batch b = collate(s.examples, {0}, s.vocab);
    auto cost = [](const Tensor& z) {
      return std::pow(z(0, 1) + 2 * z(0, 3) - 1.5, 2) + 0.2 * z.sum() + 0.1 * std::abs(z(0, 0) - z(0, 4));
    };
    const auto est = estimator_expectation(s, b, cost);
    const auto ref = expectation_gradient(s, b, cost);
    for (std::size_t i = 0; i < est.size(); ++i) {
      CHECK(std::abs(est[i] - ref[i]) <= 1e-7 + 1e-6 * std::abs(ref[i]));
    }
  }
}

TEST_CASE("reinforce rejects log-probabilities detached from the generator") {
  Setup s = setup(GeneratorKind::recurrent, 2, 2, 3);
  Tape t;
  Var detached = t.constant(Tensor::Zero(2, 1));
  CHECK_THROWS(reinforce_gradient(t, s.gen.params, {{detached, Vector::Ones(2)}}));
  CHECK_THROWS(reinforce_gradient(t, s.gen.params, {}));
}

TEST_CASE("exact expectation") {
  Setup s = setup(GeneratorKind::recurrent, 1, 4, 4);
  const Batch b = collate(s.examples, {0}, s.vocab);
  SUBCASE("saturated probabilities pick out one mask") {
    s.gen.params.at("w").value.setZero();
    s.gen.params.at("b").value(0, 0) = 40.0;
    const double e = expected_cost_exact(s.gen, b, s.emb, [](const Tensor& z) { return z.sum() == 4 ? 2.5 : 100.0; });
    CHECK(e == doctest::Approx(2.5).epsilon(1e-3));
  }
  SUBCASE("T = 1 at p = 0.5 averages the two costs") {
    Setup one = setup(GeneratorKind::recurrent, 1, 1, 1);
    one.gen.params.at("w").value.setZero();
    const Batch b1 = collate(one.examples, {0}, one.vocab);
    CHECK(expected_cost_exact(one.gen, b1, one.emb, [](const Tensor& z) { return z(0, 0) > 0.5 ? 3.0 : 1.0; }) ==
          doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("errors") {
    Setup big = setup(GeneratorKind::recurrent, 2, 13, 13);
    CHECK_THROWS(expected_cost_exact(big.gen, collate(big.examples, {0}, big.vocab), big.emb,
                                     [](const Tensor&) { return 0.0; }));
    CHECK_THROWS(expected_cost_exact(big.gen, collate(big.examples, {0, 1}, big.vocab), big.emb,
                                     [](const Tensor&) { return 0.0; }));
  }
}

TEST_CASE("exact expectation agrees with Monte Carlo") {
  Setup s = setup(GeneratorKind::recurrent, 1, 6, 6);
  const Batch b = collate(s.examples, {0}, s.vocab);
  auto cost = [](const Tensor& z) { return z(0, 0) + 2 * z(0, 2) * z(0, 5) - z(0, 4); };
  const double exact = expected_cost_exact(s.gen, b, s.emb, cost);
  const Tensor p = probs_of(s, b);
  std::mt19937_64 rng(7);
  const int n = 50000;
  double m = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    const double c = cost(sample_mask(p, b.pad_mask, rng).mask);
    m += c;
    m2 += c * c;
  }
  m /= n;
  const double se = std::sqrt((m2 / n - m * m) / n);
  CHECK(std::abs(m - exact) < 3 * se);
}
