#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ean/evaluation.hpp"
#include "toy.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace ean;

namespace {

Mask random_mask(std::mt19937_64& rng, std::size_t len, double p) {
  std::bernoulli_distribution coin(p);
  Mask m(len);
  for (auto& v : m) v = coin(rng) ? 1 : 0;
  return m;
}

struct Instance {
  std::vector<Mask> gold, pred;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(1, 8), len_dist(1, 25);
  std::uniform_real_distribution<double> dens(0.0, 0.6);
  Instance in;
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    const auto len = static_cast<std::size_t>(len_dist(rng));
    in.gold.push_back(random_mask(rng, len, dens(rng)));
    in.pred.push_back(random_mask(rng, len, dens(rng)));
  }
  return in;
}

double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

// Counting oracle: walk token pairs.
std::array<double, 3> count_tokens(const Instance& in) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < in.gold.size(); ++i) {
    for (std::size_t t = 0; t < in.gold[i].size(); ++t) {
      tp += in.gold[i][t] && in.pred[i][t];
      fp += !in.gold[i][t] && in.pred[i][t];
      fn += in.gold[i][t] && !in.pred[i][t];
    }
  }
  const double p = safe_div(tp, tp + fp), r = safe_div(tp, tp + fn);
  return {p, r, safe_div(2 * p * r, p + r)};
}

// Chunk oracle: label every position with its run id, then compare run sets.
std::vector<int> run_ids(const Mask& m) {
  std::vector<int> id(m.size(), -1);
  int next = 0;
  for (std::size_t t = 0; t < m.size(); ++t) {
    if (!m[t]) continue;
    id[t] = (t > 0 && m[t - 1]) ? id[t - 1] : next++;
  }
  return id;
}

std::array<double, 3> count_phrases(const Instance& in) {
  double gold_runs = 0, captured = 0, pred_runs = 0, correct = 0;
  for (std::size_t i = 0; i < in.gold.size(); ++i) {
    const auto g = run_ids(in.gold[i]), p = run_ids(in.pred[i]);
    std::map<int, bool> g_hit, p_hit;
    for (std::size_t t = 0; t < g.size(); ++t) {
      if (g[t] >= 0) g_hit[g[t]] = g_hit[g[t]] || p[t] >= 0;
      if (p[t] >= 0) p_hit[p[t]] = p_hit[p[t]] || g[t] >= 0;
    }
    for (const auto& [k, hit] : g_hit) {
      gold_runs += 1;
      captured += hit;
    }
    for (const auto& [k, hit] : p_hit) {
      pred_runs += 1;
      correct += hit;
    }
  }
  const double p = safe_div(correct, pred_runs), r = safe_div(captured, gold_runs);
  return {p, r, safe_div(2 * p * r, p + r)};
}

// Krippendorff oracle: coincidence matrix built from ordered value pairs.
double alpha_oracle(const std::vector<std::vector<int>>& units) {
  double o[2][2] = {{0, 0}, {0, 0}};
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    for (std::size_t a = 0; a < u.size(); ++a) {
      for (std::size_t b = 0; b < u.size(); ++b) {
        if (a != b) o[u[a]][u[b]] += 1.0 / static_cast<double>(u.size() - 1);
      }
    }
  }
  const double n0 = o[0][0] + o[0][1], n1 = o[1][0] + o[1][1], n = n0 + n1;
  const double d_obs = (o[0][1] + o[1][0]) / n;
  const double d_exp = 2 * n0 * n1 / (n * (n - 1));
  return 1.0 - d_obs / d_exp;
}

AnnotationSet annotation(std::string id, std::vector<Mask> masks) {
  AnnotationSet s;
  s.comment_id = std::move(id);
  for (std::size_t i = 0; i < masks.size(); ++i) s.annotators.push_back("a" + std::to_string(i));
  s.masks = std::move(masks);
  return s;
}

}  // namespace

TEST_CASE("tokenwise examples") {
  const PRF r = tokenwise_prf({{1, 1, 0, 0}}, {{1, 0, 0, 1}});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  const PRF same = tokenwise_prf({{0, 1, 1}, {1}}, {{0, 1, 1}, {1}});
  CHECK(same.f1 == 1.0);
  const PRF none = tokenwise_prf({{0, 0}}, {{0, 0}});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS(tokenwise_prf({{1, 0}}, {{1}}));
  CHECK_THROWS(tokenwise_prf({{1, 0}}, {}));
}

TEST_CASE("phrasewise examples") {
  Mask gold(10, 0), pred(10, 0);
  for (int t = 3; t <= 7; ++t) gold[static_cast<std::size_t>(t)] = 1;
  pred[5] = 1;
  const PRF r = phrasewise_prf({gold}, {pred});
  CHECK(r.tp == 1);
  CHECK(r.recall == 1.0);
  CHECK(r.precision == 1.0);
  const PRF empty = phrasewise_prf({gold}, {Mask(10, 0)});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  const PRF half = phrasewise_prf({{1, 0, 0, 1, 0}}, {{0, 0, 1, 1, 0}});
  CHECK(half.recall == 0.5);
  CHECK(half.precision == 1.0);
}

TEST_CASE("chunks") {
  const auto c = chunks({1, 1, 0, 1, 0, 0, 1}, 4);
  REQUIRE(c.size() == 3);
  CHECK(c[0].start == 0);
  CHECK(c[0].end == 1);
  CHECK(c[1].start == 3);
  CHECK(c[1].end == 3);
  CHECK(c[2].start == 6);
  CHECK(c[2].source == 4);
  CHECK(chunks({0, 0}).empty());
}

TEST_CASE("metrics match counting oracles on random instances") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const Instance in = random_instance(rng);
    const PRF tok = tokenwise_prf(in.gold, in.pred);
    const PRF phr = phrasewise_prf(in.gold, in.pred);
    const auto to = count_tokens(in), po = count_phrases(in);
    CHECK(tok.precision == to[0]);
    CHECK(tok.recall == to[1]);
    CHECK(tok.f1 == to[2]);
    CHECK(phr.precision == po[0]);
    CHECK(phr.recall == po[1]);
    CHECK(phr.f1 == po[2]);
    for (const PRF& r : {tok, phr}) {
      CHECK(r.precision >= 0.0);
      CHECK(r.recall <= 1.0);
      CHECK(r.f1 == doctest::Approx(f1_score(r.precision, r.recall)));
    }
  }
}

TEST_CASE("capturing a chunk counts at least as much as its tokens") {
  std::mt19937_64 rng(18);
  for (int k = 0; k < 200; ++k) {
    const Instance in = random_instance(rng);
    for (std::size_t i = 0; i < in.gold.size(); ++i) {
      for (const Chunk& c : chunks(in.gold[i])) {
        double hit = 0;
        for (std::size_t t = c.start; t <= c.end; ++t) hit += in.pred[i][t];
        const double token_recall = hit / static_cast<double>(c.end - c.start + 1);
        const double phrase_recall = hit > 0 ? 1.0 : 0.0;
        CHECK(phrase_recall >= token_recall);
      }
      if (chunks(in.gold[i]).size() == 1) {
        CHECK(phrasewise_prf({in.gold[i]}, {in.pred[i]}).recall >= tokenwise_prf({in.gold[i]}, {in.pred[i]}).recall);
      }
    }
  }
}

TEST_CASE("aggregate phrase recall can fall below token recall when chunk sizes differ") {
  const Mask gold{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1};
  const Mask pred{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  CHECK(tokenwise_prf({gold}, {pred}).recall == doctest::Approx(10.0 / 11.0));
  CHECK(phrasewise_prf({gold}, {pred}).recall == 0.5);
}

TEST_CASE("prediction metrics") {
  auto m = prediction_metrics({0.9, 0.1, 0.6, 0.4}, {1.0, 0.0, 1.0, 0.0});
  CHECK(m.mse == doctest::Approx((0.01 + 0.01 + 0.16 + 0.16) / 4));
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  m = prediction_metrics({0.05, 0.05}, {0.05, 0.05});
  CHECK(m.mse == 0.0);
  CHECK(m.accuracy == 1.0);
  m = prediction_metrics({0.7, 0.7, 0.2, 0.2}, {1.0, 0.0, 1.0, 0.0});
  CHECK(m.accuracy == 0.5);
  CHECK(m.f1 == 0.5);
  m = prediction_metrics({0.8, 0.3}, {0.6, 0.55});
  CHECK(m.mse == doctest::Approx((0.04 + 0.0625) / 2));
  CHECK(m.accuracy == 0.5);
  CHECK_THROWS(prediction_metrics({0.1}, {}));
}

TEST_CASE("krippendorff alpha") {
  SUBCASE("identical annotators") {
    std::vector<AnnotationSet> sets{annotation("c1", {{1, 0, 1}, {1, 0, 1}, {1, 0, 1}}),
                                    annotation("c2", {{0, 0}, {0, 0}, {0, 0}})};
    CHECK(krippendorff_alpha(sets, AgreementUnit::token) == 1.0);
    CHECK(krippendorff_alpha(sets, AgreementUnit::comment) == 1.0);
  }
  SUBCASE("worked instance") {
    // Token units {1,1,0}, {0,0,0}, {1,1,1}: o01 = 1, n0 = 4, n1 = 5, n = 9.
    std::vector<AnnotationSet> sets{annotation("c", {{1, 0, 1}, {1, 0, 1}, {0, 0, 1}})};
    CHECK(krippendorff_alpha(sets, AgreementUnit::token) == doctest::Approx(1.0 - 8.0 * 1.0 / 20.0).epsilon(1e-14));
    CHECK(krippendorff_alpha(sets, AgreementUnit::token) ==
          doctest::Approx(alpha_oracle({{1, 1, 0}, {0, 0, 0}, {1, 1, 1}})).epsilon(1e-14));
  }
  SUBCASE("random instances match the coincidence-matrix oracle") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> coders(2, 4), len(1, 6);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<AnnotationSet> sets;
      std::vector<std::vector<int>> token_units, comment_units;
      for (int c = 0; c < 5; ++c) {
        const int k = coders(rng), l = len(rng);
        std::vector<Mask> masks(static_cast<std::size_t>(k), Mask(static_cast<std::size_t>(l)));
        for (auto& m : masks) {
          for (auto& v : m) v = coin(rng);
        }
        for (int t = 0; t < l; ++t) {
          std::vector<int> u;
          for (const auto& m : masks) u.push_back(m[static_cast<std::size_t>(t)]);
          token_units.push_back(u);
        }
        std::vector<int> cu;
        for (const auto& m : masks) cu.push_back(std::count(m.begin(), m.end(), 1) > 0);
        comment_units.push_back(cu);
        sets.push_back(annotation("c" + std::to_string(c), masks));
      }
      CHECK(krippendorff_alpha(sets, AgreementUnit::token) == doctest::Approx(alpha_oracle(token_units)));
      bool mixed = false;
      for (const auto& u : comment_units) {
        for (int v : u) mixed = mixed || v != comment_units[0][0];
      }
      if (mixed) {
        CHECK(krippendorff_alpha(sets, AgreementUnit::comment) == doctest::Approx(alpha_oracle(comment_units)));
      }
    }
  }
  SUBCASE("independent random annotators give alpha near zero") {
    std::mt19937_64 rng(22);
    std::bernoulli_distribution coin(0.3);
    std::vector<AnnotationSet> sets;
    for (int c = 0; c < 10000; ++c) sets.push_back(annotation(std::to_string(c), {{coin(rng)}, {coin(rng)}, {coin(rng)}}));
    CHECK(std::abs(krippendorff_alpha(sets, AgreementUnit::token)) < 0.05);
  }
  SUBCASE("order invariance") {
    std::vector<AnnotationSet> sets{annotation("a", {{1, 0, 1, 1}, {0, 0, 1, 1}}),
                                    annotation("b", {{1, 1}, {0, 1}, {0, 0}}), annotation("c", {{0}, {1}})};
    const double ref = krippendorff_alpha(sets, AgreementUnit::token);
    const double ref_c = krippendorff_alpha(sets, AgreementUnit::comment);
    std::reverse(sets.begin(), sets.end());
    CHECK(krippendorff_alpha(sets, AgreementUnit::token) == doctest::Approx(ref).epsilon(1e-14));
    for (auto& s : sets) std::reverse(s.masks.begin(), s.masks.end());
    CHECK(krippendorff_alpha(sets, AgreementUnit::token) == doctest::Approx(ref).epsilon(1e-14));
    CHECK(krippendorff_alpha(sets, AgreementUnit::comment) == doctest::Approx(ref_c).epsilon(1e-14));
  }
  SUBCASE("fewer than two annotations") {
    CHECK_THROWS_AS(krippendorff_alpha({annotation("a", {{1, 0}})}, AgreementUnit::token), DataError);
    CHECK_THROWS_AS(krippendorff_alpha({}, AgreementUnit::comment), DataError);
  }
}

TEST_CASE("mcnemar") {
  std::vector<bool> a{true, false, true, false}, b{false, true, false, true};
  auto r = mcnemar(a, b);
  CHECK(r.b == 2);
  CHECK(r.c == 2);
  CHECK(r.p_value == 1.0);
  CHECK(r.statistic == 0.0);

  a.assign(10, true);
  b.assign(10, false);
  r = mcnemar(a, b);
  CHECK(r.b == 10);
  CHECK(r.c == 0);
  CHECK(r.p_value == doctest::Approx(2 * std::pow(0.5, 10)).epsilon(1e-12));
  CHECK(r.statistic == 10.0);

  CHECK(mcnemar({true, false}, {true, false}).p_value == 1.0);
  CHECK_THROWS(mcnemar({true}, {}));
}

TEST_CASE("mcnemar matches exact enumeration") {
  // Under the null each discordant pair favours A or B with probability 1/2.
  for (int n = 1; n <= 14; ++n) {
    for (int b = 0; b <= n; ++b) {
      const double obs = std::abs(b - n / 2.0);
      double p = 0.0;
      for (unsigned long bits = 0; bits < (1ul << n); ++bits) {
        const int k = __builtin_popcountl(bits);
        if (std::abs(k - n / 2.0) >= obs - 1e-12) p += std::ldexp(1.0, -n);
      }
      std::vector<bool> a, c;
      for (int i = 0; i < n; ++i) {
        a.push_back(i < b);
        c.push_back(i >= b);
      }
      CHECK(mcnemar(a, c).p_value == doctest::Approx(std::min(1.0, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mean human performance") {
  SUBCASE("identical annotators score perfectly") {
    const auto h = mean_human_performance({annotation("c", {{1, 0, 1}, {1, 0, 1}, {1, 0, 1}})});
    CHECK(h.annotators == 3);
    CHECK(h.tokenwise.f1 == 1.0);
    CHECK(h.phrasewise.f1 == 1.0);
  }
  SUBCASE("worked instance") {
    // a0 = 1100, a1 = 1000, a2 = 0000.
    // a0 vs maj(a1, a2) = 0000: P 0, R 0.   a1 vs maj(a0, a2) = 0000: P 0, R 0.
    // a2 vs maj(a0, a1) = 1000: P 0, R 0 (marks nothing).
    auto h = mean_human_performance({annotation("c", {{1, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}})});
    CHECK(h.tokenwise.recall == 0.0);
    // a0 = 1100, a1 = 1100, a2 = 1000.
    // a0 vs 1000: P 1/2, R 1.   a1 vs 1000: P 1/2, R 1.   a2 vs 1100: P 1, R 1/2.
    h = mean_human_performance({annotation("c", {{1, 1, 0, 0}, {1, 1, 0, 0}, {1, 0, 0, 0}})});
    CHECK(h.tokenwise.precision == doctest::Approx((0.5 + 0.5 + 1.0) / 3));
    CHECK(h.tokenwise.recall == doctest::Approx((1.0 + 1.0 + 0.5) / 3));
    CHECK(h.tokenwise.f1 == doctest::Approx((2.0 / 3 + 2.0 / 3 + 2.0 / 3) / 3));
    CHECK(h.phrasewise.recall == 1.0);
  }
  SUBCASE("annotator marking nothing has recall zero") {
    const auto h = mean_human_performance({annotation("c", {{1, 1, 0}, {1, 1, 0}, {1, 1, 0}, {0, 0, 0}})});
    // three annotators have recall 1 against a majority of 2 of 3, the silent one 0
    CHECK(h.tokenwise.recall == doctest::Approx(3.0 / 4.0));
  }
}

TEST_CASE("evaluate and report schema") {
  std::vector<Example> ex{toy::example("a", {"x", "y"}, 1.0), toy::example("b", {"y", "y"}, 0.0)};
  ex[0].gold_mask = Mask{1, 0};
  ex[1].gold_mask = Mask{0, 0};
  MetricsReport r = evaluate(ex, {{1, 0}, {0, 1}}, {0.9, 0.2});
  CHECK(r.has_rationales);
  CHECK(r.tokenwise.precision == 0.5);
  CHECK(r.prediction.accuracy == 1.0);
  const auto j = to_json(r);
  CHECK(j.contains("examples"));
  CHECK(j["prediction"].contains("mse"));
  CHECK(j["prediction"].contains("accuracy"));
  CHECK(j["prediction"].contains("f1"));
  for (const char* g : {"tokenwise", "phrasewise"}) {
    for (const char* k : {"precision", "recall", "f1", "tp", "fp", "fn"}) CHECK(j["rationale"][g].contains(k));
  }
  ex[1].gold_mask.reset();
  r = evaluate(ex, {{1, 0}, {0, 1}}, {0.9, 0.2});
  CHECK(!r.has_rationales);
  CHECK(!to_json(r).contains("rationale"));
  const std::string table = format_table({{"model", r}});
  CHECK(table.find("Tok F1") != std::string::npos);
  CHECK(table.find("model") != std::string::npos);
}

TEST_CASE("leave-one-out") {
  // Token gate on a one-dimensional embedding: "k" tokens are kept, "w" dropped.
  std::vector<Example> ex{toy::example("two", {"k", "w", "k", "k", "w"}, 1.0),
                          toy::example("one", {"w", "k", "k", "w", "w"}, 0.0)};
  TrainingConfig c;
  c.generator = GeneratorChoice::sigmoid;
  c.hidden_size = 3;
  c.lambda1 = 0.01;
  c.lambda2 = 2.0;
  c.inverse = true;
  Vocabulary v = build_vocabulary(ex, 1);
  EmbeddingTable emb{Tensor::Zero(v.size(), 1)};
  emb.vectors(v.index("k"), 0) = 1.0;
  emb.vectors(v.index("w"), 0) = -1.0;
  ModelBundle m = ModelBundle::create(c, v, emb);
  m.generator.params.at("w").value(0, 0) = 10.0;
  m.predictor.params.at("w").value.setZero();
  m.adversary.params.at("w").value.setZero();

  // Predictors ignore their inputs, so dropping a chunk only saves sparsity
  // and coherence: chunk {0} saves 0.01 + 0.02 * 1, chunk {2,3} saves 0.02 + 0.02 * 2.
  const LeaveOneOutResult r = leave_one_out(m, ex);
  CHECK(r.candidates == 2);
  CHECK(r.improving == 2);
  CHECK(r.improving_fraction == 1.0);
  CHECK(r.mean_delta == doctest::Approx(-(0.03 + 0.06) / 2).epsilon(1e-12));

  const LeaveOneOutResult single = leave_one_out(m, {ex[1]});
  CHECK(single.candidates == 0);
  CHECK(single.improving_fraction == 0.0);
}

TEST_CASE("leave-one-out matches direct recomputation") {
  std::vector<Example> ex{toy::example("e", {"k", "w", "f", "f", "w", "k"}, 1.0)};
  TrainingConfig c;
  c.generator = GeneratorChoice::sigmoid;
  c.hidden_size = 3;
  c.lambda1 = 0.01;
  c.lambda2 = 1.0;
  c.inverse = true;
  c.lambda3 = 0.5;
  c.bias_mode = BiasMode::off;
  Vocabulary v = build_vocabulary(ex, 1);
  std::mt19937_64 rng(4);
  EmbeddingTable emb{uniform_init(v.size(), 2, 1.0, rng)};
  emb.vectors(v.index("k"), 0) = 1.0;
  emb.vectors(v.index("f"), 0) = 1.0;
  emb.vectors(v.index("w"), 0) = -1.0;
  ModelBundle m = ModelBundle::create(c, v, emb);
  m.generator.params.at("w").value << 10.0, 0.0;
  REQUIRE(rationalize(m, ex).masks[0] == Mask{1, 0, 1, 1, 0, 1});

  const Batch batch = collate(ex, {0, 0, 0, 0}, m.vocab);
  Tensor z(4, 6);
  z << 1, 0, 1, 1, 0, 1,  //
      0, 0, 1, 1, 0, 1,   //
      1, 0, 0, 0, 0, 1,   //
      1, 0, 1, 1, 0, 0;
  const Vector cost = cost_g_batch(m, batch, z, CostWeights::from(c));
  CHECK(cost(0) == cost_g_batch(m, collate(ex, {0}, m.vocab), z.topRows(1), CostWeights::from(c))(0));
  long improving = 0;
  double sum = 0;
  for (int k = 1; k < 4; ++k) {
    improving += cost(k) < cost(0);
    sum += cost(k) - cost(0);
  }
  const LeaveOneOutResult r = leave_one_out(m, ex);
  CHECK(r.candidates == 3);
  CHECK(r.improving == improving);
  CHECK(r.mean_delta == doctest::Approx(sum / 3).epsilon(1e-12));
}

TEST_CASE("bag-of-words baseline") {
  std::vector<Example> train;
  for (int i = 0; i < 40; ++i) {
    const bool pos = i % 2 == 0;
    train.push_back(toy::example(std::to_string(i), {pos ? "bad" : "good", "the", "a" + std::to_string(i % 5)},
                                 pos ? 1.0 : 0.0));
    train.back().gold_mask = Mask{static_cast<std::uint8_t>(pos), 0, 0};
  }
  const BowModel m = baseline_sigmoid_bow(train, train);
  long correct = 0;
  for (const auto& e : train) correct += (m.predict(e) >= 0.5) == (e.target >= 0.5);
  CHECK(correct == 40);
  CHECK(m.weights(m.vocab.index("bad")) > 0.0);
  for (const auto& e : train) CHECK(m.rationale(e) == *e.gold_mask);
  for (auto v : m.rationale(train[0], std::numeric_limits<double>::infinity())) CHECK(v == 0);

  // Sweep oracle: no coefficient threshold beats the chosen one on dev F1.
  std::vector<Mask> gold;
  for (const auto& e : train) gold.push_back(*e.gold_mask);
  auto f1_at = [&](double t) {
    std::vector<Mask> pred;
    for (const auto& e : train) pred.push_back(m.rationale(e, t));
    return tokenwise_prf(gold, pred).f1;
  };
  const double chosen = f1_at(m.threshold);
  for (int id = 0; id < m.vocab.size(); ++id) CHECK(f1_at(m.weights(id)) <= chosen);
  CHECK(f1_at(-std::numeric_limits<double>::infinity()) <= chosen);

  std::vector<Example> no_gold = train;
  for (auto& e : no_gold) e.gold_mask.reset();
  CHECK(std::isinf(baseline_sigmoid_bow(train, no_gold).threshold));
}

TEST_CASE("neural baselines are deterministic and share the interface") {
  SyntheticConfig sc;
  sc.size = 64;
  sc.vocab_size = 30;
  const auto data = generate_synthetic(sc);
  TrainingConfig c;
  c.hidden_size = 4;
  c.embedding_dim = 4;
  c.batch_size = 16;
  c.epochs = 2;
  ModelBundle a = baseline_sigmoid_generator(c, data, data);
  ModelBundle b = baseline_sigmoid_generator(c, data, data);
  CHECK(a.config.generator == GeneratorChoice::sigmoid);
  CHECK(rationalize(a, data).masks == rationalize(b, data).masks);
  CHECK(evaluate(a, data).has_rationales);

  ModelBundle p = baseline_rnn_predictor(c, data, data);
  ModelBundle q = baseline_rnn_predictor(c, data, data);
  CHECK(p.config.generator == GeneratorChoice::none);
  CHECK(rationalize(p, data).predictions == rationalize(q, data).predictions);
  CHECK(!evaluate(p, data).has_rationales);
}

TEST_CASE("rnn predictor baseline is a training step with the full mask") {
  SyntheticConfig sc;
  sc.size = 16;
  sc.vocab_size = 30;
  const auto data = generate_synthetic(sc);
  TrainingConfig c;
  c.hidden_size = 4;
  c.embedding_dim = 4;
  c.batch_size = 16;
  c.generator = GeneratorChoice::none;
  c.lambda1 = c.lambda2 = 0.0;
  Vocabulary v = build_vocabulary(data, 1);
  EmbeddingTable e = random_embeddings(v, 4, 1);
  ModelBundle m = ModelBundle::create(c, v, e);
  const Batch batch = collate(data, toy::all_rows(16), v);
  TrainingState s = TrainingState::for_bundle(m);
  const Vector before = predict_masked(m.predictor, batch, m.embeddings, batch.pad_mask);
  const StepLog log = train_step(m, s, batch, 3);
  CHECK(log.f_loss == doctest::Approx((before - batch.targets).squaredNorm() / 16).epsilon(1e-12));
}
