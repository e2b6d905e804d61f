#include "ean/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ean {

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

void check_parallel(const std::vector<Mask>& gold, const std::vector<Mask>& predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted mask counts differ");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) {
      throw std::invalid_argument("mask length mismatch at comment " + std::to_string(i));
    }
  }
}

bool any_marked(const Mask& m) { return std::any_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; }); }

}  // namespace

double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

std::vector<Chunk> chunks(const Mask& mask, std::size_t source) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < mask.size();) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < mask.size() && mask[j + 1]) ++j;
    out.push_back({i, j, source});
    i = j + 1;
  }
  return out;
}

PRF tokenwise_prf(const std::vector<Mask>& gold, const std::vector<Mask>& predicted) {
  check_parallel(gold, predicted);
  PRF r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      const bool g = gold[i][t] != 0, p = predicted[i][t] != 0;
      if (g && p) ++r.tp;
      else if (p) ++r.fp;
      else if (g) ++r.fn;
    }
  }
  r.precision = ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fp));
  r.recall = ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn));
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

PRF phrasewise_prf(const std::vector<Mask>& gold, const std::vector<Mask>& predicted) {
  check_parallel(gold, predicted);
  // tp/fn count gold chunks (captured / missed); fp counts predicted chunks
  // with no gold token.
  PRF r;
  long predicted_chunks = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const Chunk& c : chunks(gold[i])) {
      bool hit = false;
      for (std::size_t t = c.start; t <= c.end && !hit; ++t) hit = predicted[i][t] != 0;
      hit ? ++r.tp : ++r.fn;
    }
    for (const Chunk& c : chunks(predicted[i])) {
      ++predicted_chunks;
      bool hit = false;
      for (std::size_t t = c.start; t <= c.end && !hit; ++t) hit = gold[i][t] != 0;
      if (!hit) ++r.fp;
    }
  }
  r.precision = ratio(static_cast<double>(predicted_chunks - r.fp), static_cast<double>(predicted_chunks));
  r.recall = ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn));
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

PredictionMetrics prediction_metrics(const std::vector<double>& predictions, const std::vector<double>& targets,
                                     double threshold) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("prediction and target counts differ");
  PredictionMetrics m;
  if (predictions.empty()) return m;
  long tp = 0, fp = 0, fn = 0, correct = 0;
  double se = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    se += d * d;
    const bool p = predictions[i] >= threshold, y = targets[i] >= threshold;
    if (p == y) ++correct;
    if (p && y) ++tp;
    else if (p) ++fp;
    else if (y) ++fn;
  }
  const auto n = static_cast<double>(predictions.size());
  m.mse = se / n;
  m.accuracy = static_cast<double>(correct) / n;
  m.f1 = f1_score(ratio(tp, tp + fp), ratio(tp, tp + fn));
  return m;
}

// ---------------------------------------------------------------------------
// Agreement and significance

double krippendorff_alpha(const std::vector<AnnotationSet>& sets, AgreementUnit unit) {
  // Binary nominal data: only the off-diagonal coincidence o_01 matters.
  double o01 = 0.0, n0 = 0.0, n1 = 0.0;
  auto add_unit = [&](double ones, double zeros) {
    const double m = ones + zeros;
    if (m < 2) return;
    o01 += ones * zeros / (m - 1.0);
    n0 += zeros;
    n1 += ones;
  };
  for (const AnnotationSet& s : sets) {
    if (unit == AgreementUnit::comment) {
      double ones = 0;
      for (const Mask& m : s.masks) ones += any_marked(m) ? 1 : 0;
      add_unit(ones, static_cast<double>(s.masks.size()) - ones);
    } else {
      if (s.masks.empty()) continue;
      const std::size_t len = s.masks.front().size();
      for (const Mask& m : s.masks) {
        if (m.size() != len) throw DataError(s.comment_id + ": annotator masks differ in length");
      }
      for (std::size_t t = 0; t < len; ++t) {
        double ones = 0;
        for (const Mask& m : s.masks) ones += m[t] ? 1 : 0;
        add_unit(ones, static_cast<double>(s.masks.size()) - ones);
      }
    }
  }
  const double n = n0 + n1;
  if (n < 2) throw DataError("krippendorff_alpha: no unit carries two or more annotations");
  if (n0 == 0 || n1 == 0) return 1.0;  // a single category everywhere: no disagreement possible
  return 1.0 - (n - 1.0) * o01 / (n0 * n1);
}

McNemarResult mcnemar(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct) {
  if (a_correct.size() != b_correct.size()) throw std::invalid_argument("mcnemar: flag counts differ");
  McNemarResult r;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    if (a_correct[i] && !b_correct[i]) ++r.b;
    if (!a_correct[i] && b_correct[i]) ++r.c;
  }
  const long n = r.b + r.c;
  if (n == 0) return r;
  r.statistic = static_cast<double>((r.b - r.c) * (r.b - r.c)) / static_cast<double>(n);
  // Two-sided exact binomial tail, computed in log space.
  const long k = std::min(r.b, r.c);
  double tail = 0.0;
  for (long i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0);
    tail += std::exp(log_term);
  }
  r.p_value = std::min(1.0, 2.0 * tail);
  return r;
}

// ---------------------------------------------------------------------------
// Leave-one-out

LeaveOneOutResult leave_one_out(ModelBundle& bundle, const std::vector<Example>& examples) {
  LeaveOneOutResult r;
  const CostWeights w = CostWeights::from(bundle.config);
  const Rationalized rat = rationalize(bundle, examples, true);
  double delta_sum = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto parts = chunks(rat.masks[i]);
    if (parts.size() < 2) continue;
    std::vector<std::size_t> rows(parts.size() + 1, i);
    const Batch batch = collate(examples, rows, bundle.vocab);
    Tensor z = Tensor::Zero(batch.size(), batch.width());
    for (Eigen::Index row = 0; row < batch.size(); ++row) {
      for (std::size_t t = 0; t < rat.masks[i].size(); ++t) z(row, static_cast<Eigen::Index>(t)) = rat.masks[i][t];
    }
    for (std::size_t c = 0; c < parts.size(); ++c) {
      for (std::size_t t = parts[c].start; t <= parts[c].end; ++t) {
        z(static_cast<Eigen::Index>(c + 1), static_cast<Eigen::Index>(t)) = 0.0;
      }
    }
    const Vector cost = cost_g_batch(bundle, batch, z, w);
    for (std::size_t c = 0; c < parts.size(); ++c) {
      const double delta = cost(static_cast<Eigen::Index>(c + 1)) - cost(0);
      ++r.candidates;
      if (delta < 0) ++r.improving;
      delta_sum += delta;
    }
  }
  if (r.candidates > 0) {
    r.improving_fraction = static_cast<double>(r.improving) / static_cast<double>(r.candidates);
    r.mean_delta = delta_sum / static_cast<double>(r.candidates);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Human performance

HumanPerformance mean_human_performance(const std::vector<AnnotationSet>& sets) {
  struct Acc {
    std::vector<Mask> own;
    std::vector<Mask> reference;
  };
  std::map<std::string, Acc> per_annotator;
  std::vector<std::string> order;
  for (const AnnotationSet& s : sets) {
    if (s.masks.size() < 2) continue;
    for (std::size_t a = 0; a < s.masks.size(); ++a) {
      AnnotationSet others;
      others.comment_id = s.comment_id;
      for (std::size_t b = 0; b < s.masks.size(); ++b) {
        if (b != a) others.masks.push_back(s.masks[b]);
      }
      const std::string name = a < s.annotators.size() ? s.annotators[a] : std::to_string(a);
      if (!per_annotator.count(name)) order.push_back(name);
      Acc& acc = per_annotator[name];
      acc.own.push_back(s.masks[a]);
      acc.reference.push_back(majority_vote(others));
    }
  }
  HumanPerformance h;
  h.annotators = order.size();
  if (order.empty()) return h;
  for (const auto& name : order) {
    const Acc& acc = per_annotator[name];
    const PRF tok = tokenwise_prf(acc.reference, acc.own);
    const PRF phr = phrasewise_prf(acc.reference, acc.own);
    h.tokenwise.precision += tok.precision;
    h.tokenwise.recall += tok.recall;
    h.tokenwise.f1 += tok.f1;
    h.phrasewise.precision += phr.precision;
    h.phrasewise.recall += phr.recall;
    h.phrasewise.f1 += phr.f1;
  }
  const auto n = static_cast<double>(order.size());
  for (PRF* p : {&h.tokenwise, &h.phrasewise}) {
    p->precision /= n;
    p->recall /= n;
    p->f1 /= n;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Reports

MetricsReport evaluate(const std::vector<Example>& examples, const std::vector<Mask>& predicted,
                       const std::vector<double>& predictions) {
  MetricsReport rep;
  rep.examples = examples.size();
  std::vector<double> targets;
  std::vector<Mask> gold;
  bool all_gold = !examples.empty();
  for (const auto& ex : examples) {
    targets.push_back(ex.target);
    if (ex.gold_mask) {
      gold.push_back(*ex.gold_mask);
    } else {
      all_gold = false;
    }
  }
  rep.prediction = prediction_metrics(predictions, targets);
  if (all_gold && !predicted.empty()) {
    rep.has_rationales = true;
    rep.tokenwise = tokenwise_prf(gold, predicted);
    rep.phrasewise = phrasewise_prf(gold, predicted);
  }
  return rep;
}

MetricsReport evaluate(ModelBundle& bundle, const std::vector<Example>& examples) {
  const Rationalized r = rationalize(bundle, examples, true);
  if (bundle.config.generator == GeneratorChoice::none) return evaluate(examples, {}, r.predictions);
  return evaluate(examples, r.masks, r.predictions);
}

nlohmann::json to_json(const MetricsReport& report) {
  auto prf = [](const PRF& p) {
    return nlohmann::json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
                          {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
  };
  nlohmann::json j;
  j["examples"] = report.examples;
  j["prediction"] = {{"mse", report.prediction.mse},
                     {"accuracy", report.prediction.accuracy},
                     {"f1", report.prediction.f1}};
  if (report.has_rationales) {
    j["rationale"] = {{"tokenwise", prf(report.tokenwise)}, {"phrasewise", prf(report.phrasewise)}};
  }
  return j;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t name_w = 5;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "Model"
     << " | Tok F1   Pr.   Rec. | Phr F1   Pr.   Rec. |   MSE   Acc.    F1\n";
  os << std::string(name_w, '-') << "-+---------------------+---------------------+--------------------\n";
  auto cell = [&](double v, bool present) {
    std::ostringstream c;
    if (present) {
      c << std::fixed << std::setprecision(2) << std::setw(6) << v;
    } else {
      c << std::setw(6) << "-";
    }
    return c.str();
  };
  for (const auto& [name, r] : rows) {
    const bool rat = r.has_rationales;
    os << std::left << std::setw(static_cast<int>(name_w)) << name << " | " << cell(r.tokenwise.f1, rat) << ' '
       << cell(r.tokenwise.precision, rat) << ' ' << cell(r.tokenwise.recall, rat) << " | "
       << cell(r.phrasewise.f1, rat) << ' ' << cell(r.phrasewise.precision, rat) << ' '
       << cell(r.phrasewise.recall, rat) << " | ";
    std::ostringstream mse;
    mse << std::fixed << std::setprecision(3) << std::setw(6) << r.prediction.mse;
    os << mse.str() << ' ' << cell(r.prediction.accuracy, true) << ' ' << cell(r.prediction.f1, true) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Baselines

double BowModel::predict(const Example& ex) const {
  double s = bias;
  for (int id : vocab.encode(ex.tokens)) s += weights(id);
  return sigmoid(s);
}

Mask BowModel::rationale(const Example& ex) const { return rationale(ex, threshold); }

Mask BowModel::rationale(const Example& ex, double t) const {
  Mask m;
  for (int id : vocab.encode(ex.tokens)) m.push_back(weights(id) > t ? 1 : 0);
  return m;
}

BowModel baseline_sigmoid_bow(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                              const BowOptions& options) {
  BowModel model;
  model.vocab = build_vocabulary(train_set, 1);
  const int v = model.vocab.size();
  std::vector<std::vector<std::pair<int, double>>> features;
  for (const auto& ex : train_set) {
    std::map<int, double> counts;
    for (int id : model.vocab.encode(ex.tokens)) counts[id] += 1.0;
    features.emplace_back(counts.begin(), counts.end());
  }
  model.weights = Vector::Zero(v);
  const auto n = static_cast<double>(train_set.size());
  for (int it = 0; it < options.iterations; ++it) {
    Vector grad = options.l2 * model.weights;
    double grad_b = 0.0;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      double s = model.bias;
      for (const auto& [id, c] : features[i]) s += model.weights(id) * c;
      const double err = (sigmoid(s) - train_set[i].target) / n;
      grad_b += err;
      for (const auto& [id, c] : features[i]) grad(id) += err * c;
    }
    model.weights -= options.learning_rate * grad;
    model.bias -= options.learning_rate * grad_b;
  }

  // Threshold sweep, sparsest first so ties keep the smaller rationale.
  std::set<double, std::greater<>> distinct;
  for (int id = 0; id < v; ++id) {
    if (id != Vocabulary::kPad) distinct.insert(model.weights(id));
  }
  std::vector<double> candidates{std::numeric_limits<double>::infinity()};
  candidates.insert(candidates.end(), distinct.begin(), distinct.end());
  candidates.push_back(-std::numeric_limits<double>::infinity());

  std::vector<Mask> gold;
  for (const auto& ex : dev_set) {
    if (!ex.gold_mask) {
      gold.clear();
      break;
    }
    gold.push_back(*ex.gold_mask);
  }
  model.threshold = candidates.front();
  if (gold.empty()) return model;
  double best = -1.0;
  for (double t : candidates) {
    std::vector<Mask> pred;
    for (const auto& ex : dev_set) pred.push_back(model.rationale(ex, t));
    const double f1 = tokenwise_prf(gold, pred).f1;
    if (f1 > best) {
      best = f1;
      model.threshold = t;
    }
  }
  return model;
}

ModelBundle baseline_rnn_predictor(TrainingConfig config, const std::vector<Example>& train_set,
                                   const std::vector<Example>& dev_set) {
  config.generator = GeneratorChoice::none;
  config.lambda1 = config.lambda2 = 0.0;
  config.inverse = false;
  return train_model(config, train_set, dev_set);
}

ModelBundle baseline_sigmoid_generator(TrainingConfig config, const std::vector<Example>& train_set,
                                       const std::vector<Example>& dev_set) {
  config.generator = GeneratorChoice::sigmoid;
  return train_model(config, train_set, dev_set);
}

}  // namespace ean
