#include "ean/training.hpp"

#include "ean/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace ean {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument(key + ": expected on/off, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return n;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  }
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

GeneratorKind kind_for(GeneratorChoice g) {
  return g == GeneratorChoice::sigmoid ? GeneratorKind::token_sigmoid : GeneratorKind::recurrent;
}

void apply_bias_mode(PredictorNet& net, const TrainingConfig& c) {
  switch (c.bias_mode) {
    case BiasMode::off: break;
    case BiasMode::init: set_default(net, c.default_value, false); break;
    case BiasMode::fixed: set_default(net, c.default_value, true); break;
  }
}

std::vector<Mask> gold_masks(const std::vector<Example>& examples) {
  std::vector<Mask> gold;
  for (const auto& ex : examples) {
    if (!ex.gold_mask) return {};
    gold.push_back(*ex.gold_mask);
  }
  return gold;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(BiasMode m) {
  switch (m) {
    case BiasMode::off: return "off";
    case BiasMode::init: return "init";
    case BiasMode::fixed: return "fixed";
  }
  return "?";
}

std::string to_string(GeneratorChoice g) {
  switch (g) {
    case GeneratorChoice::recurrent: return "recurrent";
    case GeneratorChoice::sigmoid: return "sigmoid";
    case GeneratorChoice::none: return "none";
  }
  return "?";
}

void TrainingConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw std::invalid_argument("lambda weights must be non-negative");
  if (!(default_value > 0 && default_value < 1)) throw std::invalid_argument("default_value must lie in (0, 1)");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size <= 0 || batch_size % 2 != 0) throw std::invalid_argument("batch_size must be a positive even number");
  if (hidden_size <= 0 || embedding_dim <= 0) throw std::invalid_argument("hidden_size and embedding_dim must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
  if (!(baseline_decay >= 0 && baseline_decay < 1)) throw std::invalid_argument("baseline_decay must lie in [0, 1)");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
}

void TrainingConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(raw_value);
  if (key == "lambda1") lambda1 = parse_real(key, v);
  else if (key == "lambda2") lambda2 = parse_real(key, v);
  else if (key == "lambda3") lambda3 = parse_real(key, v);
  else if (key == "inverse") inverse = parse_bool(key, v);
  else if (key == "default_value") default_value = parse_real(key, v);
  else if (key == "bias_mode") {
    if (v == "off") bias_mode = BiasMode::off;
    else if (v == "init") bias_mode = BiasMode::init;
    else if (v == "fixed") bias_mode = BiasMode::fixed;
    else throw std::invalid_argument("bias_mode: expected off|init|fixed, got '" + v + "'");
  } else if (key == "epochs") epochs = static_cast<int>(parse_int(key, v));
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, v));
  else if (key == "hidden_size") hidden_size = static_cast<int>(parse_int(key, v));
  else if (key == "embedding_dim") embedding_dim = static_cast<int>(parse_int(key, v));
  else if (key == "learning_rate") learning_rate = parse_real(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "sample_count") sample_count = static_cast<int>(parse_int(key, v));
  else if (key == "generator") {
    if (v == "recurrent") generator = GeneratorChoice::recurrent;
    else if (v == "sigmoid") generator = GeneratorChoice::sigmoid;
    else if (v == "none") generator = GeneratorChoice::none;
    else throw std::invalid_argument("generator: expected recurrent|sigmoid|none, got '" + v + "'");
  } else if (key == "cost_baseline") cost_baseline = parse_bool(key, v);
  else if (key == "baseline_decay") baseline_decay = parse_real(key, v);
  else if (key == "min_count") min_count = static_cast<int>(parse_int(key, v));
  else if (key == "keep_best") keep_best = parse_bool(key, v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

std::map<std::string, std::string> TrainingConfig::to_map() const {
  return {
      {"lambda1", fmt_real(lambda1)},
      {"lambda2", fmt_real(lambda2)},
      {"lambda3", fmt_real(lambda3)},
      {"inverse", inverse ? "on" : "off"},
      {"default_value", fmt_real(default_value)},
      {"bias_mode", to_string(bias_mode)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"hidden_size", std::to_string(hidden_size)},
      {"embedding_dim", std::to_string(embedding_dim)},
      {"learning_rate", fmt_real(learning_rate)},
      {"seed", std::to_string(seed)},
      {"sample_count", std::to_string(sample_count)},
      {"generator", to_string(generator)},
      {"cost_baseline", cost_baseline ? "on" : "off"},
      {"baseline_decay", fmt_real(baseline_decay)},
      {"min_count", std::to_string(min_count)},
      {"keep_best", keep_best ? "on" : "off"},
  };
}

std::string TrainingConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (const auto& [k, v] : to_map()) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      base.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

void save_config(const std::filesystem::path& path, const TrainingConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# config hash " << config.hash() << "\n";
  for (const auto& [k, v] : config.to_map()) out << k << " = " << v << "\n";
}

// ---------------------------------------------------------------------------
// Bundle

ModelBundle ModelBundle::create(const TrainingConfig& config, Vocabulary vocab, EmbeddingTable embeddings) {
  config.validate();
  if (embeddings.vectors.rows() != vocab.size()) {
    throw ShapeError("embedding table has " + std::to_string(embeddings.vectors.rows()) + " rows for a vocabulary of " +
                     std::to_string(vocab.size()));
  }
  ModelBundle b;
  b.config = config;
  b.config.embedding_dim = static_cast<int>(embeddings.dim());
  b.vocab = std::move(vocab);
  b.embeddings = std::move(embeddings);
  std::mt19937_64 rng(derive_seed(config.seed, 0x6e6574));
  const Eigen::Index d = b.embeddings.dim();
  b.generator = GeneratorNet::create(kind_for(config.generator), d, config.hidden_size, rng);
  b.predictor = PredictorNet::create(d, config.hidden_size, rng);
  b.adversary = PredictorNet::create(d, config.hidden_size, rng);
  apply_bias_mode(b.predictor, b.config);
  apply_bias_mode(b.adversary, b.config);
  return b;
}

TrainingState TrainingState::for_bundle(const ModelBundle& bundle) {
  const double lr = bundle.config.learning_rate;
  return {AdamState::for_params(bundle.generator.params, lr), AdamState::for_params(bundle.predictor.params, lr),
          AdamState::for_params(bundle.adversary.params, lr)};
}

// ---------------------------------------------------------------------------
// Objective

CostTerms cost_g(const Tensor& z, Eigen::Index row, int length, double target, double f_pred, double f2_anti,
                 double f2_default, const CostWeights& w) {
  CostTerms c;
  c.prediction = cost_f(f_pred, target);
  c.sparsity = w.lambda1 * sparsity(z, row, length);
  c.coherence = w.lambda1 * w.lambda2 * coherence(z, row, length);
  const double gap = f2_anti - f2_default;
  c.inverse = w.lambda3 * gap * gap;
  return c;
}

Vector cost_g_batch(ModelBundle& bundle, const Batch& batch, const Tensor& z, const CostWeights& w) {
  const Vector f = predict_masked(bundle.predictor, batch, bundle.embeddings, z);
  Vector f2 = Vector::Zero(batch.size());
  const double f2_default = adversary_default(bundle.adversary);
  if (w.lambda3 != 0.0) {
    f2 = predict_masked(bundle.adversary, batch, bundle.embeddings, antirationale(z, batch.pad_mask));
  } else {
    f2.setConstant(f2_default);
  }
  Vector out(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    out(i) = cost_g(z, i, batch.lengths[static_cast<std::size_t>(i)], batch.targets(i), f(i), f2(i), f2_default, w)
                 .total();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

StepLog train_step(ModelBundle& bundle, TrainingState& state, const Batch& batch, std::uint64_t seed) {
  const TrainingConfig& cfg = bundle.config;
  const CostWeights weights = CostWeights::from(cfg);
  std::mt19937_64 rng(seed);
  StepLog log;

  // (1) generator forward and mask sampling
  const bool has_generator = cfg.generator != GeneratorChoice::none;
  Tape gen_tape;
  Var probs;
  std::vector<RationaleSample> samples;
  if (has_generator) {
    probs = token_probabilities(gen_tape, bundle.generator, batch, bundle.embeddings);
    for (int s = 0; s < cfg.sample_count; ++s) samples.push_back(sample_mask(probs.value(), batch.pad_mask, rng));
  } else {
    samples.push_back(RationaleSample{batch.pad_mask, batch.pad_mask, Vector::Zero(batch.size())});
  }
  const Tensor& z = samples.front().mask;

  // (2) primary predictor on the rationale
  {
    Tape tape;
    Var pred = predict_masked(tape, bundle.predictor, batch, bundle.embeddings, z);
    Var loss = mean(squared_error(pred, tape.constant(batch.targets)));
    log.f_loss = loss.scalar();
    tape.backward(loss);
    adam_step(bundle.predictor.params, state.predictor);
  }

  // (3) adversary on the permuted antirationale
  {
    const PermutedMasks permuted = permute_masks(batch, antirationale(z, batch.pad_mask), rng);
    Tape tape;
    Var loss = cost_f2(tape, bundle.adversary, batch, bundle.embeddings, permuted.masks);
    log.f2_loss = loss.scalar();
    tape.backward(loss);
    adam_step(bundle.adversary.params, state.adversary);
  }

  // (4) generator by the score-function estimator
  std::vector<std::pair<Var, Vector>> terms;
  double total = 0.0;
  for (const RationaleSample& s : samples) {
    Vector costs = cost_g_batch(bundle, batch, s.mask, weights);
    const double batch_mean = costs.mean();
    total += batch_mean;
    if (!has_generator) continue;
    if (cfg.cost_baseline) {
      if (!state.baseline_ready) {
        state.baseline = batch_mean;
        state.baseline_ready = true;
      }
      costs.array() -= state.baseline;
      state.baseline = cfg.baseline_decay * state.baseline + (1.0 - cfg.baseline_decay) * batch_mean;
    }
    terms.emplace_back(mask_log_prob(probs, s.mask, batch.pad_mask), std::move(costs));
  }
  log.gen_loss = total / static_cast<double>(samples.size());
  if (has_generator) {
    reinforce_gradient(gen_tape, bundle.generator.params, terms);
    adam_step(bundle.generator.params, state.generator);
  }
  return log;
}

void train(ModelBundle& bundle, const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
           const EpochCallback& on_epoch) {
  const TrainingConfig& cfg = bundle.config;
  cfg.validate();
  if (train_set.empty()) throw DataError("training corpus is empty");
  if (static_cast<int>(train_set.size()) < cfg.batch_size) {
    throw DataError("training corpus smaller than one batch (" + std::to_string(cfg.batch_size) + ")");
  }
  const std::vector<Mask> dev_gold = gold_masks(dev_set);

  TrainingState state = TrainingState::for_bundle(bundle);
  bundle.log.clear();
  bundle.best_epoch = 0;
  double best_f1 = -1.0;
  GeneratorNet best_gen = bundle.generator;
  PredictorNet best_pred = bundle.predictor;
  PredictorNet best_adv = bundle.adversary;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train_set, bundle.vocab, cfg.batch_size, derive_seed(cfg.seed, 0x62, epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t k = 0; k < batches.size(); ++k) {
      const StepLog s = train_step(bundle, state, batches[k], derive_seed(cfg.seed, epoch, k + 1));
      rec.gen_loss += s.gen_loss;
      rec.f_loss += s.f_loss;
      rec.f2_loss += s.f2_loss;
    }
    const auto nb = static_cast<double>(batches.size());
    rec.gen_loss /= nb;
    rec.f_loss /= nb;
    rec.f2_loss /= nb;

    if (!dev_set.empty()) {
      const Rationalized r = rationalize(bundle, dev_set, true);
      std::vector<double> targets;
      for (const auto& ex : dev_set) targets.push_back(ex.target);
      rec.dev_mse = prediction_metrics(r.predictions, targets).mse;
      if (!dev_gold.empty()) rec.dev_token_f1 = tokenwise_prf(dev_gold, r.masks).f1;
    }
    bundle.log.push_back(rec);

    const bool better = dev_gold.empty() ? true : rec.dev_token_f1 > best_f1;
    if (better) {
      best_f1 = rec.dev_token_f1;
      bundle.best_epoch = epoch;
      if (cfg.keep_best) {
        best_gen = bundle.generator;
        best_pred = bundle.predictor;
        best_adv = bundle.adversary;
      }
    }
    if (on_epoch && !on_epoch(rec, bundle)) break;
  }
  if (cfg.keep_best && bundle.best_epoch > 0) {
    bundle.generator = std::move(best_gen);
    bundle.predictor = std::move(best_pred);
    bundle.adversary = std::move(best_adv);
  }
}

ModelBundle train_model(const TrainingConfig& config, const std::vector<Example>& train_set,
                        const std::vector<Example>& dev_set, const std::optional<std::filesystem::path>& embeddings) {
  config.validate();
  Vocabulary vocab = build_vocabulary(train_set, config.min_count);
  EmbeddingTable emb = embeddings ? load_embeddings(*embeddings, vocab, derive_seed(config.seed, 0x656d62))
                                  : random_embeddings(vocab, config.embedding_dim, derive_seed(config.seed, 0x656d62));
  ModelBundle bundle = ModelBundle::create(config, std::move(vocab), std::move(emb));
  train(bundle, train_set, dev_set);
  return bundle;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,gen_loss,f_loss,f2_loss,dev_token_f1,dev_mse\n";
  out << std::setprecision(10);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.gen_loss << ',' << r.f_loss << ',' << r.f2_loss << ',' << r.dev_token_f1 << ','
        << r.dev_mse << '\n';
  }
}

// ---------------------------------------------------------------------------
// Inference

Rationalized rationalize(ModelBundle& bundle, const std::vector<Example>& examples, bool deterministic,
                         std::uint64_t seed) {
  Rationalized out;
  out.probs.resize(examples.size());
  out.masks.resize(examples.size());
  out.predictions.resize(examples.size());
  const auto batches = make_eval_batches(examples, bundle.vocab, 256);
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const Batch& batch = batches[k];
    Tensor probs;
    Tensor z;
    if (bundle.config.generator == GeneratorChoice::none) {
      probs = batch.pad_mask;
      z = batch.pad_mask;
    } else {
      Tape tape;
      probs = token_probabilities(tape, bundle.generator, batch, bundle.embeddings).value();
      if (deterministic) {
        z = threshold_mask(probs, batch.pad_mask, 0.5);
      } else {
        std::mt19937_64 rng(derive_seed(seed, 0x7261, k));
        z = sample_mask(probs, batch.pad_mask, rng).mask;
      }
    }
    const Vector pred = predict_masked(bundle.predictor, batch, bundle.embeddings, z);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const std::size_t src = batch.source[static_cast<std::size_t>(i)];
      const int len = batch.lengths[static_cast<std::size_t>(i)];
      out.probs[src] = probs.row(i).head(len);
      Mask m(static_cast<std::size_t>(len));
      for (int t = 0; t < len; ++t) m[static_cast<std::size_t>(t)] = z(i, t) > 0.5 ? 1 : 0;
      out.masks[src] = std::move(m);
      out.predictions[src] = pred(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<TrainingConfig> Grid::cells(const TrainingConfig& base) const {
  std::vector<TrainingConfig> out;
  std::size_t index = 0;
  for (double l1 : lambda1) {
    for (double l2 : lambda2) {
      for (double l3 : lambda3) {
        TrainingConfig c = base;
        c.lambda1 = l1;
        c.lambda2 = l2;
        c.inverse = l3 > 0.0;
        c.lambda3 = l3 > 0.0 ? l3 : base.lambda3;
        c.seed = derive_seed(base.seed, 0x67726964, index++);
        out.push_back(c);
      }
    }
  }
  return out;
}

Grid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grid file " + path.string());
  Grid g;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw DataError(where + ": expected 'lambdaK = v1, v2, ...'");
    const std::string key = trim(line.substr(0, eq));
    std::vector<double> values;
    std::stringstream ss(line.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      try {
        values.push_back(parse_real(key, trim(item)));
      } catch (const std::invalid_argument& e) {
        throw DataError(where + ": " + e.what());
      }
    }
    if (values.empty()) throw DataError(where + ": no values for " + key);
    if (key == "lambda1") g.lambda1 = values;
    else if (key == "lambda2") g.lambda2 = values;
    else if (key == "lambda3") g.lambda3 = values;
    else throw DataError(where + ": unknown grid key '" + key + "'");
  }
  return g;
}

std::size_t select_best(const std::vector<GridRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("select_best: no rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].dev_token_f1 > rows[best].dev_token_f1) best = i;
  }
  return best;
}

std::vector<GridRow> grid_search(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                                 const TrainingConfig& base, const Grid& grid, int jobs, std::vector<GridRow> done,
                                 const std::function<void(const GridRow&)>& on_row,
                                 const std::optional<std::filesystem::path>& embeddings) {
  const auto cells = grid.cells(base);
  std::vector<std::optional<GridRow>> rows(cells.size());
  for (const GridRow& r : done) {
    if (r.cell < rows.size()) rows[r.cell] = r;
  }
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!rows[i]) pending.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      const std::size_t cell = pending[k];
      try {
        const TrainingConfig& cfg = cells[cell];
        ModelBundle bundle = train_model(cfg, train_set, dev_set, embeddings);
        const MetricsReport rep = evaluate(bundle, dev_set);
        GridRow row;
        row.cell = cell;
        row.lambda1 = cfg.lambda1;
        row.lambda2 = cfg.lambda2;
        row.lambda3 = cfg.effective_lambda3();
        row.dev_token_f1 = rep.tokenwise.f1;
        row.dev_token_precision = rep.tokenwise.precision;
        row.dev_token_recall = rep.tokenwise.recall;
        row.dev_phrase_f1 = rep.phrasewise.f1;
        row.dev_mse = rep.prediction.mse;
        row.dev_accuracy = rep.prediction.accuracy;
        row.best_epoch = bundle.best_epoch;
        std::lock_guard lock(mu);
        rows[cell] = row;
        if (on_row) on_row(row);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = pending.size();
        return;
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(pending.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<GridRow> out;
  for (auto& r : rows) {
    GridRow row = *r;
    row.selected = false;
    out.push_back(row);
  }
  if (!out.empty()) out[select_best(out)].selected = true;
  return out;
}

}  // namespace ean
