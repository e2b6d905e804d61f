#pragma once

// Generator objective, interleaved three-network training, configuration and
// hyperparameter grids.

#include "ean/corpus.hpp"
#include "ean/generator.hpp"
#include "ean/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ean {

enum class BiasMode { off, init, fixed };

/// Which mask source drives the predictor. `none` feeds the full text
/// (z = 1 on every real token) and never updates a generator.
enum class GeneratorChoice { recurrent, sigmoid, none };

struct TrainingConfig {
  double lambda1 = 0.0006;
  double lambda2 = 2.0;
  double lambda3 = 1.0;  // only effective with `inverse`
  bool inverse = false;
  double default_value = 0.05;
  BiasMode bias_mode = BiasMode::init;
  int epochs = 50;
  int batch_size = 64;
  int hidden_size = 128;
  int embedding_dim = 100;  // used when no embedding file is given
  double learning_rate = 0.001;
  std::uint64_t seed = 1;
  int sample_count = 1;
  GeneratorChoice generator = GeneratorChoice::recurrent;
  bool cost_baseline = false;  // moving-average REINFORCE baseline
  double baseline_decay = 0.9;
  int min_count = 1;
  bool keep_best = true;

  /// Effective adversarial weight: zero unless the inverse term is on.
  double effective_lambda3() const { return inverse ? lambda3 : 0.0; }

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;

  /// Applies one `key = value` assignment; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  std::string hash() const;
};

/// `key = value` per line, `#` starts a comment.
TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = {});
void save_config(const std::filesystem::path& path, const TrainingConfig& config);

std::string to_string(BiasMode m);
std::string to_string(GeneratorChoice g);

struct EpochRecord {
  int epoch = 0;
  double gen_loss = 0.0;
  double f_loss = 0.0;
  double f2_loss = 0.0;
  double dev_token_f1 = 0.0;
  double dev_mse = 0.0;
};

struct ModelBundle {
  TrainingConfig config;
  Vocabulary vocab;
  EmbeddingTable embeddings;
  GeneratorNet generator;
  PredictorNet predictor;
  PredictorNet adversary;
  std::vector<EpochRecord> log;
  int best_epoch = 0;

  /// Fresh networks for `config`, initialised from config.seed, with the bias
  /// mode applied to both predictors.
  static ModelBundle create(const TrainingConfig& config, Vocabulary vocab, EmbeddingTable embeddings);
};

struct CostTerms {
  double prediction = 0.0;  // (f(x,z) - y)^2
  double sparsity = 0.0;    // lambda1 * |z|
  double coherence = 0.0;   // lambda1 * lambda2 * transitions
  double inverse = 0.0;     // lambda3 * (f2(x, 1-z) - f2(x, 0))^2
  double total() const { return prediction + sparsity + coherence + inverse; }
};

struct CostWeights {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  static CostWeights from(const TrainingConfig& c) { return {c.lambda1, c.lambda2, c.effective_lambda3()}; }
};

/// Generator objective for one row given precomputed predictor outputs.
CostTerms cost_g(const Tensor& z, Eigen::Index row, int length, double target, double f_pred, double f2_anti,
                 double f2_default, const CostWeights& w);

/// Per-row generator objective evaluated with the bundle's current predictors;
/// f2 sees the true antirationale 1 - z.
Vector cost_g_batch(ModelBundle& bundle, const Batch& batch, const Tensor& z, const CostWeights& w);

/// Adam states and baseline carried across training steps.
struct TrainingState {
  AdamState generator;
  AdamState predictor;
  AdamState adversary;
  double baseline = 0.0;
  bool baseline_ready = false;

  static TrainingState for_bundle(const ModelBundle& bundle);
};

struct StepLog {
  double gen_loss = 0.0;
  double f_loss = 0.0;
  double f2_loss = 0.0;
};

/// One interleaved update: sample z; update f on (x, z); update f2 on the
/// permuted antirationale; update g by the score-function estimator with the
/// objective evaluated under the freshly updated predictors.
StepLog train_step(ModelBundle& bundle, TrainingState& state, const Batch& batch, std::uint64_t seed);

/// Per-epoch observer; return false to stop early (used by tests only).
using EpochCallback = std::function<bool(const EpochRecord&, const ModelBundle&)>;

/// Full run; keeps the best-dev-F1 snapshot when config.keep_best is set.
void train(ModelBundle& bundle, const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
           const EpochCallback& on_epoch = nullptr);

/// Builds vocabulary and embeddings for `train_set` and trains from scratch.
ModelBundle train_model(const TrainingConfig& config, const std::vector<Example>& train_set,
                        const std::vector<Example>& dev_set, const std::optional<std::filesystem::path>& embeddings = {});

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

// ---------------------------------------------------------------------------
// Inference

struct Rationalized {
  std::vector<Tensor> probs;   // per example, 1 x T_i
  std::vector<Mask> masks;     // per example
  std::vector<double> predictions;
};

/// Rationales and predictions for every example in input order. Deterministic
/// mode thresholds p at 0.5; otherwise z is sampled from `seed`.
Rationalized rationalize(ModelBundle& bundle, const std::vector<Example>& examples, bool deterministic = true,
                         std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Hyperparameter grid

struct Grid {
  std::vector<double> lambda1{0.0003, 0.0006, 0.0009, 0.0012, 0.0015, 0.0018, 0.0021};
  std::vector<double> lambda2{0, 1, 2};
  std::vector<double> lambda3{0, 1};
  std::size_t size() const { return lambda1.size() * lambda2.size() * lambda3.size(); }
  /// Cell configs in row-major (lambda1, lambda2, lambda3) order; lambda3 > 0
  /// turns on the inverse term. Cell seeds derive from the base seed + index.
  std::vector<TrainingConfig> cells(const TrainingConfig& base) const;
};

/// Grid file: `lambda1 = a, b, c` style lines for lambda1/lambda2/lambda3.
Grid load_grid(const std::filesystem::path& path);

struct GridRow {
  std::size_t cell = 0;
  double lambda1 = 0, lambda2 = 0, lambda3 = 0;
  double dev_token_f1 = 0, dev_token_precision = 0, dev_token_recall = 0;
  double dev_phrase_f1 = 0;
  double dev_mse = 0, dev_accuracy = 0;
  int best_epoch = 0;
  bool selected = false;
};

/// Trains every cell not already present in `done` (isolated, seeded per cell)
/// using up to `jobs` threads; `on_row` fires as each cell completes. Returns
/// all rows sorted by cell with the argmax-F1 row marked.
std::vector<GridRow> grid_search(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                                 const TrainingConfig& base, const Grid& grid, int jobs,
                                 std::vector<GridRow> done = {},
                                 const std::function<void(const GridRow&)>& on_row = nullptr,
                                 const std::optional<std::filesystem::path>& embeddings = {});

/// Index of the row with the highest dev tokenwise F1 (first on ties).
std::size_t select_best(const std::vector<GridRow>& rows);

}  // namespace ean
