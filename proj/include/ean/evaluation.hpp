#pragma once

// Rationale and prediction metrics, annotator agreement, significance testing,
// chunk ablation and baselines.

#include "ean/corpus.hpp"
#include "ean/training.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace ean {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Harmonic mean with the zero-denominator convention (0).
double f1_score(double precision, double recall);

/// Maximal runs of 1s, inclusive [start, end].
struct Chunk {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t source = 0;
};
std::vector<Chunk> chunks(const Mask& mask, std::size_t source = 0);

/// Micro-averaged over all tokens of all comments, positive class 1.
PRF tokenwise_prf(const std::vector<Mask>& gold, const std::vector<Mask>& predicted);

/// Recall over gold chunks (captured if any token predicted), precision over
/// predicted chunks (correct if any token is gold).
PRF phrasewise_prf(const std::vector<Mask>& gold, const std::vector<Mask>& predicted);

struct PredictionMetrics {
  double mse = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// MSE on raw values; accuracy and F1 after thresholding prediction and target.
PredictionMetrics prediction_metrics(const std::vector<double>& predictions, const std::vector<double>& targets,
                                     double threshold = 0.5);

enum class AgreementUnit { comment, token };

/// Binary Krippendorff's alpha. At comment level a comment counts as marked
/// when any of its tokens is marked.
double krippendorff_alpha(const std::vector<AnnotationSet>& sets, AgreementUnit unit);

struct McNemarResult {
  long b = 0;  // A right, B wrong
  long c = 0;  // A wrong, B right
  double statistic = 0.0;  // (b - c)^2 / (b + c)
  double p_value = 1.0;    // exact two-sided binomial
};
McNemarResult mcnemar(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct);

struct LeaveOneOutResult {
  long candidates = 0;
  long improving = 0;
  double improving_fraction = 0.0;
  double mean_delta = 0.0;  // mean of cost_g(reduced) - cost_g(original)
};

/// Removes each chunk of every multi-chunk deterministic rationale in turn and
/// re-evaluates the generator objective with the bundle's predictors.
LeaveOneOutResult leave_one_out(ModelBundle& bundle, const std::vector<Example>& examples);

struct HumanPerformance {
  PRF tokenwise;
  PRF phrasewise;
  std::size_t annotators = 0;
};

/// Each annotator scored against the majority of the other annotators on the
/// comments they share; per-annotator scores are averaged (macro).
HumanPerformance mean_human_performance(const std::vector<AnnotationSet>& sets);

struct MetricsReport {
  bool has_rationales = false;
  PRF tokenwise;
  PRF phrasewise;
  PredictionMetrics prediction;
  std::size_t examples = 0;
};

/// Scores masks against gold (when every example has one) and predictions
/// against targets.
MetricsReport evaluate(const std::vector<Example>& examples, const std::vector<Mask>& predicted,
                       const std::vector<double>& predictions);
MetricsReport evaluate(ModelBundle& bundle, const std::vector<Example>& examples);

nlohmann::json to_json(const MetricsReport& report);
/// Aligned plain-text table: token P/R/F1, phrase P/R/F1, MSE, accuracy, F1.
std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

// ---------------------------------------------------------------------------
// Baselines

/// Logistic regression on token counts with coefficient-threshold rationales.
struct BowModel {
  Vocabulary vocab;
  Vector weights;  // one per vocabulary index
  double bias = 0.0;
  double threshold = 0.0;  // tokens with weight > threshold are highlighted

  double predict(const Example& ex) const;
  Mask rationale(const Example& ex) const;
  Mask rationale(const Example& ex, double threshold) const;
};

struct BowOptions {
  int iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

/// Trains by full-batch gradient descent on cross-entropy against the soft
/// targets, then tunes the threshold for dev tokenwise F1 over every distinct
/// coefficient (plus +inf, the empty rationale).
BowModel baseline_sigmoid_bow(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                              const BowOptions& options = {});

/// Predictor trained on the full text, no generator.
ModelBundle baseline_rnn_predictor(TrainingConfig config, const std::vector<Example>& train_set,
                                   const std::vector<Example>& dev_set);

/// Same objective with a per-token logistic gate in place of the recurrent
/// generator.
ModelBundle baseline_sigmoid_generator(TrainingConfig config, const std::vector<Example>& train_set,
                                       const std::vector<Example>& dev_set);

}  // namespace ean
