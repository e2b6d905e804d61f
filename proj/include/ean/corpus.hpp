#pragma once

// Datasets, annotations, vocabularies, embeddings and padded batches.

#include "ean/compute.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ean {

using Mask = std::vector<std::uint8_t>;

/// Malformed input data (bad line, out-of-range value, inconsistent file).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Example {
  std::string id;
  std::string text;  // original text; token offsets are recomputed from it
  std::vector<std::string> tokens;
  double target = 0.0;
  std::optional<Mask> gold_mask;
};

struct Token {
  std::string text;
  std::size_t begin = 0;  // code point offsets, [begin, end)
  std::size_t end = 0;
};

/// Lowercase, split ASCII punctuation into single-character tokens, split on
/// whitespace. Offsets count Unicode code points of the UTF-8 input.
std::vector<Token> tokenize_with_offsets(const std::string& text);
std::vector<std::string> tokenize(const std::string& text);

/// One `id \t text \t score` record per line, no header.
std::vector<Example> load_tsv(const std::filesystem::path& path);
void write_tsv(const std::filesystem::path& path, const std::vector<Example>& examples);

// ---------------------------------------------------------------------------
// Annotations

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

struct AnnotationSet {
  std::string comment_id;
  std::vector<std::string> annotators;  // parallel to masks
  std::vector<Mask> masks;
};

/// Projects character spans onto tokens: a token is marked when any of its
/// characters falls inside any span.
Mask project_spans(const std::string& text, const std::vector<Span>& spans);

/// Single-comment brat file: lines `T<k> \t <Label> <start> <end> \t <surface>`.
Mask load_standoff(const std::filesystem::path& path, const std::string& text);

/// Multi-comment brat file with a leading comment-id column:
/// `id \t T<k> \t <Label> <start> <end> \t <surface>`.
std::map<std::string, std::vector<Span>> load_standoff_corpus(const std::filesystem::path& path);
void write_standoff_corpus(const std::filesystem::path& path, const std::vector<Example>& examples);

/// Per-comment annotation sets from one standoff file per annotator. Every
/// annotator is taken to have seen every example.
std::vector<AnnotationSet> collect_annotations(const std::vector<Example>& examples,
                                               const std::vector<std::filesystem::path>& annotator_files);

/// Token is selected iff strictly more than half of the annotators marked it.
Mask majority_vote(const AnnotationSet& ann);

// ---------------------------------------------------------------------------
// Vocabulary and embeddings

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  Vocabulary();
  /// Builds from an explicit token list (reserved entries are prepended).
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int index(const std::string& token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
};

/// Frequency-descending, then lexicographic; tokens below `min_count` map to
/// the unknown index.
Vocabulary build_vocabulary(const std::vector<Example>& examples, int min_count);

struct EmbeddingTable {
  Tensor vectors;  // |V| x d, row kPad is zero
  Eigen::Index dim() const { return vectors.cols(); }
};

/// word2vec text format (optional `count dim` header). Vocabulary words missing
/// from the file get Uniform(-0.05, 0.05) rows drawn from `seed`.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::uint64_t seed);

/// Random fixed embeddings for runs without a pretrained file: rows drawn
/// Uniform(-a, a) with a chosen so each row has unit expected squared norm.
EmbeddingTable random_embeddings(const Vocabulary& vocab, Eigen::Index dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Batches

struct Batch {
  Eigen::MatrixXi tokens;  // N x T, padded with Vocabulary::kPad
  std::vector<int> lengths;
  Vector targets;
  Tensor pad_mask;                    // N x T, 1 on real tokens
  std::vector<std::size_t> source;    // index of each row in the originating example list

  Eigen::Index size() const { return tokens.rows(); }
  Eigen::Index width() const { return tokens.cols(); }
};

/// Packs the listed examples (any count) into one padded batch, rows ordered
/// ascending by target (stable).
Batch collate(const std::vector<Example>& examples, const std::vector<std::size_t>& rows, const Vocabulary& vocab);

/// Shuffles with `seed`, cuts into batches of `batch_size` (must be even) and
/// drops the short remainder. Each batch is sorted ascending by target.
std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab, int batch_size,
                                std::uint64_t seed);

/// Consecutive batches of up to `batch_size` covering every example; for
/// inference only.
std::vector<Batch> make_eval_batches(const std::vector<Example>& examples, const Vocabulary& vocab, int batch_size);

/// Embedding rows for column t of the batch: N x d.
Tensor embed_column(const Batch& batch, const EmbeddingTable& emb, Eigen::Index t);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticConfig {
  int vocab_size = 100;
  int size = 2000;
  int lexicon_size = 10;
  int span_length = 2;
  double redundancy = 0.3;
  int min_length = 10;
  int max_length = 20;
  double positive_target = 0.9;
  double negative_target = 0.05;
  // Context-dependent mode: a span is an opener token followed by lexicon
  // words. Negatives carry openers or lexicon words but never both, so only
  // their co-occurrence marks an attack and unigram counts barely differ.
  bool context_dependent = false;
  int opener_count = 3;
  double distractor_rate = 1.0;
  // Label-correlated cue token placed outside spans (0 disables).
  double cue_positive_rate = 0.0;
  double cue_negative_rate = 0.0;
  std::uint64_t seed = 1;
};

/// Filler text with planted attack spans; 50% positives, of which a
/// `redundancy` fraction carry two disjoint spans. Gold masks mark exactly the
/// planted spans.
std::vector<Example> generate_synthetic(const SyntheticConfig& config);

}  // namespace ean
