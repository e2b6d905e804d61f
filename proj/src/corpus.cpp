#include "ean/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace ean {

namespace {

bool is_continuation_byte(unsigned char c) { return (c & 0xC0) == 0x80; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse number '" + s + "'");
  }
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError(where + ": cannot parse offset '" + s + "'");
  return v;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::size_t codepoint_length(const std::string& text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return !is_continuation_byte(static_cast<unsigned char>(c)); }));
}

/// Parses "Label start end" (discontinuous brat fragments "s e;s e" also accepted).
std::vector<Span> parse_brat_fragments(const std::string& field, const std::string& where) {
  const auto parts = split_ws(field);
  if (parts.size() < 3) throw DataError(where + ": expected '<Label> <start> <end>'");
  std::string rest;
  for (std::size_t i = 1; i < parts.size(); ++i) rest += parts[i] + " ";
  std::vector<Span> spans;
  for (const auto& frag : split(rest, ';')) {
    const auto nums = split_ws(frag);
    if (nums.size() != 2) throw DataError(where + ": malformed offsets '" + frag + "'");
    Span s{parse_size(nums[0], where), parse_size(nums[1], where)};
    if (s.end < s.begin) throw DataError(where + ": span end precedes start");
    spans.push_back(s);
  }
  return spans;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokenization and TSV

std::vector<Token> tokenize_with_offsets(const std::string& text) {
  std::vector<Token> tokens;
  Token cur;
  bool open = false;
  std::size_t cp = 0;
  auto flush = [&](std::size_t at) {
    if (open) {
      cur.end = at;
      tokens.push_back(cur);
      cur = Token{};
      open = false;
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_continuation_byte(c)) {
      if (open) cur.text.push_back(static_cast<char>(c));
      continue;
    }
    if (c < 0x80 && std::isspace(c)) {
      flush(cp);
    } else if (c < 0x80 && std::ispunct(c)) {
      flush(cp);
      tokens.push_back(Token{std::string(1, static_cast<char>(c)), cp, cp + 1});
    } else {
      if (!open) {
        open = true;
        cur.begin = cp;
      }
      cur.text.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    ++cp;
  }
  flush(cp);
  return tokens;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
  return out;
}

std::vector<Example> load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Example ex;
    ex.id = fields[0];
    ex.text = fields[1];
    ex.target = parse_double(fields[2], where);
    if (ex.target < 0.0 || ex.target > 1.0) throw DataError(where + ": score outside [0,1]");
    ex.tokens = tokenize(ex.text);
    if (ex.id.empty()) throw DataError(where + ": empty id");
    if (ex.tokens.empty()) throw DataError(where + ": empty text");
    out.push_back(std::move(ex));
  }
  return out;
}

void write_tsv(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  for (const auto& ex : examples) {
    std::string text = ex.text;
    if (text.empty()) {
      for (std::size_t i = 0; i < ex.tokens.size(); ++i) text += (i ? " " : "") + ex.tokens[i];
    }
    out << ex.id << '\t' << text << '\t' << ex.target << '\n';
  }
}

// ---------------------------------------------------------------------------
// Standoff annotations

Mask project_spans(const std::string& text, const std::vector<Span>& spans) {
  const std::size_t limit = codepoint_length(text);
  const auto tokens = tokenize_with_offsets(text);
  Mask mask(tokens.size(), 0);
  for (const Span& s : spans) {
    if (s.end > limit) {
      throw DataError("annotation span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                      ") exceeds text length " + std::to_string(limit));
    }
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (tokens[k].begin < s.end && s.begin < tokens[k].end) mask[k] = 1;
    }
  }
  return mask;
}

Mask load_standoff(const std::filesystem::path& path, const std::string& text) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Span> spans;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty() || line[0] != 'T') continue;  // relations, notes, attributes
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto fields = split(line, '\t');
    if (fields.size() < 2) throw DataError(where + ": expected 'T<k> \\t <Label> <start> <end>'");
    for (const Span& s : parse_brat_fragments(fields[1], where)) spans.push_back(s);
  }
  return project_spans(text, spans);
}

std::map<std::string, std::vector<Span>> load_standoff_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::vector<Span>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto fields = split(line, '\t');
    if (fields.size() < 3) throw DataError(where + ": expected 'id \\t T<k> \\t <Label> <start> <end>'");
    auto& spans = out[fields[0]];
    if (fields[1].empty() || fields[1][0] != 'T') continue;
    for (const Span& s : parse_brat_fragments(fields[2], where)) spans.push_back(s);
  }
  return out;
}

void write_standoff_corpus(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples) {
    if (!ex.gold_mask) continue;
    const auto tokens = tokenize_with_offsets(ex.text);
    const Mask& m = *ex.gold_mask;
    if (m.size() != tokens.size()) throw DataError(ex.id + ": gold mask length differs from token count");
    int k = 1;
    for (std::size_t i = 0; i < m.size();) {
      if (!m[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < m.size() && m[j + 1]) ++j;
      // surface text: code point range [begin, end) of the original
      const std::size_t b = tokens[i].begin, e = tokens[j].end;
      std::string surface;
      std::size_t cp = 0;
      for (char ch : ex.text) {
        if (!is_continuation_byte(static_cast<unsigned char>(ch))) ++cp;
        if (cp > b && cp <= e) surface.push_back(ch);
      }
      out << ex.id << "\tT" << k++ << "\tAttack " << b << ' ' << e << '\t' << surface << '\n';
      i = j + 1;
    }
  }
}

std::vector<AnnotationSet> collect_annotations(const std::vector<Example>& examples,
                                               const std::vector<std::filesystem::path>& annotator_files) {
  std::vector<std::map<std::string, std::vector<Span>>> per_file;
  for (const auto& f : annotator_files) per_file.push_back(load_standoff_corpus(f));
  std::vector<AnnotationSet> out;
  for (const auto& ex : examples) {
    AnnotationSet set;
    set.comment_id = ex.id;
    for (std::size_t a = 0; a < per_file.size(); ++a) {
      const auto it = per_file[a].find(ex.id);
      const std::vector<Span> none;
      set.annotators.push_back(annotator_files[a].stem().string());
      set.masks.push_back(project_spans(ex.text, it == per_file[a].end() ? none : it->second));
    }
    out.push_back(std::move(set));
  }
  return out;
}

Mask majority_vote(const AnnotationSet& ann) {
  if (ann.masks.empty()) throw DataError(ann.comment_id + ": no annotators");
  const std::size_t len = ann.masks.front().size();
  std::vector<int> votes(len, 0);
  for (const Mask& m : ann.masks) {
    if (m.size() != len) throw DataError(ann.comment_id + ": annotator masks differ in length");
    for (std::size_t i = 0; i < len; ++i) votes[i] += m[i] ? 1 : 0;
  }
  const int n = static_cast<int>(ann.masks.size());
  Mask out(len, 0);
  for (std::size_t i = 0; i < len; ++i) out[i] = (2 * votes[i] > n) ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = {"<pad>", "<unk>"};
  for (const auto& t : tokens) {
    if (t == "<pad>" || t == "<unk>") continue;
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!lookup_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary entry: " + tokens_[i]);
    }
  }
}

int Vocabulary::index(const std::string& token) const {
  const auto it = lookup_.find(token);
  if (it == lookup_.end() || it->second == kPad) return kUnknown;
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

Vocabulary build_vocabulary(const std::vector<Example>& examples, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (examples.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, int> counts;
  for (const auto& ex : examples) {
    for (const auto& t : ex.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, int>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> kept;
  for (const auto& [tok, n] : entries) {
    if (n >= min_count) kept.push_back(tok);
  }
  return Vocabulary(kept);
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  long dim = -1;
  std::vector<std::pair<int, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (lineno == 1 && fields.size() == 2) {
      // "count dim" header
      dim = static_cast<long>(parse_size(fields[1], where));
      continue;
    }
    if (fields.size() < 2) throw DataError(where + ": embedding line has no values");
    const long arity = static_cast<long>(fields.size()) - 1;
    if (dim < 0) dim = arity;
    if (arity != dim) {
      throw DataError(where + ": expected " + std::to_string(dim) + " values, got " + std::to_string(arity));
    }
    const int idx = vocab.index(fields[0]);
    if (idx == Vocabulary::kUnknown && fields[0] != "<unk>") continue;
    std::vector<double> v;
    for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(parse_double(fields[i], where));
    rows.emplace_back(idx, std::move(v));
  }
  if (dim <= 0) throw DataError(path.string() + ": no embedding vectors");

  std::mt19937_64 rng(seed);
  EmbeddingTable table{uniform_init(vocab.size(), dim, 0.05, rng)};
  for (const auto& [idx, v] : rows) {
    for (long j = 0; j < dim; ++j) table.vectors(idx, j) = v[static_cast<std::size_t>(j)];
  }
  table.vectors.row(Vocabulary::kPad).setZero();
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double a = std::sqrt(3.0 / static_cast<double>(dim));
  EmbeddingTable table{uniform_init(vocab.size(), dim, a, rng)};
  table.vectors.row(Vocabulary::kPad).setZero();
  return table;
}

// ---------------------------------------------------------------------------
// Batches

Batch collate(const std::vector<Example>& examples, const std::vector<std::size_t>& rows, const Vocabulary& vocab) {
  std::vector<std::size_t> order = rows;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return examples[a].target < examples[b].target; });
  std::size_t width = 0;
  for (std::size_t r : order) width = std::max(width, examples[r].tokens.size());
  const auto n = static_cast<Eigen::Index>(order.size());
  const auto t = static_cast<Eigen::Index>(width);
  Batch b;
  b.tokens = Eigen::MatrixXi::Constant(n, t, Vocabulary::kPad);
  b.pad_mask = Tensor::Zero(n, t);
  b.targets = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Example& ex = examples[order[static_cast<std::size_t>(i)]];
    const auto ids = vocab.encode(ex.tokens);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      b.tokens(i, static_cast<Eigen::Index>(k)) = ids[k];
      b.pad_mask(i, static_cast<Eigen::Index>(k)) = 1.0;
    }
    b.lengths.push_back(static_cast<int>(ids.size()));
    b.targets(i) = ex.target;
  }
  b.source = std::move(order);
  return b;
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab, int batch_size,
                                std::uint64_t seed) {
  if (batch_size <= 0 || batch_size % 2 != 0) {
    throw std::invalid_argument("batch size must be a positive even number, got " + std::to_string(batch_size));
  }
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Batch> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start + bs <= idx.size(); start += bs) {
    std::vector<std::size_t> rows(idx.begin() + static_cast<long>(start), idx.begin() + static_cast<long>(start + bs));
    out.push_back(collate(examples, rows, vocab));
  }
  return out;
}

std::vector<Batch> make_eval_batches(const std::vector<Example>& examples, const Vocabulary& vocab, int batch_size) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  std::vector<Batch> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(examples.size(), start + bs); ++i) rows.push_back(i);
    out.push_back(collate(examples, rows, vocab));
  }
  return out;
}

Tensor embed_column(const Batch& batch, const EmbeddingTable& emb, Eigen::Index t) {
  Tensor out(batch.size(), emb.dim());
  for (Eigen::Index i = 0; i < batch.size(); ++i) out.row(i) = emb.vectors.row(batch.tokens(i, t));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

std::vector<Example> generate_synthetic(const SyntheticConfig& c) {
  if (c.redundancy < 0.0 || c.redundancy > 1.0) throw std::invalid_argument("redundancy must lie in [0,1]");
  if (c.span_length < 1) throw std::invalid_argument("span length must be >= 1");
  if (c.min_length < 1 || c.max_length < c.min_length) throw std::invalid_argument("invalid example length range");
  if (c.span_length >= c.min_length) {
    throw std::invalid_argument("span length must be shorter than the shortest example");
  }
  const bool two_spans_possible = 2 * c.span_length + 1 <= c.min_length;
  if (c.redundancy > 0.0 && !two_spans_possible) {
    throw std::invalid_argument("examples too short to hold two disjoint spans");
  }
  if (c.context_dependent && c.span_length < 2) {
    throw std::invalid_argument("context-dependent spans need length >= 2");
  }
  const int openers = c.context_dependent ? c.opener_count : 0;
  const bool with_cue = c.cue_positive_rate > 0.0 || c.cue_negative_rate > 0.0;
  const int filler = c.vocab_size - c.lexicon_size - openers - (with_cue ? 1 : 0);
  if (c.lexicon_size < 1 || filler < 2) throw std::invalid_argument("vocabulary too small for the lexicon");

  std::mt19937_64 rng(c.seed);
  std::uniform_int_distribution<int> len_dist(c.min_length, c.max_length);
  std::uniform_int_distribution<int> filler_dist(0, filler - 1);
  std::uniform_int_distribution<int> lex_dist(0, c.lexicon_size - 1);
  std::uniform_int_distribution<int> open_dist(0, std::max(0, openers - 1));
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution redundant(c.redundancy);
  std::bernoulli_distribution distract(c.distractor_rate);
  std::bernoulli_distribution cue_pos(c.cue_positive_rate);
  std::bernoulli_distribution cue_neg(c.cue_negative_rate);

  auto filler_tok = [&]() { return "w" + std::to_string(filler_dist(rng)); };
  auto lex_tok = [&]() { return "x" + std::to_string(lex_dist(rng)); };
  auto open_tok = [&]() { return "o" + std::to_string(open_dist(rng)); };

  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(c.size));
  for (int n = 0; n < c.size; ++n) {
    const int len = len_dist(rng);
    const bool positive = coin(rng);
    const int spans = positive ? (redundant(rng) ? 2 : 1) : 0;

    std::vector<std::string> toks(static_cast<std::size_t>(len));
    std::vector<char> used(static_cast<std::size_t>(len), 0);  // 1 = span token, 2 = distractor or cue
    Mask gold(static_cast<std::size_t>(len), 0);

    // Span starts: uniform over non-overlapping, non-adjacent placements;
    // redraw from scratch when an early span leaves no room for a later one.
    for (bool placed = false; !placed;) {
      std::fill(used.begin(), used.end(), 0);
      std::fill(gold.begin(), gold.end(), 0);
      placed = true;
      for (int s = 0; s < spans && placed; ++s) {
        std::vector<int> starts;
        for (int k = 0; k + c.span_length <= len; ++k) {
          bool ok = true;
          for (int j = k - 1; j <= k + c.span_length && ok; ++j) {
            if (j >= 0 && j < len && used[static_cast<std::size_t>(j)] == 1) ok = false;
          }
          if (ok) starts.push_back(k);
        }
        if (starts.empty()) {
          placed = false;
          break;
        }
        std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
        const int start = starts[pick(rng)];
        for (int k = 0; k < c.span_length; ++k) {
          const auto pos = static_cast<std::size_t>(start + k);
          used[pos] = 1;
          gold[pos] = 1;
          toks[pos] = (c.context_dependent && k == 0) ? open_tok() : lex_tok();
        }
      }
    }

    // Places a run of tokens on free positions whose outer neighbours are also free.
    auto place = [&](const std::vector<std::string>& run) {
      const int m = static_cast<int>(run.size());
      std::vector<int> starts;
      for (int k = 0; k + m <= len; ++k) {
        bool ok = true;
        for (int j = k - 1; j <= k + m && ok; ++j) {
          if (j >= 0 && j < len && used[static_cast<std::size_t>(j)] != 0) ok = false;
        }
        if (ok) starts.push_back(k);
      }
      if (starts.empty()) return;
      std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
      const int at = starts[pick(rng)];
      for (int j = 0; j < m; ++j) {
        toks[static_cast<std::size_t>(at + j)] = run[static_cast<std::size_t>(j)];
        used[static_cast<std::size_t>(at + j)] = 2;
      }
    };

    if (c.context_dependent && !positive && distract(rng)) {
      // Either twice the openers or twice the lexicon words of a span, never
      // both, so expected unigram counts match a positive's.
      const int runs = redundant(rng) ? 2 : 1;
      const bool openers_only = coin(rng);
      for (int r = 0; r < runs; ++r) {
        for (int copy = 0; copy < 2; ++copy) {
          if (openers_only) {
            place({open_tok()});
          } else {
            std::vector<std::string> words;
            for (int k = 1; k < c.span_length; ++k) words.push_back(lex_tok());
            place(words);
          }
        }
      }
    }
    if (with_cue && (positive ? cue_pos(rng) : cue_neg(rng))) place({"cue"});

    for (int k = 0; k < len; ++k) {
      if (used[static_cast<std::size_t>(k)] == 0) toks[static_cast<std::size_t>(k)] = filler_tok();
    }

    Example ex;
    ex.id = "s" + std::to_string(n);
    for (int k = 0; k < len; ++k) ex.text += (k ? " " : "") + toks[static_cast<std::size_t>(k)];
    ex.tokens = std::move(toks);
    ex.target = positive ? c.positive_target : c.negative_target;
    ex.gold_mask = std::move(gold);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ean
