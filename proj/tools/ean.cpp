// ean: train, evaluate and inspect rationale extractors from the command line.
//
//   ean train --data train.tsv --dev dev.tsv --dev-gold dev.ann --out model/ [--key value ...]
//   ean eval --model model/ --test test.tsv [--gold test.ann] [--json metrics.json]
//   ean rationalize --model model/ --input test.tsv --jsonl out.jsonl --html out.html
//   ean synth --size 2000 --seed 1 --out data/train
//   ean grid --data train.tsv --dev dev.tsv --dev-gold dev.ann --out grid.csv [--jobs 4]
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include "ean/evaluation.hpp"
#include "ean/serialization.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

using namespace ean;
namespace fs = std::filesystem;

namespace {

/// Config keys exposed as `--key value` on train and grid.
struct ConfigFlags {
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    for (const auto& [key, def] : TrainingConfig{}.to_map()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd->add_option("--" + flag, values[key], "config key " + key + " (default " + def + ")");
    }
  }

  TrainingConfig build(const std::string& config_file) const {
    TrainingConfig c = config_file.empty() ? TrainingConfig{} : load_config(config_file);
    for (const auto& [key, v] : values) {
      if (!v.empty()) c.set(key, v);
    }
    c.validate();
    return c;
  }
};

std::vector<Example> load_with_gold(const std::string& tsv, const std::string& gold) {
  std::vector<Example> ex = load_tsv(tsv);
  if (gold.empty()) return ex;
  const auto spans = load_standoff_corpus(gold);
  for (auto& e : ex) {
    const auto it = spans.find(e.id);
    e.gold_mask = project_spans(e.text, it == spans.end() ? std::vector<Span>{} : it->second);
  }
  return ex;
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::string html_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += ch;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// grid CSV

const char* kGridHeader =
    "cell,lambda1,lambda2,lambda3,dev_token_f1,dev_token_precision,dev_token_recall,dev_phrase_f1,dev_mse,"
    "dev_accuracy,best_epoch,selected";

std::string grid_line(const GridRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d", r.cell,
                r.lambda1, r.lambda2, r.lambda3, r.dev_token_f1, r.dev_token_precision, r.dev_token_recall,
                r.dev_phrase_f1, r.dev_mse, r.dev_accuracy, r.best_epoch, r.selected ? 1 : 0);
  return buf;
}

/// Completed rows from a previous (possibly interrupted) run.
std::vector<GridRow> read_grid_csv(const fs::path& p) {
  std::vector<GridRow> rows;
  std::ifstream in(p);
  if (!in) return rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == kGridHeader) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 12) {
      // A torn final line from an interrupted write is dropped and recomputed.
      if (in.peek() == EOF) break;
      throw DataError(p.string() + ":" + std::to_string(lineno) + ": expected 12 columns");
    }
    try {
      GridRow r;
      r.cell = std::stoul(f[0]);
      r.lambda1 = std::stod(f[1]);
      r.lambda2 = std::stod(f[2]);
      r.lambda3 = std::stod(f[3]);
      r.dev_token_f1 = std::stod(f[4]);
      r.dev_token_precision = std::stod(f[5]);
      r.dev_token_recall = std::stod(f[6]);
      r.dev_phrase_f1 = std::stod(f[7]);
      r.dev_mse = std::stod(f[8]);
      r.dev_accuracy = std::stod(f[9]);
      r.best_epoch = std::stoi(f[10]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError(p.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// commands

struct TrainArgs {
  std::string data, dev, dev_gold, embeddings, config, out;
  ConfigFlags flags;
};

void cmd_train(const TrainArgs& a) {
  const TrainingConfig c = a.flags.build(a.config);
  const auto train_set = load_tsv(a.data);
  const auto dev = a.dev.empty() ? std::vector<Example>{} : load_with_gold(a.dev, a.dev_gold);
  const ModelBundle m = train_model(c, train_set, dev, optional_path(a.embeddings));
  save_bundle(a.out, m);
  std::cout << "trained " << m.log.size() << " epochs, kept epoch " << m.best_epoch << ", wrote " << a.out << "\n";
}

struct EvalArgs {
  std::string model, test, gold, json;
};

void cmd_eval(const EvalArgs& a) {
  ModelBundle m = load_bundle(a.model);
  const auto test = load_with_gold(a.test, a.gold);
  const MetricsReport r = evaluate(m, test);
  const std::string dump = to_json(r).dump(2);
  if (a.json.empty()) {
    std::cout << dump << "\n";
  } else {
    open_out(a.json) << dump << "\n";
  }
  std::cout << format_table({{fs::path(a.model).filename().string(), r}});
}

struct RationalizeArgs {
  std::string model, input, gold, jsonl, html;
  bool deterministic = false;
  std::uint64_t seed = 0;
};

void cmd_rationalize(const RationalizeArgs& a) {
  ModelBundle m = load_bundle(a.model);
  const auto ex = load_with_gold(a.input, a.gold);
  const Rationalized r = rationalize(m, ex, a.deterministic, a.seed);
  std::ofstream jsonl = open_out(a.jsonl);
  std::ostringstream body;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const Example& e = ex[i];
    nlohmann::json rec;
    rec["id"] = e.id;
    rec["tokens"] = e.tokens;
    std::vector<double> probs(e.tokens.size());
    for (std::size_t t = 0; t < probs.size(); ++t) probs[t] = r.probs[i](0, static_cast<Eigen::Index>(t));
    rec["probs"] = probs;
    rec["mask"] = r.masks[i];
    rec["prediction"] = r.predictions[i];
    if (e.gold_mask) rec["gold"] = *e.gold_mask;
    jsonl << rec.dump() << "\n";

    char pred[32];
    std::snprintf(pred, sizeof pred, "%.3f", r.predictions[i]);
    body << "<p><span style=\"color:#666;font-size:smaller\">" << html_escape(e.id) << " &middot; " << pred
         << "</span><br>";
    for (std::size_t t = 0; t < e.tokens.size(); ++t) {
      if (t) body << ' ';
      if (r.masks[i][t]) {
        body << "<span style=\"background:#ffb3b3;border-radius:3px\">" << html_escape(e.tokens[t]) << "</span>";
      } else {
        body << html_escape(e.tokens[t]);
      }
    }
    body << "</p>\n";
  }
  if (!a.html.empty()) {
    open_out(a.html) << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>rationales</title></head>\n"
                     << "<body style=\"font-family:sans-serif;max-width:50em;margin:2em auto;line-height:1.6\">\n"
                     << body.str() << "</body></html>\n";
  }
  std::cout << "rationalized " << ex.size() << " examples\n";
}

struct SynthArgs {
  SyntheticConfig config;
  std::string out;
};

void cmd_synth(const SynthArgs& a) {
  const auto ex = generate_synthetic(a.config);
  const fs::path stem(a.out);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_tsv(stem.string() + ".tsv", ex);
  write_standoff_corpus(stem.string() + ".ann", ex);
  std::cout << "wrote " << ex.size() << " examples to " << stem.string() << ".tsv and .ann\n";
}

struct GridArgs {
  std::string data, dev, dev_gold, embeddings, config, grid_file, out;
  int jobs = 1;
  ConfigFlags flags;
};

void cmd_grid(const GridArgs& a) {
  const TrainingConfig base = a.flags.build(a.config);
  const Grid grid = a.grid_file.empty() ? Grid{} : load_grid(a.grid_file);
  const auto train_set = load_tsv(a.data);
  const auto dev = load_with_gold(a.dev, a.dev_gold);
  std::vector<GridRow> done = read_grid_csv(a.out);
  std::erase_if(done, [&](const GridRow& r) { return r.cell >= grid.size(); });
  if (!done.empty()) std::cout << "resuming: " << done.size() << " of " << grid.size() << " cells done\n";

  {
    std::ofstream out = open_out(a.out);
    out << kGridHeader << "\n";
    for (const auto& r : done) out << grid_line(r) << "\n";
  }
  std::ofstream append(a.out, std::ios::app);
  std::mutex m;
  const auto rows = grid_search(train_set, dev, base, grid, a.jobs, done,
                                [&](const GridRow& r) {
                                  std::lock_guard<std::mutex> lock(m);
                                  append << grid_line(r) << std::endl;
                                  std::cout << "cell " << r.cell << " f1 " << r.dev_token_f1 << std::endl;
                                },
                                optional_path(a.embeddings));
  append.close();
  std::ofstream out = open_out(a.out);
  out << kGridHeader << "\n";
  for (const auto& r : rows) out << grid_line(r) << "\n";
  const GridRow& best = rows[select_best(rows)];
  std::cout << "best cell " << best.cell << ": lambda1 " << best.lambda1 << ", lambda2 " << best.lambda2
            << ", lambda3 " << best.lambda3 << ", dev token F1 " << best.dev_token_f1 << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extractive adversarial rationale models"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model and write its directory");
  t->add_option("--data", train.data, "training TSV")->required()->check(CLI::ExistingFile);
  t->add_option("--dev", train.dev, "dev TSV")->check(CLI::ExistingFile);
  t->add_option("--dev-gold", train.dev_gold, "dev standoff annotations")->check(CLI::ExistingFile);
  t->add_option("--embeddings", train.embeddings, "word2vec text file")->check(CLI::ExistingFile);
  t->add_option("--config", train.config, "key = value config file")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "model directory")->required();
  train.flags.attach(t);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score a model");
  e->add_option("--model", eval.model, "model directory")->required();
  e->add_option("--test", eval.test, "test TSV")->required()->check(CLI::ExistingFile);
  e->add_option("--gold", eval.gold, "standoff annotations")->check(CLI::ExistingFile);
  e->add_option("--json", eval.json, "write metrics JSON here instead of stdout");

  RationalizeArgs rat;
  auto* r = app.add_subcommand("rationalize", "write highlighted rationales");
  r->add_option("--model", rat.model, "model directory")->required();
  r->add_option("--input", rat.input, "input TSV")->required()->check(CLI::ExistingFile);
  r->add_option("--gold", rat.gold, "standoff annotations to include")->check(CLI::ExistingFile);
  r->add_option("--jsonl", rat.jsonl, "one record per line")->required();
  r->add_option("--html", rat.html, "static highlighted page");
  r->add_flag("--deterministic,!--sample", rat.deterministic, "threshold p at 0.5 (default) or sample z");
  r->add_option("--seed", rat.seed, "sampling seed");
  rat.deterministic = true;

  SynthArgs syn;
  auto* s = app.add_subcommand("synth", "write a synthetic corpus as <out>.tsv and <out>.ann");
  s->add_option("--vocab-size", syn.config.vocab_size, "vocabulary size");
  s->add_option("--size", syn.config.size, "number of examples");
  s->add_option("--redundancy", syn.config.redundancy, "fraction of positives with two spans");
  s->add_option("--seed", syn.config.seed, "seed");
  s->add_option("--span-length", syn.config.span_length, "tokens per span");
  s->add_option("--context-dependent", syn.config.context_dependent, "opener plus lexicon spans");
  s->add_option("--opener-count", syn.config.opener_count, "distinct openers");
  s->add_option("--out", syn.out, "output path stem")->required();

  GridArgs grid;
  auto* g = app.add_subcommand("grid", "train every cell of a lambda grid");
  g->add_option("--data", grid.data, "training TSV")->required()->check(CLI::ExistingFile);
  g->add_option("--dev", grid.dev, "dev TSV")->required()->check(CLI::ExistingFile);
  g->add_option("--dev-gold", grid.dev_gold, "dev standoff annotations")->check(CLI::ExistingFile);
  g->add_option("--embeddings", grid.embeddings, "word2vec text file")->check(CLI::ExistingFile);
  g->add_option("--config", grid.config, "base config file")->check(CLI::ExistingFile);
  g->add_option("--grid-file", grid.grid_file, "lambda lists")->check(CLI::ExistingFile);
  g->add_option("--out", grid.out, "results CSV, resumed if present")->required();
  g->add_option("--jobs", grid.jobs, "concurrent cells")->check(CLI::PositiveNumber);
  grid.flags.attach(g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*t) cmd_train(train);
    else if (*e) cmd_eval(eval);
    else if (*r) cmd_rationalize(rat);
    else if (*s) cmd_synth(syn);
    else if (*g) cmd_grid(grid);
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return 3;
  } catch (const ShapeError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "usage: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
