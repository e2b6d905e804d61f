#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ean/corpus.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace ean;

namespace {

const fs::path root = fs::temp_directory_path() / "ean_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(EAN_CLI) + " " + args + " > " + (root / "stdout.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string p(const std::string& name) { return (root / name).string(); }

const char* kTiny = " --epochs 2 --hidden-size 4 --embedding-dim 4 --batch-size 16";

struct Fixture {
  Fixture() {
    static bool ready = false;
    if (ready) return;
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(run("synth --size 80 --vocab-size 30 --seed 5 --out " + p("train")) == 0);
    REQUIRE(run("synth --size 30 --vocab-size 30 --seed 6 --out " + p("dev")) == 0);
    REQUIRE(run("train --data " + p("train.tsv") + " --dev " + p("dev.tsv") + " --dev-gold " + p("dev.ann") +
                " --out " + p("model") + kTiny) == 0);
    ready = true;
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "synth output round trips through the corpus loaders") {
  SyntheticConfig sc;
  sc.size = 80;
  sc.vocab_size = 30;
  sc.seed = 5;
  const auto expected = generate_synthetic(sc);
  const auto loaded = load_tsv(p("train.tsv"));
  const auto spans = load_standoff_corpus(p("train.ann"));
  REQUIRE(loaded.size() == expected.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == expected[i].id);
    CHECK(loaded[i].tokens == expected[i].tokens);
    CHECK(loaded[i].target == expected[i].target);
    const auto it = spans.find(loaded[i].id);
    const Mask gold = project_spans(loaded[i].text, it == spans.end() ? std::vector<Span>{} : it->second);
    CHECK(gold == *expected[i].gold_mask);
  }
  REQUIRE(run("synth --size 80 --vocab-size 30 --seed 5 --out " + p("again")) == 0);
  CHECK(slurp(p("again.tsv")) == slurp(p("train.tsv")));
  CHECK(slurp(p("again.ann")) == slurp(p("train.ann")));
}

TEST_CASE_FIXTURE(Fixture, "train writes three artifacts and is reproducible") {
  CHECK(fs::exists(p("model/model.json")));
  CHECK(fs::exists(p("model/config.txt")));
  CHECK(fs::exists(p("model/epochs.csv")));
  CHECK(slurp(p("model/epochs.csv")).rfind("epoch,gen_loss,f_loss,f2_loss,dev_token_f1,dev_mse\n", 0) == 0);
  REQUIRE(run("train --data " + p("train.tsv") + " --dev " + p("dev.tsv") + " --dev-gold " + p("dev.ann") +
              " --out " + p("model2") + kTiny) == 0);
  CHECK(slurp(p("model/model.json")) == slurp(p("model2/model.json")));

  REQUIRE(run("train --data " + p("train.tsv") + " --out " + p("ean_variant") + kTiny + " --inverse on --lambda3 1") ==
          0);
  CHECK(slurp(p("ean_variant/config.txt")).find("inverse = on") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "eval emits the fixed schema and drops rationale metrics without gold") {
  REQUIRE(run("eval --model " + p("model") + " --test " + p("dev.tsv") + " --gold " + p("dev.ann") + " --json " +
              p("m.json")) == 0);
  const auto with = nlohmann::json::parse(slurp(p("m.json")));
  CHECK(with.contains("prediction"));
  CHECK(with["rationale"].contains("tokenwise"));
  CHECK(with["rationale"].contains("phrasewise"));
  REQUIRE(run("eval --model " + p("model") + " --test " + p("dev.tsv") + " --json " + p("m2.json")) == 0);
  const auto without = nlohmann::json::parse(slurp(p("m2.json")));
  CHECK(without.contains("prediction"));
  CHECK(!without.contains("rationale"));
  CHECK(with["prediction"] == without["prediction"]);
}

TEST_CASE_FIXTURE(Fixture, "rationalize JSONL and HTML agree and markup is escaped") {
  {
    std::ofstream f(p("odd.tsv"));
    f << "odd1\tw1 <b>x1</b> & \"w2\"\t0.9\n";
  }
  const std::string input = " --input " + p("dev.tsv");
  REQUIRE(run("rationalize --model " + p("model") + input + " --gold " + p("dev.ann") + " --jsonl " + p("r.jsonl") +
              " --html " + p("r.html")) == 0);
  std::ifstream in(p("r.jsonl"));
  std::string line;
  long highlighted = 0, records = 0;
  for (; std::getline(in, line); ++records) {
    const auto rec = nlohmann::json::parse(line);
    const auto n = rec["tokens"].size();
    CHECK(rec["probs"].size() == n);
    CHECK(rec["mask"].size() == n);
    CHECK(rec["gold"].size() == n);
    CHECK(rec["prediction"].get<double>() > 0.0);
    CHECK(rec["prediction"].get<double>() < 1.0);
    for (const auto& b : rec["mask"]) highlighted += b.get<int>();
  }
  CHECK(records == 30);
  const std::string html = slurp(p("r.html"));
  long spans = 0;
  for (std::size_t at = 0; (at = html.find("background:", at)) != std::string::npos; ++at) ++spans;
  CHECK(spans == highlighted);

  REQUIRE(run("rationalize --model " + p("model") + " --input " + p("odd.tsv") + " --jsonl " + p("o.jsonl") +
              " --html " + p("o.html")) == 0);
  const std::string odd = slurp(p("o.html"));
  CHECK(odd.find("<b>") == std::string::npos);
  CHECK(odd.find("&lt;") != std::string::npos);
  CHECK(odd.find("&amp;") != std::string::npos);
  CHECK(odd.find("&quot;") != std::string::npos);

  REQUIRE(run("rationalize --model " + p("model") + input + " --sample --seed 3 --jsonl " + p("s1.jsonl")) == 0);
  REQUIRE(run("rationalize --model " + p("model") + input + " --sample --seed 3 --jsonl " + p("s2.jsonl")) == 0);
  CHECK(slurp(p("s1.jsonl")) == slurp(p("s2.jsonl")));
}

TEST_CASE_FIXTURE(Fixture, "empty rationale gives the default prediction") {
  {
    std::ofstream f(p("plain.tsv"));
    f << "p1\tw1 w2 w3\t0.1\n";
  }
  // A heavy sparsity weight with no coherence term drives every probability below 0.5.
  REQUIRE(run("train --data " + p("train.tsv") + " --out " + p("fixed") +
              " --epochs 5 --hidden-size 4 --embedding-dim 4 --batch-size 16 --learning-rate 0.05"
              " --bias-mode fixed --lambda1 10 --lambda2 0") == 0);
  REQUIRE(run("rationalize --model " + p("fixed") + " --input " + p("plain.tsv") + " --jsonl " + p("f.jsonl") +
              " --html " + p("f.html")) == 0);
  const auto rec = nlohmann::json::parse(slurp(p("f.jsonl")));
  for (const auto& b : rec["mask"]) CHECK(b.get<int>() == 0);
  CHECK(rec["prediction"].get<double>() == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(slurp(p("f.html")).find("background:") == std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "grid resumes from a partial CSV") {
  {
    std::ofstream g(p("grid.txt"));
    g << "lambda1 = 0.01, 0.02\nlambda2 = 1\nlambda3 = 0, 1\n";
  }
  const std::string base = "grid --data " + p("train.tsv") + " --dev " + p("dev.tsv") + " --dev-gold " + p("dev.ann") +
                           " --grid-file " + p("grid.txt") + " --out " + p("grid.csv") + kTiny + " --jobs 2";
  REQUIRE(run(base) == 0);
  const std::string full = slurp(p("grid.csv"));
  std::istringstream lines(full);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].rfind("cell,lambda1,lambda2,lambda3,dev_token_f1", 0) == 0);

  {
    // Keep two finished rows plus a torn third line.
    std::ofstream out(p("grid.csv"));
    out << rows[0] << "\n" << rows[1].substr(0, rows[1].size() - 1) << "0\n" << rows[3] << "\n" << "2,0.0";
  }
  REQUIRE(run(base) == 0);
  CHECK(slurp(p("stdout.txt")).find("resuming: 2 of 4") != std::string::npos);
  CHECK(slurp(p("grid.csv")) == full);
}

TEST_CASE_FIXTURE(Fixture, "exit codes") {
  CHECK(run("") == 1);
  CHECK(run("train --out " + p("x")) == 1);
  CHECK(run("train --data " + p("train.tsv") + " --out " + p("x") + " --lambda1 nope") == 1);
  {
    std::ofstream f(p("bad.tsv"));
    f << "only-two\tfields\n";
  }
  CHECK(run("train --data " + p("bad.tsv") + " --out " + p("x")) == 2);
  CHECK(run("eval --model " + p("no_model") + " --test " + p("dev.tsv")) == 2);
}
