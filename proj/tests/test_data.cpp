#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ptune/data.hpp"

using namespace ptune;

namespace {

// Test-side re-expansion of the four entity templates.
std::vector<std::pair<std::string, std::string>> expected_pairs(const FactEntry& e) {
  const bool vowel = std::string("aeiou").find(e.role[0]) != std::string::npos;
  const std::string rp = std::string(vowel ? "an " : "a ") + e.role;
  return {
      {"What is the mechanism of action for the protein " + e.name + "?",
       e.name + " is " + rp + " that " + e.mechanism + "."},
      {"What is the function of the protein " + e.name + "?", e.name + " " + e.mechanism + "."},
      {"What is the role of the protein " + e.name + " in the body?",
       "As " + rp + ", " + e.name + " " + e.mechanism + "."},
      {"What kind of protein is " + e.name + "?",
       e.name + " is " + rp + " that " + e.mechanism + "."},
  };
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("corpus generation is deterministic with exact cardinality") {
  for (QAKind kind : {QAKind::general, QAKind::hyper_specific}) {
    const auto a = generate_corpus(kind, 100, 5), b = generate_corpus(kind, 100, 5);
    CHECK(a.size() == 100);
    CHECK(a == b);
    CHECK(generate_corpus(kind, 1, 5).size() == 1);
    CHECK(generate_corpus(kind, 100, 6) != a);
    for (const QAPair& p : a) {
      CHECK(p.kind == kind);
      CHECK(p.entity_id.has_value() == (kind == QAKind::hyper_specific));
    }
    CHECK_THROWS(generate_corpus(kind, 0, 5));
  }
}

TEST_CASE("hyper-specific answers regenerate from the fact table") {
  for (std::size_t size : {1u, 7u, 100u, 333u}) {
    const auto corpus = generate_corpus(QAKind::hyper_specific, size, 17);
    const FactTable table = make_fact_table(entity_count_for(size), 17);
    std::set<std::string> names;
    for (const FactEntry& e : table.entries) names.insert(e.name);
    CHECK(names.size() == table.entries.size());
    for (const QAPair& p : corpus) {
      REQUIRE(p.entity_id.has_value());
      const FactEntry& e = table.entries.at(static_cast<std::size_t>(*p.entity_id));
      CHECK(p.answer.find(e.mechanism) != std::string::npos);
      const auto options = expected_pairs(e);
      const bool matched = std::any_of(options.begin(), options.end(), [&](const auto& o) {
        return o.first == p.question && o.second == p.answer;
      });
      CHECK(matched);
    }
  }
  CHECK(make_fact_table(40, 3).entries.size() == 40);
  const auto t1 = make_fact_table(12, 3), t2 = make_fact_table(12, 3);
  for (std::size_t i = 0; i < 12; ++i) CHECK(t1.entries[i].name == t2.entries[i].name);
}

TEST_CASE("jsonl round trip and byte reproducibility") {
  const auto corpus = generate_corpus(QAKind::hyper_specific, 30, 4);
  const std::string text = corpus_to_jsonl(corpus);
  CHECK(corpus_from_jsonl(text) == corpus);
  CHECK(corpus_to_jsonl(generate_corpus(QAKind::hyper_specific, 30, 4)) == text);
  const auto general = generate_corpus(QAKind::general, 5, 4);
  CHECK(corpus_to_jsonl(general).find("\"entity_id\":null") != std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "ptune_test_corpus.jsonl";
  write_corpus(path, corpus);
  CHECK(read_corpus(path) == corpus);
  std::filesystem::remove(path);
  CHECK_THROWS(corpus_from_jsonl("{\"question\": 3}\n"));
  CHECK_THROWS(read_corpus("/nonexistent/corpus.jsonl"));
}

TEST_CASE("tokenizer and vocabulary") {
  CHECK(tokenize("What is  P53's role?") ==
        std::vector<std::string>{"what", "is", "p53", "'", "s", "role", "?"});
  const std::vector<QAPair> corpus = {{"b a?", "a c.", QAKind::general, {}},
                                      {"a b", "c a", QAKind::general, {}}};
  const Vocabulary v = Vocabulary::build(corpus);
  // a:4, b:2, c:2, ?:1, .:1 -> frequency desc, then lexicographic
  const std::vector<std::string> expected = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>",
                                             "a",     "b",     "c",     ".",     "?"};
  CHECK(v.tokens() == expected);
  CHECK(Vocabulary::build(corpus) == v);
  CHECK(v.id("zebra") == kUnk);
  CHECK(v.ids("A zebra") == std::vector<std::size_t>{5, kUnk});
  CHECK(v.decode(v.ids("B,  a C")) == "b <unk> a c");
}

TEST_CASE("encode framing and truncation") {
  const std::vector<QAPair> corpus = {{"one two three", "four five six", QAKind::general, {}}};
  const Vocabulary v = Vocabulary::build(corpus);
  const EncodedPair e = encode("one two three", "four five six", v, 12);
  CHECK(e.ids.size() == 12);
  CHECK(e.length == 9);
  CHECK(e.ids[0] == kBos);
  CHECK(e.ids[4] == kSep);
  CHECK(e.ids[8] == kEos);
  CHECK(e.ids[9] == kPad);
  CHECK(e.question == PositionSpan{1, 4});
  CHECK(e.answer == PositionSpan{5, 8});
  CHECK(v.decode(e.ids) == "one two three four five six");

  // BOS one two three SEP four | EOS: 7 slots keep "four", lose "five six".
  const EncodedPair t = encode("one two three", "four five six", v, 7);
  CHECK(t.ids.size() == 7);
  CHECK(t.length == 7);
  CHECK(t.ids[6] == kEos);
  CHECK(t.ids[5] == v.id("four"));
  CHECK(t.answer == PositionSpan{5, 6});

  const EncodedPair tiny = encode("one two three", "four", v, 3);
  CHECK(tiny.ids == std::vector<std::size_t>{kBos, v.id("one"), kEos});
  CHECK(encode("mystery", "x", v, 5).ids[1] == kUnk);
  CHECK_THROWS(encode("a", "b", v, 2));
}

TEST_CASE("batches") {
  const auto b = batches(100, 32, 0, 9);
  REQUIRE(b.size() == 4);
  CHECK(b[0].size() == 32);
  CHECK(b[3].size() == 4);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(100);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  CHECK(all == expected);
  CHECK(batches(100, 32, 0, 9) == b);
  CHECK(batches(100, 32, 1, 9) != b);
  CHECK_THROWS(batches(0, 32, 0, 9));
  CHECK_THROWS(batches(10, 0, 0, 9));
}

TEST_CASE("mixup") {
  const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4}), b({2, 2}, std::vector<double>{5, 6, 7, 8});
  const Tensor la({2, 3}, std::vector<double>{1, 0, 0, 0, 1, 0}),
      lb({2, 3}, std::vector<double>{0, 0, 1, 0, 0, 1});
  const MixedBatch one = mixup(a, b, la, lb, 1.0);
  CHECK(one.inputs.values() == a.values());
  CHECK(one.labels.values() == la.values());
  const MixedBatch zero = mixup(a, b, la, lb, 0.0);
  CHECK(zero.inputs.values() == b.values());
  CHECK(zero.labels.values() == lb.values());
  const MixedBatch half = mixup(a, b, la, lb, 0.5);
  CHECK(half.inputs.values() == std::vector<double>{3, 4, 5, 6});
  CHECK(half.labels.values() == std::vector<double>{0.5, 0, 0.5, 0, 0.5, 0.5});
  CHECK_THROWS(mixup(a, b, la, lb, 1.5));
  CHECK_THROWS(mixup(a, b, la, lb, -0.1));
  CHECK_THROWS(mixup(a, la, la, lb, 0.5));

  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const double lam = sample_mixup_lambda(rng);
    CHECK(lam >= 0.0);
    CHECK(lam <= 1.0);
    const MixedBatch x = mixup(a, b, la, lb, lam), y = mixup(b, a, lb, la, 1.0 - lam);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::fabs(x.inputs[k] - y.inputs[k]) <= 1e-15 * 8);
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::fabs(x.labels[k] - y.labels[k]) <= 1e-15);
  }
}

TEST_CASE("beta(0.2, 0.2) draws are U-shaped with mean one half") {
  Rng rng(1);
  double total = 0.0, extreme = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta(0.2, 0.2);
    total += x;
    extreme += (x < 0.1 || x > 0.9) ? 1.0 : 0.0;
  }
  CHECK(std::fabs(total / n - 0.5) < 0.01);
  CHECK(extreme / n > 0.5);
}

TEST_CASE("retrieval task") {
  const RetrievalTask t = generate_retrieval_task(30, 12, 8);
  CHECK(t.queries.size() == 30);
  for (const RetrievalQuery& q : t.queries) {
    CHECK(q.relevant.size() >= 1);
    CHECK(q.ranking.size() == 12);
    CHECK_NOTHROW(q.judgments.validate());
    std::size_t retrieved = 0;
    for (int g : q.judgments.grades) retrieved += g > 0;
    CHECK(q.judgments.n_rel >= retrieved);
    CHECK(q.judgments.n_rel == q.relevant.size());
  }
  const RetrievalTask again = generate_retrieval_task(30, 12, 8);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(again.queries[i].ranking == t.queries[i].ranking);
    CHECK(again.queries[i].judgments.grades == t.queries[i].judgments.grades);
  }
  CHECK_THROWS(generate_retrieval_task(3, 1, 8));

  for (std::size_t n : {2u, 5u, 9u}) {
    const RetrievalTask all = generate_retrieval_task(1, n, 8, true);
    const RelevanceList& r = all.queries[0].judgments;
    double harmonic = 0.0;
    for (std::size_t k = 1; k <= n; ++k) harmonic += 1.0 / static_cast<double>(k);
    CHECK(std::fabs(mean_average_precision(r) - harmonic / static_cast<double>(n)) < 1e-15);
    CHECK(std::fabs(mean_average_precision(r) - oracle::mean_average_precision(r.grades, r.n_rel)) < 1e-15);
  }
}

}  // TEST_SUITE
