#include "ptune/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ptune {

std::string_view kind_name(QAKind kind) {
  return kind == QAKind::general ? "general" : "hyper_specific";
}

QAKind parse_kind(std::string_view text) {
  if (text == "general") return QAKind::general;
  if (text == "hyper_specific" || text == "specific") return QAKind::hyper_specific;
  throw std::invalid_argument("unknown corpus kind '" + std::string(text) +
                              "' (expected general or specific)");
}

namespace {

constexpr std::array<std::string_view, 16> kNameStems = {
    "akt", "fox", "myo", "lac", "igf", "tp", "bcl", "ras",
    "jak", "stat", "wnt", "mtor", "erk", "sod", "cdk", "hsp"};
constexpr std::array<std::string_view, 6> kRoles = {
    "kinase", "transcription factor", "receptor protein",
    "enzyme", "motor protein", "transport protein"};
constexpr std::array<std::string_view, 8> kVerbs = {
    "regulates", "activates", "inhibits", "stabilizes",
    "controls", "modulates", "represses", "drives"};
constexpr std::array<std::string_view, 10> kTargets = {
    "the cell cycle",     "glucose metabolism", "dna repair",
    "insulin signaling",  "muscle contraction", "apoptosis",
    "lipid transport",    "nerve signaling",    "protein folding",
    "immune response"};
constexpr std::array<std::string_view, 5> kSites = {
    "in the nucleus", "at the membrane", "in the cytoplasm", "in mitochondria",
    "in the synapse"};

struct Concept {
  std::string_view term;
  std::string_view definition;
};

constexpr std::array<Concept, 20> kConcepts = {{
    {"the primary structure of a protein", "the linear sequence of amino acids"},
    {"the secondary structure of a protein", "local folding into helices and sheets"},
    {"the tertiary structure of a protein", "the three dimensional fold of one chain"},
    {"the quaternary structure of a protein", "the arrangement of multiple subunits"},
    {"protein misfolding", "folding into a non native conformation"},
    {"a chaperone", "a protein that assists correct folding"},
    {"an enzyme", "a protein that catalyzes a chemical reaction"},
    {"a receptor", "a protein that binds a signal molecule"},
    {"a peptide bond", "the link between two amino acids"},
    {"a protein domain", "a compact unit of structure and function"},
    {"a ligand", "a molecule that binds a protein site"},
    {"denaturation", "the loss of native structure"},
    {"allostery", "regulation through a distant binding site"},
    {"an active site", "the region where catalysis happens"},
    {"a signal peptide", "a short sequence that directs transport"},
    {"an amino acid", "a building block of proteins"},
    {"a beta sheet", "strands linked by hydrogen bonds"},
    {"an alpha helix", "a coiled chain held by hydrogen bonds"},
    {"protein turnover", "the balance of synthesis and degradation"},
    {"a disulfide bond", "a covalent link between two cysteines"},
}};

std::string article_for(std::string_view word) {
  const char c = word.empty() ? 'x' : word.front();
  return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

QAPair expand_general(const Concept& c, std::size_t template_index) {
  const std::string term(c.term);
  const std::string def(c.definition);
  QAPair p;
  p.kind = QAKind::general;
  switch (template_index % kGeneralTemplates) {
    case 0:
      p.question = "What is " + term + "?";
      p.answer = term + " is " + def + ".";
      break;
    case 1:
      p.question = "Can you define " + term + "?";
      p.answer = term + " is " + def + ".";
      break;
    case 2:
      p.question = "What does " + term + " mean?";
      p.answer = term + " means " + def + ".";
      break;
    default:
      p.question = "Explain " + term + " briefly.";
      p.answer = term + " refers to " + def + ".";
      break;
  }
  p.answer[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(p.answer[0])));
  return p;
}

}  // namespace

FactTable make_fact_table(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xFAC7));
  FactTable table;
  std::set<std::string> used;
  while (table.entries.size() < count) {
    std::string name(kNameStems[rng.below(kNameStems.size())]);
    name += std::to_string(1 + rng.below(std::max<std::size_t>(9, count)));
    if (!used.insert(name).second) continue;
    FactEntry e;
    e.name = std::move(name);
    e.role = std::string(kRoles[rng.below(kRoles.size())]);
    e.mechanism = std::string(kVerbs[rng.below(kVerbs.size())]) + " " +
                  std::string(kTargets[rng.below(kTargets.size())]) + " " +
                  std::string(kSites[rng.below(kSites.size())]);
    table.entries.push_back(std::move(e));
  }
  return table;
}

std::size_t entity_count_for(std::size_t size) {
  return std::max<std::size_t>(1, (size + kSpecificTemplates - 1) / kSpecificTemplates);
}

QAPair expand_specific(const FactEntry& e, std::int64_t entity_id,
                       std::size_t template_index) {
  QAPair p;
  p.kind = QAKind::hyper_specific;
  p.entity_id = entity_id;
  const std::string role_phrase = article_for(e.role) + " " + e.role;
  switch (template_index % kSpecificTemplates) {
    case 0:
      p.question = "What is the mechanism of action for the protein " + e.name + "?";
      p.answer = e.name + " is " + role_phrase + " that " + e.mechanism + ".";
      break;
    case 1:
      p.question = "What is the function of the protein " + e.name + "?";
      p.answer = e.name + " " + e.mechanism + ".";
      break;
    case 2:
      p.question = "What is the role of the protein " + e.name + " in the body?";
      p.answer = "As " + role_phrase + ", " + e.name + " " + e.mechanism + ".";
      break;
    default:
      p.question = "What kind of protein is " + e.name + "?";
      p.answer = e.name + " is " + role_phrase + " that " + e.mechanism + ".";
      break;
  }
  return p;
}

std::vector<QAPair> generate_corpus(QAKind kind, std::size_t size, std::uint64_t seed) {
  if (size == 0) throw std::invalid_argument("corpus size must be at least 1");
  std::vector<QAPair> pairs;
  pairs.reserve(size);
  if (kind == QAKind::hyper_specific) {
    const std::size_t n_entities = entity_count_for(size);
    const FactTable table = make_fact_table(n_entities, seed);
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t entity = i % n_entities;
      pairs.push_back(expand_specific(table.entries[entity],
                                      static_cast<std::int64_t>(entity),
                                      i / n_entities));
    }
  } else {
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t c = i % kConcepts.size();
      pairs.push_back(expand_general(kConcepts[c], i / kConcepts.size()));
    }
  }
  Rng rng(derive_seed(seed, kind == QAKind::general ? 1 : 2));
  shuffle_in_place(pairs, rng);
  return pairs;
}

std::string corpus_to_jsonl(std::span<const QAPair> pairs) {
  std::string out;
  for (const QAPair& p : pairs) {
    nlohmann::ordered_json j;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["kind"] = std::string(kind_name(p.kind));
    if (p.entity_id) {
      j["entity_id"] = *p.entity_id;
    } else {
      j["entity_id"] = nullptr;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<QAPair> corpus_from_jsonl(std::string_view text) {
  std::vector<QAPair> pairs;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      QAPair p;
      p.question = j.at("question").get<std::string>();
      p.answer = j.at("answer").get<std::string>();
      p.kind = parse_kind(j.at("kind").get<std::string>());
      if (j.contains("entity_id") && !j.at("entity_id").is_null()) {
        p.entity_id = j.at("entity_id").get<std::int64_t>();
      }
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

void write_corpus(const std::filesystem::path& path, std::span<const QAPair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  const std::string text = corpus_to_jsonl(pairs);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<QAPair> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return corpus_from_jsonl(ss.str());
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view t : {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"}) {
    index_.emplace(std::string(t), tokens_.size());
    tokens_.emplace_back(t);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < kReservedTokens ||
      !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw std::invalid_argument("vocabulary must start with the reserved tokens");
  }
  for (std::size_t i = kReservedTokens; i < tokens.size(); ++i) {
    if (!v.index_.emplace(tokens[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens[i] + "'");
    }
  }
  v.tokens_ = std::move(tokens);
  return v;
}

Vocabulary Vocabulary::build(std::span<const QAPair> corpus) {
  std::map<std::string, std::size_t> freq;
  for (const QAPair& p : corpus) {
    for (const std::string& t : tokenize(p.question)) ++freq[t];
    for (const std::string& t : tokenize(p.answer)) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [token, count] : ordered) {
    (void)count;
    if (v.index_.contains(token)) continue;
    v.index_.emplace(token, v.tokens_.size());
    v.tokens_.push_back(token);
  }
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::ids(std::string_view text) const {
  std::vector<std::size_t> out;
  for (const std::string& t : tokenize(text)) out.push_back(id(t));
  return out;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id < kReservedTokens && id != kUnk) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

EncodedPair encode(std::string_view question, std::string_view answer,
                   const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
  const std::vector<std::size_t> q = vocab.ids(question);
  const std::vector<std::size_t> a = vocab.ids(answer);

  std::vector<std::size_t> framed;
  framed.reserve(q.size() + a.size() + 2);
  framed.push_back(kBos);
  framed.insert(framed.end(), q.begin(), q.end());
  framed.push_back(kSep);
  framed.insert(framed.end(), a.begin(), a.end());
  // Keep the longest prefix that still leaves room for EOS.
  if (framed.size() + 1 > max_len) framed.resize(max_len - 1);
  framed.push_back(kEos);

  EncodedPair out;
  out.length = framed.size();
  const std::size_t eos = framed.size() - 1;
  const std::size_t q_end = std::min(1 + q.size(), eos);
  out.question = {1, q_end};
  const std::size_t a_begin = std::min(2 + q.size(), eos);
  out.answer = {a_begin, eos};
  out.ids = std::move(framed);
  out.ids.resize(max_len, kPad);
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t dataset_size,
                                              std::size_t batch_size, std::size_t epoch,
                                              std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (dataset_size == 0) throw std::invalid_argument("cannot batch an empty dataset");
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch));
  shuffle_in_place(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < dataset_size; start += batch_size) {
    const std::size_t end = std::min(dataset_size, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Tensor mix(const Tensor& a, const Tensor& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");
  if (!a.same_shape(b)) throw std::invalid_argument("mixup operands must share shapes");
  Tensor out(a.shape());
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * a[i] + mu * b[i];
  return out;
}

MixedBatch mixup(const Tensor& inputs_a, const Tensor& inputs_b, const Tensor& labels_a,
                 const Tensor& labels_b, double lambda) {
  return {mix(inputs_a, inputs_b, lambda), mix(labels_a, labels_b, lambda)};
}

double sample_mixup_lambda(Rng& rng, double alpha) { return rng.beta(alpha, alpha); }

RetrievalTask generate_retrieval_task(std::size_t n_queries, std::size_t n_docs,
                                      std::uint64_t seed, bool all_relevant) {
  if (n_docs < 2) throw std::invalid_argument("n_docs must be at least 2");
  if (n_queries == 0) throw std::invalid_argument("n_queries must be at least 1");
  RetrievalTask task;
  task.n_docs = n_docs;
  for (std::size_t q = 0; q < n_queries; ++q) {
    RetrievalQuery query;
    std::vector<std::size_t> docs(n_docs);
    std::iota(docs.begin(), docs.end(), std::size_t{0});
    if (all_relevant) {
      query.relevant = docs;
      query.ranking = docs;
    } else {
      Rng rng(derive_seed(seed, q));
      const std::size_t n_rel = 1 + rng.below(std::max<std::size_t>(1, n_docs / 2));
      std::vector<std::size_t> pool = docs;
      shuffle_in_place(pool, rng);
      query.relevant.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_rel));
      std::sort(query.relevant.begin(), query.relevant.end());
      // A noisy scorer: relevant documents get a head start.
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t d : docs) {
        const bool rel = std::binary_search(query.relevant.begin(), query.relevant.end(), d);
        scored.emplace_back((rel ? 1.0 : 0.0) + rng.normal(), d);
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (const auto& s : scored) query.ranking.push_back(s.second);
    }
    query.judgments.n_rel = query.relevant.size();
    for (std::size_t d : query.ranking) {
      query.judgments.grades.push_back(
          std::binary_search(query.relevant.begin(), query.relevant.end(), d) ? 1 : 0);
    }
    task.queries.push_back(std::move(query));
  }
  return task;
}

}  // namespace ptune
