#include "ptune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ptune/checkpoint.hpp"
#include "ptune/rng.hpp"

namespace ptune {

using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------------ config

namespace {

ordered_json plan_to_json(const PlanConfig& p) {
  ordered_json j;
  j["policy"] = p.policy;
  if (p.policy == "full") {
    if (p.lr) j["lr"] = *p.lr;
  } else if (p.policy == "llrd") {
    j["top_lr"] = p.top_lr;
    j["decay"] = p.decay;
  } else if (p.policy == "grouped_llrd") {
    j["rates"] = p.rates;
  } else if (p.policy == "surgical") {
    j["base_lr"] = p.base_lr;
    if (p.data_size) j["data_size"] = *p.data_size;
    if (p.params_per_group) j["params_per_group"] = *p.params_per_group;
    j["mask"] = p.mask;
  }
  return j;
}

PlanConfig plan_from_json(const json& j) {
  PlanConfig p;
  p.policy = j.value("policy", std::string("full"));
  if (p.policy == "full") {
    if (j.contains("lr")) p.lr = j.at("lr").get<double>();
  } else if (p.policy == "llrd") {
    p.top_lr = j.at("top_lr").get<double>();
    p.decay = j.at("decay").get<double>();
  } else if (p.policy == "grouped_llrd") {
    p.rates = j.at("rates").get<std::vector<double>>();
  } else if (p.policy == "surgical") {
    p.base_lr = j.at("base_lr").get<double>();
    if (j.contains("data_size")) p.data_size = j.at("data_size").get<std::size_t>();
    if (j.contains("params_per_group")) {
      p.params_per_group = j.at("params_per_group").get<std::array<std::size_t, kGroupCount>>();
    }
    const auto mask = j.at("mask").get<std::vector<int>>();
    if (mask.size() != kGroupCount) {
      throw std::invalid_argument("surgical mask must have " + std::to_string(kGroupCount) +
                                  " entries");
    }
    std::copy(mask.begin(), mask.end(), p.mask.begin());
  } else {
    throw std::invalid_argument("unknown policy '" + p.policy +
                                "' (expected full, llrd, grouped_llrd or surgical)");
  }
  return p;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  j["model"] = {{"vocab_size", c.model.vocab_size},   {"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},         {"n_blocks", c.model.n_blocks},
                {"ffn_multiplier", c.model.ffn_multiplier},
                {"max_seq_len", c.model.max_seq_len}, {"seed", c.model.seed}};
  j["optimizer"] = {{"alpha", c.optimizer.alpha},   {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},   {"lambda", c.optimizer.lambda},
                    {"epsilon", c.optimizer.epsilon}};
  j["plan"] = plan_to_json(c.plan);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["corpus"] = {{"general", c.corpus.general.generic_string()},
                 {"specific", c.corpus.specific.generic_string()},
                 {"train_on", std::string(kind_name(c.corpus.train_on))}};
  j["split_seed"] = c.split_seed;
  j["train_seed"] = c.train_seed;
  j["mixup"] = {{"enabled", c.mixup.enabled}, {"alpha", c.mixup.alpha}};
  j["eval"] = {{"retrieval_pool", c.retrieval_pool}};
  return j;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.name = j.value("name", std::string());
  if (j.contains("model")) {
    const json& m = j.at("model");
    c.model.vocab_size = m.value("vocab_size", c.model.vocab_size);
    c.model.d_model = m.value("d_model", c.model.d_model);
    c.model.n_heads = m.value("n_heads", c.model.n_heads);
    c.model.n_blocks = m.value("n_blocks", c.model.n_blocks);
    c.model.ffn_multiplier = m.value("ffn_multiplier", c.model.ffn_multiplier);
    c.model.max_seq_len = m.value("max_seq_len", c.model.max_seq_len);
    c.model.seed = m.value("seed", c.model.seed);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    c.optimizer.alpha = o.value("alpha", c.optimizer.alpha);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.lambda = o.value("lambda", c.optimizer.lambda);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
  }
  if (j.contains("plan")) c.plan = plan_from_json(j.at("plan"));
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  const json& corpus = j.at("corpus");
  c.corpus.general = resolve(base_dir, corpus.at("general").get<std::string>());
  c.corpus.specific = resolve(base_dir, corpus.at("specific").get<std::string>());
  c.corpus.train_on = parse_kind(corpus.value("train_on", std::string("hyper_specific")));
  c.split_seed = j.value("split_seed", c.split_seed);
  c.train_seed = j.value("train_seed", c.train_seed);
  if (j.contains("mixup")) {
    c.mixup.enabled = j.at("mixup").value("enabled", c.mixup.enabled);
    c.mixup.alpha = j.at("mixup").value("alpha", c.mixup.alpha);
  }
  if (j.contains("eval")) c.retrieval_pool = j.at("eval").value("retrieval_pool", c.retrieval_pool);
  if (j.contains("output_dir")) {
    c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

RunConfig toy_run_config() {
  RunConfig c;
  c.name = "toy";
  c.model.d_model = 32;
  c.model.n_heads = 2;
  c.model.n_blocks = 3;
  c.model.ffn_multiplier = 2;
  c.model.max_seq_len = 32;
  c.model.seed = 7;
  c.optimizer.alpha = 3e-3;
  c.plan.policy = "full";
  c.epochs = 10;
  c.batch_size = 32;
  c.split_seed = 11;
  c.train_seed = 13;
  return c;
}

TuningPlan resolve_plan(const PlanConfig& p, const AdamWHyper& hyper,
                        const std::array<std::size_t, kGroupCount>& group_params,
                        std::size_t train_size, std::size_t total_steps) {
  TuningPlan plan;
  plan.schedule.total_steps = std::max<std::size_t>(1, total_steps);
  if (p.policy == "full") {
    plan.policy = FullPolicy{p.lr.value_or(hyper.alpha)};
  } else if (p.policy == "llrd") {
    plan.policy = LlrdPolicy{p.top_lr, p.decay};
  } else if (p.policy == "grouped_llrd") {
    plan.policy = GroupedLlrdPolicy{p.rates};
  } else if (p.policy == "surgical") {
    SurgicalPolicy s;
    s.base_lr = p.base_lr;
    s.data_size = p.data_size.value_or(train_size);
    s.params_per_group = p.params_per_group.value_or(group_params);
    s.mask = p.mask;
    plan.policy = s;
  } else {
    throw std::invalid_argument("unknown policy '" + p.policy + "'");
  }
  plan.validate();
  return plan;
}

// ------------------------------------------------------------------ report

namespace {

ordered_json metrics_to_json(const MetricsReport& m) {
  ordered_json j;
  j["f1"] = m.f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["mae"] = m.mae;
  j["map"] = m.map;
  j["ndcg"] = m.ndcg;
  j["ndcg_standard"] = m.ndcg_standard;
  j["attention_entropy"] = m.attention_entropy;
  j["counts"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}};
  j["examples"] = m.examples;
  return j;
}

MetricsReport metrics_from_json(const ordered_json& j) {
  MetricsReport m;
  m.f1 = j.at("f1").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.mae = j.at("mae").get<double>();
  m.map = j.at("map").get<double>();
  m.ndcg = j.at("ndcg").get<double>();
  m.ndcg_standard = j.at("ndcg_standard").get<double>();
  m.attention_entropy = j.at("attention_entropy").get<double>();
  m.counts.tp = j.at("counts").at("tp").get<std::uint64_t>();
  m.counts.fp = j.at("counts").at("fp").get<std::uint64_t>();
  m.counts.fn = j.at("counts").at("fn").get<std::uint64_t>();
  m.examples = j.at("examples").get<std::size_t>();
  return m;
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  ordered_json j;
  j["label"] = r.label;
  j["policy"] = r.policy;
  j["group_rates"] = r.group_rates;
  j["train_size"] = r.train_size;
  j["total_steps"] = r.total_steps;
  j["epoch_losses"] = r.epoch_losses;
  j["eval"] = {{"hyper_specific", metrics_to_json(r.specific)},
               {"general", metrics_to_json(r.general)}};
  j["provenance"] = {{"split_seed", r.split_seed},
                     {"train_seed", r.train_seed},
                     {"prng", r.prng}};
  j["config"] = r.config;
  return j.dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
  const ordered_json j = ordered_json::parse(text);
  RunReport r;
  r.label = j.at("label").get<std::string>();
  r.policy = j.at("policy").get<std::string>();
  r.group_rates = j.at("group_rates").get<std::array<double, kGroupCount>>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.total_steps = j.at("total_steps").get<std::size_t>();
  r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  r.specific = metrics_from_json(j.at("eval").at("hyper_specific"));
  r.general = metrics_from_json(j.at("eval").at("general"));
  r.split_seed = j.at("provenance").at("split_seed").get<std::uint64_t>();
  r.train_seed = j.at("provenance").at("train_seed").get<std::uint64_t>();
  r.prng = j.at("provenance").at("prng").get<std::string>();
  r.config = j.at("config");
  return r;
}

RunReport load_report(const std::filesystem::path& run_dir) {
  const std::filesystem::path path = run_dir / "report.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read run report " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

// ------------------------------------------------------------------ training

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("need at least 2 pairs to split a corpus");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5b117));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t n_eval = std::max<std::size_t>(1, n / 10);
  std::vector<std::size_t> eval(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
  std::sort(eval.begin(), eval.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(eval)};
}

namespace {

std::vector<QAPair> pick(const std::vector<QAPair>& all, const std::vector<std::size_t>& idx) {
  std::vector<QAPair> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<QAPair> load_corpus_checked(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("corpus file not found: " + path.string());
  }
  std::vector<QAPair> pairs = read_corpus(path);
  if (pairs.size() < 2) throw std::runtime_error("corpus " + path.string() + " is too small");
  return pairs;
}

// Next-token targets for one batch: inputs are positions [0, seq) and the
// target of position t is token t+1, weighted 1 on answer tokens and EOS.
struct BatchTensors {
  TokenBatch tokens;
  Tensor targets;  // [batch*seq x vocab]
};

BatchTensors build_batch(const std::vector<EncodedPair>& encoded,
                         std::span<const std::size_t> rows, std::size_t vocab) {
  std::size_t longest = 2;
  for (std::size_t r : rows) longest = std::max(longest, encoded[r].length);
  const std::size_t seq = longest - 1;
  BatchTensors out;
  out.tokens.batch = rows.size();
  out.tokens.seq = seq;
  out.tokens.ids.assign(rows.size() * seq, kPad);
  out.targets = Tensor({rows.size() * seq, vocab});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const EncodedPair& e = encoded[rows[b]];
    for (std::size_t t = 0; t < seq; ++t) out.tokens.ids[b * seq + t] = e.ids[t];
    for (std::size_t pos = e.answer.begin; pos < e.length; ++pos) {
      if (pos == 0 || pos - 1 >= seq) continue;
      out.targets.at(b * seq + pos - 1, e.ids[pos]) = 1.0;
    }
  }
  return out;
}

std::string run_label(const RunConfig& c) {
  if (!c.name.empty()) return c.name;
  return std::string(kind_name(c.corpus.train_on)) + "/" + c.plan.policy;
}

}  // namespace

FinetuneResult finetune(const RunConfig& input) {
  const auto started = std::chrono::steady_clock::now();
  RunConfig config = input;
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (config.retrieval_pool == 0) throw std::invalid_argument("retrieval_pool must be at least 1");

  const std::vector<QAPair> general = load_corpus_checked(config.corpus.general);
  const std::vector<QAPair> specific = load_corpus_checked(config.corpus.specific);
  std::vector<QAPair> all = general;
  all.insert(all.end(), specific.begin(), specific.end());
  const Vocabulary vocab = Vocabulary::build(all);
  if (config.model.vocab_size == 0) {
    config.model.vocab_size = vocab.size();
  } else if (config.model.vocab_size < vocab.size()) {
    throw std::invalid_argument("model.vocab_size " + std::to_string(config.model.vocab_size) +
                                " is smaller than the corpus vocabulary (" +
                                std::to_string(vocab.size()) + ")");
  }

  const auto [gen_train_idx, gen_eval_idx] = split_indices(general.size(), config.split_seed);
  const auto [spec_train_idx, spec_eval_idx] = split_indices(specific.size(), config.split_seed);
  const bool on_specific = config.corpus.train_on == QAKind::hyper_specific;
  const std::vector<QAPair> train =
      on_specific ? pick(specific, spec_train_idx) : pick(general, gen_train_idx);
  const std::vector<QAPair> eval_general = pick(general, gen_eval_idx);
  const std::vector<QAPair> eval_specific = pick(specific, spec_eval_idx);

  std::vector<EncodedPair> encoded;
  encoded.reserve(train.size());
  for (const QAPair& p : train) {
    encoded.push_back(encode(p.question, p.answer, vocab, config.model.max_seq_len));
  }

  Model model(config.model);
  const Model initial = model;
  const std::size_t steps_per_epoch =
      (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  const TuningPlan plan = resolve_plan(config.plan, config.optimizer,
                                       model.group_parameter_counts(), train.size(),
                                       total_steps);
  const std::array<double, kGroupCount> rates = plan.group_rates();

  // Groups with a zero policy rate never move; skip their gradients.
  for (NamedParameter& p : model.parameters()) {
    p.tensor.set_requires_grad(rates[p.group] != 0.0);
  }

  OptimState state;
  Rng mix_rng(derive_seed(config.train_seed, 0x6d6978));
  std::vector<double> epoch_losses;
  std::size_t step = 0;
  std::vector<ParamUpdate> updates(model.parameters().size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const std::vector<std::size_t>& rows :
         batches(train.size(), config.batch_size, epoch, config.train_seed)) {
      BatchTensors bt = build_batch(encoded, rows, config.model.vocab_size);
      Graph graph;
      const std::vector<Var> bound = model.bind(graph);
      Var emb = model.embed(graph, bound, bt.tokens);
      Tensor targets = std::move(bt.targets);
      if (config.mixup.enabled) {
        const double lambda = sample_mixup_lambda(mix_rng, config.mixup.alpha);
        // Partner of sequence b is sequence b+1 (cyclically) at the same positions.
        const std::size_t seq = bt.tokens.seq, n = bt.tokens.batch;
        std::vector<std::size_t> partner(n * seq);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t t = 0; t < seq; ++t) partner[b * seq + t] = ((b + 1) % n) * seq + t;
        Var other = ops::embedding(emb, partner);
        emb = ops::add(ops::scale(emb, lambda), ops::scale(other, 1.0 - lambda));
        Tensor shifted(targets.shape());
        const std::size_t v = targets.cols();
        for (std::size_t r = 0; r < partner.size(); ++r)
          std::copy_n(&targets[partner[r] * v], v, &shifted[r * v]);
        targets = mix(targets, shifted, lambda);
      }
      Var logits = model.logits(graph, bound, emb, bt.tokens.batch, bt.tokens.seq);
      Var loss = ops::soft_cross_entropy(logits, targets);
      const double loss_value = loss.value()[0];
      const std::string where =
          "training diverged at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step + 1);
      if (!std::isfinite(loss_value)) throw std::runtime_error(where);
      model.zero_grad();
      graph.backward(loss);
      for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        NamedParameter& p = model.parameters()[i];
        updates[i] = {p.name, &p.tensor, effective_lr(plan, p.group, step)};
      }
      try {
        adamw_step(updates, state, config.optimizer);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
      loss_sum += loss_value;
      ++loss_count;
      ++step;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(loss_count));
  }
  for (NamedParameter& p : model.parameters()) {
    p.tensor.clear_grad();
    p.tensor.set_requires_grad(true);
  }

  RunReport report;
  report.label = run_label(config);
  ordered_json echo = run_config_to_json(config);
  echo["plan"] = plan_to_json(config.plan);
  if (const auto* s = std::get_if<SurgicalPolicy>(&plan.policy)) {
    echo["plan"]["data_size"] = s->data_size;
    echo["plan"]["params_per_group"] = s->params_per_group;
  } else if (const auto* f = std::get_if<FullPolicy>(&plan.policy)) {
    echo["plan"]["lr"] = f->lr;
  }
  echo["plan"]["total_steps"] = plan.schedule.total_steps;
  report.config = std::move(echo);
  report.policy = plan.policy_name();
  report.group_rates = rates;
  report.train_size = train.size();
  report.total_steps = total_steps;
  report.epoch_losses = std::move(epoch_losses);
  report.specific = evaluate(model, vocab, eval_specific, config.retrieval_pool);
  report.general = evaluate(model, vocab, eval_general, config.retrieval_pool);
  report.split_seed = config.split_seed;
  report.train_seed = config.train_seed;
  report.prng = std::string(kPrngName);

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return FinetuneResult{std::move(report), initial, std::move(model), seconds};
}

RunReport run_finetune(const RunConfig& config) {
  FinetuneResult result = finetune(config);
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    {
      std::ofstream out(config.output_dir / "report.json", std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write report in " + config.output_dir.string());
      out << report_to_json(result.report);
    }
    save_checkpoint(result.trained, config.output_dir / "checkpoint.ptck");
    std::ofstream timing(config.output_dir / "timing.json", std::ios::trunc);
    timing << ordered_json{{"wall_seconds", result.wall_seconds}}.dump(2) << "\n";
  }
  return result.report;
}

// ------------------------------------------------------------------ evaluation

namespace {

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Log-probabilities of each row of a [rows x vocab] logits block.
double log_prob(std::span<const double> row, std::size_t token) {
  return -cross_entropy(row, token);
}

}  // namespace

MetricsReport evaluate(const Model& model, const Vocabulary& vocab,
                       std::span<const QAPair> pairs, std::size_t retrieval_pool) {
  MetricsReport report;
  report.examples = pairs.size();
  if (pairs.empty()) return report;
  const std::size_t max_len = model.config().max_seq_len;
  const std::size_t v = model.config().vocab_size;

  std::vector<EncodedPair> encoded;
  for (const QAPair& p : pairs) encoded.push_back(encode(p.question, p.answer, vocab, max_len));

  std::vector<double> reference_probs;
  double entropy_sum = 0.0;
  std::size_t entropy_count = 0;
  double map_sum = 0.0, ndcg_sum = 0.0, ndcg_std_sum = 0.0;

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EncodedPair& e = encoded[i];

    // Teacher-forced pass: reference-token probabilities and attention.
    TokenBatch full{1, e.length, {e.ids.begin(), e.ids.begin() + static_cast<std::ptrdiff_t>(e.length)}};
    const ForwardResult fr = model.forward(full, true);
    for (std::size_t pos = std::max<std::size_t>(e.answer.begin, 1); pos < e.length; ++pos) {
      const std::span<const double> row = fr.logits.data().subspan((pos - 1) * v, v);
      reference_probs.push_back(std::exp(log_prob(row, e.ids[pos])));
    }
    if (e.answer.size() > 0 && e.question.size() > 0) {
      const std::vector<double> profile =
          attention_profile((*fr.attention)[0], e.question, e.answer);
      entropy_sum += attention_entropy(profile);
      ++entropy_count;
    }

    // Greedy decoding from BOS question SEP.
    std::vector<std::size_t> prefix(e.ids.begin(),
                                    e.ids.begin() + static_cast<std::ptrdiff_t>(e.answer.begin));
    std::vector<std::size_t> generated;
    while (prefix.size() < max_len) {
      const ForwardResult step = model.forward({1, prefix.size(), prefix}, false);
      const std::size_t next = argmax_row(step.logits.data().subspan((prefix.size() - 1) * v, v));
      if (next == kEos) break;
      generated.push_back(next);
      prefix.push_back(next);
    }
    const std::span<const std::size_t> reference(e.ids.data() + e.answer.begin, e.answer.size());
    report.counts += overlap_counts(generated, reference);

    // Rank a pool of candidate answers by mean log-likelihood.
    const std::size_t pool = std::min(retrieval_pool, pairs.size());
    std::vector<EncodedPair> candidates;
    std::size_t longest = 0;
    for (std::size_t c = 0; c < pool; ++c) {
      const QAPair& other = pairs[(i + c) % pairs.size()];
      candidates.push_back(encode(pairs[i].question, other.answer, vocab, max_len));
      longest = std::max(longest, candidates.back().length);
    }
    TokenBatch cb{pool, longest, std::vector<std::size_t>(pool * longest, kPad)};
    for (std::size_t c = 0; c < pool; ++c)
      std::copy_n(candidates[c].ids.begin(), longest, cb.ids.begin() + static_cast<std::ptrdiff_t>(c * longest));
    const ForwardResult cr = model.forward(cb, false);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c = 0; c < pool; ++c) {
      const EncodedPair& ce = candidates[c];
      double total = 0.0;
      std::size_t count = 0;
      for (std::size_t pos = std::max<std::size_t>(ce.answer.begin, 1); pos < ce.length; ++pos) {
        const std::span<const double> row =
            cr.logits.data().subspan((c * longest + pos - 1) * v, v);
        total += log_prob(row, ce.ids[pos]);
        ++count;
      }
      scored.emplace_back(count ? total / static_cast<double>(count) : -INFINITY, c);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    RelevanceList list;
    for (const auto& [score, c] : scored) {
      (void)score;
      const bool relevant = pairs[(i + c) % pairs.size()].answer == pairs[i].answer;
      list.grades.push_back(relevant ? 1 : 0);
      if (relevant) ++list.n_rel;
    }
    map_sum += mean_average_precision(list);
    ndcg_sum += ndcg(list, NdcgVariant::literal);
    ndcg_std_sum += ndcg(list, NdcgVariant::standard);
  }

  const auto [precision, recall] = precision_recall(report.counts);
  report.precision = precision;
  report.recall = recall;
  report.f1 = f1(precision, recall);
  const std::vector<double> ones(reference_probs.size(), 1.0);
  report.mae = reference_probs.empty() ? 0.0 : mae(reference_probs, ones);
  report.attention_entropy = entropy_count ? entropy_sum / static_cast<double>(entropy_count) : 0.0;
  const double n = static_cast<double>(pairs.size());
  report.map = map_sum / n;
  report.ndcg = ndcg_sum / n;
  report.ndcg_standard = ndcg_std_sum / n;
  return report;
}

}  // namespace ptune
