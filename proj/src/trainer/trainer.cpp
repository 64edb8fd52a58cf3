#include "mlvae/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "mlvae/errors.hpp"

namespace mlvae {

namespace {

std::size_t token_count(const corpus::Paragraph& p) {
  std::size_t n = 0;
  for (const auto& s : p) n += s.size();
  return n;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  for (auto i : indices) {
    out.targets.push_back(targets.at(i));
    if (paired()) out.conditions.push_back(conditions.at(i));
  }
  return out;
}

Dataset make_dataset(std::span<const corpus::TextParagraph> docs, const corpus::Vocabulary& vocab,
                     std::size_t max_sentences, std::size_t max_words, corpus::IngestReport* report) {
  Dataset out;
  out.targets.reserve(docs.size());
  for (const auto& d : docs) out.targets.push_back(corpus::truncate(corpus::encode(d, vocab), max_sentences, max_words, report));
  return out;
}

Dataset make_paired_dataset(std::span<const corpus::PairedText> pairs, const corpus::Vocabulary& vocab,
                            std::size_t max_sentences, std::size_t max_words, corpus::IngestReport* report) {
  Dataset out;
  for (const auto& p : pairs) {
    out.conditions.push_back(corpus::truncate(corpus::encode(p.condition, vocab), max_sentences, max_words, report));
    out.targets.push_back(corpus::truncate(corpus::encode(p.target, vocab), max_sentences, max_words, report));
  }
  return out;
}

std::pair<Dataset, Dataset> split_heldout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw PreconditionError("split_heldout: fraction must be in [0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  const std::span<const std::size_t> all(order);
  return {data.subset(all.subspan(held)), data.subset(all.first(held))};
}

std::size_t median_sentences(const Dataset& data) {
  if (data.empty()) throw PreconditionError("median_sentences: empty dataset");
  std::vector<std::size_t> counts;
  for (const auto& p : data.targets) counts.push_back(p.size());
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];
}

double anneal(std::int64_t step, std::int64_t s0, std::int64_t s1) {
  if (s0 > s1) throw PreconditionError("anneal: start step must not exceed end step");
  if (step < s0) return 0.0;
  if (step >= s1) return 1.0;
  return static_cast<double>(step - s0) / static_cast<double>(s1 - s0);
}

template <typename T>
LossVars loss_step(nd::Tape<T>& tape, const Model<T>& model, const corpus::PaddedBatch& target,
                   const corpus::PaddedBatch& source, double beta, NoiseSource<T>& noise) {
  if (target.batch == 0) throw PreconditionError("loss_step: empty batch");
  if (source.batch != target.batch) throw DimensionError("loss_step: condition and target batches differ in size");
  std::vector<nd::Var> recs, kls;
  for (std::size_t b = 0; b < target.batch; ++b) {
    const auto terms = model.document_terms(tape, target, source, b, noise);
    recs.push_back(terms.reconstruction);
    kls.push_back(terms.kl);
  }
  const T inv = T{1} / static_cast<T>(target.batch);
  const auto rec = tape.scale(tape.add_n(recs), inv);
  const auto kl = tape.scale(tape.add_n(kls), inv);
  return {rec, kl, tape.add(rec, tape.scale(kl, static_cast<T>(beta)))};
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, std::uint64_t seed) {
  if (data.empty()) throw PreconditionError("evaluate: empty split");
  NoiseSource<T> noise(seed);
  EvalReport report;
  report.bound = model.latent();
  // extended accumulators keep long evaluations from drifting by many ulps
  long double total_nll = 0, total_kl = 0;
  const auto& cfg = model.config();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const corpus::Paragraph target[] = {data.targets[i]};
    const auto tb = corpus::pad_batch(target, cfg.max_sentences, cfg.max_words);
    nd::Tape<T> tape(model.store());
    DocumentTerms terms;
    if (data.paired()) {
      const corpus::Paragraph source[] = {data.conditions[i]};
      terms = model.document_terms(tape, tb, corpus::pad_batch(source, cfg.max_sentences, cfg.max_words), 0, noise);
    } else {
      terms = model.document_terms(tape, tb, tb, 0, noise);
    }
    const double kl = static_cast<double>(tape.scalar(terms.kl));
    total_nll += static_cast<long double>(tape.scalar(terms.reconstruction)) + kl;
    total_kl += kl;
    report.tokens += token_count(data.targets[i]);
  }
  report.documents = data.size();
  report.nll = static_cast<double>(total_nll / report.documents);
  report.kl = static_cast<double>(total_kl / report.documents);
  report.ppl = static_cast<double>(std::exp(total_nll / report.tokens));
  return report;
}

std::string format_log_header() { return "step\treconstruction\tkl\tbeta\tobjective\tppl"; }

std::string format_log_row(const LogRow& r) {
  return std::to_string(r.step) + "\t" + fmt(r.reconstruction) + "\t" + fmt(r.kl) + "\t" + fmt(r.beta) + "\t" +
         fmt(r.objective) + "\t" + fmt(r.ppl);
}

std::string format_eval(std::size_t step, const EvalReport& r) {
  return "eval\t" + std::to_string(step) + "\tnll=" + fmt(r.nll) + "\tkl=" + fmt(r.kl) + "\tppl" +
         (r.bound ? "<=" : "=") + fmt(r.ppl) + "\ttokens=" + std::to_string(r.tokens) +
         "\tdocs=" + std::to_string(r.documents);
}

template <typename T>
TrainResult<T> train(ModelConfig config, const Dataset& train_data, const Dataset& heldout,
                     const corpus::Vocabulary& vocab, const TrainOptions& options) {
  if (train_data.empty()) throw PreconditionError("train: empty training corpus");
  if (config.vocab_size == 0) config.vocab_size = vocab.size();
  if (config.vocab_size != vocab.size()) throw ConfigError("train: config vocab_size does not match the vocabulary");
  config.paired = train_data.paired();
  if (config.generate_sentences == 0) config.generate_sentences = median_sentences(train_data);
  config.validate();

  TrainResult<T> result{Model<T>(config), nd::Adam<T>({config.lr, config.beta1, config.beta2, config.adam_eps}), 0, {}, {}};
  auto& model = result.model;
  NoiseSource<T> noise(config.seed + 1);
  std::mt19937_64 order_rng(config.seed + 2);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  auto save = [&] {
    if (options.checkpoint) save_bundle(*options.checkpoint, model, vocab);
  };
  auto run_eval = [&](std::size_t step) {
    if (heldout.empty()) return;
    result.heldout = evaluate(model, heldout, config.seed + 3);
    if (options.log) *options.log << format_eval(step, *result.heldout) << "\n";
  };

  if (options.log) *options.log << format_log_header() << "\n";
  nd::Tape<T> tape(model.store());
  std::vector<corpus::Paragraph> targets, sources;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    targets.clear();
    sources.clear();
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      targets.push_back(train_data.targets[i]);
      if (train_data.paired()) sources.push_back(train_data.conditions[i]);
      tokens += token_count(train_data.targets[i]);
    }
    const auto tb = corpus::pad_batch(targets, config.max_sentences, config.max_words);
    const auto sb = train_data.paired() ? corpus::pad_batch(sources, config.max_sentences, config.max_words) : tb;

    const double beta = model.latent() ? anneal(static_cast<std::int64_t>(step), config.anneal_start, config.anneal_end) : 0.0;
    LogRow row;
    try {
      const auto loss = loss_step(tape, model, tb, sb, beta, noise);
      row.step = step;
      row.reconstruction = static_cast<double>(tape.scalar(loss.reconstruction));
      row.kl = static_cast<double>(tape.scalar(loss.kl));
      row.beta = beta;
      row.objective = row.reconstruction + beta * row.kl;
      row.ppl = std::exp((row.reconstruction + row.kl) * static_cast<double>(config.batch_size) / static_cast<double>(tokens));
      if (!std::isfinite(row.objective)) throw NumericError("non-finite objective");
      tape.backward(loss.objective);
      nd::clip_global_norm(model.store(), config.clip_norm);
      result.optimizer.update(model.store());
    } catch (const NumericError& e) {
      tape.clear();
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    result.steps = step;
    result.log.push_back(row);
    if (options.on_step) options.on_step(row);
    if (options.log && (step % std::max<std::size_t>(config.log_interval, 1) == 0 || step == config.max_steps)) {
      *options.log << format_log_row(row) << "\n";
    }
    if (config.eval_interval && step % config.eval_interval == 0 && step != config.max_steps) run_eval(step);
    if (config.checkpoint_interval && step % config.checkpoint_interval == 0 && step != config.max_steps) save();
  }
  run_eval(result.steps);
  save();
  return result;
}

template LossVars loss_step(nd::Tape<float>&, const Model<float>&, const corpus::PaddedBatch&,
                            const corpus::PaddedBatch&, double, NoiseSource<float>&);
template LossVars loss_step(nd::Tape<double>&, const Model<double>&, const corpus::PaddedBatch&,
                            const corpus::PaddedBatch&, double, NoiseSource<double>&);
template EvalReport evaluate(const Model<float>&, const Dataset&, std::uint64_t);
template EvalReport evaluate(const Model<double>&, const Dataset&, std::uint64_t);
template TrainResult<float> train(ModelConfig, const Dataset&, const Dataset&, const corpus::Vocabulary&,
                                  const TrainOptions&);
template TrainResult<double> train(ModelConfig, const Dataset&, const Dataset&, const corpus::Vocabulary&,
                                   const TrainOptions&);

}  // namespace mlvae
