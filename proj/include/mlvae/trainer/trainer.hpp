#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/model/model.hpp"
#include "mlvae/ndcore/optim.hpp"

namespace mlvae {

// Encoded documents, already truncated to the model caps. `conditions` is empty
// for unpaired data and otherwise parallel to `targets`.
struct Dataset {
  std::vector<corpus::Paragraph> targets;
  std::vector<corpus::Paragraph> conditions;

  std::size_t size() const { return targets.size(); }
  bool paired() const { return !conditions.empty(); }
  bool empty() const { return targets.empty(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

Dataset make_dataset(std::span<const corpus::TextParagraph> docs, const corpus::Vocabulary& vocab,
                     std::size_t max_sentences, std::size_t max_words, corpus::IngestReport* report = nullptr);
Dataset make_paired_dataset(std::span<const corpus::PairedText> pairs, const corpus::Vocabulary& vocab,
                            std::size_t max_sentences, std::size_t max_words, corpus::IngestReport* report = nullptr);

// Seeded shuffle; the first floor(fraction * n) documents of the permutation are held out.
std::pair<Dataset, Dataset> split_heldout(const Dataset& data, double fraction, std::uint64_t seed);

// Lower median of the per-document sentence counts.
std::size_t median_sentences(const Dataset& data);

// KL weight: 0 before s0, linear up to 1 at s1, 1 afterwards.
double anneal(std::int64_t step, std::int64_t s0, std::int64_t s1);

struct LossVars {
  nd::Var reconstruction;  // summed over tokens, averaged over documents
  nd::Var kl;              // averaged over documents
  nd::Var objective;       // reconstruction + beta * kl
};

template <typename T>
LossVars loss_step(nd::Tape<T>& tape, const Model<T>& model, const corpus::PaddedBatch& target,
                   const corpus::PaddedBatch& source, double beta, NoiseSource<T>& noise);

struct EvalReport {
  double nll = 0;     // per document; the ELBO bound for variants with a latent code
  double kl = 0;      // per document
  double ppl = 0;     // exp(total nll / tokens)
  std::size_t tokens = 0;
  std::size_t documents = 0;
  bool bound = false;
};

// Single posterior sample per document, drawn from a generator seeded with `seed`.
template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, std::uint64_t seed);

struct LogRow {
  std::size_t step = 0;
  double reconstruction = 0, kl = 0, beta = 0, objective = 0, ppl = 0;
};

struct TrainOptions {
  std::ostream* log = nullptr;
  std::optional<std::filesystem::path> checkpoint;
  // Called after every optimizer step with the logged values of that step.
  std::function<void(const LogRow&)> on_step;
};

template <typename T>
struct TrainResult {
  Model<T> model;
  nd::Adam<T> optimizer;
  std::size_t steps = 0;
  std::vector<LogRow> log;
  std::optional<EvalReport> heldout;
};

template <typename T>
TrainResult<T> train(ModelConfig config, const Dataset& train_data, const Dataset& heldout,
                     const corpus::Vocabulary& vocab, const TrainOptions& options = {});

std::string format_log_header();
std::string format_log_row(const LogRow& row);
std::string format_eval(std::size_t step, const EvalReport& report);

}  // namespace mlvae
