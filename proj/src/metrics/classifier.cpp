#include "mlvae/metrics/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mlvae/errors.hpp"
#include "mlvae/ndcore/optim.hpp"
#include "mlvae/ndcore/tape.hpp"

namespace mlvae::metrics {

namespace {

nd::Var forward(nd::Tape<float>& tape, const corpus::Vocabulary& vocab, const nd::Embedding& emb,
                const nd::Conv1d& conv, const nd::Linear& head, std::span<const std::string> tokens) {
  std::vector<nd::Var> rows;
  for (const auto& t : tokens) rows.push_back(tape.embed(static_cast<std::size_t>(vocab.id(t)), emb));
  if (rows.empty()) rows.push_back(tape.embed(corpus::kUnk, emb));
  return tape.linear(tape.conv1d_maxpool(tape.stack_rows(rows), conv), head);
}

}  // namespace

SentimentClassifier SentimentClassifier::train(const std::vector<LabeledTokens>& data, const ClassifierConfig& config) {
  std::set<std::string> label_set;
  for (const auto& d : data) label_set.insert(d.label);
  if (label_set.size() < 2) throw PreconditionError("sentiment classifier: training data needs at least two labels");

  SentimentClassifier c;
  c.labels_.assign(label_set.begin(), label_set.end());
  std::vector<std::string> lines;
  for (const auto& d : data) {
    std::string line;
    for (const auto& t : d.tokens) line += t + " ";
    lines.push_back(std::move(line));
  }
  c.vocab_ = corpus::build_vocab(lines, SIZE_MAX);

  std::mt19937_64 rng(config.seed);
  c.embedding_ = nd::make_embedding(c.store_, "cls.emb", c.vocab_.size(), config.embed_dim, rng);
  c.conv_ = nd::make_conv1d(c.store_, "cls.conv", config.embed_dim, config.widths, config.filters, rng);
  c.head_ = nd::make_linear(c.store_, "cls.out", c.conv_.out_dim(), c.labels_.size(), rng);

  std::vector<std::size_t> targets;
  for (const auto& d : data) {
    targets.push_back(static_cast<std::size_t>(std::lower_bound(c.labels_.begin(), c.labels_.end(), d.label) -
                                               c.labels_.begin()));
  }
  nd::Adam<float> adam({config.lr, 0.9, 0.999, 1e-8});
  nd::Tape<float> tape(c.store_);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(config.batch_size, 1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<nd::Var> losses;
      const std::size_t end = std::min(order.size(), start + bs);
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        losses.push_back(tape.softmax_xent(forward(tape, c.vocab_, c.embedding_, c.conv_, c.head_, data[i].tokens),
                                           targets[i]));
      }
      tape.backward(tape.scale(tape.add_n(losses), 1.0f / static_cast<float>(losses.size())));
      nd::clip_global_norm(c.store_, 5.0);
      adam.update(c.store_);
    }
  }
  return c;
}

std::vector<float> SentimentClassifier::logits(std::span<const std::string> tokens) const {
  nd::Tape<float> tape(store_);
  return tape.value(forward(tape, vocab_, embedding_, conv_, head_, tokens));
}

std::string SentimentClassifier::classify(std::span<const std::string> tokens) const {
  const auto l = logits(tokens);
  return labels_[static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin())];
}

double SentimentClassifier::accuracy(const std::vector<LabeledTokens>& data) const {
  if (data.empty()) throw PreconditionError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (const auto& d : data) correct += classify(d.tokens) == d.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace mlvae::metrics
