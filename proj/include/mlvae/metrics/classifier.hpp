#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/ndcore/layers.hpp"
#include "mlvae/ndcore/param_store.hpp"

namespace mlvae::metrics {

struct LabeledTokens {
  std::string label;
  std::vector<std::string> tokens;  // END markers already stripped
};

struct ClassifierConfig {
  std::size_t embed_dim = 16;
  std::vector<std::size_t> widths{1, 2, 3};
  std::size_t filters = 16;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  std::uint64_t seed = 1;
};

// Convolutional text classifier: embedding, max-over-time CNN, linear head, softmax cross-entropy.
class SentimentClassifier {
 public:
  // Throws PreconditionError unless at least two distinct labels are present.
  static SentimentClassifier train(const std::vector<LabeledTokens>& data, const ClassifierConfig& config = {});

  std::string classify(std::span<const std::string> tokens) const;
  double accuracy(const std::vector<LabeledTokens>& data) const;
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  SentimentClassifier() = default;
  std::vector<float> logits(std::span<const std::string> tokens) const;

  corpus::Vocabulary vocab_;
  std::vector<std::string> labels_;
  nd::ParamStore<float> store_;
  nd::Embedding embedding_;
  nd::Conv1d conv_;
  nd::Linear head_;
};

}  // namespace mlvae::metrics
