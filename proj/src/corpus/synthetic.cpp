#include "mlvae/corpus/synthetic.hpp"

#include <random>

#include "mlvae/errors.hpp"

namespace mlvae::corpus::synthetic {

namespace {

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string join_sentence(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += w + " ";
  return out + ".";
}

}  // namespace

std::vector<std::string> topic_corpus(const TopicSpec& spec) {
  if (spec.documents == 0 || spec.topics == 0 || spec.words_per_topic == 0) {
    throw PreconditionError("topic_corpus: counts must be positive");
  }
  if (spec.min_sentences == 0 || spec.min_sentences > spec.max_sentences || spec.min_words == 0 ||
      spec.min_words > spec.max_words) {
    throw PreconditionError("topic_corpus: bad length ranges");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> lines;
  lines.reserve(spec.documents);
  for (std::size_t d = 0; d < spec.documents; ++d) {
    const std::size_t topic = uniform(rng, 0, spec.topics - 1);
    const std::size_t m = uniform(rng, spec.min_sentences, spec.max_sentences);
    std::string line;
    for (std::size_t s = 0; s < m; ++s) {
      std::vector<std::string> words(uniform(rng, spec.min_words, spec.max_words));
      for (auto& w : words) w = "t" + std::to_string(topic) + "w" + std::to_string(uniform(rng, 0, spec.words_per_topic - 1));
      if (s) line += ' ';
      line += join_sentence(words);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> random_corpus(std::size_t documents, std::size_t sentences, std::size_t words_per_sentence,
                                       std::size_t vocabulary, std::uint64_t seed) {
  if (documents == 0 || sentences == 0 || words_per_sentence == 0 || vocabulary == 0) {
    throw PreconditionError("random_corpus: counts must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::string> lines;
  for (std::size_t d = 0; d < documents; ++d) {
    std::string line;
    for (std::size_t s = 0; s < sentences; ++s) {
      std::vector<std::string> words(words_per_sentence);
      for (auto& w : words) w = "w" + std::to_string(uniform(rng, 0, vocabulary - 1));
      if (s) line += ' ';
      line += join_sentence(words);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> sentiment_corpus(const SentimentSpec& spec) {
  if (spec.documents == 0 || spec.sentiment_words == 0 || spec.neutral_words == 0 || spec.words_per_sentence < 2) {
    throw PreconditionError("sentiment_corpus: counts must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> lines;
  for (std::size_t d = 0; d < spec.documents; ++d) {
    const bool positive = d % 2 == 0;
    const std::string prefix = positive ? "good" : "bad";
    const std::size_t m = uniform(rng, spec.min_sentences, spec.max_sentences);
    std::string line = positive ? "pos\t" : "neg\t";
    for (std::size_t s = 0; s < m; ++s) {
      std::vector<std::string> words(spec.words_per_sentence);
      const std::size_t slot = uniform(rng, 0, words.size() - 1);
      for (std::size_t w = 0; w < words.size(); ++w) {
        words[w] = w == slot ? prefix + std::to_string(uniform(rng, 0, spec.sentiment_words - 1))
                             : "n" + std::to_string(uniform(rng, 0, spec.neutral_words - 1));
      }
      if (s) line += ' ';
      line += join_sentence(words);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> paired_corpus(std::size_t pairs, std::size_t abstract_sentences, std::uint64_t seed) {
  if (pairs == 0 || abstract_sentences == 0) throw PreconditionError("paired_corpus: counts must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::string> lines;
  for (std::size_t p = 0; p < pairs; ++p) {
    std::string line = "title" + std::to_string(p) + " about a" + std::to_string(uniform(rng, 0, 3)) + "\t";
    for (std::size_t s = 0; s < abstract_sentences; ++s) {
      std::vector<std::string> words(4);
      for (auto& w : words) w = "a" + std::to_string(uniform(rng, 0, 11));
      if (s) line += ' ';
      line += join_sentence(words);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace mlvae::corpus::synthetic
