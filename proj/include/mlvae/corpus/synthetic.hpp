#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Seeded toy corpora for smoke tests and desk-scale experiments. Every generator
// returns raw text lines in the same format the file loaders read.
namespace mlvae::corpus::synthetic {

struct TopicSpec {
  std::size_t documents = 512;
  std::size_t topics = 4;
  std::size_t words_per_topic = 8;
  std::size_t min_sentences = 3, max_sentences = 5;
  std::size_t min_words = 3, max_words = 5;
  std::uint64_t seed = 1;
};

// Each document picks one topic and draws every word of every sentence from that topic's pool.
std::vector<std::string> topic_corpus(const TopicSpec& spec);

// Documents of uniformly random words; with few documents each one is effectively unique.
std::vector<std::string> random_corpus(std::size_t documents, std::size_t sentences, std::size_t words_per_sentence,
                                       std::size_t vocabulary, std::uint64_t seed);

struct SentimentSpec {
  std::size_t documents = 400;
  std::size_t sentiment_words = 6;  // per class
  std::size_t neutral_words = 12;
  std::size_t min_sentences = 2, max_sentences = 3;
  std::size_t words_per_sentence = 4;  // one sentiment word plus neutral filler
  std::uint64_t seed = 1;
};

// "pos<TAB>text" / "neg<TAB>text" lines, alternating labels. The two classes use disjoint
// sentiment words; neutral words are shared.
std::vector<std::string> sentiment_corpus(const SentimentSpec& spec);

// "title<TAB>abstract" lines. Each pair has its own title words and a fixed abstract.
std::vector<std::string> paired_corpus(std::size_t pairs, std::size_t abstract_sentences, std::uint64_t seed);

}  // namespace mlvae::corpus::synthetic
