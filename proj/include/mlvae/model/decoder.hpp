#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/model/config.hpp"
#include "mlvae/ndcore/tape.hpp"

namespace mlvae {

enum class SentenceStop { End, Length };
enum class ParagraphStop { Count, EmptySentence };

struct DecodedParagraph {
  corpus::Paragraph sentences;      // never contains PAD
  std::vector<SentenceStop> stops;  // one per sentence
  ParagraphStop stop = ParagraphStop::Count;
};

// Index of the largest logit among non-PAD ids; ties go to the lowest id.
std::size_t greedy_argmax(std::span<const float> logits);
std::size_t greedy_argmax(std::span<const double> logits);

// Word-level LSTM with its embedding table, learned start-of-sequence input and output projection.
template <typename T>
class TokenLstm {
 public:
  TokenLstm() = default;
  TokenLstm(nd::ParamStore<T>& store, const std::string& prefix, const ModelConfig& config, std::size_t extra_input,
            std::mt19937_64& rng);

  // Embedding of the previous token, or the start vector when prev < 0.
  nd::Var previous(nd::Tape<T>& tape, int prev) const;
  nd::LstmState step(nd::Tape<T>& tape, nd::Var input, nd::LstmState state) const;
  nd::Var logits(nd::Tape<T>& tape, nd::Var h) const;
  std::size_t hidden() const { return lstm_.hidden; }

 private:
  nd::Embedding embedding_;
  nd::ParamId start_;
  nd::Lstm lstm_;
  nd::Linear out_;
};

// Two-level decoder: a sentence LSTM emits one plan vector per sentence and a shared word
// LSTM realizes each sentence from its plan vector.
//
// With a latent code the sentence LSTM starts from ReLU(MLP(z)) and reads z at every step.
// Without one (ml-LM) it starts from zeros and reads the previous sentence's final word-LSTM
// hidden state (zeros before the first sentence).
template <typename T>
class HierarchicalDecoder {
 public:
  HierarchicalDecoder() = default;
  HierarchicalDecoder(nd::ParamStore<T>& store, const ModelConfig& config, bool latent, std::mt19937_64& rng);

  struct WordPass {
    nd::Var loss;
    nd::Var final_hidden;
  };
  struct GreedySentence {
    corpus::TokenIds tokens;
    SentenceStop stop = SentenceStop::End;
    nd::Var final_hidden;
  };

  nd::LstmState initial_state(nd::Tape<T>& tape, std::optional<nd::Var> z) const;
  nd::Var next_plan(nd::Tape<T>& tape, nd::LstmState& state, nd::Var input) const;
  std::vector<nd::Var> plan_vectors(nd::Tape<T>& tape, nd::Var z, std::size_t count) const;

  // Teacher-forced summed cross-entropy over unmasked positions.
  WordPass word_nll(nd::Tape<T>& tape, nd::Var plan, std::span<const int> sentence,
                    std::span<const std::uint8_t> mask) const;
  nd::Var paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::PaddedBatch& batch,
                        std::size_t row) const;
  nd::Var paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::Paragraph& paragraph) const;

  GreedySentence greedy_decode_sentence(nd::Tape<T>& tape, nd::Var plan, std::size_t max_words) const;
  DecodedParagraph decode_paragraph(nd::Tape<T>& tape, std::optional<nd::Var> z, std::size_t max_sentences,
                                    std::size_t max_words) const;

  const TokenLstm<T>& words() const { return words_; }

 private:
  nd::LstmState word_start(nd::Tape<T>& tape, nd::Var plan) const;
  nd::Var zero_input(nd::Tape<T>& tape) const;

  bool latent_ = true;
  std::size_t plan_dim_ = 0;
  nd::Linear sent_init_, word_init_;
  nd::Lstm sent_lstm_;
  TokenLstm<T> words_;
};

// Single word-level LSTM over the whole paragraph with sentence ENDs kept as ordinary tokens.
// A latent code, when present, initializes the hidden state through tanh(MLP(z)).
template <typename T>
class FlatDecoder {
 public:
  FlatDecoder() = default;
  FlatDecoder(nd::ParamStore<T>& store, const ModelConfig& config, bool latent, std::mt19937_64& rng);

  nd::Var flat_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, std::span<const int> stream) const;
  nd::Var paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::PaddedBatch& batch,
                        std::size_t row) const;
  nd::Var paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::Paragraph& paragraph) const;
  DecodedParagraph decode_paragraph(nd::Tape<T>& tape, std::optional<nd::Var> z, std::size_t max_sentences,
                                    std::size_t max_words) const;

  const TokenLstm<T>& words() const { return words_; }

 private:
  nd::LstmState initial_state(nd::Tape<T>& tape, std::optional<nd::Var> z) const;

  bool latent_ = true;
  nd::Linear init_;
  TokenLstm<T> words_;
};

std::vector<int> flatten(const corpus::Paragraph& paragraph);

}  // namespace mlvae
