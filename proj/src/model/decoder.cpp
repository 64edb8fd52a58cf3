#include "mlvae/model/decoder.hpp"

namespace mlvae {

namespace {

template <typename U>
std::size_t argmax_impl(std::span<const U> logits) {
  std::size_t best = corpus::kPad + 1;
  for (std::size_t i = best + 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace

std::size_t greedy_argmax(std::span<const float> logits) { return argmax_impl(logits); }
std::size_t greedy_argmax(std::span<const double> logits) { return argmax_impl(logits); }

std::vector<int> flatten(const corpus::Paragraph& paragraph) {
  std::vector<int> out;
  for (const auto& s : paragraph) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// ---------------------------------------------------------------- TokenLstm

template <typename T>
TokenLstm<T>::TokenLstm(nd::ParamStore<T>& store, const std::string& prefix, const ModelConfig& config,
                        std::size_t extra_input, std::mt19937_64& rng) {
  const double s = config.init_scale;
  embedding_ = nd::make_embedding(store, prefix + ".emb", config.vocab_size, config.embed_dim, rng, s);
  start_ = store.add(prefix + ".start", {config.embed_dim}, {nd::Init::Uniform, s}, rng);
  lstm_ = nd::make_lstm(store, prefix + ".lstm", config.embed_dim + extra_input, config.word_hidden, rng, s);
  out_ = nd::make_linear(store, prefix + ".out", config.word_hidden, config.vocab_size, rng, s);
}

template <typename T>
nd::Var TokenLstm<T>::previous(nd::Tape<T>& tape, int prev) const {
  if (prev < 0) return tape.param(start_);
  return tape.embed(static_cast<std::size_t>(prev), embedding_);
}

template <typename T>
nd::LstmState TokenLstm<T>::step(nd::Tape<T>& tape, nd::Var input, nd::LstmState state) const {
  return tape.lstm_step(input, state, lstm_);
}

template <typename T>
nd::Var TokenLstm<T>::logits(nd::Tape<T>& tape, nd::Var h) const {
  return tape.linear(h, out_);
}

// ---------------------------------------------------------------- HierarchicalDecoder

template <typename T>
HierarchicalDecoder<T>::HierarchicalDecoder(nd::ParamStore<T>& store, const ModelConfig& config, bool latent,
                                            std::mt19937_64& rng)
    : latent_(latent), plan_dim_(config.plan_dim) {
  const double s = config.init_scale;
  if (latent) sent_init_ = nd::make_linear(store, "dec.sent.init", config.latent_dim, config.plan_dim, rng, s);
  const std::size_t sent_in = latent ? config.latent_dim : config.word_hidden;
  sent_lstm_ = nd::make_lstm(store, "dec.sent.lstm", sent_in, config.plan_dim, rng, s);
  word_init_ = nd::make_linear(store, "dec.word.init", config.plan_dim, config.word_hidden, rng, s);
  words_ = TokenLstm<T>(store, "dec.word", config, config.plan_dim, rng);
}

template <typename T>
nd::Var HierarchicalDecoder<T>::zero_input(nd::Tape<T>& tape) const {
  return tape.constant(std::vector<T>(words_.hidden(), T{0}));
}

template <typename T>
nd::LstmState HierarchicalDecoder<T>::initial_state(nd::Tape<T>& tape, std::optional<nd::Var> z) const {
  if (latent_ != z.has_value()) throw UsageError("HierarchicalDecoder: latent code presence does not match the model");
  const auto zeros = tape.constant(std::vector<T>(plan_dim_, T{0}));
  if (!z) return {zeros, zeros};
  return {tape.relu(tape.linear(*z, sent_init_)), zeros};
}

template <typename T>
nd::Var HierarchicalDecoder<T>::next_plan(nd::Tape<T>& tape, nd::LstmState& state, nd::Var input) const {
  state = tape.lstm_step(input, state, sent_lstm_);
  return state.h;
}

template <typename T>
std::vector<nd::Var> HierarchicalDecoder<T>::plan_vectors(nd::Tape<T>& tape, nd::Var z, std::size_t count) const {
  if (count < 1) throw PreconditionError("plan_vectors: need at least one sentence");
  auto state = initial_state(tape, z);
  std::vector<nd::Var> plans;
  plans.reserve(count);
  for (std::size_t t = 0; t < count; ++t) plans.push_back(next_plan(tape, state, z));
  return plans;
}

template <typename T>
nd::LstmState HierarchicalDecoder<T>::word_start(nd::Tape<T>& tape, nd::Var plan) const {
  return {tape.tanh(tape.linear(plan, word_init_)), tape.constant(std::vector<T>(words_.hidden(), T{0}))};
}

template <typename T>
typename HierarchicalDecoder<T>::WordPass HierarchicalDecoder<T>::word_nll(nd::Tape<T>& tape, nd::Var plan,
                                                                           std::span<const int> sentence,
                                                                           std::span<const std::uint8_t> mask) const {
  std::size_t last = 0;
  bool any = false;
  for (std::size_t i = 0; i < sentence.size() && i < mask.size(); ++i) {
    if (mask[i]) {
      last = i;
      any = true;
    }
  }
  if (sentence.empty() || !any) throw PreconditionError("word_nll: empty sentence");
  auto state = word_start(tape, plan);
  std::vector<nd::Var> losses;
  for (std::size_t i = 0; i <= last; ++i) {
    const int prev = i == 0 ? -1 : sentence[i - 1];
    const nd::Var parts[] = {words_.previous(tape, prev), plan};
    state = words_.step(tape, tape.concat(parts), state);
    if (mask[i]) losses.push_back(tape.softmax_xent(words_.logits(tape, state.h), static_cast<std::size_t>(sentence[i])));
  }
  return {tape.add_n(losses), state.h};
}

template <typename T>
nd::Var HierarchicalDecoder<T>::paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z,
                                              const corpus::PaddedBatch& batch, std::size_t row) const {
  const std::size_t count = batch.sentence_counts[row];
  if (count == 0) throw PreconditionError("paragraph_nll: paragraph has no sentences");
  auto state = initial_state(tape, z);
  nd::Var input = z ? *z : zero_input(tape);
  std::vector<nd::Var> losses;
  for (std::size_t t = 0; t < count; ++t) {
    const auto plan = next_plan(tape, state, input);
    auto pass = word_nll(tape, plan, batch.sentence(row, t), batch.sentence_mask(row, t));
    losses.push_back(pass.loss);
    if (!z) input = pass.final_hidden;
  }
  return tape.add_n(losses);
}

template <typename T>
nd::Var HierarchicalDecoder<T>::paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z,
                                              const corpus::Paragraph& paragraph) const {
  const std::size_t words = std::max_element(paragraph.begin(), paragraph.end(), [](const auto& a, const auto& b) {
                              return a.size() < b.size();
                            })->size();
  const corpus::Paragraph rows[] = {paragraph};
  return paragraph_nll(tape, z, corpus::pad_batch(rows, paragraph.size(), words), 0);
}

template <typename T>
typename HierarchicalDecoder<T>::GreedySentence HierarchicalDecoder<T>::greedy_decode_sentence(
    nd::Tape<T>& tape, nd::Var plan, std::size_t max_words) const {
  if (max_words < 1) throw PreconditionError("greedy_decode_sentence: max_words must be positive");
  GreedySentence out;
  auto state = word_start(tape, plan);
  int prev = -1;
  while (out.tokens.size() < max_words) {
    const nd::Var parts[] = {words_.previous(tape, prev), plan};
    state = words_.step(tape, tape.concat(parts), state);
    const auto& logits = tape.value(words_.logits(tape, state.h));
    prev = static_cast<int>(greedy_argmax(std::span<const T>(logits)));
    out.tokens.push_back(prev);
    if (prev == corpus::kEnd) break;
  }
  out.stop = out.tokens.back() == corpus::kEnd ? SentenceStop::End : SentenceStop::Length;
  out.final_hidden = state.h;
  return out;
}

template <typename T>
DecodedParagraph HierarchicalDecoder<T>::decode_paragraph(nd::Tape<T>& tape, std::optional<nd::Var> z,
                                                          std::size_t max_sentences, std::size_t max_words) const {
  if (max_sentences < 1) throw PreconditionError("decode_paragraph: need at least one sentence");
  DecodedParagraph out;
  auto state = initial_state(tape, z);
  nd::Var input = z ? *z : zero_input(tape);
  for (std::size_t t = 0; t < max_sentences; ++t) {
    const auto plan = next_plan(tape, state, input);
    auto sentence = greedy_decode_sentence(tape, plan, max_words);
    if (sentence.tokens.size() == 1 && sentence.tokens[0] == corpus::kEnd) {
      out.stop = ParagraphStop::EmptySentence;
      break;
    }
    out.sentences.push_back(std::move(sentence.tokens));
    out.stops.push_back(sentence.stop);
    if (!z) input = sentence.final_hidden;
  }
  return out;
}

// ---------------------------------------------------------------- FlatDecoder

template <typename T>
FlatDecoder<T>::FlatDecoder(nd::ParamStore<T>& store, const ModelConfig& config, bool latent, std::mt19937_64& rng)
    : latent_(latent) {
  if (latent) init_ = nd::make_linear(store, "dec.flat.init", config.latent_dim, config.word_hidden, rng, config.init_scale);
  words_ = TokenLstm<T>(store, "dec.flat", config, 0, rng);
}

template <typename T>
nd::LstmState FlatDecoder<T>::initial_state(nd::Tape<T>& tape, std::optional<nd::Var> z) const {
  if (z && !latent_) throw UsageError("FlatDecoder: model has no latent code");
  const auto zeros = tape.constant(std::vector<T>(words_.hidden(), T{0}));
  if (!z) return {zeros, zeros};
  return {tape.tanh(tape.linear(*z, init_)), zeros};
}

template <typename T>
nd::Var FlatDecoder<T>::flat_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, std::span<const int> stream) const {
  if (stream.empty()) throw PreconditionError("flat_nll: empty token stream");
  auto state = initial_state(tape, z);
  std::vector<nd::Var> losses;
  losses.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    state = words_.step(tape, words_.previous(tape, i == 0 ? -1 : stream[i - 1]), state);
    losses.push_back(tape.softmax_xent(words_.logits(tape, state.h), static_cast<std::size_t>(stream[i])));
  }
  return tape.add_n(losses);
}

template <typename T>
nd::Var FlatDecoder<T>::paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::PaddedBatch& batch,
                                      std::size_t row) const {
  return flat_nll(tape, z, flatten(batch.row(row)));
}

template <typename T>
nd::Var FlatDecoder<T>::paragraph_nll(nd::Tape<T>& tape, std::optional<nd::Var> z,
                                      const corpus::Paragraph& paragraph) const {
  return flat_nll(tape, z, flatten(paragraph));
}

template <typename T>
DecodedParagraph FlatDecoder<T>::decode_paragraph(nd::Tape<T>& tape, std::optional<nd::Var> z,
                                                  std::size_t max_sentences, std::size_t max_words) const {
  if (max_sentences < 1 || max_words < 1) throw PreconditionError("decode_paragraph: caps must be positive");
  DecodedParagraph out;
  auto state = initial_state(tape, z);
  int prev = -1;
  corpus::TokenIds current;
  while (out.sentences.size() < max_sentences) {
    state = words_.step(tape, words_.previous(tape, prev), state);
    const auto& logits = tape.value(words_.logits(tape, state.h));
    prev = static_cast<int>(greedy_argmax(std::span<const T>(logits)));
    current.push_back(prev);
    const bool ended = prev == corpus::kEnd;
    if (!ended && current.size() < max_words) continue;
    if (ended && current.size() == 1) {
      out.stop = ParagraphStop::EmptySentence;
      break;
    }
    out.stops.push_back(ended ? SentenceStop::End : SentenceStop::Length);
    out.sentences.push_back(std::move(current));
    current.clear();
  }
  return out;
}

template class TokenLstm<float>;
template class TokenLstm<double>;
template class HierarchicalDecoder<float>;
template class HierarchicalDecoder<double>;
template class FlatDecoder<float>;
template class FlatDecoder<double>;

}  // namespace mlvae
