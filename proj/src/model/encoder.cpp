#include "mlvae/model/encoder.hpp"

namespace mlvae {

template <typename T>
Encoder<T>::Encoder(nd::ParamStore<T>& store, const ModelConfig& config, bool pair, std::mt19937_64& rng)
    : pair_(pair), lo_(static_cast<T>(config.log_var_min)), hi_(static_cast<T>(config.log_var_max)) {
  const double s = config.init_scale;
  embedding_ = nd::make_embedding(store, "enc.emb", config.vocab_size, config.embed_dim, rng, s);
  sentence_cnn_ =
      nd::make_conv1d(store, "enc.sent.conv", config.embed_dim, config.sentence_widths, config.sentence_filters, rng, s);
  paragraph_cnn_ = nd::make_conv1d(store, "enc.para.conv", sentence_cnn_.out_dim(), config.paragraph_widths,
                                   config.paragraph_filters, rng, s);
  const std::size_t f = paragraph_cnn_.out_dim(), d = config.latent_dim;
  if (!pair) {
    mean_ = nd::make_linear(store, "enc.mu", f, d, rng, s);
    log_var_ = nd::make_linear(store, "enc.logvar", f, d, rng, s);
    return;
  }
  mean_ = nd::make_linear(store, "enc.z1.mu", f, d, rng, s);
  log_var_ = nd::make_linear(store, "enc.z1.logvar", f, d, rng, s);
  z2_mlp1_ = nd::make_linear(store, "enc.z2.mlp1", f, config.z2_hidden, rng, s);
  z2_mlp2_ = nd::make_linear(store, "enc.z2.mlp2", config.z2_hidden, config.z2_hidden, rng, s);
  z2_mean_ = nd::make_linear(store, "enc.z2.mu", config.z2_hidden, d, rng, s);
  z2_log_var_ = nd::make_linear(store, "enc.z2.logvar", config.z2_hidden, d, rng, s);
}

template <typename T>
nd::Var Encoder<T>::encode_sentence(nd::Tape<T>& tape, std::span<const int> tokens,
                                    std::span<const std::uint8_t> mask) const {
  std::vector<nd::Var> rows;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i < mask.size() && mask[i]) rows.push_back(tape.embed(static_cast<std::size_t>(tokens[i]), embedding_));
  }
  if (rows.empty()) throw PreconditionError("encode_sentence: sentence is fully masked");
  return tape.conv1d_maxpool(tape.stack_rows(rows), sentence_cnn_);
}

template <typename T>
nd::Var Encoder<T>::encode_paragraph(nd::Tape<T>& tape, std::span<const nd::Var> sentence_vectors) const {
  if (sentence_vectors.empty()) throw PreconditionError("encode_paragraph: paragraph has no sentences");
  return tape.conv1d_maxpool(tape.stack_rows(sentence_vectors), paragraph_cnn_);
}

template <typename T>
nd::Var Encoder<T>::feature(nd::Tape<T>& tape, const corpus::Paragraph& paragraph) const {
  std::vector<nd::Var> sentences;
  sentences.reserve(paragraph.size());
  for (const auto& s : paragraph) {
    const std::vector<std::uint8_t> mask(s.size(), 1);
    sentences.push_back(encode_sentence(tape, s, mask));
  }
  return encode_paragraph(tape, sentences);
}

template <typename T>
nd::Var Encoder<T>::feature(nd::Tape<T>& tape, const corpus::PaddedBatch& batch, std::size_t row) const {
  std::vector<nd::Var> sentences;
  for (std::size_t s = 0; s < batch.sentence_counts[row]; ++s) {
    sentences.push_back(encode_sentence(tape, batch.sentence(row, s), batch.sentence_mask(row, s)));
  }
  return encode_paragraph(tape, sentences);
}

template <typename T>
GaussianVars Encoder<T>::posterior_single(nd::Tape<T>& tape, nd::Var feature) const {
  return {tape.linear(feature, mean_), tape.clamp(tape.linear(feature, log_var_), lo_, hi_)};
}

template <typename T>
std::pair<GaussianVars, GaussianVars> Encoder<T>::posterior_pair(nd::Tape<T>& tape, nd::Var feature) const {
  if (!pair_) throw UsageError("posterior_pair: encoder was built with a single latent head");
  GaussianVars q1{tape.linear(feature, mean_), tape.clamp(tape.linear(feature, log_var_), lo_, hi_)};
  const auto h = tape.relu(tape.linear(tape.relu(tape.linear(feature, z2_mlp1_)), z2_mlp2_));
  GaussianVars q2{tape.linear(h, z2_mean_), tape.clamp(tape.linear(h, z2_log_var_), lo_, hi_)};
  return {q1, q2};
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace mlvae
