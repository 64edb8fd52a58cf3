#pragma once

#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/model/config.hpp"
#include "mlvae/model/latent.hpp"
#include "mlvae/ndcore/tape.hpp"

namespace mlvae {

// Hierarchical CNN inference network.
//
// Each sentence is embedded and max-pooled by the sentence-level CNN into a fixed-length
// vector; the sequence of sentence vectors is pooled again by the paragraph-level CNN into
// the paragraph feature. The q(z1|x) and q(z2|x) heads share everything below the feature.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  // `pair` selects the double-latent heads; otherwise a single (z) head pair is built.
  Encoder(nd::ParamStore<T>& store, const ModelConfig& config, bool pair, std::mt19937_64& rng);

  std::size_t sentence_dim() const { return sentence_cnn_.out_dim(); }
  std::size_t feature_dim() const { return paragraph_cnn_.out_dim(); }

  // Pools over unmasked positions only. Throws PreconditionError on a fully masked sentence.
  nd::Var encode_sentence(nd::Tape<T>& tape, std::span<const int> tokens, std::span<const std::uint8_t> mask) const;
  nd::Var encode_paragraph(nd::Tape<T>& tape, std::span<const nd::Var> sentence_vectors) const;
  nd::Var feature(nd::Tape<T>& tape, const corpus::Paragraph& paragraph) const;
  nd::Var feature(nd::Tape<T>& tape, const corpus::PaddedBatch& batch, std::size_t row) const;

  GaussianVars posterior_single(nd::Tape<T>& tape, nd::Var feature) const;
  // (q(z1|x), q(z2|x)); the z2 heads read two ReLU MLP layers stacked on the feature.
  std::pair<GaussianVars, GaussianVars> posterior_pair(nd::Tape<T>& tape, nd::Var feature) const;

 private:
  nd::Embedding embedding_;
  nd::Conv1d sentence_cnn_, paragraph_cnn_;
  nd::Linear mean_, log_var_;            // z (single) or z1 (pair)
  nd::Linear z2_mlp1_, z2_mlp2_, z2_mean_, z2_log_var_;
  bool pair_ = false;
  T lo_ = -8, hi_ = 8;
};

}  // namespace mlvae
