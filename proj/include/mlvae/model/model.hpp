#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/model/config.hpp"
#include "mlvae/model/decoder.hpp"
#include "mlvae/model/encoder.hpp"
#include "mlvae/model/latent.hpp"
#include "mlvae/ndcore/tape.hpp"

namespace mlvae {

// Posterior over the latent code(s) of one document, as plain values.
template <typename T>
struct Posterior {
  GaussianParams<T> bottom;               // z (single-latent) or z1
  std::optional<GaussianParams<T>> top;   // z2, ml-VAE-D only
};

// Per-document loss pieces on a tape. `kl` is a zero constant for LM variants.
struct DocumentTerms {
  nd::Var reconstruction;
  nd::Var kl;
};

// All parameters and sub-networks of one variant.
template <typename T>
class Model {
 public:
  using Scalar = T;

  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  bool latent() const { return has_latent(config_.variant); }
  std::size_t latent_dim() const { return config_.latent_dim; }

  nd::ParamStore<T>& store() { return store_; }
  const nd::ParamStore<T>& store() const { return store_; }

  // Reconstruction NLL and KL for row `row` of `target`. The encoder reads `source`
  // (the condition batch in paired mode, otherwise the target itself). Reparameterization
  // noise is drawn from `noise`: z1 (or z) first, then z2.
  DocumentTerms document_terms(nd::Tape<T>& tape, const corpus::PaddedBatch& target, const corpus::PaddedBatch& source,
                               std::size_t row, NoiseSource<T>& noise) const;

  // Decoder NLL of `target` given a bottom latent (ignored, and must be absent, for LM variants).
  nd::Var reconstruction(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::Paragraph& target) const;
  T reconstruction_nll(const corpus::Paragraph& target, std::optional<std::span<const T>> z) const;

  Posterior<T> infer(const corpus::Paragraph& source) const;
  GaussianParams<T> prior_conditional(std::span<const T> z2) const;

  // Bottom-latent draw from the generative prior: N(0, I), or z2 ~ N(0, I) then z1 ~ p(z1 | z2).
  std::vector<T> sample_prior(NoiseSource<T>& noise) const;

  DecodedParagraph decode(std::optional<std::span<const T>> z, std::size_t max_sentences, std::size_t max_words) const;

  const Encoder<T>& encoder() const { return encoder_; }
  const PriorNetwork<T>& prior() const { return prior_; }

 private:
  void require_latent(const char* op) const;

  ModelConfig config_;
  nd::ParamStore<T> store_;
  Encoder<T> encoder_;
  PriorNetwork<T> prior_;
  HierarchicalDecoder<T> hierarchical_;
  FlatDecoder<T> flat_;
};

// A trained model with its vocabulary, as written by the trainer.
template <typename T>
struct Bundle {
  Model<T> model;
  corpus::Vocabulary vocab;
};

std::filesystem::path config_path_for(const std::filesystem::path& checkpoint);
std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint);

// Writes the checkpoint, its sidecar config and the vocabulary next to it.
template <typename T>
void save_bundle(const std::filesystem::path& checkpoint, const Model<T>& model, const corpus::Vocabulary& vocab);
template <typename T>
Bundle<T> load_bundle(const std::filesystem::path& checkpoint);

}  // namespace mlvae
