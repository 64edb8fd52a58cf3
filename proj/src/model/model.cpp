#include "mlvae/model/model.hpp"

#include "mlvae/errors.hpp"
#include "mlvae/ndcore/checkpoint.hpp"

namespace mlvae {

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const Variant v = config_.variant;
  if (has_latent(v)) encoder_ = Encoder<T>(store_, config_, has_double_latent(v), rng);
  if (has_double_latent(v)) prior_ = PriorNetwork<T>(store_, config_, rng);
  if (is_hierarchical(v)) {
    hierarchical_ = HierarchicalDecoder<T>(store_, config_, has_latent(v), rng);
  } else {
    flat_ = FlatDecoder<T>(store_, config_, has_latent(v), rng);
  }
}

template <typename T>
void Model<T>::require_latent(const char* op) const {
  if (!latent()) {
    throw UsageError(std::string(op) + ": variant " + std::string(to_string(config_.variant)) + " has no latent code");
  }
}

template <typename T>
nd::Var Model<T>::reconstruction(nd::Tape<T>& tape, std::optional<nd::Var> z, const corpus::Paragraph& target) const {
  if (is_hierarchical(config_.variant)) return hierarchical_.paragraph_nll(tape, z, target);
  return flat_.paragraph_nll(tape, z, target);
}

template <typename T>
DocumentTerms Model<T>::document_terms(nd::Tape<T>& tape, const corpus::PaddedBatch& target,
                                       const corpus::PaddedBatch& source, std::size_t row,
                                       NoiseSource<T>& noise) const {
  if (row >= target.batch || row >= source.batch) throw IndexError("document_terms: row out of range");
  const Variant v = config_.variant;
  auto decode_nll = [&](std::optional<nd::Var> z) {
    if (is_hierarchical(v)) return hierarchical_.paragraph_nll(tape, z, target, row);
    return flat_.paragraph_nll(tape, z, target, row);
  };
  if (!has_latent(v)) return {decode_nll(std::nullopt), tape.scalar_constant(T{0})};

  const auto feature = encoder_.feature(tape, source, row);
  const std::size_t d = config_.latent_dim;
  if (!has_double_latent(v)) {
    const auto q = encoder_.posterior_single(tape, feature);
    const auto eps = noise.normal(d);
    const auto z = sample(tape, q, std::span<const T>(eps));
    return {decode_nll(z), kl_standard(tape, q)};
  }
  const auto [q1, q2] = encoder_.posterior_pair(tape, feature);
  const auto eps1 = noise.normal(d);
  const auto eps2 = noise.normal(d);
  const auto z1 = sample(tape, q1, std::span<const T>(eps1));
  const auto z2 = sample(tape, q2, std::span<const T>(eps2));
  return {decode_nll(z1), prior_.joint_kl(tape, q1, q2, z2).total};
}

template <typename T>
T Model<T>::reconstruction_nll(const corpus::Paragraph& target, std::optional<std::span<const T>> z) const {
  nd::Tape<T> tape(store_);
  std::optional<nd::Var> zv;
  if (z) zv = tape.constant(*z);
  return tape.scalar(reconstruction(tape, zv, target));
}

template <typename T>
Posterior<T> Model<T>::infer(const corpus::Paragraph& source) const {
  require_latent("infer");
  nd::Tape<T> tape(store_);
  const auto feature = encoder_.feature(tape, source);
  if (!has_double_latent(config_.variant)) return {read_gaussian(tape, encoder_.posterior_single(tape, feature)), {}};
  const auto [q1, q2] = encoder_.posterior_pair(tape, feature);
  return {read_gaussian(tape, q1), read_gaussian(tape, q2)};
}

template <typename T>
GaussianParams<T> Model<T>::prior_conditional(std::span<const T> z2) const {
  if (!has_double_latent(config_.variant)) throw UsageError("prior_conditional: model has no latent hierarchy");
  nd::Tape<T> tape(store_);
  return read_gaussian(tape, prior_.conditional(tape, tape.constant(z2)));
}

template <typename T>
std::vector<T> Model<T>::sample_prior(NoiseSource<T>& noise) const {
  require_latent("sample_prior");
  const std::size_t d = config_.latent_dim;
  if (!has_double_latent(config_.variant)) return noise.normal(d);
  const auto z2 = noise.normal(d);
  const auto p = prior_conditional(z2);
  const auto eps = noise.normal(d);
  std::vector<T> z1(d);
  for (std::size_t i = 0; i < d; ++i) z1[i] = p.mean[i] + std::exp(p.log_var[i] / T{2}) * eps[i];
  return z1;
}

template <typename T>
DecodedParagraph Model<T>::decode(std::optional<std::span<const T>> z, std::size_t max_sentences,
                                  std::size_t max_words) const {
  if (z && z->size() != config_.latent_dim) throw DimensionError("decode: latent code has the wrong dimension");
  nd::Tape<T> tape(store_);
  std::optional<nd::Var> zv;
  if (z) zv = tape.constant(*z);
  if (is_hierarchical(config_.variant)) return hierarchical_.decode_paragraph(tape, zv, max_sentences, max_words);
  return flat_.decode_paragraph(tape, zv, max_sentences, max_words);
}

std::filesystem::path config_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".cfg";
  return p;
}

std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".vocab";
  return p;
}

template <typename T>
void save_bundle(const std::filesystem::path& checkpoint, const Model<T>& model, const corpus::Vocabulary& vocab) {
  nd::save_checkpoint(checkpoint, model.store());
  model.config().save(config_path_for(checkpoint));
  vocab.save(vocab_path_for(checkpoint));
}

template <typename T>
Bundle<T> load_bundle(const std::filesystem::path& checkpoint) {
  auto config = ModelConfig::load(config_path_for(checkpoint));
  Bundle<T> b{Model<T>(config), corpus::Vocabulary::load(vocab_path_for(checkpoint))};
  if (b.vocab.size() != config.vocab_size) {
    throw ConfigError("checkpoint vocabulary has " + std::to_string(b.vocab.size()) + " entries, config expects " +
                      std::to_string(config.vocab_size));
  }
  nd::assign_values(b.model.store(), nd::load_checkpoint<T>(checkpoint));
  return b;
}

template class Model<float>;
template class Model<double>;
template void save_bundle(const std::filesystem::path&, const Model<float>&, const corpus::Vocabulary&);
template void save_bundle(const std::filesystem::path&, const Model<double>&, const corpus::Vocabulary&);
template Bundle<float> load_bundle(const std::filesystem::path&);
template Bundle<double> load_bundle(const std::filesystem::path&);

}  // namespace mlvae
