#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mlvae {

enum class Variant { FlatLM, MlLM, FlatVAE, MlVAES, MlVAED };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

inline bool has_latent(Variant v) { return v == Variant::FlatVAE || v == Variant::MlVAES || v == Variant::MlVAED; }
inline bool is_hierarchical(Variant v) { return v == Variant::MlLM || v == Variant::MlVAES || v == Variant::MlVAED; }
inline bool has_double_latent(Variant v) { return v == Variant::MlVAED; }

enum class Precision { F32, F64 };

// Architecture, optimization and run settings. Serialized as flat "key = value" lines.
struct ModelConfig {
  Variant variant = Variant::MlVAED;
  std::size_t vocab_size = 0;

  // encoder
  std::size_t embed_dim = 128;
  std::vector<std::size_t> sentence_widths{3, 4, 5};
  std::size_t sentence_filters = 64;
  std::vector<std::size_t> paragraph_widths{2, 3};
  std::size_t paragraph_filters = 128;
  std::size_t z2_hidden = 128;

  // latent
  std::size_t latent_dim = 32;
  std::size_t prior_hidden = 64;
  double log_var_min = -8.0;
  double log_var_max = 8.0;

  // decoder
  std::size_t plan_dim = 256;
  std::size_t word_hidden = 256;

  // corpus caps
  std::size_t max_sentences = 10;
  std::size_t max_words = 25;
  std::size_t generate_sentences = 0;  // 0: corpus median, resolved at training time
  bool paired = false;

  // optimization
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  double init_scale = 0.08;
  std::int64_t anneal_start = 0;
  std::int64_t anneal_end = 10000;
  std::size_t batch_size = 16;
  std::size_t max_steps = 10000;
  std::uint64_t seed = 1;
  Precision precision = Precision::F32;
  double heldout_fraction = 0.1;
  std::size_t log_interval = 100;
  std::size_t eval_interval = 0;        // 0: only at the end
  std::size_t checkpoint_interval = 0;  // 0: only at the end

  void validate() const;

  std::map<std::string, std::string> to_map() const;
  // Unknown keys raise ConfigError.
  void apply(const std::map<std::string, std::string>& values);
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

std::map<std::string, std::string> parse_key_values(std::string_view text);

}  // namespace mlvae
