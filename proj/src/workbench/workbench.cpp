#include "mlvae/workbench/workbench.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "mlvae/errors.hpp"

namespace mlvae::workbench {

template <typename T>
DecodeCaps resolve(const Model<T>& model, DecodeCaps caps) {
  const auto& c = model.config();
  if (caps.sentences == 0) caps.sentences = c.generate_sentences ? c.generate_sentences : c.max_sentences;
  if (caps.words == 0) caps.words = c.max_words;
  return caps;
}

template <typename T>
std::vector<DecodedParagraph> sample_unconditional(const Model<T>& model, std::size_t k, std::uint64_t seed,
                                                   DecodeCaps caps) {
  if (!model.latent()) {
    throw UsageError("sample: variant " + std::string(to_string(model.variant())) + " has no latent code to sample");
  }
  if (k == 0) throw PreconditionError("sample: count must be at least 1");
  caps = resolve(model, caps);
  NoiseSource<T> noise(seed);
  std::vector<DecodedParagraph> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto z = model.sample_prior(noise);
    out.push_back(model.decode(std::span<const T>(z), caps.sentences, caps.words));
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> interpolation_path(std::span<const T> a, std::span<const T> b, std::size_t steps) {
  if (a.size() != b.size()) throw DimensionError("interpolate: endpoint dimensions differ");
  if (steps < 1) throw PreconditionError("interpolate: steps must be at least 1");
  std::vector<std::vector<T>> path;
  for (std::size_t i = 0; i <= steps; ++i) {
    const T t = static_cast<T>(i) / static_cast<T>(steps + 1);
    std::vector<T> z(a.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = a[j] + t * (b[j] - a[j]);
    path.push_back(std::move(z));
  }
  // a + 1 * (b - a) can miss b by one rounding step
  path.emplace_back(b.begin(), b.end());
  return path;
}

template <typename T>
Interpolation<T> interpolate_codes(const Model<T>& model, std::span<const T> a, std::span<const T> b,
                                   std::size_t steps, DecodeCaps caps) {
  if (!model.latent()) throw UsageError("interpolate: model has no latent code");
  caps = resolve(model, caps);
  Interpolation<T> out;
  out.latents = interpolation_path(a, b, steps);
  for (const auto& z : out.latents) out.paragraphs.push_back(model.decode(std::span<const T>(z), caps.sentences, caps.words));
  return out;
}

template <typename T>
Interpolation<T> interpolate(const Model<T>& model, std::uint64_t seed_a, std::uint64_t seed_b, std::size_t steps,
                             DecodeCaps caps) {
  if (!model.latent()) throw UsageError("interpolate: model has no latent code");
  NoiseSource<T> na(seed_a), nb(seed_b);
  const auto a = model.sample_prior(na);
  const auto b = model.sample_prior(nb);
  return interpolate_codes(model, std::span<const T>(a), std::span<const T>(b), steps, caps);
}

template <typename T>
std::vector<T> latent_code(const Model<T>& model, const corpus::Paragraph& doc, NoiseSource<T>* noise) {
  const auto q = model.infer(doc).bottom;
  if (!noise) return q.mean;
  const auto eps = noise->normal(q.mean.size());
  std::vector<T> z(q.mean.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mean[i] + std::exp(q.log_var[i] / T{2}) * eps[i];
  return z;
}

template <typename T>
std::vector<T> attribute_vector(const Model<T>& model, std::span<const corpus::Paragraph> positive,
                                std::span<const corpus::Paragraph> negative, NoiseSource<T>* noise) {
  if (positive.empty() || negative.empty()) throw PreconditionError("attribute_vector: both classes need documents");
  auto mean_code = [&](std::span<const corpus::Paragraph> docs) {
    std::vector<double> sum(model.latent_dim(), 0.0);
    for (const auto& d : docs) {
      const auto z = latent_code(model, d, noise);
      for (std::size_t i = 0; i < z.size(); ++i) sum[i] += static_cast<double>(z[i]);
    }
    std::vector<T> mean(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = static_cast<T>(sum[i] / static_cast<double>(docs.size()));
    return mean;
  };
  const auto pos = mean_code(positive);
  const auto neg = mean_code(negative);
  std::vector<T> out(pos.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pos[i] - neg[i];
  return out;
}

template <typename T>
DecodedParagraph reconstruct(const Model<T>& model, const corpus::Paragraph& doc, DecodeCaps caps) {
  caps = resolve(model, caps);
  const auto z = latent_code(model, doc);
  return model.decode(std::span<const T>(z), caps.sentences, caps.words);
}

template <typename T>
DecodedParagraph attribute_transfer(const Model<T>& model, const corpus::Paragraph& doc, std::span<const T> attribute,
                                    DecodeCaps caps) {
  caps = resolve(model, caps);
  auto z = latent_code(model, doc);
  if (attribute.size() != z.size()) throw DimensionError("transfer: attribute vector has the wrong dimension");
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += attribute[i];
  return model.decode(std::span<const T>(z), caps.sentences, caps.words);
}

template <typename T>
DecodedParagraph conditional_generate(const Model<T>& model, const corpus::Paragraph& title, NoiseSource<T>* noise,
                                      DecodeCaps caps) {
  if (!model.config().paired) throw UsageError("generate: checkpoint was not trained on paired data");
  caps = resolve(model, caps);
  const auto z = latent_code(model, title, noise);
  return model.decode(std::span<const T>(z), caps.sentences, caps.words);
}

template <typename T>
void export_latents(const Model<T>& model, std::span<const corpus::Paragraph> docs,
                    std::span<const std::string> labels, std::ostream& out) {
  if (!labels.empty() && labels.size() != docs.size()) throw DimensionError("export: one label per document expected");
  char buf[40];
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto z = latent_code(model, docs[d]);
    if (!labels.empty()) out << labels[d];
    for (const T v : z) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
}

template <typename T>
void export_latents(const Model<T>& model, std::span<const corpus::Paragraph> docs,
                    std::span<const std::string> labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("export: cannot write '" + path.string() + "'");
  export_latents(model, docs, labels, out);
  if (!out) throw IoError("export: write to '" + path.string() + "' failed");
}

std::vector<std::vector<std::string>> to_samples(std::span<const DecodedParagraph> paragraphs,
                                                 const corpus::Vocabulary& vocab) {
  std::vector<std::vector<std::string>> out;
  for (const auto& p : paragraphs) out.push_back(corpus::strip_end(corpus::decode(p.sentences, vocab)));
  return out;
}

void write_paragraphs(std::span<const DecodedParagraph> paragraphs, const corpus::Vocabulary& vocab, std::ostream& out) {
  for (const auto& p : paragraphs) out << corpus::render(p.sentences, vocab) << '\n';
}

#define MLVAE_WORKBENCH(T)                                                                                            \
  template DecodeCaps resolve(const Model<T>&, DecodeCaps);                                                          \
  template std::vector<DecodedParagraph> sample_unconditional(const Model<T>&, std::size_t, std::uint64_t,           \
                                                              DecodeCaps);                                           \
  template std::vector<std::vector<T>> interpolation_path(std::span<const T>, std::span<const T>, std::size_t);      \
  template Interpolation<T> interpolate_codes(const Model<T>&, std::span<const T>, std::span<const T>, std::size_t, \
                                              DecodeCaps);                                                           \
  template Interpolation<T> interpolate(const Model<T>&, std::uint64_t, std::uint64_t, std::size_t, DecodeCaps);     \
  template std::vector<T> latent_code(const Model<T>&, const corpus::Paragraph&, NoiseSource<T>*);                  \
  template std::vector<T> attribute_vector(const Model<T>&, std::span<const corpus::Paragraph>,                     \
                                           std::span<const corpus::Paragraph>, NoiseSource<T>*);                    \
  template DecodedParagraph reconstruct(const Model<T>&, const corpus::Paragraph&, DecodeCaps);                      \
  template DecodedParagraph attribute_transfer(const Model<T>&, const corpus::Paragraph&, std::span<const T>,       \
                                               DecodeCaps);                                                          \
  template DecodedParagraph conditional_generate(const Model<T>&, const corpus::Paragraph&, NoiseSource<T>*,        \
                                                 DecodeCaps);                                                        \
  template void export_latents(const Model<T>&, std::span<const corpus::Paragraph>, std::span<const std::string>,   \
                               std::ostream&);                                                                       \
  template void export_latents(const Model<T>&, std::span<const corpus::Paragraph>, std::span<const std::string>,   \
                               const std::filesystem::path&);

MLVAE_WORKBENCH(float)
MLVAE_WORKBENCH(double)

}  // namespace mlvae::workbench
