#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/model/model.hpp"

namespace mlvae::workbench {

// Sentence and word caps for decoding. Zero sentences means the model's configured default.
struct DecodeCaps {
  std::size_t sentences = 0;
  std::size_t words = 0;
};

template <typename T>
DecodeCaps resolve(const Model<T>& model, DecodeCaps caps);

// k paragraphs decoded from prior draws, all from one generator seeded with `seed`.
template <typename T>
std::vector<DecodedParagraph> sample_unconditional(const Model<T>& model, std::size_t k, std::uint64_t seed,
                                                   DecodeCaps caps = {});

template <typename T>
struct Interpolation {
  std::vector<std::vector<T>> latents;  // steps + 2 codes, endpoints included
  std::vector<DecodedParagraph> paragraphs;
};

// z_i = A + (i / (steps + 1)) * (B - A), i = 0..steps+1, on the bottom latent.
template <typename T>
std::vector<std::vector<T>> interpolation_path(std::span<const T> a, std::span<const T> b, std::size_t steps);

template <typename T>
Interpolation<T> interpolate_codes(const Model<T>& model, std::span<const T> a, std::span<const T> b,
                                   std::size_t steps, DecodeCaps caps = {});

// Endpoints are prior draws from generators seeded with seed_a and seed_b.
template <typename T>
Interpolation<T> interpolate(const Model<T>& model, std::uint64_t seed_a, std::uint64_t seed_b, std::size_t steps,
                             DecodeCaps caps = {});

// Bottom-latent code of a document: the posterior mean, or one posterior draw when `noise` is given.
template <typename T>
std::vector<T> latent_code(const Model<T>& model, const corpus::Paragraph& doc, NoiseSource<T>* noise = nullptr);

// Mean code of the positive documents minus the mean code of the negative ones.
template <typename T>
std::vector<T> attribute_vector(const Model<T>& model, std::span<const corpus::Paragraph> positive,
                                std::span<const corpus::Paragraph> negative, NoiseSource<T>* noise = nullptr);

template <typename T>
DecodedParagraph reconstruct(const Model<T>& model, const corpus::Paragraph& doc, DecodeCaps caps = {});

template <typename T>
DecodedParagraph attribute_transfer(const Model<T>& model, const corpus::Paragraph& doc, std::span<const T> attribute,
                                    DecodeCaps caps = {});

// Encodes the title and decodes an abstract from the posterior mean, or from a draw when `noise` is given.
template <typename T>
DecodedParagraph conditional_generate(const Model<T>& model, const corpus::Paragraph& title,
                                      NoiseSource<T>* noise = nullptr, DecodeCaps caps = {});

// One CSV row per document: label (possibly empty), then the posterior-mean components.
template <typename T>
void export_latents(const Model<T>& model, std::span<const corpus::Paragraph> docs,
                    std::span<const std::string> labels, std::ostream& out);
template <typename T>
void export_latents(const Model<T>& model, std::span<const corpus::Paragraph> docs,
                    std::span<const std::string> labels, const std::filesystem::path& path);

// One paragraph per line, sentences joined by single spaces, END markers removed.
void write_paragraphs(std::span<const DecodedParagraph> paragraphs, const corpus::Vocabulary& vocab, std::ostream& out);
std::vector<std::vector<std::string>> to_samples(std::span<const DecodedParagraph> paragraphs,
                                                 const corpus::Vocabulary& vocab);

}  // namespace mlvae::workbench
