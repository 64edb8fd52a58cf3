#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mlvae::corpus {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kEnd = 2;
inline constexpr std::string_view kPadToken = "PAD";
inline constexpr std::string_view kUnkToken = "UNK";
inline constexpr std::string_view kEndToken = "END";

inline constexpr std::size_t kDefaultMaxSentences = 10;
inline constexpr std::size_t kDefaultMaxWords = 25;
inline constexpr std::size_t kDefaultVocabSize = 20000;

using TextSentence = std::vector<std::string>;
// Sentences of surface tokens, each ending with kEndToken.
using TextParagraph = std::vector<TextSentence>;
using TokenIds = std::vector<int>;
// Sentences of token ids, each ending with kEnd.
using Paragraph = std::vector<TokenIds>;

struct PairedText {
  TextParagraph condition;  // single sentence
  TextParagraph target;
};

struct LabeledText {
  std::string label;  // empty when the line carried none
  TextParagraph text;
};

// Counts of lines skipped and content truncated during ingestion.
struct IngestReport {
  std::size_t lines = 0;
  std::size_t documents = 0;
  std::size_t skipped = 0;
  std::size_t sentences_dropped = 0;
  std::size_t sentences_truncated = 0;
  std::vector<std::string> warnings;

  void merge(const IngestReport& other);
  void write(std::ostream& out) const;
};

std::vector<std::string> split_whitespace(std::string_view line);

// Splits at ".", "!" and "?" tokens (kept sentence-final) and appends END to every sentence.
// Returns nullopt for a line with no tokens.
std::optional<TextParagraph> segment(std::string_view raw_line);

class Vocabulary {
 public:
  Vocabulary();
  // Entries beyond the reserved ids, in id order starting at 3.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void insert(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Keeps the most frequent tokens (ties by lexicographic order) with count >= min_freq,
// up to max_size entries including the three reserved ids.
Vocabulary build_vocab(std::span<const std::string> lines, std::size_t max_size, std::size_t min_freq = 1);

Paragraph encode(const TextParagraph& text, const Vocabulary& vocab);
TextParagraph decode(const Paragraph& ids, const Vocabulary& vocab);
// Space-joined surface text with END tokens removed.
std::string render(const Paragraph& ids, const Vocabulary& vocab);
std::string render(const TextParagraph& text);
// Flat token sequence without END markers.
std::vector<std::string> strip_end(const TextParagraph& text);

// Drops sentences beyond max_sentences and cuts long sentences to max_words - 1 words plus END.
Paragraph truncate(const Paragraph& p, std::size_t max_sentences, std::size_t max_words, IngestReport* report = nullptr);

struct PaddedBatch {
  std::size_t batch = 0, max_sentences = 0, max_words = 0;
  std::vector<int> tokens;           // [batch x max_sentences x max_words], kPad where absent
  std::vector<std::uint8_t> mask;    // 1 on real tokens
  std::vector<std::size_t> sentence_counts;  // [batch]
  std::vector<std::size_t> lengths;          // [batch x max_sentences], END included

  int token(std::size_t b, std::size_t s, std::size_t w) const {
    return tokens[(b * max_sentences + s) * max_words + w];
  }
  bool real(std::size_t b, std::size_t s, std::size_t w) const {
    return mask[(b * max_sentences + s) * max_words + w] != 0;
  }
  std::size_t length(std::size_t b, std::size_t s) const { return lengths[b * max_sentences + s]; }
  std::span<const int> sentence(std::size_t b, std::size_t s) const {
    return {tokens.data() + (b * max_sentences + s) * max_words, max_words};
  }
  std::span<const std::uint8_t> sentence_mask(std::size_t b, std::size_t s) const {
    return {mask.data() + (b * max_sentences + s) * max_words, max_words};
  }
  // Real sentences of row b (PAD stripped).
  Paragraph row(std::size_t b) const;
};

PaddedBatch pad_batch(std::span<const Paragraph> paragraphs, std::size_t max_sentences, std::size_t max_words,
                      IngestReport* report = nullptr);
PaddedBatch encode_batch(std::span<const TextParagraph> paragraphs, const Vocabulary& vocab, std::size_t max_sentences,
                         std::size_t max_words, IngestReport* report = nullptr);

// One document per line; empty lines are skipped with a warning.
std::vector<TextParagraph> read_corpus(std::istream& in, IngestReport* report = nullptr);
std::vector<TextParagraph> load_corpus(const std::filesystem::path& path, IngestReport* report = nullptr);
// "title<TAB>abstract" per line.
std::vector<PairedText> read_paired(std::istream& in, IngestReport* report = nullptr);
std::vector<PairedText> load_paired(const std::filesystem::path& path, IngestReport* report = nullptr);
// "label<TAB>text" per line, or bare text with an empty label.
std::vector<LabeledText> load_labeled(const std::filesystem::path& path, IngestReport* report = nullptr);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace mlvae::corpus
