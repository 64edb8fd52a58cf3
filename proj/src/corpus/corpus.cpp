#include "mlvae/corpus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "mlvae/errors.hpp"

namespace mlvae::corpus {

namespace {

bool is_terminal(std::string_view tok) { return tok == "." || tok == "!" || tok == "?"; }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void IngestReport::merge(const IngestReport& other) {
  lines += other.lines;
  documents += other.documents;
  skipped += other.skipped;
  sentences_dropped += other.sentences_dropped;
  sentences_truncated += other.sentences_truncated;
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

void IngestReport::write(std::ostream& out) const {
  for (const auto& w : warnings) out << "warning\t" << w << '\n';
  out << "ingest\tlines\t" << lines << '\n'
      << "ingest\tdocuments\t" << documents << '\n'
      << "ingest\tskipped\t" << skipped << '\n'
      << "ingest\tsentences_dropped\t" << sentences_dropped << '\n'
      << "ingest\tsentences_truncated\t" << sentences_truncated << '\n';
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<TextParagraph> segment(std::string_view raw_line) {
  const auto tokens = split_whitespace(raw_line);
  if (tokens.empty()) return std::nullopt;
  TextParagraph out;
  TextSentence current;
  for (const auto& tok : tokens) {
    current.push_back(tok);
    if (is_terminal(tok)) {
      current.emplace_back(kEndToken);
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    current.emplace_back(kEndToken);
    out.push_back(std::move(current));
  }
  return out;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  insert(std::string(kPadToken));
  insert(std::string(kUnkToken));
  insert(std::string(kEndToken));
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (contains(t)) throw ConfigError("Vocabulary: duplicate token '" + t + "'");
    insert(t);
  }
}

void Vocabulary::insert(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("Vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> rest;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw IoError("vocabulary: malformed line '" + line + "'");
    const auto tok = line.substr(0, tab);
    const auto id = std::stoul(line.substr(tab + 1));
    if (id != expected) throw IoError("vocabulary: ids must be dense and ordered, got " + std::to_string(id));
    if (expected < 3) {
      static constexpr std::string_view reserved[] = {kPadToken, kUnkToken, kEndToken};
      if (tok != reserved[expected]) throw IoError("vocabulary: reserved id " + std::to_string(id) + " is '" + tok + "'");
    } else {
      rest.push_back(tok);
    }
    ++expected;
  }
  if (expected < 3) throw IoError("vocabulary: missing reserved entries in '" + path.string() + "'");
  return Vocabulary(rest);
}

Vocabulary build_vocab(std::span<const std::string> lines, std::size_t max_size, std::size_t min_freq) {
  if (max_size <= 3) throw PreconditionError("build_vocab: max_size must exceed the 3 reserved ids");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& line : lines) {
    for (auto& tok : split_whitespace(line)) {
      if (tok == kPadToken || tok == kUnkToken || tok == kEndToken) continue;
      ++counts[std::move(tok)];
      ++total;
    }
  }
  if (total == 0) throw PreconditionError("build_vocab: empty token stream");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (const auto& [tok, n] : ranked) {
    if (kept.size() + 3 >= max_size) break;
    if (n < min_freq) break;
    kept.push_back(tok);
  }
  return Vocabulary(kept);
}

Paragraph encode(const TextParagraph& text, const Vocabulary& vocab) {
  Paragraph out;
  out.reserve(text.size());
  for (const auto& s : text) {
    TokenIds ids;
    ids.reserve(s.size());
    for (const auto& tok : s) ids.push_back(vocab.id(tok));
    out.push_back(std::move(ids));
  }
  return out;
}

TextParagraph decode(const Paragraph& ids, const Vocabulary& vocab) {
  TextParagraph out;
  for (const auto& s : ids) {
    TextSentence words;
    for (int id : s) words.push_back(vocab.token(id));
    out.push_back(std::move(words));
  }
  return out;
}

std::vector<std::string> strip_end(const TextParagraph& text) {
  std::vector<std::string> out;
  for (const auto& s : text) {
    for (const auto& tok : s) {
      if (tok != kEndToken) out.push_back(tok);
    }
  }
  return out;
}

std::string render(const TextParagraph& text) {
  std::string out;
  for (const auto& tok : strip_end(text)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::string render(const Paragraph& ids, const Vocabulary& vocab) { return render(decode(ids, vocab)); }

Paragraph truncate(const Paragraph& p, std::size_t max_sentences, std::size_t max_words, IngestReport* report) {
  if (max_sentences == 0 || max_words == 0) throw PreconditionError("truncate: caps must be positive");
  Paragraph out;
  for (const auto& s : p) {
    if (out.size() == max_sentences) {
      if (report) ++report->sentences_dropped;
      continue;
    }
    if (s.size() <= max_words) {
      out.push_back(s);
      continue;
    }
    TokenIds cut(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(max_words - 1));
    cut.push_back(kEnd);
    if (report) ++report->sentences_truncated;
    out.push_back(std::move(cut));
  }
  return out;
}

Paragraph PaddedBatch::row(std::size_t b) const {
  Paragraph out;
  for (std::size_t s = 0; s < sentence_counts[b]; ++s) {
    const auto toks = sentence(b, s);
    out.emplace_back(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(length(b, s)));
  }
  return out;
}

PaddedBatch pad_batch(std::span<const Paragraph> paragraphs, std::size_t max_sentences, std::size_t max_words,
                      IngestReport* report) {
  PaddedBatch batch;
  batch.batch = paragraphs.size();
  batch.max_sentences = max_sentences;
  batch.max_words = max_words;
  const std::size_t cells = paragraphs.size() * max_sentences * max_words;
  batch.tokens.assign(cells, kPad);
  batch.mask.assign(cells, 0);
  batch.sentence_counts.assign(paragraphs.size(), 0);
  batch.lengths.assign(paragraphs.size() * max_sentences, 0);
  for (std::size_t b = 0; b < paragraphs.size(); ++b) {
    const auto& raw = paragraphs[b];
    if (raw.empty()) throw PreconditionError("encode_batch: empty paragraph at row " + std::to_string(b));
    const auto p = truncate(raw, max_sentences, max_words, report);
    batch.sentence_counts[b] = p.size();
    for (std::size_t s = 0; s < p.size(); ++s) {
      if (p[s].empty()) throw PreconditionError("encode_batch: empty sentence at row " + std::to_string(b));
      batch.lengths[b * max_sentences + s] = p[s].size();
      for (std::size_t w = 0; w < p[s].size(); ++w) {
        const std::size_t cell = (b * max_sentences + s) * max_words + w;
        batch.tokens[cell] = p[s][w];
        batch.mask[cell] = 1;
      }
    }
  }
  return batch;
}

PaddedBatch encode_batch(std::span<const TextParagraph> paragraphs, const Vocabulary& vocab, std::size_t max_sentences,
                         std::size_t max_words, IngestReport* report) {
  std::vector<Paragraph> ids;
  ids.reserve(paragraphs.size());
  for (const auto& p : paragraphs) ids.push_back(encode(p, vocab));
  return pad_batch(ids, max_sentences, max_words, report);
}

// ---------------------------------------------------------------- files

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<TextParagraph> read_corpus(std::istream& in, IngestReport* report) {
  IngestReport local;
  std::vector<TextParagraph> docs;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++local.lines;
    auto p = segment(line);
    if (!p) {
      ++local.skipped;
      local.warnings.push_back("line " + std::to_string(local.lines) + ": no tokens, skipped");
      continue;
    }
    docs.push_back(std::move(*p));
  }
  local.documents = docs.size();
  if (report) report->merge(local);
  return docs;
}

std::vector<TextParagraph> load_corpus(const std::filesystem::path& path, IngestReport* report) {
  auto in = open_input(path);
  auto docs = read_corpus(in, report);
  if (docs.empty()) throw PreconditionError("corpus '" + path.string() + "' has no documents");
  return docs;
}

std::vector<PairedText> read_paired(std::istream& in, IngestReport* report) {
  IngestReport local;
  std::vector<PairedText> out;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++local.lines;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ++local.skipped;
      local.warnings.push_back("line " + std::to_string(local.lines) + ": no tab separator, skipped");
      continue;
    }
    auto title = split_whitespace(std::string_view(line).substr(0, tab));
    auto abstract = segment(std::string_view(line).substr(tab + 1));
    if (title.empty() || !abstract) {
      ++local.skipped;
      local.warnings.push_back("line " + std::to_string(local.lines) + ": empty title or abstract, skipped");
      continue;
    }
    title.emplace_back(kEndToken);
    out.push_back({TextParagraph{std::move(title)}, std::move(*abstract)});
  }
  local.documents = out.size();
  if (report) report->merge(local);
  if (out.empty()) throw PreconditionError("paired corpus has no valid lines");
  return out;
}

std::vector<PairedText> load_paired(const std::filesystem::path& path, IngestReport* report) {
  auto in = open_input(path);
  return read_paired(in, report);
}

std::vector<LabeledText> load_labeled(const std::filesystem::path& path, IngestReport* report) {
  IngestReport local;
  std::vector<LabeledText> out;
  for (const auto& line : read_lines(path)) {
    ++local.lines;
    const auto tab = line.find('\t');
    std::string label;
    std::string_view body = line;
    if (tab != std::string::npos) {
      label = line.substr(0, tab);
      body = std::string_view(line).substr(tab + 1);
    }
    auto p = segment(body);
    if (!p) {
      ++local.skipped;
      local.warnings.push_back("line " + std::to_string(local.lines) + ": no tokens, skipped");
      continue;
    }
    out.push_back({std::move(label), std::move(*p)});
  }
  local.documents = out.size();
  if (report) report->merge(local);
  if (out.empty()) throw PreconditionError("labeled corpus '" + path.string() + "' has no documents");
  return out;
}

}  // namespace mlvae::corpus
