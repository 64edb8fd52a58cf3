#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mlvae::metrics {

using Tokens = std::vector<std::string>;
using SampleSet = std::vector<Tokens>;

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;
NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n);

// Pooled reference statistics for repeated BLEU queries against one reference set.
class BleuReference {
 public:
  BleuReference(const SampleSet& references, std::size_t max_n);

  // Uniform-weight geometric mean of clipped k-gram precisions, k = 1..n, times the brevity
  // penalty against the closest reference length (shorter wins ties). A zero precision, or a
  // candidate with no k-grams for some k, scores 0.
  double score(std::span<const std::string> candidate, std::size_t n) const;

 private:
  std::size_t max_n_;
  std::vector<NgramCounts> max_counts_;  // per order, max count over references
  std::vector<std::size_t> lengths_;     // sorted
};

double bleu_n(std::span<const std::string> candidate, const SampleSet& references, std::size_t n);
// Mean of bleu_n over samples.
double corpus_bleu(const SampleSet& samples, const SampleSet& references, std::size_t n);
// Mean over samples of BLEU against all other samples.
double self_bleu(const SampleSet& samples, std::size_t n);
// 100 * distinct n-gram types / n-gram occurrences, pooled over samples.
double unique_ngrams(const SampleSet& samples, std::size_t n);
// Shannon entropy (nats) of the pooled empirical n-gram distribution.
double ngram_entropy(const SampleSet& samples, std::size_t n);

struct MetricReport {
  std::vector<std::pair<std::string, double>> values;

  void add(std::string name, double value) { values.emplace_back(std::move(name), value); }
  double at(const std::string& name) const;
  void write(std::ostream& out) const;
};

// B-2..4 when references are given, then sB-2..4, uniq-2..4 and Etp-2.
MetricReport diversity_report(const SampleSet& samples, const SampleSet* references = nullptr);

}  // namespace mlvae::metrics
