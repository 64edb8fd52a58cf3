#include "mlvae/metrics/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>

#include "mlvae/errors.hpp"

namespace mlvae::metrics {

namespace {

// Closest value to `c` in the sorted `lengths`, preferring the shorter one on a tie.
// `skip_one` removes a single occurrence of that value from consideration.
std::size_t closest_length(const std::vector<std::size_t>& lengths, std::size_t c, std::optional<std::size_t> skip_one) {
  std::size_t best = 0;
  bool found = false;
  bool skipped = false;
  auto consider = [&](std::size_t r) {
    if (skip_one && !skipped && r == *skip_one) {
      skipped = true;
      return;
    }
    const auto d = r > c ? r - c : c - r;
    const auto bd = best > c ? best - c : c - best;
    if (!found || d < bd || (d == bd && r < best)) {
      best = r;
      found = true;
    }
  };
  for (auto r : lengths) consider(r);
  return best;
}

double combine(std::span<const std::string> candidate, std::size_t n, std::size_t ref_length,
               const std::function<std::size_t(std::size_t, const std::vector<std::string>&)>& max_ref_count) {
  if (n == 0) throw PreconditionError("bleu: n must be positive");
  if (candidate.empty()) throw PreconditionError("bleu: empty candidate");
  double log_sum = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto counts = count_ngrams(candidate, k);
    std::size_t total = 0, matched = 0;
    for (const auto& [g, c] : counts) {
      total += c;
      matched += std::min(c, max_ref_count(k, g));
    }
    if (total == 0 || matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double c = static_cast<double>(candidate.size());
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_length) / c));
  return bp * std::exp(log_sum / static_cast<double>(n));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  if (n == 0) throw PreconditionError("count_ngrams: n must be positive");
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++out[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return out;
}

BleuReference::BleuReference(const SampleSet& references, std::size_t max_n) : max_n_(max_n), max_counts_(max_n) {
  if (references.empty()) throw PreconditionError("bleu: empty reference set");
  if (max_n == 0) throw PreconditionError("bleu: n must be positive");
  for (const auto& ref : references) {
    lengths_.push_back(ref.size());
    for (std::size_t k = 1; k <= max_n; ++k) {
      for (const auto& [g, c] : count_ngrams(ref, k)) {
        auto& slot = max_counts_[k - 1][g];
        slot = std::max(slot, c);
      }
    }
  }
  std::sort(lengths_.begin(), lengths_.end());
}

double BleuReference::score(std::span<const std::string> candidate, std::size_t n) const {
  if (n > max_n_) throw PreconditionError("bleu: order exceeds the prepared reference statistics");
  return combine(candidate, n, closest_length(lengths_, candidate.size(), std::nullopt),
                 [this](std::size_t k, const std::vector<std::string>& g) {
                   const auto& m = max_counts_[k - 1];
                   const auto it = m.find(g);
                   return it == m.end() ? std::size_t{0} : it->second;
                 });
}

double bleu_n(std::span<const std::string> candidate, const SampleSet& references, std::size_t n) {
  return BleuReference(references, n).score(candidate, n);
}

double corpus_bleu(const SampleSet& samples, const SampleSet& references, std::size_t n) {
  if (samples.empty()) throw PreconditionError("corpus_bleu: empty sample set");
  const BleuReference ref(references, n);
  double sum = 0;
  for (const auto& s : samples) sum += ref.score(s, n);
  return sum / static_cast<double>(samples.size());
}

double self_bleu(const SampleSet& samples, std::size_t n) {
  if (samples.size() < 2) throw PreconditionError("self_bleu: need at least two samples");
  if (n == 0) throw PreconditionError("self_bleu: n must be positive");
  // Per n-gram, the two largest per-sample counts and the owner of the largest. The max over
  // "all samples but i" is then the runner-up when i owns the maximum.
  struct Top {
    std::size_t first = 0, second = 0, owner = SIZE_MAX;
  };
  std::vector<std::map<std::vector<std::string>, Top>> tops(n);
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    lengths.push_back(samples[i].size());
    for (std::size_t k = 1; k <= n; ++k) {
      for (const auto& [g, c] : count_ngrams(samples[i], k)) {
        auto& t = tops[k - 1][g];
        if (c > t.first) {
          t.second = t.first;
          t.first = c;
          t.owner = i;
        } else if (c > t.second) {
          t.second = c;
        }
      }
    }
  }
  std::sort(lengths.begin(), lengths.end());
  double sum = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto r = closest_length(lengths, samples[i].size(), samples[i].size());
    sum += combine(samples[i], n, r, [&](std::size_t k, const std::vector<std::string>& g) {
      const auto& m = tops[k - 1];
      const auto it = m.find(g);
      if (it == m.end()) return std::size_t{0};
      return it->second.owner == i ? it->second.second : it->second.first;
    });
  }
  return sum / static_cast<double>(samples.size());
}

double unique_ngrams(const SampleSet& samples, std::size_t n) {
  NgramCounts pooled;
  std::size_t total = 0;
  for (const auto& s : samples) {
    for (const auto& [g, c] : count_ngrams(s, n)) {
      pooled[g] += c;
      total += c;
    }
  }
  if (total == 0) throw PreconditionError("unique_ngrams: no sample has " + std::to_string(n) + " tokens");
  return 100.0 * static_cast<double>(pooled.size()) / static_cast<double>(total);
}

double ngram_entropy(const SampleSet& samples, std::size_t n) {
  NgramCounts pooled;
  std::size_t total = 0;
  for (const auto& s : samples) {
    for (const auto& [g, c] : count_ngrams(s, n)) {
      pooled[g] += c;
      total += c;
    }
  }
  if (total == 0) throw PreconditionError("ngram_entropy: no sample has " + std::to_string(n) + " tokens");
  double h = 0;
  for (const auto& [g, c] : pooled) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double MetricReport::at(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw IndexError("MetricReport: no metric '" + name + "'");
}

void MetricReport::write(std::ostream& out) const {
  for (const auto& [k, v] : values) out << k << '\t' << fmt(v) << '\n';
}

MetricReport diversity_report(const SampleSet& samples, const SampleSet* references) {
  MetricReport r;
  if (references) {
    const BleuReference ref(*references, 4);
    for (std::size_t n = 2; n <= 4; ++n) {
      double sum = 0;
      for (const auto& s : samples) sum += ref.score(s, n);
      r.add("B-" + std::to_string(n), sum / static_cast<double>(samples.size()));
    }
  }
  for (std::size_t n = 2; n <= 4; ++n) r.add("sB-" + std::to_string(n), self_bleu(samples, n));
  for (std::size_t n = 2; n <= 4; ++n) r.add("uniq-" + std::to_string(n), unique_ngrams(samples, n));
  r.add("Etp-2", ngram_entropy(samples, 2));
  return r;
}

}  // namespace mlvae::metrics
