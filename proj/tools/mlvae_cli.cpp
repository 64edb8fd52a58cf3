// mlvae: train, evaluate and probe multi-level text VAEs.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/corpus/synthetic.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/metrics/ngram.hpp"
#include "mlvae/model/model.hpp"
#include "mlvae/trainer/trainer.hpp"
#include "mlvae/workbench/workbench.hpp"

using namespace mlvae;

namespace {

enum class Format { Plain, Labeled, Paired };

Format parse_format(const std::string& s) {
  if (s == "plain") return Format::Plain;
  if (s == "labeled") return Format::Labeled;
  if (s == "paired") return Format::Paired;
  throw UsageError("unknown corpus format '" + s + "' (plain, labeled or paired)");
}

// Text documents of a corpus file; for paired files, titles and abstracts both count.
std::vector<std::string> vocab_lines(const std::string& path, Format format) {
  std::vector<std::string> out;
  for (auto& line : corpus::read_lines(path)) {
    if (format != Format::Plain) {
      const auto tab = line.find('\t');
      if (format == Format::Labeled && tab != std::string::npos) line = line.substr(tab + 1);
      if (format == Format::Paired && tab != std::string::npos) line[tab] = ' ';
    }
    out.push_back(std::move(line));
  }
  return out;
}

struct LoadedCorpus {
  Dataset data;
  std::vector<std::string> labels;
};

LoadedCorpus load_dataset(const std::string& path, Format format, const corpus::Vocabulary& vocab,
                          std::size_t max_sentences, std::size_t max_words, corpus::IngestReport& report) {
  LoadedCorpus out;
  if (format == Format::Paired) {
    out.data = make_paired_dataset(corpus::load_paired(path, &report), vocab, max_sentences, max_words, &report);
  } else if (format == Format::Labeled) {
    std::vector<corpus::TextParagraph> docs;
    for (auto& l : corpus::load_labeled(path, &report)) {
      out.labels.push_back(l.label);
      docs.push_back(std::move(l.text));
    }
    out.data = make_dataset(docs, vocab, max_sentences, max_words, &report);
  } else {
    out.data = make_dataset(corpus::load_corpus(path, &report), vocab, max_sentences, max_words, &report);
  }
  return out;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write '" + path + "'");
  return file;
}

Precision checkpoint_precision(const std::string& checkpoint) {
  return ModelConfig::load(config_path_for(checkpoint)).precision;
}

template <typename F>
void with_bundle(const std::string& checkpoint, F&& fn) {
  if (checkpoint_precision(checkpoint) == Precision::F64) {
    auto b = load_bundle<double>(checkpoint);
    fn(b);
  } else {
    auto b = load_bundle<float>(checkpoint);
    fn(b);
  }
}

struct CommonCaps {
  std::size_t sentences = 0, words = 0;
  workbench::DecodeCaps caps() const { return {sentences, words}; }
};

void add_caps(CLI::App* cmd, CommonCaps& caps) {
  cmd->add_option("--sentences", caps.sentences, "Sentences to generate (default: training-corpus median)");
  cmd->add_option("--max-words", caps.words, "Word cap per sentence (default: model max_words)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level VAE for long-form text"};
  app.require_subcommand(1);

  // build-vocab
  std::string bv_corpus, bv_out, bv_format = "plain";
  std::size_t bv_max = corpus::kDefaultVocabSize, bv_min = 1;
  auto* bv = app.add_subcommand("build-vocab", "Build a vocabulary from a corpus file");
  bv->add_option("--corpus", bv_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  bv->add_option("--format", bv_format, "plain, labeled or paired");
  bv->add_option("--max-size", bv_max, "Vocabulary size including reserved ids");
  bv->add_option("--min-freq", bv_min, "Minimum token count");
  bv->add_option("--out", bv_out, "Vocabulary file")->required();

  // train
  std::string tr_corpus, tr_format = "plain", tr_config, tr_vocab, tr_heldout, tr_checkpoint, tr_variant, tr_precision;
  std::vector<std::string> tr_sets;
  std::optional<std::size_t> tr_steps;
  std::optional<std::uint64_t> tr_seed;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--corpus", tr_corpus, "Training corpus")->required()->check(CLI::ExistingFile);
  tr->add_option("--format", tr_format, "plain, labeled or paired");
  tr->add_option("--config", tr_config, "Config file (key = value lines)")->check(CLI::ExistingFile);
  tr->add_option("--vocab", tr_vocab, "Vocabulary file (default: built from the corpus)")->check(CLI::ExistingFile);
  tr->add_option("--heldout", tr_heldout, "Held-out corpus (default: seeded split of the training corpus)")
      ->check(CLI::ExistingFile);
  tr->add_option("--checkpoint", tr_checkpoint, "Output checkpoint path")->required();
  tr->add_option("--variant", tr_variant, "flat-LM, ml-LM, flat-VAE, ml-VAE-S or ml-VAE-D");
  tr->add_option("--precision", tr_precision, "f32 or f64");
  tr->add_option("--steps", tr_steps, "Maximum optimizer steps");
  tr->add_option("--seed", tr_seed, "Random seed");
  tr->add_option("--set", tr_sets, "Config override key=value (repeatable)");

  // eval
  std::string ev_checkpoint, ev_corpus, ev_format = "plain";
  std::uint64_t ev_seed = 1;
  auto* ev = app.add_subcommand("eval", "NLL / KL / PPL on a corpus");
  ev->add_option("--checkpoint", ev_checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", ev_corpus)->required()->check(CLI::ExistingFile);
  ev->add_option("--format", ev_format, "plain, labeled or paired");
  ev->add_option("--seed", ev_seed, "Seed for the posterior sample");

  // metrics
  std::string me_samples, me_refs, me_out;
  auto* me = app.add_subcommand("metrics", "BLEU, self-BLEU, unique n-grams and entropy");
  me->add_option("--samples", me_samples, "Generated texts, one per line")->required()->check(CLI::ExistingFile);
  me->add_option("--references", me_refs, "Reference texts, one per line")->check(CLI::ExistingFile);
  me->add_option("--out", me_out, "Report file (default: stdout)");

  // sample
  std::string sa_checkpoint, sa_out;
  std::size_t sa_count = 1000;
  std::uint64_t sa_seed = 1;
  CommonCaps sa_caps;
  auto* sa = app.add_subcommand("sample", "Decode paragraphs from prior draws");
  sa->add_option("--checkpoint", sa_checkpoint)->required()->check(CLI::ExistingFile);
  sa->add_option("--count", sa_count, "Number of samples")->check(CLI::PositiveNumber);
  sa->add_option("--seed", sa_seed);
  sa->add_option("--out", sa_out, "Output file (default: stdout)");
  add_caps(sa, sa_caps);

  // interpolate
  std::string ip_checkpoint, ip_out;
  std::uint64_t ip_seed_a = 1, ip_seed_b = 2;
  std::size_t ip_steps = 5;
  CommonCaps ip_caps;
  auto* ip = app.add_subcommand("interpolate", "Decode along a line between two prior draws");
  ip->add_option("--checkpoint", ip_checkpoint)->required()->check(CLI::ExistingFile);
  ip->add_option("--seed-a", ip_seed_a);
  ip->add_option("--seed-b", ip_seed_b);
  ip->add_option("--steps", ip_steps, "Intermediate points")->check(CLI::PositiveNumber);
  ip->add_option("--out", ip_out);
  add_caps(ip, ip_caps);

  // transfer
  std::string tf_checkpoint, tf_pos, tf_neg, tf_input, tf_out;
  bool tf_stochastic = false;
  std::uint64_t tf_seed = 1;
  CommonCaps tf_caps;
  auto* tf = app.add_subcommand("transfer", "Shift documents along an attribute vector");
  tf->add_option("--checkpoint", tf_checkpoint)->required()->check(CLI::ExistingFile);
  tf->add_option("--positive", tf_pos, "Documents with the target attribute")->required()->check(CLI::ExistingFile);
  tf->add_option("--negative", tf_neg, "Documents without it")->required()->check(CLI::ExistingFile);
  tf->add_option("--input", tf_input, "Documents to transfer")->required()->check(CLI::ExistingFile);
  tf->add_flag("--stochastic-codes", tf_stochastic, "Class means over one posterior draw per document");
  tf->add_option("--seed", tf_seed);
  tf->add_option("--out", tf_out);
  add_caps(tf, tf_caps);

  // generate
  std::string ge_checkpoint, ge_titles, ge_out;
  bool ge_sample = false;
  std::uint64_t ge_seed = 1;
  CommonCaps ge_caps;
  auto* ge = app.add_subcommand("generate", "Decode abstracts conditioned on titles");
  ge->add_option("--checkpoint", ge_checkpoint)->required()->check(CLI::ExistingFile);
  ge->add_option("--titles", ge_titles, "One title per line")->required()->check(CLI::ExistingFile);
  ge->add_flag("--sample", ge_sample, "Draw the code instead of using the posterior mean");
  ge->add_option("--seed", ge_seed);
  ge->add_option("--out", ge_out);
  add_caps(ge, ge_caps);

  // export-latents
  std::string ex_checkpoint, ex_corpus, ex_out;
  auto* ex = app.add_subcommand("export-latents", "Write posterior-mean codes as CSV");
  ex->add_option("--checkpoint", ex_checkpoint)->required()->check(CLI::ExistingFile);
  ex->add_option("--corpus", ex_corpus, "Documents, optionally 'label<TAB>text'")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "CSV path")->required();

  // synth
  std::string sy_kind = "topic", sy_out;
  std::size_t sy_count = 512;
  std::uint64_t sy_seed = 1;
  auto* sy = app.add_subcommand("synth", "Write a synthetic toy corpus");
  sy->add_option("--kind", sy_kind, "topic, random, sentiment or paired");
  sy->add_option("--count", sy_count, "Documents")->check(CLI::PositiveNumber);
  sy->add_option("--seed", sy_seed);
  sy->add_option("--out", sy_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::ofstream file;
    if (bv->parsed()) {
      const auto lines = vocab_lines(bv_corpus, parse_format(bv_format));
      corpus::build_vocab(lines, bv_max, bv_min).save(bv_out);
    } else if (tr->parsed()) {
      const auto format = parse_format(tr_format);
      ModelConfig config;
      if (!tr_config.empty()) config = ModelConfig::load(tr_config);
      std::map<std::string, std::string> overrides;
      for (const auto& s : tr_sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (!tr_variant.empty()) overrides["variant"] = tr_variant;
      if (!tr_precision.empty()) overrides["precision"] = tr_precision;
      if (tr_steps) overrides["max_steps"] = std::to_string(*tr_steps);
      if (tr_seed) overrides["seed"] = std::to_string(*tr_seed);
      config.apply(overrides);

      const auto vocab = tr_vocab.empty()
                             ? corpus::build_vocab(vocab_lines(tr_corpus, format), config.vocab_size ? config.vocab_size
                                                                                                     : corpus::kDefaultVocabSize)
                             : corpus::Vocabulary::load(tr_vocab);
      config.vocab_size = vocab.size();
      corpus::IngestReport report;
      auto data = load_dataset(tr_corpus, format, vocab, config.max_sentences, config.max_words, report).data;
      Dataset train_set, held;
      if (tr_heldout.empty()) {
        std::tie(train_set, held) = split_heldout(data, config.heldout_fraction, config.seed);
      } else {
        train_set = std::move(data);
        held = load_dataset(tr_heldout, format, vocab, config.max_sentences, config.max_words, report).data;
      }
      report.write(std::cerr);
      TrainOptions options;
      options.log = &std::cout;
      options.checkpoint = tr_checkpoint;
      if (config.precision == Precision::F64) {
        train<double>(config, train_set, held, vocab, options);
      } else {
        train<float>(config, train_set, held, vocab, options);
      }
    } else if (ev->parsed()) {
      with_bundle(ev_checkpoint, [&](auto& b) {
        const auto& c = b.model.config();
        corpus::IngestReport report;
        const auto data = load_dataset(ev_corpus, parse_format(ev_format), b.vocab, c.max_sentences, c.max_words, report).data;
        const auto r = evaluate(b.model, data, ev_seed);
        std::cout << "nll\t" << r.nll << "\nkl\t" << r.kl << "\nppl\t" << r.ppl << "\nbound\t"
                  << (r.bound ? "true" : "false") << "\ntokens\t" << r.tokens << "\ndocuments\t" << r.documents << "\n";
      });
    } else if (me->parsed()) {
      auto load_samples = [](const std::string& path) {
        metrics::SampleSet out;
        for (const auto& line : corpus::read_lines(path)) {
          auto tokens = corpus::split_whitespace(line);
          if (!tokens.empty()) out.push_back(std::move(tokens));
        }
        if (out.empty()) throw PreconditionError("no texts in '" + path + "'");
        return out;
      };
      const auto samples = load_samples(me_samples);
      std::optional<metrics::SampleSet> refs;
      if (!me_refs.empty()) refs = load_samples(me_refs);
      const auto report = metrics::diversity_report(samples, refs ? &*refs : nullptr);
      report.write(open_out(me_out, file));
    } else if (sa->parsed()) {
      with_bundle(sa_checkpoint, [&](auto& b) {
        const auto out = workbench::sample_unconditional(b.model, sa_count, sa_seed, sa_caps.caps());
        workbench::write_paragraphs(out, b.vocab, open_out(sa_out, file));
      });
    } else if (ip->parsed()) {
      with_bundle(ip_checkpoint, [&](auto& b) {
        const auto out = workbench::interpolate(b.model, ip_seed_a, ip_seed_b, ip_steps, ip_caps.caps());
        workbench::write_paragraphs(out.paragraphs, b.vocab, open_out(ip_out, file));
      });
    } else if (tf->parsed()) {
      with_bundle(tf_checkpoint, [&](auto& b) {
        using T = typename std::decay_t<decltype(b.model)>::Scalar;
        const auto& c = b.model.config();
        corpus::IngestReport report;
        auto load = [&](const std::string& path) {
          return load_dataset(path, Format::Labeled, b.vocab, c.max_sentences, c.max_words, report).data.targets;
        };
        const auto pos = load(tf_pos), neg = load(tf_neg), input = load(tf_input);
        NoiseSource<T> noise(tf_seed);
        const auto attr = workbench::attribute_vector(b.model, std::span<const corpus::Paragraph>(pos),
                                                      std::span<const corpus::Paragraph>(neg),
                                                      tf_stochastic ? &noise : nullptr);
        std::vector<DecodedParagraph> out;
        for (const auto& doc : input) {
          out.push_back(workbench::attribute_transfer(b.model, doc, std::span<const T>(attr), tf_caps.caps()));
        }
        workbench::write_paragraphs(out, b.vocab, open_out(tf_out, file));
      });
    } else if (ge->parsed()) {
      with_bundle(ge_checkpoint, [&](auto& b) {
        using T = typename std::decay_t<decltype(b.model)>::Scalar;
        const auto& c = b.model.config();
        corpus::IngestReport report;
        const auto titles = load_dataset(ge_titles, Format::Plain, b.vocab, c.max_sentences, c.max_words, report).data;
        NoiseSource<T> noise(ge_seed);
        std::vector<DecodedParagraph> out;
        for (const auto& t : titles.targets) {
          out.push_back(workbench::conditional_generate(b.model, t, ge_sample ? &noise : nullptr, ge_caps.caps()));
        }
        workbench::write_paragraphs(out, b.vocab, open_out(ge_out, file));
      });
    } else if (ex->parsed()) {
      with_bundle(ex_checkpoint, [&](auto& b) {
        const auto& c = b.model.config();
        corpus::IngestReport report;
        const auto loaded = load_dataset(ex_corpus, Format::Labeled, b.vocab, c.max_sentences, c.max_words, report);
        workbench::export_latents(b.model, std::span<const corpus::Paragraph>(loaded.data.targets),
                                  std::span<const std::string>(loaded.labels), std::filesystem::path(ex_out));
      });
    } else if (sy->parsed()) {
      std::vector<std::string> lines;
      if (sy_kind == "topic") {
        corpus::synthetic::TopicSpec spec;
        spec.documents = sy_count;
        spec.seed = sy_seed;
        lines = corpus::synthetic::topic_corpus(spec);
      } else if (sy_kind == "random") {
        lines = corpus::synthetic::random_corpus(sy_count, 4, 5, 24, sy_seed);
      } else if (sy_kind == "sentiment") {
        corpus::synthetic::SentimentSpec spec;
        spec.documents = sy_count;
        spec.seed = sy_seed;
        lines = corpus::synthetic::sentiment_corpus(spec);
      } else if (sy_kind == "paired") {
        lines = corpus::synthetic::paired_corpus(sy_count, 3, sy_seed);
      } else {
        throw UsageError("unknown synthetic corpus kind '" + sy_kind + "'");
      }
      auto& out = open_out(sy_out, file);
      for (const auto& l : lines) out << l << '\n';
    }
    if (file.is_open()) {
      file.close();
      if (!file) throw IoError("write failed");
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
