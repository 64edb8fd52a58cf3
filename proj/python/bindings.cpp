#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "mlvae/corpus/corpus.hpp"
#include "mlvae/corpus/synthetic.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/metrics/classifier.hpp"
#include "mlvae/metrics/ngram.hpp"
#include "mlvae/model/model.hpp"
#include "mlvae/ndcore/checkpoint.hpp"
#include "mlvae/trainer/trainer.hpp"
#include "mlvae/workbench/workbench.hpp"

namespace py = pybind11;
using namespace mlvae;
namespace wb = mlvae::workbench;

namespace {

std::vector<corpus::TextParagraph> segment_lines(const std::vector<std::string>& lines) {
  std::vector<corpus::TextParagraph> out;
  for (const auto& l : lines) {
    if (auto p = corpus::segment(l)) out.push_back(std::move(*p));
  }
  if (out.empty()) throw PreconditionError("no documents among the given lines");
  return out;
}

corpus::TextParagraph segment_one(const std::string& text) {
  auto p = corpus::segment(text);
  if (!p) throw PreconditionError("empty document");
  return *p;
}

std::map<std::string, std::string> to_overrides(const py::dict& values) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values) out[py::str(k)] = py::str(v);
  return out;
}

std::string render(const DecodedParagraph& p, const corpus::Vocabulary& vocab) {
  std::ostringstream out;
  wb::write_paragraphs(std::span<const DecodedParagraph>(&p, 1), vocab, out);
  auto s = out.str();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

// A trained or loaded model in either precision, with its vocabulary.
class PyModel {
 public:
  using Handle = std::variant<Bundle<float>, Bundle<double>>;

  explicit PyModel(Handle h) : h_(std::move(h)) {}

  static PyModel load(const std::filesystem::path& checkpoint) {
    const auto config = ModelConfig::load(config_path_for(checkpoint));
    if (config.precision == Precision::F64) return PyModel(load_bundle<double>(checkpoint));
    return PyModel(load_bundle<float>(checkpoint));
  }

  void save(const std::filesystem::path& checkpoint) const {
    std::visit([&](const auto& b) { save_bundle(checkpoint, b.model, b.vocab); }, h_);
  }

  std::string variant() const {
    return std::visit([](const auto& b) { return std::string(to_string(b.model.variant())); }, h_);
  }
  std::string config_text() const {
    return std::visit([](const auto& b) { return b.model.config().to_text(); }, h_);
  }
  std::vector<std::string> vocabulary() const {
    return std::visit([](const auto& b) { return b.vocab.tokens(); }, h_);
  }

  py::dict evaluate(const std::vector<std::string>& lines, std::uint64_t seed) const {
    const auto r = std::visit(
        [&](const auto& b) {
          const auto& c = b.model.config();
          return mlvae::evaluate(b.model, make_dataset(segment_lines(lines), b.vocab, c.max_sentences, c.max_words), seed);
        },
        h_);
    py::dict d;
    d["nll"] = r.nll;
    d["kl"] = r.kl;
    d["ppl"] = r.ppl;
    d["bound"] = r.bound;
    d["tokens"] = r.tokens;
    d["documents"] = r.documents;
    return d;
  }

  std::vector<std::string> sample(std::size_t count, std::uint64_t seed, std::size_t sentences, std::size_t words) const {
    return std::visit(
        [&](const auto& b) {
          std::vector<std::string> out;
          for (const auto& p : wb::sample_unconditional(b.model, count, seed, {sentences, words})) out.push_back(render(p, b.vocab));
          return out;
        },
        h_);
  }

  std::vector<std::string> interpolate(std::uint64_t seed_a, std::uint64_t seed_b, std::size_t steps) const {
    return std::visit(
        [&](const auto& b) {
          std::vector<std::string> out;
          for (const auto& p : wb::interpolate(b.model, seed_a, seed_b, steps).paragraphs) out.push_back(render(p, b.vocab));
          return out;
        },
        h_);
  }

  std::vector<double> latent_code(const std::string& text) const {
    return std::visit(
        [&](const auto& b) {
          const auto z = wb::latent_code(b.model, encoded(b, text));
          return std::vector<double>(z.begin(), z.end());
        },
        h_);
  }

  std::vector<double> attribute_vector(const std::vector<std::string>& positive,
                                       const std::vector<std::string>& negative) const {
    return std::visit(
        [&](const auto& b) {
          using T = typename std::decay_t<decltype(b.model)>::Scalar;
          const auto& c = b.model.config();
          const auto pos = make_dataset(segment_lines(positive), b.vocab, c.max_sentences, c.max_words);
          const auto neg = make_dataset(segment_lines(negative), b.vocab, c.max_sentences, c.max_words);
          const auto v = wb::attribute_vector<T>(b.model, pos.targets, neg.targets);
          return std::vector<double>(v.begin(), v.end());
        },
        h_);
  }

  std::string transfer(const std::string& text, const std::vector<double>& attribute) const {
    return std::visit(
        [&](const auto& b) {
          using T = typename std::decay_t<decltype(b.model)>::Scalar;
          const std::vector<T> a(attribute.begin(), attribute.end());
          return render(wb::attribute_transfer<T>(b.model, encoded(b, text), a), b.vocab);
        },
        h_);
  }

  std::string reconstruct(const std::string& text) const {
    return std::visit([&](const auto& b) { return render(wb::reconstruct(b.model, encoded(b, text)), b.vocab); }, h_);
  }

  std::string generate(const std::string& title) const {
    return std::visit(
        [&](const auto& b) {
          const auto& c = b.model.config();
          const corpus::TextParagraph t{segment_one(title).front()};
          const auto p = corpus::truncate(corpus::encode(t, b.vocab), 1, c.max_words);
          return render(wb::conditional_generate(b.model, p), b.vocab);
        },
        h_);
  }

  std::string export_latents(const std::vector<std::string>& lines, const std::vector<std::string>& labels) const {
    return std::visit(
        [&](const auto& b) {
          using T = typename std::decay_t<decltype(b.model)>::Scalar;
          const auto& c = b.model.config();
          const auto data = make_dataset(segment_lines(lines), b.vocab, c.max_sentences, c.max_words);
          std::ostringstream out;
          wb::export_latents<T>(b.model, data.targets, labels, out);
          return out.str();
        },
        h_);
  }

  std::vector<std::uint8_t> checkpoint_bytes() const {
    return std::visit([](const auto& b) { return nd::serialize(b.model.store()); }, h_);
  }

 private:
  template <typename B>
  static corpus::Paragraph encoded(const B& b, const std::string& text) {
    const auto& c = b.model.config();
    return corpus::truncate(corpus::encode(segment_one(text), b.vocab), c.max_sentences, c.max_words);
  }

  Handle h_;
};

py::dict row_dict(const LogRow& r) {
  py::dict d;
  d["step"] = r.step;
  d["reconstruction"] = r.reconstruction;
  d["kl"] = r.kl;
  d["beta"] = r.beta;
  d["objective"] = r.objective;
  d["ppl"] = r.ppl;
  return d;
}

// Trains on plain documents, or on (title, abstract) pairs when `pairs` is given.
py::tuple train_model(const std::vector<std::string>& lines,
                      const std::vector<std::pair<std::string, std::string>>& pairs, const py::dict& config,
                      const std::vector<std::string>& heldout, const std::optional<std::vector<std::string>>& vocab_tokens) {
  ModelConfig cfg;
  cfg.apply(to_overrides(config));
  std::vector<std::string> vocab_source = lines;
  for (const auto& [t, a] : pairs) vocab_source.push_back(t + " " + a);
  const auto vocab = vocab_tokens ? corpus::Vocabulary(*vocab_tokens)
                                  : corpus::build_vocab(vocab_source, cfg.vocab_size ? cfg.vocab_size : corpus::kDefaultVocabSize);
  cfg.vocab_size = vocab.size();

  Dataset train_set, held;
  if (!pairs.empty()) {
    std::string text;
    for (const auto& [t, a] : pairs) text += t + "\t" + a + "\n";
    std::istringstream in(text);
    train_set = make_paired_dataset(corpus::read_paired(in), vocab, cfg.max_sentences, cfg.max_words);
  } else {
    train_set = make_dataset(segment_lines(lines), vocab, cfg.max_sentences, cfg.max_words);
  }
  if (!heldout.empty()) held = make_dataset(segment_lines(heldout), vocab, cfg.max_sentences, cfg.max_words);

  py::list log;
  auto run = [&](auto tag) -> PyModel {
    using T = decltype(tag);
    py::gil_scoped_release release;
    auto r = mlvae::train<T>(cfg, train_set, held, vocab);
    py::gil_scoped_acquire acquire;
    for (const auto& row : r.log) log.append(row_dict(row));
    return PyModel(Bundle<T>{std::move(r.model), vocab});
  };
  PyModel model = cfg.precision == Precision::F64 ? run(double{}) : run(float{});
  return py::make_tuple(std::move(model), log);
}

metrics::SampleSet to_sets(const std::vector<std::string>& lines) {
  metrics::SampleSet out;
  for (const auto& l : lines) out.push_back(corpus::split_whitespace(l));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mlvae, m) {
  m.doc() = "Multi-level VAE for long text: training, sampling, latent tools and metrics";

  auto base = py::register_exception<std::exception>(m, "MlvaeError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<IndexError>(m, "OutOfRangeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<PyModel>(m, "Model")
      .def_static("load", &PyModel::load, py::arg("checkpoint"))
      .def("save", &PyModel::save, py::arg("checkpoint"))
      .def_property_readonly("variant", &PyModel::variant)
      .def_property_readonly("config_text", &PyModel::config_text)
      .def_property_readonly("vocabulary", &PyModel::vocabulary)
      .def("evaluate", &PyModel::evaluate, py::arg("lines"), py::arg("seed") = 0)
      .def("sample", &PyModel::sample, py::arg("count"), py::arg("seed") = 0, py::arg("sentences") = 0,
           py::arg("words") = 0)
      .def("interpolate", &PyModel::interpolate, py::arg("seed_a"), py::arg("seed_b"), py::arg("steps"))
      .def("latent_code", &PyModel::latent_code, py::arg("text"))
      .def("attribute_vector", &PyModel::attribute_vector, py::arg("positive"), py::arg("negative"))
      .def("transfer", &PyModel::transfer, py::arg("text"), py::arg("attribute"))
      .def("reconstruct", &PyModel::reconstruct, py::arg("text"))
      .def("generate", &PyModel::generate, py::arg("title"))
      .def("export_latents", &PyModel::export_latents, py::arg("lines"), py::arg("labels") = std::vector<std::string>{})
      .def("checkpoint_bytes", [](const PyModel& self) {
        const auto b = self.checkpoint_bytes();
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      });

  m.def("train", &train_model, py::arg("lines") = std::vector<std::string>{},
        py::arg("pairs") = std::vector<std::pair<std::string, std::string>>{}, py::arg("config") = py::dict(),
        py::arg("heldout") = std::vector<std::string>{}, py::arg("vocabulary") = std::nullopt,
        "Train a model; returns (model, log rows).");

  m.def("build_vocab",
        [](const std::vector<std::string>& lines, std::size_t max_size, std::size_t min_freq) {
          return corpus::build_vocab(lines, max_size, min_freq).tokens();
        },
        py::arg("lines"), py::arg("max_size") = corpus::kDefaultVocabSize, py::arg("min_freq") = 1);
  m.def("segment", [](const std::string& line) { return corpus::segment(line); }, py::arg("line"));

  m.def("bleu", [](const std::string& c, const std::vector<std::string>& refs, std::size_t n) {
    return metrics::bleu_n(corpus::split_whitespace(c), to_sets(refs), n);
  }, py::arg("candidate"), py::arg("references"), py::arg("n") = 4);
  m.def("corpus_bleu", [](const std::vector<std::string>& s, const std::vector<std::string>& refs, std::size_t n) {
    return metrics::corpus_bleu(to_sets(s), to_sets(refs), n);
  }, py::arg("samples"), py::arg("references"), py::arg("n") = 4);
  m.def("self_bleu", [](const std::vector<std::string>& s, std::size_t n) { return metrics::self_bleu(to_sets(s), n); },
        py::arg("samples"), py::arg("n") = 4);
  m.def("unique_ngrams", [](const std::vector<std::string>& s, std::size_t n) { return metrics::unique_ngrams(to_sets(s), n); },
        py::arg("samples"), py::arg("n"));
  m.def("ngram_entropy", [](const std::vector<std::string>& s, std::size_t n) { return metrics::ngram_entropy(to_sets(s), n); },
        py::arg("samples"), py::arg("n") = 2);
  m.def("diversity_report",
        [](const std::vector<std::string>& s, const std::optional<std::vector<std::string>>& refs) {
          std::optional<metrics::SampleSet> r;
          if (refs) r = to_sets(*refs);
          return metrics::diversity_report(to_sets(s), r ? &*r : nullptr).values;
        },
        py::arg("samples"), py::arg("references") = std::nullopt);

  m.def("topic_corpus", [](std::size_t documents, std::uint64_t seed) {
    return corpus::synthetic::topic_corpus({.documents = documents, .seed = seed});
  }, py::arg("documents") = 512, py::arg("seed") = 1);
  m.def("random_corpus", &corpus::synthetic::random_corpus, py::arg("documents"), py::arg("sentences"),
        py::arg("words_per_sentence"), py::arg("vocabulary"), py::arg("seed") = 1);
  m.def("sentiment_corpus", [](std::size_t documents, std::uint64_t seed) {
    return corpus::synthetic::sentiment_corpus({.documents = documents, .seed = seed});
  }, py::arg("documents") = 400, py::arg("seed") = 1);
  m.def("paired_corpus", &corpus::synthetic::paired_corpus, py::arg("pairs"), py::arg("abstract_sentences"),
        py::arg("seed") = 1);
}
