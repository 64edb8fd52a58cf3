#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "mlvae/corpus/synthetic.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/ndcore/checkpoint.hpp"
#include "mlvae/trainer/trainer.hpp"
#include "test_support.hpp"

using namespace mlvae;

namespace {

struct Toy {
  corpus::Vocabulary vocab;
  Dataset data;
};

Toy toy_corpus(std::size_t documents = 12, std::uint64_t seed = 3) {
  const auto lines = corpus::synthetic::random_corpus(documents, 2, 3, 9, seed);
  Toy t{corpus::build_vocab(lines, 100), {}};
  std::vector<corpus::TextParagraph> docs;
  for (const auto& l : lines) docs.push_back(*corpus::segment(l));
  t.data = make_dataset(docs, t.vocab, 4, 6);
  return t;
}

const Variant kAll[] = {Variant::FlatLM, Variant::MlLM, Variant::FlatVAE, Variant::MlVAES, Variant::MlVAED};
const Variant kLatent[] = {Variant::FlatVAE, Variant::MlVAES, Variant::MlVAED};

}  // namespace

TEST(Anneal, Schedule) {
  EXPECT_EQ(anneal(0, 10, 30), 0.0);
  EXPECT_EQ(anneal(9, 10, 30), 0.0);
  EXPECT_EQ(anneal(10, 10, 30), 0.0);
  EXPECT_EQ(anneal(20, 10, 30), 0.5);
  EXPECT_EQ(anneal(30, 10, 30), 1.0);
  EXPECT_EQ(anneal(1000, 10, 30), 1.0);
  EXPECT_EQ(anneal(4, 5, 5), 0.0);
  EXPECT_EQ(anneal(5, 5, 5), 1.0);
  EXPECT_THROW(anneal(1, 6, 5), PreconditionError);
}

TEST(Dataset, SplitAndMedian) {
  auto toy = toy_corpus(20);
  auto [train, held] = split_heldout(toy.data, 0.25, 4);
  EXPECT_EQ(held.size(), 5u);
  EXPECT_EQ(train.size(), 15u);
  auto [train2, held2] = split_heldout(toy.data, 0.25, 4);
  EXPECT_EQ(held.targets, held2.targets);
  EXPECT_EQ(median_sentences(toy.data), 2u);
  Dataset uneven;
  uneven.targets = {{{3, 2}}, {{3, 2}, {3, 2}, {3, 2}}, {{3, 2}, {3, 2}}, {{3, 2}, {3, 2}, {3, 2}, {3, 2}}};
  EXPECT_EQ(median_sentences(uneven), 2u);
  EXPECT_THROW(split_heldout(toy.data, 1.0, 1), PreconditionError);
}

TEST(LossStep, ZeroBetaObjectiveIsReconstruction) {
  auto toy = toy_corpus();
  const auto batch = corpus::pad_batch(std::span(toy.data.targets).subspan(0, 3), 4, 6);
  for (Variant v : kLatent) {
    Model<double> model(testkit::tiny_config(v, toy.vocab.size()));
    nd::Tape<double> tape(model.store());
    NoiseSource<double> noise(1);
    auto loss = loss_step(tape, model, batch, batch, 0.0, noise);
    EXPECT_GT(tape.scalar(loss.kl), 0.0) << to_string(v);
    EXPECT_EQ(tape.scalar(loss.objective), tape.scalar(loss.reconstruction)) << to_string(v);
  }
}

TEST(LossStep, CollapsedDoubleLatentHasZeroKl) {
  auto toy = toy_corpus();
  const auto batch = corpus::pad_batch(std::span(toy.data.targets).subspan(0, 4), 4, 6);
  Model<double> model(testkit::tiny_config(Variant::MlVAED, toy.vocab.size()));
  model.store().zero_values("enc.z1.");
  model.store().zero_values("enc.z2.");
  model.store().zero_values("prior.");
  nd::Tape<double> tape(model.store());
  NoiseSource<double> noise(2);
  auto loss = loss_step(tape, model, batch, batch, 1.0, noise);
  EXPECT_EQ(tape.scalar(loss.kl), 0.0);
}

TEST(LossStep, LanguageModelsHaveNoKl) {
  auto toy = toy_corpus();
  const auto batch = corpus::pad_batch(std::span(toy.data.targets).subspan(0, 2), 4, 6);
  for (Variant v : {Variant::FlatLM, Variant::MlLM}) {
    Model<double> model(testkit::tiny_config(v, toy.vocab.size()));
    nd::Tape<double> tape(model.store());
    NoiseSource<double> noise(2);
    auto loss = loss_step(tape, model, batch, batch, 1.0, noise);
    EXPECT_EQ(tape.scalar(loss.kl), 0.0);
  }
}

TEST(Evaluate, UniformFlatLmPerplexityIsVocabularySize) {
  auto toy = toy_corpus();
  for (std::size_t extra : {0u, 7u, 40u}) {
    auto cfg = testkit::tiny_config(Variant::FlatLM, toy.vocab.size() + extra);
    Model<double> model(cfg);
    model.store().zero_values();
    const auto r = evaluate(model, toy.data, 1);
    // exp(ln V) is not V in binary floating point; only rounding of ln V may remain
    const double v = static_cast<double>(cfg.vocab_size);
    EXPECT_LE(std::abs(r.ppl - v), 8 * (std::nextafter(v, 2 * v) - v)) << v;
    EXPECT_FALSE(r.bound);
    EXPECT_EQ(r.kl, 0.0);
  }
}

TEST(Evaluate, TokensIncludeEndMarkers) {
  auto toy = toy_corpus(5);
  Model<float> model(testkit::tiny_config(Variant::MlLM, toy.vocab.size()));
  const auto r = evaluate(model, toy.data, 1);
  EXPECT_EQ(r.tokens, 5u * 2 * 5);  // three words, "." and END per sentence
  EXPECT_EQ(r.documents, 5u);
  Dataset empty;
  EXPECT_THROW(evaluate(model, empty, 1), PreconditionError);
}

TEST(Evaluate, KlNonNegativeAndBoundFlagged) {
  auto toy = toy_corpus();
  for (Variant v : kLatent) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto cfg = testkit::tiny_config(v, toy.vocab.size());
      cfg.seed = seed;
      cfg.init_scale = 0.5;
      Model<double> model(cfg);
      const auto r = evaluate(model, toy.data, seed);
      EXPECT_GE(r.kl, 0.0);
      EXPECT_TRUE(r.bound);
      EXPECT_GE(r.nll, r.kl);
    }
  }
}

// The reported NLL is an ELBO: averaged over posterior draws it cannot fall below an
// importance-sampled estimate of the true NLL.
TEST(Evaluate, BoundDominatesImportanceSampledLikelihood) {
  auto toy = toy_corpus(1, 8);
  auto cfg = testkit::tiny_config(Variant::FlatVAE, toy.vocab.size());
  cfg.init_scale = 0.4;
  Model<double> model(cfg);
  const auto& doc = toy.data.targets[0];
  double bound = 0;
  const int draws = 400;
  for (int s = 0; s < draws; ++s) bound += evaluate(model, toy.data, static_cast<std::uint64_t>(s)).nll;
  bound /= draws;

  const auto q = model.infer(doc).bottom;
  NoiseSource<double> noise(77);
  const std::size_t K = 4000;
  std::vector<double> logw(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto eps = noise.normal(cfg.latent_dim);
    std::vector<double> z(cfg.latent_dim);
    double log_ratio = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = q.mean[i] + std::exp(q.log_var[i] / 2) * eps[i];
      // log p(z) - log q(z)
      log_ratio += -0.5 * z[i] * z[i] + 0.5 * eps[i] * eps[i] + 0.5 * q.log_var[i];
    }
    logw[k] = -model.reconstruction_nll(doc, std::span<const double>(z)) + log_ratio;
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double acc = 0;
  for (double w : logw) acc += std::exp(w - mx);
  const double is_nll = -(mx + std::log(acc / K));
  EXPECT_GE(bound, is_nll - 1e-3);
  EXPECT_LT(bound - is_nll, 1.0);
}

TEST(Train, DeterministicAcrossRuns) {
  auto toy = toy_corpus();
  auto run = [&] {
    auto cfg = testkit::tiny_config(Variant::MlVAED, toy.vocab.size());
    cfg.max_steps = 12;
    std::ostringstream log;
    TrainOptions opts;
    opts.log = &log;
    auto r = train<float>(cfg, toy.data, toy.data.subset(std::vector<std::size_t>{0, 1}), toy.vocab, opts);
    return std::make_pair(nd::serialize(r.model.store()), log.str());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, EveryVariantTrainsAndLossDrops) {
  auto toy = toy_corpus(8);
  for (Variant v : kAll) {
    auto cfg = testkit::tiny_config(v, toy.vocab.size());
    cfg.max_steps = 150;
    cfg.lr = 1e-2;
    cfg.anneal_end = 50;
    cfg.generate_sentences = 0;
    auto r = train<float>(cfg, toy.data, {}, toy.vocab);
    ASSERT_EQ(r.log.size(), 150u);
    EXPECT_LT(r.log.back().reconstruction, r.log.front().reconstruction) << to_string(v);
    EXPECT_EQ(r.model.config().generate_sentences, 2u);
  }
}

TEST(Train, LogRowsReassemble) {
  auto toy = toy_corpus();
  auto cfg = testkit::tiny_config(Variant::FlatVAE, toy.vocab.size());
  cfg.anneal_start = 2;
  cfg.anneal_end = 8;
  cfg.log_interval = 1;
  cfg.max_steps = 10;
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  train<double>(cfg, toy.data, {}, toy.vocab, opts);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, format_log_header());
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    double step, rec, kl, beta, obj, ppl;
    fields >> step >> rec >> kl >> beta >> obj >> ppl;
    EXPECT_EQ(obj, rec + beta * kl) << line;
    EXPECT_EQ(beta, anneal(static_cast<std::int64_t>(step), 2, 8));
    ++rows;
  }
  EXPECT_EQ(rows, 10);
}

TEST(Train, DivergenceNamesTheStep) {
  auto toy = toy_corpus();
  auto cfg = testkit::tiny_config(Variant::FlatLM, toy.vocab.size());
  cfg.init_scale = 1e25;
  try {
    train<float>(cfg, toy.data, {}, toy.vocab);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Train, VocabularyMismatchRejected) {
  auto toy = toy_corpus();
  auto cfg = testkit::tiny_config(Variant::FlatLM, toy.vocab.size() + 1);
  EXPECT_THROW(train<float>(cfg, toy.data, {}, toy.vocab), ConfigError);
  EXPECT_THROW(train<float>(cfg, Dataset{}, {}, toy.vocab), PreconditionError);
}

TEST(Train, CheckpointBundleRoundTrip) {
  auto toy = toy_corpus();
  auto cfg = testkit::tiny_config(Variant::MlVAES, toy.vocab.size());
  cfg.max_steps = 5;
  const auto path = std::filesystem::temp_directory_path() / "mlvae_train_bundle.ckpt";
  TrainOptions opts;
  opts.checkpoint = path;
  auto r = train<double>(cfg, toy.data, {}, toy.vocab, opts);
  auto b = load_bundle<double>(path);
  EXPECT_EQ(nd::serialize(b.model.store()), nd::serialize(r.model.store()));
  EXPECT_EQ(b.vocab, toy.vocab);
  EXPECT_EQ(b.model.config().to_text(), r.model.config().to_text());
  auto narrowed = load_bundle<float>(path);
  EXPECT_EQ(narrowed.model.store().size(), r.model.store().size());
  for (const auto& p : {path, config_path_for(path), vocab_path_for(path)}) std::filesystem::remove(p);
}

TEST(Config, TextRoundTripAndUnknownKeys) {
  auto cfg = testkit::tiny_config(Variant::MlVAED, 30);
  cfg.lr = 0.0123456789;
  const auto back = ModelConfig::from_text(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.lr, cfg.lr);
  EXPECT_THROW(ModelConfig::from_text("variant = ml-VAE-D\nbogus = 3\n"), ConfigError);
  EXPECT_THROW(parse_variant("vae"), ConfigError);
}
