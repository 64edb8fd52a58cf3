#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "mlvae/errors.hpp"
#include "mlvae/ndcore/checkpoint.hpp"
#include "mlvae/ndcore/grad_check.hpp"
#include "mlvae/ndcore/layers.hpp"
#include "mlvae/ndcore/optim.hpp"
#include "mlvae/ndcore/tape.hpp"
#include "test_support.hpp"

using namespace mlvae;
using namespace mlvae::nd;

namespace {

std::mt19937_64 rng_for(std::uint64_t seed) { return std::mt19937_64(seed); }

void set_values(ParamStore<double>& s, ParamId id, std::vector<double> v) { s.value(id).data() = std::move(v); }

}  // namespace

TEST(Linear, ZeroInputZeroBiasGivesZero) {
  ParamStore<double> s;
  auto rng = rng_for(1);
  auto l = make_linear(s, "l", 3, 2, rng);
  Tape<double> t(s);
  auto y = t.linear(t.constant(std::vector<double>{0, 0, 0}), l);
  EXPECT_EQ(t.value(y), (std::vector<double>{0, 0}));
}

TEST(Linear, IdentityWeightPassesInputThrough) {
  ParamStore<double> s;
  auto rng = rng_for(1);
  auto l = make_linear(s, "l", 2, 2, rng);
  set_values(s, l.weight, {1, 0, 0, 1});
  Tape<double> t(s);
  auto y = t.linear(t.constant(std::vector<double>{-1.5, 4}), l);
  EXPECT_EQ(t.value(y), (std::vector<double>{-1.5, 4}));
}

TEST(Linear, HandMatrixMultiply) {
  ParamStore<double> s;
  auto rng = rng_for(1);
  auto l = make_linear(s, "l", 2, 2, rng);
  set_values(s, l.weight, {1, 1, 0, 1});
  set_values(s, l.bias, {0.5, 0});
  Tape<double> t(s);
  auto y = t.linear(t.constant(std::vector<double>{1, 2}), l);
  EXPECT_EQ(t.value(y), (std::vector<double>{3.5, 2}));
}

TEST(Linear, ShapeMismatchNamesParameter) {
  ParamStore<double> s;
  auto rng = rng_for(1);
  auto l = make_linear(s, "proj", 3, 2, rng);
  Tape<double> t(s);
  try {
    t.linear(t.constant(std::vector<double>{1, 2}), l);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("proj"), std::string::npos);
  }
}

TEST(Lstm, ZeroParametersZeroState) {
  ParamStore<double> s;
  auto rng = rng_for(2);
  auto l = make_lstm(s, "c", 3, 2, rng);
  s.zero_values();
  Tape<double> t(s);
  auto st = t.lstm_step(t.constant(std::vector<double>{0.3, -1, 2}),
                        {t.constant(std::vector<double>{0, 0}), t.constant(std::vector<double>{0, 0})}, l);
  EXPECT_EQ(t.value(st.h), (std::vector<double>{0, 0}));
  EXPECT_EQ(t.value(st.c), (std::vector<double>{0, 0}));
}

TEST(Lstm, SaturatedGatesScalarCell) {
  ParamStore<double> s;
  auto rng = rng_for(2);
  auto l = make_lstm(s, "c", 1, 1, rng);
  s.zero_values();
  // gate order input, forget, candidate, output; the candidate bias stays 0 so g = tanh(0)
  set_values(s, l.bias, {20, 20, 0, 20});
  Tape<double> t(s);
  auto st = t.lstm_step(t.constant(std::vector<double>{0}),
                        {t.constant(std::vector<double>{0}), t.constant(std::vector<double>{1})}, l);
  const double sg = 1.0 / (1.0 + std::exp(-20.0));
  EXPECT_NEAR(t.value(st.c)[0], 1.0, 1e-8);
  EXPECT_DOUBLE_EQ(t.value(st.c)[0], sg * 1.0);
  EXPECT_NEAR(t.value(st.h)[0], 0.7616, 1e-4);
  EXPECT_NEAR(t.value(st.h)[0], sg * std::tanh(sg), 1e-15);
}

TEST(Lstm, ForgetBiasInitializedToOne) {
  ParamStore<double> s;
  auto rng = rng_for(3);
  auto l = make_lstm(s, "c", 2, 3, rng);
  const auto& b = s.value(l.bias);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(b[j], (j >= 3 && j < 6) ? 1.0 : 0.0) << j;
}

TEST(Lstm, StateDimensionMismatch) {
  ParamStore<double> s;
  auto rng = rng_for(3);
  auto l = make_lstm(s, "c", 2, 3, rng);
  Tape<double> t(s);
  EXPECT_THROW(t.lstm_step(t.constant(std::vector<double>{1, 2}),
                           {t.constant(std::vector<double>{0, 0}), t.constant(std::vector<double>{0, 0, 0})}, l),
               DimensionError);
}

TEST(Conv, HandConvolutionClipsToZero) {
  ParamStore<double> s;
  auto rng = rng_for(4);
  auto c = make_conv1d(s, "cv", 1, {2}, 1, rng);
  set_values(s, c.weights[0], {1, -1});
  Tape<double> t(s);
  auto y = t.conv1d_maxpool(t.constant(std::vector<double>{1, 3}, 2), c);
  EXPECT_EQ(t.value(y), (std::vector<double>{0}));
}

TEST(Conv, SelectorFilterTakesColumnMax) {
  ParamStore<double> s;
  auto rng = rng_for(4);
  auto c = make_conv1d(s, "cv", 3, {1}, 2, rng);
  // filter 0 selects dimension 1, filter 1 selects dimension 2
  set_values(s, c.weights[0], {0, 1, 0, 0, 0, 1});
  Tape<double> t(s);
  std::vector<double> seq{0.1, -2, -1, 5, 0.7, -3, 2, 0.2, -0.5, -4, 1.5, -2};
  auto y = t.conv1d_maxpool(t.constant(seq, 4), c);
  EXPECT_EQ(t.value(y)[0], 1.5);
  EXPECT_EQ(t.value(y)[1], 0.0);
}

TEST(Conv, IdenticalRowsLengthInvariant) {
  ParamStore<double> s;
  auto rng = rng_for(5);
  auto c = make_conv1d(s, "cv", 3, {1, 2, 3}, 4, rng, 1.0);
  std::vector<double> row{0.4, -0.3, 0.9};
  std::vector<double> first;
  for (std::size_t len = 3; len <= 8; ++len) {
    std::vector<double> seq;
    for (std::size_t i = 0; i < len; ++i) seq.insert(seq.end(), row.begin(), row.end());
    Tape<double> t(s);
    const auto out = t.value(t.conv1d_maxpool(t.constant(seq, len), c));
    if (first.empty()) first = out;
    for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out[k], first[k], 1e-15) << len;
  }
}

TEST(Conv, ShortSequencePadsToWidestWindow) {
  ParamStore<double> s;
  auto rng = rng_for(5);
  auto c = make_conv1d(s, "cv", 1, {3}, 1, rng);
  set_values(s, c.weights[0], {2, 5, 7});
  Tape<double> t(s);
  auto y = t.conv1d_maxpool(t.constant(std::vector<double>{1.5}, 1), c);
  EXPECT_EQ(t.value(y), (std::vector<double>{3.0}));
}

TEST(Conv, EmptySequenceRejected) {
  ParamStore<double> s;
  auto rng = rng_for(5);
  auto c = make_conv1d(s, "cv", 1, {1}, 1, rng);
  Tape<double> t(s);
  std::vector<Var> none;
  EXPECT_THROW(t.conv1d_maxpool(t.stack_rows(none), c), PreconditionError);
}

TEST(Embed, OneHotRowLookup) {
  ParamStore<double> s;
  auto rng = rng_for(6);
  auto e = make_embedding(s, "emb", 4, 4, rng);
  set_values(s, e.table, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  Tape<double> t(s);
  EXPECT_EQ(t.value(t.embed(2, e)), (std::vector<double>{0, 0, 1, 0}));
}

TEST(Embed, RepeatedLookupGradientsSum) {
  ParamStore<double> s;
  auto rng = rng_for(6);
  auto e = make_embedding(s, "emb", 3, 2, rng);
  Tape<double> t(s);
  std::vector<Var> xs{t.embed(1, e), t.embed(1, e)};
  t.backward(t.sum(t.add_n(xs)));
  const auto& g = s.grad(e.table).data();
  EXPECT_EQ(g, (std::vector<double>{0, 0, 2, 2, 0, 0}));
}

TEST(Embed, OutOfRangeId) {
  ParamStore<double> s;
  auto rng = rng_for(6);
  auto e = make_embedding(s, "emb", 3, 2, rng);
  Tape<double> t(s);
  EXPECT_THROW(t.embed(3, e), IndexError);
}

TEST(SoftmaxXent, UniformLogits) {
  ParamStore<double> s;
  Tape<double> t(s);
  for (std::size_t v : {2u, 7u, 100u}) {
    auto loss = t.softmax_xent(t.constant(std::vector<double>(v, 0.25)), 1);
    EXPECT_NEAR(t.scalar(loss), std::log(static_cast<double>(v)), 1e-12);
  }
}

TEST(SoftmaxXent, SaturatedAndHandCase) {
  ParamStore<double> s;
  Tape<double> t(s);
  EXPECT_NEAR(t.scalar(t.softmax_xent(t.constant(std::vector<double>{40, -40}), 0)), 0.0, 1e-30);
  const double hand = t.scalar(t.softmax_xent(t.constant(std::vector<double>{1, 0}), 1));
  EXPECT_NEAR(hand, std::log1p(std::exp(1.0)), 1e-14);
  EXPECT_NEAR(hand, 1.3133, 1e-4);
}

TEST(SoftmaxXent, NonFiniteLogits) {
  ParamStore<double> s;
  Tape<double> t(s);
  EXPECT_THROW(t.softmax_xent(t.constant(std::vector<double>{1, std::nan("")}), 0), NumericError);
  EXPECT_THROW(t.softmax_xent(t.constant(std::vector<double>{INFINITY, 0}), 0), NumericError);
}

TEST(Backward, ConstantLossLeavesGradientsZero) {
  ParamStore<double> s;
  auto rng = rng_for(7);
  s.add("p", {3}, {Init::Uniform, 1}, rng);
  Tape<double> t(s);
  t.backward(t.sum(t.constant(std::vector<double>{1, 2})));
  for (double g : s.entries()[0].grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SumOfParametersGivesOnes) {
  ParamStore<double> s;
  auto rng = rng_for(7);
  auto a = s.add("a", {2, 3}, {Init::Uniform, 1}, rng);
  auto b = s.add("b", {4}, {Init::Uniform, 1}, rng);
  Tape<double> t(s);
  std::vector<Var> parts{t.sum(t.param(a)), t.sum(t.param(b))};
  t.backward(t.add_n(parts));
  for (const auto& e : s.entries()) {
    for (double g : e.grad.data()) EXPECT_EQ(g, 1.0);
  }
}

TEST(Backward, StaleVariableIsUsageError) {
  ParamStore<double> s;
  auto rng = rng_for(7);
  auto a = s.add("a", {2}, {Init::Uniform, 1}, rng);
  Tape<double> t(s);
  auto loss = t.sum(t.param(a));
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), UsageError);
}

TEST(Backward, ReadOnlyTapeCannotRecord) {
  ParamStore<double> s;
  const auto& cs = s;
  Tape<double> t(cs);
  EXPECT_FALSE(t.recording());
  EXPECT_THROW(t.set_recording(true), UsageError);
  auto v = t.sum(t.constant(std::vector<double>{1}));
  EXPECT_THROW(t.backward(v), UsageError);
}

TEST(Backward, ForwardIsBitDeterministic) {
  ParamStore<float> s;
  auto rng = std::mt19937_64(9);
  auto l = make_lstm(s, "c", 3, 4, rng);
  auto run = [&] {
    Tape<float> t(s);
    LstmState st{t.constant(std::vector<float>(4, 0.f)), t.constant(std::vector<float>(4, 0.f))};
    for (int i = 0; i < 5; ++i) st = t.lstm_step(t.constant(std::vector<float>{0.1f * i, -0.2f, 0.3f}), st, l);
    return t.value(st.h);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
}

TEST(GradCheck, QuadraticLoss) {
  ParamStore<double> s;
  auto rng = rng_for(8);
  auto p = s.add("p", {5}, {Init::Uniform, 2}, rng);
  auto report = grad_check(s, [&](Tape<double>& t) {
    auto v = t.param(p);
    return t.scale(t.sum(t.mul(v, v)), 0.5);
  });
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(GradCheck, UnreachableParameterHasZeroGradients) {
  ParamStore<double> s;
  auto rng = rng_for(8);
  auto p = s.add("p", {3}, {Init::Uniform, 1}, rng);
  s.add("unused", {2}, {Init::Uniform, 1}, rng);
  auto report = grad_check(s, [&](Tape<double>& t) { return t.sum(t.tanh(t.param(p))); });
  ASSERT_EQ(report.params.size(), 2u);
  EXPECT_EQ(report.params[1].name, "unused");
  EXPECT_EQ(report.params[1].max_rel_error, 0.0);
  EXPECT_EQ(report.params[1].analytic, 0.0);
  EXPECT_EQ(report.params[1].numeric, 0.0);
  EXPECT_TRUE(report.passed);
}

TEST(GradCheck, NonDeterministicBuilderRejected) {
  ParamStore<double> s;
  auto rng = rng_for(8);
  auto p = s.add("p", {3}, {Init::Uniform, 1}, rng);
  std::random_device rd;
  std::uniform_real_distribution<double> u(0.5, 1.5);
  EXPECT_THROW(grad_check(s, [&](Tape<double>& t) { return t.scale(t.sum(t.param(p)), u(rd)); }), UsageError);
}

// Every differentiable op composed into one scalar, checked against finite differences.
TEST(GradCheck, CompositeGraphAllOps) {
  ParamStore<double> s;
  auto rng = rng_for(10);
  auto emb = make_embedding(s, "emb", 5, 3, rng, 0.5);
  auto conv = make_conv1d(s, "cv", 3, {1, 2}, 3, rng, 0.5);
  auto cell = make_lstm(s, "cell", 6, 2, rng, 0.5);
  auto lin = make_linear(s, "lin", 2, 4, rng, 0.5);
  auto extra = s.add("extra", {4}, {Init::Uniform, 0.5}, rng);
  // keep the max-pool arguments away from ties and the ReLU kink
  for (auto id : conv.biases) s.value(id).fill(0.3);
  const std::vector<double> noise{0.3, -1.2};
  auto report = grad_check(s, [&](Tape<double>& t) {
    std::vector<Var> rows{t.embed(1, emb), t.embed(3, emb), t.embed(4, emb)};
    auto feat = t.conv1d_maxpool(t.stack_rows(rows), conv);
    LstmState st{t.tanh(t.slice(feat, 0, 2)), t.sigmoid(t.slice(feat, 2, 2))};
    st = t.lstm_step(feat, st, cell);
    st = t.lstm_step(feat, st, cell);
    auto logits = t.add(t.linear(st.h, lin), t.param(extra));
    auto xent = t.softmax_xent(logits, 2);
    auto mean = t.slice(logits, 0, 2);
    auto lv = t.clamp(t.slice(logits, 2, 2), -8, 8);
    auto z = t.reparameterize(mean, lv, noise);
    auto kl1 = t.kl_standard(mean, lv);
    auto kl2 = t.kl_gaussians(mean, lv, t.scale(st.c, 0.5), t.sub(st.h, st.c));
    std::vector<Var> cat{z, t.exp(t.scale(st.h, 0.3))};
    auto mix = t.sum(t.mul(t.concat(cat), t.relu(t.concat(cat))));
    std::vector<Var> parts{xent, kl1, kl2, mix};
    return t.add_n(parts);
  });
  for (const auto& p : report.params) EXPECT_LT(p.max_rel_error, 1e-5) << p.name;
  EXPECT_TRUE(report.passed);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore<double> s;
  auto rng = rng_for(11);
  auto p = s.add("p", {3}, {Init::Uniform, 1}, rng);
  const auto before = s.value(p).data();
  Adam<double> opt;
  for (int i = 0; i < 5; ++i) opt.update(s);
  EXPECT_EQ(s.value(p).data(), before);
  for (double m : opt.first_moments()[0]) EXPECT_EQ(m, 0.0);
  for (double v : opt.second_moments()[0]) EXPECT_EQ(v, 0.0);
}

TEST(Adam, OneStepFromZeroMoments) {
  ParamStore<double> s;
  auto p = s.add("p", DenseArray<double>({3}, std::vector<double>{1, 1, 1}));
  s.grad(p).data() = {0.5, -2, 1e-9};
  AdamConfig cfg;
  Adam<double> opt(cfg);
  opt.update(s);
  const std::vector<double> g{0.5, -2, 1e-9};
  for (std::size_t i = 0; i < 3; ++i) {
    // bias-corrected moments equal g and g^2 after one step
    const double expected = 1.0 - cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
    EXPECT_NEAR(s.value(p)[i], expected, 1e-15) << i;
    EXPECT_EQ(s.grad(p)[i], 0.0);
  }
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  // scalar simulation of the moment recursions
  const double g = -0.37, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  ParamStore<double> s;
  auto p = s.add("p", DenseArray<double>({1}, std::vector<double>{0}));
  Adam<double> opt;
  double prev = 0, step = 0;
  for (int k = 1; k <= 5000; ++k) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double oracle = lr * (m / (1 - std::pow(b1, k))) / (std::sqrt(v / (1 - std::pow(b2, k))) + eps);
    s.grad(p)[0] = g;
    opt.update(s);
    step = s.value(p)[0] - prev;
    prev = s.value(p)[0];
    ASSERT_NEAR(step, -oracle, 1e-15) << k;
  }
  EXPECT_NEAR(step, lr, 1e-9);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore<double> s;
  auto rng = rng_for(11);
  s.add("fine", {2}, {Init::Uniform, 1}, rng);
  auto bad = s.add("broken.w", {2}, {Init::Uniform, 1}, rng);
  s.grad(bad)[1] = std::nan("");
  Adam<double> opt;
  try {
    opt.update(s);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.w"), std::string::npos);
  }
}

TEST(Clip, RescalesToMaxNorm) {
  ParamStore<double> s;
  auto a = s.add("a", DenseArray<double>({2}, std::vector<double>{0, 0}));
  auto b = s.add("b", DenseArray<double>({1}, std::vector<double>{0}));
  s.grad(a).data() = {3, 0};
  s.grad(b).data() = {4};
  EXPECT_DOUBLE_EQ(clip_global_norm(s, 1.0), 5.0);
  EXPECT_NEAR(s.grad(a)[0], 0.6, 1e-15);
  EXPECT_NEAR(s.grad(b)[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm(s, 10.0), 1.0);
  EXPECT_NEAR(s.grad(a)[0], 0.6, 1e-15);
}

TEST(Checkpoint, ByteLayout) {
  ParamStore<float> s;
  s.add("ab", DenseArray<float>({2}, std::vector<float>{1.0f, -2.0f}));
  const auto bytes = serialize(s);
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 2 + 4 + 4 + 8 + 8);
  const std::vector<std::uint8_t> head{'M', 'L', 'V', '1', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 'a', 'b',
                                       0,   0,   0,   0,   1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
  float v[2];
  std::memcpy(v, bytes.data() + head.size(), 8);
  EXPECT_EQ(v[0], 1.0f);
  EXPECT_EQ(v[1], -2.0f);
}

TEST(Checkpoint, RoundTripAndCrossPrecision) {
  ParamStore<double> s;
  auto rng = rng_for(12);
  make_lstm(s, "cell", 3, 2, rng);
  make_linear(s, "lin", 2, 5, rng);
  const auto path = std::filesystem::temp_directory_path() / "mlvae_ckpt_roundtrip.bin";
  save_checkpoint(path, s);
  auto back = load_checkpoint<double>(path);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.entries()[i].name, s.entries()[i].name);
    EXPECT_EQ(back.entries()[i].value, s.entries()[i].value);
  }
  EXPECT_EQ(serialize(back), serialize(s));
  auto narrowed = load_checkpoint<float>(path);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& a = narrowed.entries()[i].value.data();
    const auto& b = s.entries()[i].value.data();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], static_cast<float>(b[k]));
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptBytesRejected) {
  ParamStore<float> s;
  s.add("x", DenseArray<float>({1}, std::vector<float>{1.0f}));
  auto bytes = serialize(s);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_ANY_THROW(deserialize<float>(bad_magic));
  bytes.pop_back();
  EXPECT_ANY_THROW(deserialize<float>(bytes));
}

TEST(Checkpoint, AssignValuesRequiresEveryEntry) {
  ParamStore<double> a, b;
  auto rng = rng_for(13);
  make_linear(a, "l", 2, 2, rng);
  make_linear(b, "l", 2, 2, rng);
  assign_values(a, b);
  EXPECT_EQ(serialize(a), serialize(b));
  ParamStore<double> c;
  make_linear(c, "other", 2, 2, rng);
  EXPECT_ANY_THROW(assign_values(a, c));
}
