#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "san/attention.hpp"
#include "san/gradcheck.hpp"

using namespace san;

namespace {

AttentionLayerParams ones_layer() {
  return {Tensor::matrix(1, 1, {1}, true), Tensor::matrix(1, 1, {1}, true), Tensor::vector({0}, true),
          Tensor::matrix(1, 1, {1}, true), Tensor::vector({0}, true)};
}

ModelConfig small_config(EncoderKind enc, std::size_t layers) {
  ModelConfig c;
  c.encoder = enc;
  c.vocab_size = 9;
  c.answer_count = 5;
  c.raw_dim = 6;
  c.embed_dim = 4;
  c.hidden_dim = 5;
  c.cnn_filters = {2, 2, 1};
  c.attention_dim = 3;
  c.layers = layers;
  c.dropout = 0;
  return c;
}

Tensor random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<real> n(0, 1);
  std::vector<real> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor({rows, cols}, v);
}

void randomize(const ParamList& params, std::uint64_t seed, real scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> u(-scale, scale);
  for (auto p : params)
    for (auto& v : p.tensor.mutable_values()) v = u(rng);
}

}  // namespace

TEST(AttentionStep, ScalarWorkedInstance) {
  Tensor v = Tensor::matrix(2, 1, {1, -1});
  Tensor u = Tensor::matrix(1, 1, {0});
  Tensor p = attention_step(v, u, ones_layer());
  // Oracle: logits ±tanh(1), two-way softmax.
  const double l = std::tanh(1.0);
  const double p0 = std::exp(l) / (std::exp(l) + std::exp(-l));
  EXPECT_NEAR(p[0], p0, 1e-12);
  EXPECT_NEAR(p[1], 1 - p0, 1e-12);
  // The commonly quoted four-digit figures are rounded from 0.821007.
  EXPECT_NEAR(p[0], 0.8211, 5e-4);
  EXPECT_NEAR(p[1], 0.1789, 5e-4);

  Refinement r = aggregate_and_refine(v, p, u);
  EXPECT_NEAR(r.attended.item(), p0 - (1 - p0), 1e-12);
  EXPECT_NEAR(r.attended.item(), 0.6422, 5e-4);
  EXPECT_EQ(r.query.item(), r.attended.item());
}

TEST(AttentionStep, ZeroWprobGivesUniform) {
  Rng rng(1);
  AttentionLayerParams layer = AttentionLayerParams::init(4, 3, rng);
  for (auto& w : layer.w_prob.mutable_values()) w = 0;
  Tensor p = attention_step(random_features(6, 3, 2), random_features(1, 3, 3), layer);
  for (real x : p.values()) EXPECT_NEAR(x, 1.0 / 6, 1e-15);
}

TEST(AttentionStep, DuplicateRegionsGetEqualWeight) {
  Rng rng(2);
  AttentionLayerParams layer = AttentionLayerParams::init(4, 3, rng);
  Tensor v = random_features(5, 3, 4);
  auto vals = v.mutable_values();
  for (std::size_t k = 0; k < 3; ++k) vals[3 * 3 + k] = vals[1 * 3 + k];
  Tensor p = attention_step(v, random_features(1, 3, 5), layer);
  EXPECT_EQ(p[1], p[3]);
}

TEST(AttentionStep, BatchedRowsMatchSingles) {
  Rng rng(3);
  AttentionLayerParams layer = AttentionLayerParams::init(4, 3, rng);
  Tensor v = random_features(8, 3, 6), u = random_features(2, 3, 7);
  Tensor both = attention_step(v, u, layer);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<real> rows(v.values().begin() + static_cast<std::ptrdiff_t>(b * 12),
                           v.values().begin() + static_cast<std::ptrdiff_t>(b * 12 + 12));
    std::vector<real> q(u.values().begin() + static_cast<std::ptrdiff_t>(b * 3),
                        u.values().begin() + static_cast<std::ptrdiff_t>(b * 3 + 3));
    Tensor single = attention_step(Tensor({4, 3}, rows), Tensor({1, 3}, q), layer);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(both.at(b, i), single[i], 1e-15);
  }
}

TEST(AttentionStep, DimensionMismatch) {
  Rng rng(4);
  AttentionLayerParams layer = AttentionLayerParams::init(4, 3, rng);
  EXPECT_THROW(attention_step(random_features(4, 2, 1), random_features(1, 3, 1), layer), DimensionError);
  EXPECT_THROW(attention_step(random_features(5, 3, 1), random_features(2, 3, 1), layer), DimensionError);
}

TEST(Aggregate, ConvexityAndOneHot) {
  Tensor same = Tensor::matrix(3, 2, {0.5, -1, 0.5, -1, 0.5, -1});
  Tensor p = Tensor::matrix(1, 3, {0.2, 0.3, 0.5});
  Tensor u = Tensor::matrix(1, 2, {1, 1});
  Refinement r = aggregate_and_refine(same, p, u);
  EXPECT_NEAR(r.attended[0], 0.5, 1e-15);
  EXPECT_NEAR(r.attended[1], -1, 1e-15);
  Tensor v = random_features(3, 2, 8);
  Refinement hot = aggregate_and_refine(v, Tensor::matrix(1, 3, {0, 1, 0}), u);
  EXPECT_EQ(hot.attended[0], v.at(1, 0));
  EXPECT_EQ(hot.attended[1], v.at(1, 1));
  EXPECT_EQ(hot.query[0], v.at(1, 0) + 1);
}

TEST(Aggregate, RejectsUnnormalized) {
  Tensor v = random_features(2, 1, 1);
  Tensor u = Tensor::matrix(1, 1, {0});
  EXPECT_THROW(aggregate_and_refine(v, Tensor::matrix(1, 2, {0.6, 0.6}), u), ContractError);
  EXPECT_THROW(aggregate_and_refine(v, Tensor::matrix(1, 2, {1.5, -0.5}), u), ContractError);
  EXPECT_NO_THROW(aggregate_and_refine(v, Tensor::matrix(1, 2, {0.5, 0.5 + 5e-7}), u));
}

// Full two-layer model with every dimension 1, against a hand-rolled scalar
// evaluation of encoder, projection, two attention layers and classifier.
TEST(Forward, TwoLayerScalarOracle) {
  ModelConfig c;
  c.vocab_size = 3;
  c.answer_count = 2;
  c.raw_dim = 1;
  c.embed_dim = 1;
  c.hidden_dim = 1;
  c.layers = 2;
  c.dropout = 0;
  Rng rng(5);
  SanModel m = SanModel::init(c, rng);
  randomize(m.parameters(), 77, 1.0);

  const std::vector<TokenId> q{2, 1};
  const std::vector<double> f{0.3, -0.8, 1.1, 0.0};
  auto val = [](const Tensor& t, std::size_t i = 0) { return static_cast<double>(t[i]); };
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  const LstmParams& L = *m.lstm;
  double h = 0, cell = 0;
  for (TokenId t : q) {
    const double x = L.embedding.at(t, 0);
    const double i = sig(val(L.w_xi) * x + val(L.w_hi) * h + val(L.b_i));
    const double fg = sig(val(L.w_xf) * x + val(L.w_hf) * h + val(L.b_f));
    const double o = sig(val(L.w_xo) * x + val(L.w_ho) * h + val(L.b_o));
    const double g = std::tanh(val(L.w_xc) * x + val(L.w_hc) * h + val(L.b_c));
    cell = fg * cell + i * g;
    h = o * std::tanh(cell);
  }
  std::vector<double> v(4);
  for (std::size_t r = 0; r < 4; ++r) v[r] = std::tanh(val(m.image.weight) * f[r] + val(m.image.bias));
  double u = h;
  std::vector<std::vector<double>> ps;
  for (const auto& layer : m.layers) {
    std::vector<double> logits(4);
    double z = 0;
    for (std::size_t r = 0; r < 4; ++r) {
      const double hid = std::tanh(val(layer.w_image) * v[r] + val(layer.w_query) * u + val(layer.b_attn));
      logits[r] = std::exp(val(layer.w_prob) * hid + val(layer.b_prob));
      z += logits[r];
    }
    double att = 0;
    for (std::size_t r = 0; r < 4; ++r) {
      logits[r] /= z;
      att += logits[r] * v[r];
    }
    ps.push_back(logits);
    u += att;
  }
  const double a0 = val(m.classifier.weight, 0) * u + val(m.classifier.bias, 0);
  const double a1 = val(m.classifier.weight, 1) * u + val(m.classifier.bias, 1);
  const double p0 = std::exp(a0) / (std::exp(a0) + std::exp(a1));

  ForwardResult fr = forward(m, Tensor({4, 1}, std::vector<real>(f.begin(), f.end())), TokenBatch::from({q}));
  EXPECT_NEAR(fr.trace.question.item(), h, 1e-12);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(fr.trace.attention[k][r], ps[k][r], 1e-12);
  EXPECT_NEAR(fr.trace.queries[1].item(), u, 1e-12);
  EXPECT_NEAR(fr.trace.answer_probs[0], p0, 1e-12);
}

TEST(Forward, OneLayerEqualsManualComposition) {
  ModelConfig c = small_config(EncoderKind::lstm, 1);
  Rng rng(6);
  SanModel m = SanModel::init(c, rng);
  Tensor f = random_features(4, 6, 9);
  TokenBatch tb = TokenBatch::from({{2, 3, 4}});
  ForwardResult fr = forward(m, f, tb);
  Tensor vq = encode_lstm(tb, *m.lstm);
  Tensor v = project_regions(f, m.image);
  Tensor p = attention_step(v, vq, m.layers[0]);
  Refinement r = aggregate_and_refine(v, p, vq);
  Tensor probs = ops::softmax(ops::add_rows(ops::matmul_nt(r.query, m.classifier.weight), m.classifier.bias), 1);
  EXPECT_EQ(fr.trace.answer_probs.data(), probs.data());
}

TEST(Forward, TraceInvariants) {
  std::mt19937_64 pick(1);
  for (int trial = 0; trial < 40; ++trial) {
    const EncoderKind enc = trial % 2 ? EncoderKind::cnn : EncoderKind::lstm;
    ModelConfig c = small_config(enc, 1 + trial % 4);
    Rng rng(static_cast<std::uint64_t>(trial));
    SanModel m = SanModel::init(c, rng);
    randomize(m.parameters(), static_cast<std::uint64_t>(trial) + 100, 2.0);
    const std::size_t batch = 1 + trial % 3, regions = 4 + (trial % 2) * 5;
    std::vector<std::vector<TokenId>> qs;
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<TokenId> q(1 + pick() % 6);
      for (auto& t : q) t = static_cast<TokenId>(pick() % c.vocab_size);
      qs.push_back(q);
    }
    ForwardResult fr = forward(m, random_features(batch * regions, 6, static_cast<std::uint64_t>(trial)), TokenBatch::from(qs));
    const auto& tr = fr.trace;
    ASSERT_EQ(tr.layers(), c.layers);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 1; k <= c.layers; ++k) {
        auto p = tr.attention_of(k, b);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
        for (real x : p) {
          EXPECT_GE(x, 0);
          EXPECT_LE(x, 1);
        }
      }
      real total = 0;
      for (std::size_t a = 0; a < c.answer_count; ++a) total += tr.answer_probs.at(b, a);
      EXPECT_NEAR(total, 1, 1e-9);
      for (std::size_t j = 0; j < c.question_dim(); ++j) {
        real telescoped = tr.question.at(b, j);
        for (std::size_t k = 0; k < c.layers; ++k) {
          telescoped += tr.attended[k].at(b, j);
          const real prev = k == 0 ? tr.question.at(b, j) : tr.queries[k - 1].at(b, j);
          EXPECT_EQ(tr.queries[k].at(b, j), tr.attended[k].at(b, j) + prev);
        }
        EXPECT_NEAR(tr.queries.back().at(b, j), telescoped, 1e-12);
      }
    }
  }
}

TEST(Forward, RegionPermutationEquivariance) {
  ModelConfig c = small_config(EncoderKind::lstm, 2);
  Rng rng(7);
  SanModel m = SanModel::init(c, rng);
  Tensor f = random_features(5, 6, 11);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<real> permuted;
  for (std::size_t i : perm)
    for (std::size_t k = 0; k < 6; ++k) permuted.push_back(f.at(i, k));
  TokenBatch tb = TokenBatch::from({{5, 6, 2}});
  ForwardResult a = forward(m, f, tb);
  ForwardResult b = forward(m, Tensor({5, 6}, permuted), tb);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(b.trace.attention[k][i], a.trace.attention[k][perm[i]], 1e-12);
  }
  for (std::size_t j = 0; j < a.trace.answer_probs.size(); ++j) {
    EXPECT_NEAR(a.trace.answer_probs[j], b.trace.answer_probs[j], 1e-12);
  }
}

TEST(Forward, DropoutOnlyInTrainMode) {
  ModelConfig c = small_config(EncoderKind::lstm, 2);
  c.dropout = 0.5;
  Rng rng(8);
  SanModel m = SanModel::init(c, rng);
  Tensor f = random_features(4, 6, 12);
  TokenBatch tb = TokenBatch::from({{2, 3}});
  EXPECT_EQ(forward(m, f, tb).logits.data(), forward(m, f, tb).logits.data());
  Rng drop(1);
  EXPECT_THROW(forward(m, f, tb, {Mode::train, nullptr}), ContractError);
  EXPECT_NE(forward(m, f, tb, {Mode::train, &drop}).logits.data(), forward(m, f, tb).logits.data());
}

TEST(Forward, InvalidTokenIsVocabError) {
  Rng rng(9);
  SanModel m = SanModel::init(small_config(EncoderKind::cnn, 1), rng);
  EXPECT_THROW(forward(m, random_features(4, 6, 1), TokenBatch::from({{2, 99}})), VocabError);
  EXPECT_THROW(forward(m, random_features(4, 5, 1), TokenBatch::from({{2}})), DimensionError);
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  const std::vector<real> a{0.1, 0.7, 0.2}, tie{0.5, 0.5}, hot{0, 0, 1, 0};
  EXPECT_EQ(predict_answer(a), 1u);
  EXPECT_EQ(predict_answer(tie), 0u);
  EXPECT_EQ(predict_answer(hot), 2u);
  EXPECT_THROW(predict_answer(std::vector<real>{}), ContractError);
}

TEST(Predict, ShiftedLogitsKeepArgmax) {
  Tensor logits = random_features(3, 6, 13);
  Tensor shifted = ops::add_rows(logits, Tensor::vector(std::vector<real>(6, 4.25)));
  EXPECT_EQ(predict_answers(ops::softmax(logits, 1)), predict_answers(ops::softmax(shifted, 1)));
}

TEST(Model, TagAndConfigRoundTrip) {
  ModelConfig c = small_config(EncoderKind::cnn, 2);
  EXPECT_EQ(c.tag(), "SAN(2, CNN)");
  EXPECT_EQ(small_config(EncoderKind::lstm, 1).tag(), "SAN(1, LSTM)");
  ModelConfig back = ModelConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(back.to_key_values(), c.to_key_values());
  EXPECT_THROW(small_config(EncoderKind::lstm, 5).validate(), ConfigError);
  auto kv = c.to_key_values();
  kv["bogus"] = "1";
  EXPECT_THROW(ModelConfig::from_key_values(kv), ConfigError);
}

TEST(Model, CnnQuestionDimensionIs640ByDefault) {
  ModelConfig c = small_config(EncoderKind::cnn, 1);
  c.cnn_filters = kDefaultCnnFilters;
  EXPECT_EQ(c.question_dim(), 640u);
  Rng rng(10);
  SanModel m = SanModel::init(c, rng);
  Tensor vq = m.encode_question(TokenBatch::from({{2, 3, 4}}));
  EXPECT_EQ(vq.shape(), (Shape{1, 640}));
  EXPECT_EQ(m.image.weight.shape(), (Shape{640, 6}));
}

TEST(Model, CloneIsDeep) {
  Rng rng(11);
  SanModel m = SanModel::init(small_config(EncoderKind::lstm, 2), rng);
  SanModel copy = m.clone();
  auto a = m.parameters(), b = copy.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.data(), b[i].tensor.data());
    EXPECT_FALSE(a[i].tensor.same_storage(b[i].tensor));
  }
}

TEST(Model, ParametersAreIndependentPerLayer) {
  Rng rng(12);
  SanModel m = SanModel::init(small_config(EncoderKind::lstm, 3), rng);
  EXPECT_FALSE(m.layers[0].w_image.same_storage(m.layers[1].w_image));
  EXPECT_NE(m.layers[0].w_image.data(), m.layers[1].w_image.data());
}

class FullModelGrad : public ::testing::TestWithParam<std::tuple<EncoderKind, std::size_t>> {};

TEST_P(FullModelGrad, MatchesFiniteDifferences) {
  const auto [enc, layers] = GetParam();
  Rng rng(20 + layers);
  SanModel m = SanModel::init(small_config(enc, layers), rng);
  Tensor f = random_features(4 * 4, 6, 21);
  TokenBatch tb = TokenBatch::from({{2, 3, 4}, {5, 6}, {7, 8, 2, 3}, {4}});
  const std::vector<std::size_t> targets{0, 3, 1, 4};
  auto loss = [&] { return ops::cross_entropy(forward(m, f, tb).logits, targets); };
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& p : m.parameters()) {
    if (p.name.ends_with(".b_prob")) {
      // Shift-invariant: the exact gradient is zero, differences are round-off.
      auto r = finite_diff_check(loss, {p.tensor}, 1e-5);
      EXPECT_LT(std::abs(r.analytic), 1e-12) << p.name;
      EXPECT_LT(std::abs(r.numeric), 1e-9) << p.name;
      continue;
    }
    params.push_back(p.tensor);
    names.push_back(p.name);
  }
  auto r = finite_diff_check(loss, params, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4) << names[r.worst_tensor] << "[" << r.worst_index << "] analytic "
                                        << r.analytic << " numeric " << r.numeric;
}

INSTANTIATE_TEST_SUITE_P(Encoders, FullModelGrad,
                         ::testing::Combine(::testing::Values(EncoderKind::lstm, EncoderKind::cnn),
                                            ::testing::Values(std::size_t{1}, std::size_t{2}, std::size_t{3})),
                         [](const auto& info) {
                           return encoder_name(std::get<0>(info.param)) + "_K" +
                                  std::to_string(std::get<1>(info.param));
                         });
