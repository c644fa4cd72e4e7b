#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "csiva/trainer.hpp"
#include "oracles.hpp"

using namespace csiva;
using num::Graph;
using num::Shape;
using num::Tensor;

namespace {

ModelConfig tiny_config(int n_max = 4, int k = 3) {
  ModelConfig c;
  c.n_nodes_max = n_max;
  c.hidden = 16;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.heads = 2;
  c.value_mlp_hidden = 8;
  c.k = k;
  return c;
}

DataSpec tiny_data(int n = 3, int s = 12) {
  DataSpec d;
  d.n_nodes = n;
  d.samples = s;
  d.fraction = 0.5;
  return d;
}

}  // namespace

TEST(Model, SummaryColumnValueHalfIsZero) {
  CsivaModel<double> m(tiny_config(), 1);
  Dataset d = make_pair(tiny_data(), 100);
  Graph<double> g;
  g.inference = true;
  Tensor<double> x = m.embed(g, d);
  // (N+1) x (S+1) x H; the value half of the last column is zeroed.
  ASSERT_EQ(x.shape().d[0], d.n + 1);
  ASSERT_EQ(x.shape().d[1], d.s + 1);
  int h = m.cfg.hidden;
  for (int row = 0; row <= d.n; ++row)
    for (int e = 0; e < h / 2; ++e) {
      size_t idx = (static_cast<size_t>(row) * (d.s + 1) + d.s) * h + e;
      EXPECT_EQ(x.val()[idx], 0.0);
    }
}

TEST(Model, EqualValuesGiveIdenticalCells) {
  CsivaModel<double> m(tiny_config(), 2);
  Dataset d = make_pair(tiny_data(3, 6), 101);
  // Make samples 0 and 3 identical, markers included.
  for (int node = 0; node < d.n; ++node)
    d.values[static_cast<size_t>(3) * d.n + node] = d.values[node];
  d.markers[3] = d.markers[0];
  Graph<double> g;
  g.inference = true;
  Tensor<double> x = m.embed(g, d);
  int h = m.cfg.hidden;
  for (int row = 0; row <= d.n; ++row)
    for (int e = 0; e < h; ++e) {
      size_t a = (static_cast<size_t>(row) * (d.s + 1) + 0) * h + e;
      size_t b = (static_cast<size_t>(row) * (d.s + 1) + 3) * h + e;
      EXPECT_EQ(x.val()[a], x.val()[b]);
    }
}

TEST(Model, IdentityHalfMarksRowsNotSamples) {
  CsivaModel<double> m(tiny_config(), 3);
  Dataset d = make_pair(tiny_data(3, 5), 102);
  Graph<double> g;
  g.inference = true;
  Tensor<double> x = m.embed(g, d);
  int h = m.cfg.hidden;
  // Same node, different samples: identity half identical.
  for (int e = h / 2; e < h; ++e) {
    size_t a = (static_cast<size_t>(1) * (d.s + 1) + 0) * h + e;
    size_t b = (static_cast<size_t>(1) * (d.s + 1) + 4) * h + e;
    EXPECT_EQ(x.val()[a], x.val()[b]);
  }
  // Different nodes: identity halves differ somewhere.
  double diff = 0;
  for (int e = h / 2; e < h; ++e) {
    size_t a = (static_cast<size_t>(0) * (d.s + 1) + 2) * h + e;
    size_t b = (static_cast<size_t>(2) * (d.s + 1) + 2) * h + e;
    diff += std::abs(x.val()[a] - x.val()[b]);
  }
  EXPECT_GT(diff, 1e-3);
}

TEST(Model, EncodeHandlesSingleSample) {
  CsivaModel<double> m(tiny_config(), 4);
  Dataset d = make_pair(tiny_data(3, 1), 103);
  Graph<double> g;
  g.inference = true;
  Tensor<double> s = m.encode(g, d);
  EXPECT_EQ(s.shape().d[0], 3);
  EXPECT_EQ(s.shape().d[1], m.cfg.hidden);
}

TEST(Model, SampleAttentionAblationChangesSummary) {
  CsivaModel<double> m(tiny_config(), 5);
  Dataset d = make_pair(tiny_data(), 104);
  Graph<double> g1;
  g1.inference = true;
  std::vector<double> with = m.encode(g1, d).val();
  m.cfg.sample_attention = false;
  Graph<double> g2;
  g2.inference = true;
  std::vector<double> without = m.encode(g2, d).val();
  double mx = 0;
  for (size_t i = 0; i < with.size(); ++i) mx = std::max(mx, std::abs(with[i] - without[i]));
  EXPECT_GT(mx, 1e-3);
}

TEST(Model, SamplePermutationLeavesSummaryAlone) {
  CsivaModel<double> m(tiny_config(), 6);
  Dataset d = make_pair(tiny_data(3, 10), 105);
  Graph<double> g1;
  g1.inference = true;
  std::vector<double> before = m.encode(g1, d).val();
  // Reverse the sample order, values and markers together.
  Dataset p = d;
  for (int r = 0; r < d.s; ++r) {
    p.markers[r] = d.markers[d.s - 1 - r];
    for (int node = 0; node < d.n; ++node)
      p.values[static_cast<size_t>(r) * d.n + node] =
          d.values[static_cast<size_t>(d.s - 1 - r) * d.n + node];
  }
  Graph<double> g2;
  g2.inference = true;
  std::vector<double> after = m.encode(g2, p).val();
  for (size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-9);
}

TEST(Model, PredictionProbabilitiesAreValid) {
  CsivaModel<double> m(tiny_config(), 7);
  Dataset d = make_pair(tiny_data(), 106);
  GraphPrediction p = m.predict(d);
  ASSERT_EQ(static_cast<int>(p.probs.size()), d.n * d.n);
  for (double v : p.probs) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LE(p.loglik, 0.0);
}

TEST(Model, GreedyIsDeterministicBitwise) {
  CsivaModel<double> m(tiny_config(), 8);
  Dataset d = make_pair(tiny_data(), 107);
  GraphPrediction a = m.predict(d);
  GraphPrediction b = m.predict(d);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.greedy, b.greedy);
  EXPECT_EQ(a.loglik, b.loglik);
}

TEST(Model, GreedyAgreesWithTeacherOnItsOwnOutput) {
  // Feeding the greedy decode back as the teacher sequence must reproduce the
  // greedy probabilities exactly: both paths are the same computation.
  CsivaModel<double> m(tiny_config(), 9);
  Dataset d = make_pair(tiny_data(), 108);
  GraphPrediction p = m.predict(d);
  Graph<double> g;
  g.inference = true;
  Tensor<double> summary = m.encode(g, d);
  Dataset alt = d;
  alt.truth = p.greedy;
  Tensor<double> probs = m.decode_teacher(g, summary, alt.truth);
  for (size_t i = 0; i < p.probs.size(); ++i) EXPECT_DOUBLE_EQ(p.probs[i], probs.val()[i]);
}

TEST(Model, TeacherLoglikMatchesLoopOracle) {
  CsivaModel<double> m(tiny_config(), 10);
  Dataset d = make_pair(tiny_data(), 109);
  Graph<double> g;
  g.inference = true;
  Tensor<double> probs = m.decode_teacher(g, m.encode(g, d), d.truth);
  std::vector<double> pv(probs.val().begin(), probs.val().end());
  double want = -oracle::bernoulli_ce(pv, d.truth.bits);
  EXPECT_NEAR(m.teacher_loglik(d), want, 1e-10);
}

TEST(Model, TeacherRejectsMismatchedTruth) {
  CsivaModel<double> m(tiny_config(), 11);
  Dataset d = make_pair(tiny_data(3), 110);
  Graph<double> g;
  g.inference = true;
  Tensor<double> summary = m.encode(g, d);
  EXPECT_THROW(m.decode_teacher(g, summary, AdjacencyMatrix(4)), ValidationError);
}

TEST(Model, AuxHeadShapeAndDetachedDecoder) {
  CsivaModel<double> m(tiny_config(), 12);
  Dataset d = make_pair(tiny_data(), 111);
  Graph<double> g;
  Tensor<double> summary = m.encode(g, d);
  Tensor<double> logits = m.aux_logits(g, summary, d.n);
  ASSERT_EQ(logits.shape().d[0], d.n);
  ASSERT_EQ(logits.shape().d[1], 2 * d.n);
  Tensor<double> loss = aux_loss(g, logits, d.truth);
  g.backward(loss);
  // Aux gradients flow to the encoder but never touch the decoder.
  double enc_grad = 0, dec_grad = 0;
  for (const num::Param<double>& p : m.params()) {
    double s = 0;
    for (double v : p.g) s += std::abs(v);
    if (p.name.rfind("dec.", 0) == 0)
      dec_grad += s;
    else if (p.name.rfind("enc.", 0) == 0 || p.name.rfind("value_mlp", 0) == 0)
      enc_grad += s;
  }
  EXPECT_GT(enc_grad, 0.0);
  EXPECT_EQ(dec_grad, 0.0);
}

TEST(Model, ZeroedAuxHeadPredictsHalf) {
  CsivaModel<double> m(tiny_config(), 13);
  for (const char* name : {"aux.w2", "aux.b2"}) {
    num::Param<double>* p = m.params().find(name);
    ASSERT_NE(p, nullptr);
    for (double& w : p->w) w = 0.0;
  }
  Dataset d = make_pair(tiny_data(), 112);
  Graph<double> g;
  g.inference = true;
  Tensor<double> logits = m.aux_logits(g, m.encode(g, d), d.n);
  for (double v : logits.val()) EXPECT_EQ(v, 0.0);
  // Cross entropy at logits 0 is exactly 2 n^2 ln 2.
  Graph<double> g2;
  Tensor<double> l2 = num::constant(g2, Shape::mat(d.n, 2 * d.n),
                                    std::vector<double>(static_cast<size_t>(d.n) * 2 * d.n, 0.0));
  double ce = aux_loss(g2, l2, d.truth).scalar();
  EXPECT_NEAR(ce, 2.0 * d.n * d.n * std::log(2.0), 1e-9);
}

TEST(Model, CheckpointRoundTripsBitwise) {
  CsivaModel<double> m(tiny_config(), 14);
  Dataset d = make_pair(tiny_data(), 113);
  GraphPrediction before = m.predict(d);
  std::filesystem::path path = std::filesystem::temp_directory_path() / "csiva_model_rt.ckpt";
  m.save(path);
  CsivaModel<double> r = CsivaModel<double>::load(path);
  EXPECT_EQ(r.cfg.to_text(), m.cfg.to_text());
  GraphPrediction after = r.predict(d);
  EXPECT_EQ(before.probs, after.probs);
  EXPECT_EQ(before.greedy, after.greedy);
  std::filesystem::remove(path);
}

TEST(Model, CapabilityChecks) {
  CsivaModel<double> m(tiny_config(4, 3), 15);
  DataSpec big = tiny_data(5);
  EXPECT_THROW(m.check_compatible(make_pair(big, 114)), CapabilityError);
  DataSpec cont = tiny_data(3);
  cont.family = Family::linear;
  EXPECT_THROW(m.check_compatible(make_pair(cont, 115)), CapabilityError);
  DataSpec wide = tiny_data(3);
  wide.k = 4;
  EXPECT_THROW(m.check_compatible(make_pair(wide, 116)), CapabilityError);
  EXPECT_NO_THROW(m.check_compatible(make_pair(tiny_data(3), 117)));
  // Smaller K than the model supports is fine: one-hot width is the model's K.
  DataSpec narrow = tiny_data(3);
  narrow.k = 2;
  EXPECT_NO_THROW(m.check_compatible(make_pair(narrow, 118)));
}

TEST(Model, ConfigValidationAndPresets) {
  ModelConfig c = tiny_config();
  c.hidden = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.encoder_layers = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::preset("galaxy"), ConfigError);
  ModelConfig desk = ModelConfig::preset("desk");
  EXPECT_EQ(desk.hidden, 32);
  EXPECT_EQ(desk.encoder_layers, 4);
  EXPECT_EQ(desk.decoder_layers, 2);
  ModelConfig main = ModelConfig::preset("main-v1");
  EXPECT_EQ(main.hidden, 128);
  EXPECT_EQ(main.encoder_layers, 12);
  ModelConfig rt = ModelConfig::from_text(main.to_text());
  EXPECT_EQ(rt.to_text(), main.to_text());
}

TEST(Model, InitialLossNearChance) {
  // A fresh model should start close to independent coin flips per entry.
  CsivaModel<double> m(tiny_config(5, 3), 16);
  DataSpec spec = tiny_data(5, 30);
  double ce = 0;
  const int pairs = 8;
  for (int i = 0; i < pairs; ++i) ce += -m.teacher_loglik(make_pair(spec, 200 + i)) / pairs;
  double chance = 25.0 * std::log(2.0);
  EXPECT_GT(ce, 0.6 * chance);
  EXPECT_LT(ce, 1.4 * chance);
}
