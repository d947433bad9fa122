#include "fixtures.hpp"

#include "genvideo/attention.hpp"
#include "genvideo/error.hpp"
#include "genvideo/finetune.hpp"

#include <gtest/gtest.h>

using namespace gvtest;

namespace {

AttentionDenoiserConfig small_config(Index embed_dim = 12) {
  AttentionDenoiserConfig c;
  c.channels = 2;
  c.width = 6;
  c.time_dim = 4;
  c.embed_dim = embed_dim;
  c.init_seed = 99;
  return c;
}

RegionConditioning random_region(Index frames, Index dim, std::mt19937_64& rng, bool masked) {
  std::normal_distribution<double> g;
  auto mat = [&](Index r) {
    Eigen::MatrixXd m(r, dim);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  RegionConditioning rc;
  rc.background = {mat(3), mat(frames)};
  rc.foreground = {mat(2), mat(1)};
  if (masked) rc.mask = MaskSequence{random_mask(frames, 3, 3, rng), 0.5};
  return rc;
}

}  // namespace

TEST(Attention, StContextIsFirstAndPrevious) {
  EXPECT_EQ(st_context_frames(0), (std::vector<Index>{0}));
  EXPECT_EQ(st_context_frames(1), (std::vector<Index>{0}));
  EXPECT_EQ(st_context_frames(2), (std::vector<Index>{0, 1}));
  EXPECT_EQ(st_context_frames(7), (std::vector<Index>{0, 6}));
}

TEST(Attention, SpatioTemporalDependsOnlyOnContextFrames) {
  InflatedAttention a(AttentionInflationSpec::faithful(), 5, 7, 3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  InflatedAttention::Frames h(6, Eigen::MatrixXd(4, 5));
  for (auto& m : h)
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  const auto base = a.spatio_temporal(h);
  for (Index k = 0; k < 6; ++k) {
    auto p = h;
    p[static_cast<std::size_t>(k)].array() += 0.5;
    const auto out = a.spatio_temporal(p);
    for (Index n = 0; n < 6; ++n) {
      const auto ctx = st_context_frames(n);
      const bool depends = k == n || std::find(ctx.begin(), ctx.end(), k) != ctx.end();
      const double diff = (out[static_cast<std::size_t>(n)] - base[static_cast<std::size_t>(n)])
                              .cwiseAbs()
                              .maxCoeff();
      if (depends) {
        EXPECT_GT(diff, 1e-9) << "frame " << n << " perturbed " << k;
      } else {
        EXPECT_EQ(diff, 0.0) << "frame " << n << " perturbed " << k;
      }
    }
  }
}

TEST(Attention, SoftmaxRowsAndBackwardMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  auto rnd = [&](Index r, Index c) {
    Eigen::MatrixXd m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  const Eigen::MatrixXd q = rnd(3, 4), k = rnd(5, 4), v = rnd(5, 2), w = rnd(3, 2);
  Eigen::MatrixXd p;
  attention(q, k, v, &p);
  EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  const AttentionGrad grad = attention_backward(w, q, k, v, p);
  auto loss = [&](const Eigen::MatrixXd& qq, const Eigen::MatrixXd& kk, const Eigen::MatrixXd& vv) {
    return (attention(qq, kk, vv).array() * w.array()).sum();
  };
  const double h = 1e-6;
  for (Index i = 0; i < q.size(); ++i) {
    Eigen::MatrixXd a = q, b = q;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_NEAR(grad.dq.data()[i], (loss(a, k, v) - loss(b, k, v)) / (2 * h), 1e-7);
  }
  for (Index i = 0; i < k.size(); ++i) {
    Eigen::MatrixXd a = k, b = k;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_NEAR(grad.dk.data()[i], (loss(q, a, v) - loss(q, b, v)) / (2 * h), 1e-7);
  }
  for (Index i = 0; i < v.size(); ++i) {
    Eigen::MatrixXd a = v, b = v;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_NEAR(grad.dv.data()[i], (loss(q, k, a) - loss(q, k, b)) / (2 * h), 1e-7);
  }
}

TEST(AttentionDenoiser, ParameterCensus) {
  const AttentionDenoiser model(small_config());
  const auto params = model.parameters();
  std::vector<std::string> trainable;
  for (const auto& p : params)
    if (p.trainable) trainable.push_back(p.name);
  EXPECT_EQ(trainable, (std::vector<std::string>{"st_attn.q", "cross_attn.q", "t_attn.q",
                                                  "t_attn.k", "t_attn.v", "t_attn.o"}));
  for (const auto& p : params) {
    if (p.name.rfind("conv_in", 0) == 0 || p.name.rfind("conv_out", 0) == 0 ||
        p.name.rfind("st_attn.k", 0) == 0 || p.name.rfind("cross_attn.v", 0) == 0) {
      EXPECT_FALSE(p.trainable) << p.name;
    }
  }
  EXPECT_EQ(trainable_parameter_count(model), 6 * 6 * 6);
}

TEST(AttentionDenoiser, TemporalAttentionOffDropsItsParameters) {
  AttentionDenoiserConfig c = small_config();
  c.inflation.t_attn_enabled = false;
  const AttentionDenoiser model(c);
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("t_attn", 0) == 0) {
      EXPECT_EQ(p.value.size(), 0);
      EXPECT_FALSE(p.trainable);
    }
  }
  EXPECT_FALSE(c.inflation.is_faithful());
  EXPECT_TRUE(AttentionInflationSpec::faithful().is_faithful());
}

TEST(AttentionDenoiser, OutputShapesAndDeterminism) {
  const AttentionDenoiser a(small_config()), b(small_config());
  EXPECT_EQ(a.config_hash(), b.config_hash());
  AttentionDenoiserConfig other = small_config();
  other.init_seed = 100;
  EXPECT_NE(AttentionDenoiser(other).config_hash(), a.config_hash());
  std::mt19937_64 rng(8);
  const Tensor4d z = random_normal(3, 2, 3, 3, rng);
  const auto rc = random_region(3, 12, rng, true);
  const DenoiserOutput o1 = a.denoise({z, 7}, 7, rc), o2 = b.denoise({z, 7}, 7, rc);
  EXPECT_EQ(o1.eps, o2.eps);
  EXPECT_TRUE(o1.eps.same_shape(z));
  EXPECT_EQ(o1.features(kCorrectionBlock).channels(), 6);
  EXPECT_EQ(o1.features("conv_in").height(), 3);
}

TEST(AttentionDenoiser, GradientsMatchFiniteDifferences) {
  AttentionDenoiser model(small_config());
  // Give the zero-initialised output projection some weight so every path is live.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 0.3);
  for (const auto& p : model.parameters()) {
    if (p.name == "t_attn.o") {
      Eigen::MatrixXd m = p.value;
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
      model.set_parameter(p.name, m);
    }
  }
  const Tensor4d z = random_normal(3, 2, 3, 3, rng), target = random_normal(3, 2, 3, 3, rng);
  const auto rc = random_region(3, 12, rng, true);
  std::vector<Eigen::MatrixXd> grads;
  model.loss_and_gradients({z, 9}, 9, rc, target, &grads);
  const auto params = model.parameters();
  ASSERT_EQ(grads.size(), params.size());
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) {
      EXPECT_TRUE(grads[i].size() == 0 || grads[i].isZero(0.0)) << params[i].name;
      continue;
    }
    for (Index e = 0; e < params[i].value.size(); e += 5) {
      Eigen::MatrixXd plus = params[i].value, minus = params[i].value;
      plus.data()[e] += h;
      minus.data()[e] -= h;
      model.set_parameter(params[i].name, plus);
      const double lp = model.loss_and_gradients({z, 9}, 9, rc, target, nullptr);
      model.set_parameter(params[i].name, minus);
      const double lm = model.loss_and_gradients({z, 9}, 9, rc, target, nullptr);
      model.set_parameter(params[i].name, params[i].value);
      const double fd = (lp - lm) / (2 * h);
      EXPECT_NEAR(grads[i].data()[e], fd, 1e-6 * std::max(1.0, std::abs(fd)))
          << params[i].name << "[" << e << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 40);
}

TEST(AttentionDenoiser, MaskSelectsImageEmbedding) {
  const AttentionDenoiser model(small_config());
  std::mt19937_64 rng(3);
  const Tensor4d z = random_normal(2, 2, 3, 3, rng);
  auto rc = random_region(2, 12, rng, false);
  rc.mask = MaskSequence::filled(2, 3, 3, 1.0);
  const auto all_fg = model.denoise({z, 4}, 4, rc).eps;
  RegionConditioning swapped = rc;
  swapped.background.image = rc.foreground.image;
  swapped.background.image.array() += 1.0;
  EXPECT_EQ(model.denoise({z, 4}, 4, swapped).eps, all_fg);
  rc.mask = MaskSequence::filled(2, 3, 3, 0.0);
  EXPECT_NE(model.denoise({z, 4}, 4, rc).eps, all_fg);
}

TEST(AttentionDenoiser, SetParameterChecks) {
  AttentionDenoiser model(small_config());
  EXPECT_THROW(model.set_parameter("nope", Eigen::MatrixXd::Zero(1, 1)), Error);
  EXPECT_THROW(model.set_parameter("st_attn.q", Eigen::MatrixXd::Zero(1, 1)), Error);
}

TEST(AttentionGroup, NamesRoundTrip) {
  for (auto g : {AttentionGroup::st_attn_query, AttentionGroup::cross_attn_query,
                 AttentionGroup::t_attn_all}) {
    EXPECT_EQ(parse_attention_group(to_string(g)), g);
  }
  EXPECT_THROW(parse_attention_group("everything"), Error);
}
