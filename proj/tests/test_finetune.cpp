#include "fixtures.hpp"

#include "genvideo/attention.hpp"
#include "genvideo/error.hpp"
#include "genvideo/finetune.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gvtest;

namespace {

class ZeroDenoiser final : public DenoiserBackend {
 public:
  DenoiserOutput denoise(const LatentVideo& z, int, const RegionConditioning&) const override {
    DenoiserOutput out;
    out.eps = Tensor4d(z.latents.frames(), z.latents.channels(), z.latents.height(),
                       z.latents.width());
    out.block_features[kCorrectionBlock] = out.eps;
    return out;
  }
  bool has_unconditional() const override { return true; }
  std::vector<std::string> block_names() const override { return {kCorrectionBlock}; }
};

struct Workbench {
  std::shared_ptr<const SyntheticWorld> world =
      std::make_shared<const SyntheticWorld>(SyntheticWorld::builtin());
  ToyEmbedder embedder{3, 2};
  ToyAutoencoder autoencoder{2};
  DDIMSchedule sched = make_schedule(50, NoiseCurve::linear);
  FrameVideo video = world->synth_video("textured-pan", 6).video;

  AttentionDenoiserConfig model_config() const {
    AttentionDenoiserConfig c;
    c.channels = 3;
    c.width = 8;
    c.time_dim = 4;
    c.embed_dim = embedder.dim();
    return c;
  }
};

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "genvideo_finetune_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double eval_loss(const AttentionDenoiser& model, const Workbench& s, const LatentVideo& lat0,
                 const RegionConditioning& cond) {
  std::mt19937_64 rng(777);
  double total = 0;
  int count = 0;
  for (int t = 5; t <= 50; t += 5) {
    const Tensor4d noise = random_normal(lat0.latents.frames(), 3, lat0.latents.height(),
                                         lat0.latents.width(), rng);
    total += finetune_step(lat0, cond, t, noise, model, s.sched);
    ++count;
  }
  return total / count;
}

}  // namespace

TEST(Finetune, ConfigDefaultsAndValidation) {
  const FinetuneConfig c;
  EXPECT_EQ(c.frames, 16);
  EXPECT_EQ(c.lr, 1e-5);
  EXPECT_EQ(c.iterations, 400);
  EXPECT_NO_THROW(c.validate());
  FinetuneConfig bad = c;
  bad.cond_dropout = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.lr = -1;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Finetune, FrameSampling) {
  EXPECT_EQ(sample_frame_indices(32, 16).back(), 30);
  EXPECT_EQ(sample_frame_indices(16, 16), (std::vector<Index>{0, 1, 2,  3,  4,  5,  6,  7,
                                                              8, 9, 10, 11, 12, 13, 14, 15}));
  EXPECT_EQ(sample_frame_indices(10, 3), (std::vector<Index>{0, 3, 6}));
  EXPECT_THROW(sample_frame_indices(4, 5), Error);
}

TEST(Finetune, ZeroPredictorLossIsNoiseVariance) {
  const ZeroDenoiser zero;
  const DDIMSchedule sched = make_schedule(50, NoiseCurve::linear);
  std::mt19937_64 rng(12);
  const Tensor4d lat0 = random_normal(4, 3, 16, 16, rng);
  const auto cond = RegionConditioning::unmasked(Conditioning{});
  double total = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    const Tensor4d noise = random_normal(4, 3, 16, 16, rng);
    total += finetune_step({lat0, 0}, cond, 1 + i % 50, noise, zero, sched);
  }
  // Each sample averages 3072 squared normals; the mean of 200 has sd ~ 0.0018.
  EXPECT_NEAR(total / trials, 1.0, 0.01);
  EXPECT_THROW(finetune_step({lat0, 0}, cond, 0, lat0, zero, sched), Error);
  EXPECT_ANY_THROW(finetune_step({lat0, 0}, cond, 1, Tensor4d(1, 3, 16, 16), zero, sched));
}

TEST(AdamW, FirstStepMatchesClosedForm) {
  AdamW opt(0.1, 0.9, 0.999, 1e-8, 0.01);
  Eigen::MatrixXd p(1, 2);
  p << 2.0, -1.0;
  Eigen::MatrixXd g(1, 2);
  g << 0.5, -4.0;
  opt.begin_step();
  opt.update(0, p, g);
  // m_hat = g, v_hat = g^2: the step is lr * sign(g) up to epsilon.
  EXPECT_NEAR(p(0, 0), 2.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p(0, 1), -1.0 * (1 - 0.001) + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
}

TEST(AdamW, ZeroLearningRateLeavesParametersUntouched) {
  AdamW opt(0.0, 0.9, 0.999, 1e-8, 0.5);
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2, 2, 3.0);
  const Eigen::MatrixXd before = p;
  for (int i = 0; i < 5; ++i) {
    opt.begin_step();
    opt.update(0, p, Eigen::MatrixXd::Ones(2, 2));
  }
  EXPECT_EQ(p, before);
  AdamW fresh(0.1, 0.9, 0.999, 1e-8, 0.0);
  EXPECT_THROW(fresh.update(0, p, p), std::logic_error);
}

TEST(Finetune, OnlyTrainableParametersMove) {
  Workbench s;
  AttentionDenoiser model(s.model_config());
  const auto before = model.parameters();
  FinetuneConfig c;
  c.frames = 3;
  c.iterations = 5;
  c.lr = 1e-3;
  std::mt19937_64 rng(1);
  const FinetuneResult r =
      finetune(model, s.video, "a patterned crate", s.autoencoder, s.embedder, s.sched, c, rng);
  EXPECT_EQ(r.losses.size(), 5u);
  EXPECT_EQ(r.frames, (std::vector<Index>{0, 2, 4}));
  const auto after = model.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].trainable && before[i].value.size() > 0) {
      EXPECT_NE(before[i].value, after[i].value) << before[i].name;
    } else {
      EXPECT_EQ(before[i].value, after[i].value) << before[i].name;
    }
  }
}

TEST(Finetune, ZeroLearningRateKeepsAllParameters) {
  Workbench s;
  AttentionDenoiser model(s.model_config());
  const auto before = model.parameters();
  FinetuneConfig c;
  c.frames = 2;
  c.iterations = 4;
  c.lr = 0.0;
  std::mt19937_64 rng(1);
  finetune(model, s.video, "x", s.autoencoder, s.embedder, s.sched, c, rng);
  const auto after = model.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].value, after[i].value);
}

TEST(Finetune, DeterministicForASeed) {
  Workbench s;
  FinetuneConfig c;
  c.frames = 2;
  c.iterations = 6;
  c.lr = 1e-3;
  AttentionDenoiser a(s.model_config()), b(s.model_config());
  std::mt19937_64 ra(9), rb(9);
  const auto la = finetune(a, s.video, "x", s.autoencoder, s.embedder, s.sched, c, ra).losses;
  const auto lb = finetune(b, s.video, "x", s.autoencoder, s.embedder, s.sched, c, rb).losses;
  EXPECT_EQ(la, lb);
}

TEST(Finetune, HeldOutLossDecreases) {
  Workbench s;
  AttentionDenoiser model(s.model_config());
  FinetuneConfig c;
  c.frames = 3;
  c.iterations = 150;
  c.lr = 3e-3;
  c.cond_dropout = 0.0;
  FrameVideo clip{Tensor4d(3, 3, s.video.frames.height(), s.video.frames.width()), std::nullopt};
  const auto idx = sample_frame_indices(s.video.size(), 3);
  for (Index k = 0; k < 3; ++k) clip.frames.set_frame(k, s.video.frames.frame(idx[static_cast<std::size_t>(k)]));
  const LatentVideo lat0 = s.autoencoder.encode(clip);
  const auto cond = RegionConditioning::unmasked(
      Conditioning{s.embedder.embed_text("a crate"), embed_frames(s.embedder, clip).row(0)});
  const double before = eval_loss(model, s, lat0, cond);
  std::mt19937_64 rng(4);
  finetune(model, s.video, "a crate", s.autoencoder, s.embedder, s.sched, c, rng);
  const double after = eval_loss(model, s, lat0, cond);
  EXPECT_LT(after, before);
}

TEST(Checkpoint, RoundTripAndHashCheck) {
  Workbench s;
  AttentionDenoiser model(s.model_config());
  FinetuneConfig c;
  c.frames = 2;
  c.iterations = 3;
  c.lr = 1e-2;
  std::mt19937_64 rng(2);
  finetune(model, s.video, "x", s.autoencoder, s.embedder, s.sched, c, rng);
  const auto path = temp_path("ckpt.txt");
  save_checkpoint(model, path);
  AttentionDenoiser fresh(s.model_config());
  load_checkpoint(fresh, path);
  const auto a = model.parameters(), b = fresh.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value) << a[i].name;
  AttentionDenoiserConfig other = s.model_config();
  other.init_seed += 1;
  AttentionDenoiser mismatched(other);
  EXPECT_THROW(load_checkpoint(mismatched, path), Error);
  EXPECT_THROW(load_checkpoint(fresh, temp_path("missing.txt")), Error);
  std::ofstream(temp_path("garbage.txt")) << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(fresh, temp_path("garbage.txt")), Error);
}

TEST(Checkpoint, LossLogFormat) {
  const auto path = temp_path("loss.csv");
  write_loss_log({0.5, 0.25}, path);
  std::ifstream in(path);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, "iteration,loss");
  EXPECT_EQ(l2, "0,0.5");
  EXPECT_EQ(l3, "1,0.25");
}
