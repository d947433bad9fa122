#include "fixtures.hpp"

#include "genvideo/error.hpp"
#include "genvideo/invedit.hpp"

#include <gtest/gtest.h>

using namespace gvtest;

namespace {

const std::pair<const char*, const char*> kPairs[] = {
    {"car", "bus"}, {"ball", "balloon"}, {"cat", "tiger"}, {"boat", "ship"}, {"bird", "eagle"}};

EditRequest identity_request(const Toy& toy, const std::string& id, int frames) {
  EditRequest req = scene_edit(toy, id, id, frames);
  return req;
}

}  // namespace

TEST(Fusion, ClosedFormLimits) {
  std::mt19937_64 rng(5);
  const Tensor4d a = random_normal(2, 3, 4, 4, rng), b = random_normal(2, 3, 4, 4, rng);
  EXPECT_EQ(fuse_latents(a, b, Tensor4d(2, 1, 4, 4)), b);
  Tensor4d mean(2, 3, 4, 4);
  mean.values() = (a.values() + b.values()) / 2.0;
  EXPECT_EQ(fuse_latents(a, b, Tensor4d::constant(2, 1, 4, 4, 1.0)), mean);
}

TEST(Fusion, StepMatchesTwoDdimPasses) {
  const Toy toy = make_toy(20);
  std::mt19937_64 rng(9);
  const Tensor4d z = random_normal(3, 3, 16, 16, rng);
  const Conditioning src = scene_conditioning(toy, "car", 3), trg = scene_conditioning(toy, "bus", 3);
  RegionConditioning region{src, trg, MaskSequence{random_mask(3, 16, 16, rng), 0.5}};
  const FusionStep fs =
      latent_fusion({z, 20}, trg, region, *toy.backbone.denoiser, toy.sched, {}, nullptr);
  EXPECT_FALSE(fs.guidance_applied);
  const Tensor4d a = ddim_step({z, 20}, fs.unmasked.eps, 20, toy.sched).latents;
  const Tensor4d b = ddim_step({z, 20}, fs.masked.eps, 20, toy.sched).latents;
  EXPECT_EQ(fs.next.latents, fuse_latents(a, b, region.mask->masks));
  EXPECT_EQ(fs.next.timestep, 19);
  // No mask: the masked pass alone.
  region.mask.reset();
  const FusionStep plain =
      latent_fusion({z, 20}, trg, region, *toy.backbone.denoiser, toy.sched, {}, nullptr);
  EXPECT_EQ(plain.next.latents, ddim_step({z, 20}, plain.masked.eps, 20, toy.sched).latents);
}

TEST(Fusion, IdenticalConditioningIsSinglePassDdim) {
  const Toy toy = make_toy(20);
  std::mt19937_64 rng(10);
  const Tensor4d z = random_normal(2, 3, 16, 16, rng);
  const Conditioning c = scene_conditioning(toy, "ball", 2);
  const RegionConditioning region{c, c, MaskSequence{random_mask(2, 16, 16, rng), 0.5}};
  const FusionStep fs = latent_fusion({z, 7}, c, region, *toy.backbone.denoiser, toy.sched, {}, nullptr);
  const Tensor4d eps =
      toy.backbone.denoiser->denoise({z, 7}, 7, RegionConditioning::unmasked(c)).eps;
  EXPECT_EQ(fs.next.latents, ddim_step({z, 7}, eps, 7, toy.sched).latents);
}

TEST(Fusion, GuidanceNeedsAnUnconditionalModel) {
  ToyBackboneOptions o;
  o.unconditional = true;
  const Toy toy = make_toy(20, o);
  std::mt19937_64 rng(3);
  const Tensor4d z = random_normal(1, 3, 16, 16, rng);
  const Conditioning c = scene_conditioning(toy, "car", 1);
  const Conditioning null = null_conditioning(*toy.backbone.embedder);
  const GuidanceConfig g{3.0, false};
  const FusionStep fs = latent_fusion({z, 5}, c, RegionConditioning::unmasked(c),
                                      *toy.backbone.denoiser, toy.sched, g, &null);
  EXPECT_TRUE(fs.guidance_applied);
  const Tensor4d un =
      toy.backbone.denoiser->denoise({z, 5}, 5, RegionConditioning::unmasked(null)).eps;
  const Tensor4d guided = cfg_combine(un, fs.masked.eps, 3.0);
  EXPECT_EQ(fs.next.latents, ddim_step({z, 5}, guided, 5, toy.sched).latents);

  const Toy plain = make_toy(20);
  const FusionStep skipped = latent_fusion({z, 5}, c, RegionConditioning::unmasked(c),
                                           *plain.backbone.denoiser, plain.sched, g, &null);
  EXPECT_FALSE(skipped.guidance_applied);
}

TEST(Pipeline, IdentityEditIsAFixedPoint) {
  const Toy toy = make_toy();
  for (const char* id : {"car", "textured-pan"}) {
    const EditRequest req = identity_request(toy, id, 6);
    const EditResult r = edit_video(req, toy.backbone);
    EXPECT_FALSE(r.masks.any());
    EXPECT_EQ(r.edited_video.frames, req.source_video.frames) << id;
    ASSERT_EQ(r.steps.size(), 50u);
    for (const auto& d : r.steps) {
      EXPECT_EQ(d.fusion_delta, 0.0);
      EXPECT_EQ(d.blend_delta, 0.0);
    }
  }
}

TEST(Pipeline, ShapeChangeReproducesTargetScene) {
  const Toy toy = make_toy();
  for (auto [src, trg] : kPairs) {
    const int n = 4;
    const EditResult r = edit_video(scene_edit(toy, src, trg, n), toy.backbone);
    ASSERT_EQ(r.edited_video.size(), n);
    for (int k = 0; k < n; ++k) {
      const Tensor4d oracle = union_footprint(*toy.world, src, trg, k);
      EXPECT_EQ(iou(r.masks.masks.plane(k, 0), oracle.plane(0, 0)), 1.0);
      const Tensor4d expect_in = toy.world->render(trg, k);
      const Tensor4d expect_out = toy.world->render(src, k);
      for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < 16; ++y)
          for (Index x = 0; x < 16; ++x) {
            const double want = oracle(0, 0, y, x) > 0.5 ? expect_in(0, c, y, x)
                                                         : expect_out(0, c, y, x);
            EXPECT_NEAR(r.edited_video.frames(k, c, y, x), want, 1e-4)
                << src << " frame " << k << " (" << y << "," << x << ")";
          }
    }
  }
}

TEST(Pipeline, BackgroundIsPreservedExactly) {
  const Toy toy = make_toy(20);
  const EditRequest req = scene_edit(toy, "cat", "tiger", 5);
  const EditResult r = edit_video(req, toy.backbone);
  for (Index n = 0; n < 5; ++n)
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 16; ++y)
        for (Index x = 0; x < 16; ++x)
          if (!(r.masks.masks(n, 0, y, x) > 0.5)) {
            EXPECT_EQ(r.edited_video.frames(n, c, y, x), req.source_video.frames(n, c, y, x));
          }
}

TEST(Pipeline, WithoutPreservationBackgroundFollowsThePrior) {
  const Toy toy = make_toy(20);
  EditRequest req = scene_edit(toy, "car", "bus", 3, false);
  const EditResult r = edit_video(req, toy.backbone);
  // The prior of the target prompt is the target scene's first frame, so the
  // background slot names the target scene as well.
  for (int k = 0; k < 3; ++k) {
    EXPECT_LT(max_abs_diff(r.edited_video.frames.frame(k), toy.world->render("bus", k)), 1e-4);
  }
}

TEST(Pipeline, DeterministicReruns) {
  const Toy toy = make_toy(20);
  EditRequest req = scene_edit(toy, "boat", "ship", 4);
  req.config.invedit.source_image = SourceImageMode::random_frame;
  req.config.seed = 42;
  const EditResult a = edit_video(req, toy.backbone), b = edit_video(req, toy.backbone);
  EXPECT_EQ(a.edited_video.frames, b.edited_video.frames);
  EXPECT_EQ(a.masks.masks, b.masks.masks);
}

TEST(Pipeline, CorrectionRunsOnlyOnActiveSteps) {
  const Toy toy = make_toy();
  EditRequest req = scene_edit(toy, "car", "bus", 4);
  const SynthClip clip = toy.world->synth_video("car", 4);
  req.backward_flow = clip.backward_flow;
  req.forward_flow = clip.forward_flow;
  const EditResult r = edit_video(req, toy.backbone);
  for (const auto& d : r.steps) {
    EXPECT_EQ(d.correction_active, d.t >= 45) << d.t;
    EXPECT_EQ(d.ce_before.has_value(), d.correction_active);
    EXPECT_GT(d.mask_fraction, 0.0);
  }
  req.config.correction.enabled = false;
  const EditResult off = edit_video(req, toy.backbone);
  for (const auto& d : off.steps) EXPECT_FALSE(d.correction_active);
}

TEST(Pipeline, EditImageMatchesOneFrameVideo) {
  const Toy toy = make_toy(20);
  const EditRequest req = scene_edit(toy, "ball", "balloon", 1);
  const EditResult img = edit_image(req, toy.backbone);
  const EditResult vid = edit_video(req, toy.backbone);
  EXPECT_EQ(img.edited_video.frames, vid.edited_video.frames);
  EXPECT_THROW(edit_image(scene_edit(toy, "ball", "balloon", 2), toy.backbone), Error);
  const EditResult same = edit_image(identity_request(toy, "ball", 1), toy.backbone);
  EXPECT_EQ(same.edited_video.frames, identity_request(toy, "ball", 1).source_video.frames);
}

TEST(Pipeline, MaskOnlyRunSkipsInference) {
  const Toy toy = make_toy(20);
  const EditResult r = generate_edit_masks(scene_edit(toy, "car", "bus", 3), toy.backbone);
  EXPECT_TRUE(r.edited_video.frames.empty());
  EXPECT_TRUE(r.steps.empty());
  EXPECT_TRUE(r.masks.any());
}

TEST(Pipeline, ErrorsNameTheirStage) {
  const Toy toy = make_toy(10);
  EditRequest req = scene_edit(toy, "car", "bus", 2);
  req.source_prompt.clear();
  EXPECT_THROW(edit_video(req, toy.backbone), Error);

  auto stage_of = [&](const EditRequest& r) -> std::string {
    try {
      edit_video(r, toy.backbone);
    } catch (const StageError& e) {
      return e.stage();
    }
    return "none";
  };
  req = scene_edit(toy, "car", "bus", 2);
  req.target_image = Tensor4d(1, 2, 16, 16);
  EXPECT_EQ(stage_of(req), "embed");
  req = scene_edit(toy, "car", "bus", 2);
  req.target_prompt = "a scene nobody registered";
  req.target_image = Tensor4d::constant(1, 3, 16, 16, 0.33);
  EXPECT_EQ(stage_of(req), "invedit");
  req = scene_edit(toy, "car", "bus", 2);
  req.source_video.frames = Tensor4d::constant(2, 3, 16, 16, 0.77);
  EXPECT_EQ(stage_of(req), "invert");
  const Backbone scaled = make_toy_backbone(toy.world, toy.sched, {}, 3);
  EXPECT_THROW(edit_video(scene_edit(toy, "car", "bus", 2), scaled), StageError);
}

TEST(Pipeline, LatentCorrespondenceErrorOfCleanRenders) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  const SynthClip clip = w.synth_video("textured-pan", 5);
  const Tensor4d lat = scene_latents(w, "textured-pan", 5);
  EXPECT_EQ(latent_correspondence_error(lat, SearchWindow::from_extent(4), clip.backward_flow,
                                        clip.forward_flow),
            0.0);
  EXPECT_THROW(latent_correspondence_error(lat, SearchWindow::from_extent(4), {}, {}), Error);
}
