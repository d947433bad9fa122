#include "genvideo/pipeline.hpp"

#include "genvideo/error.hpp"
#include "genvideo/metrics.hpp"

#include <random>

namespace genvideo {

void PipelineConfig::validate() const {
  schedule.validate();
  invedit.validate();
  correction.validate();
  if (!(guidance.scale >= 1.0)) throw validation_error("guidance.scale must be >= 1");
}

FusionStep latent_fusion(const LatentVideo& z_t, const Conditioning& target,
                         const RegionConditioning& region, const DenoiserBackend& denoiser,
                         const DDIMSchedule& sched, const GuidanceConfig& guidance,
                         const Conditioning* null_cond) {
  const int t = z_t.timestep;
  FusionStep step;
  step.unmasked = denoiser.denoise(z_t, t, RegionConditioning::unmasked(target));
  step.masked = denoiser.denoise(z_t, t, region);
  Tensor4d eps_o = step.unmasked.eps;
  Tensor4d eps_m = step.masked.eps;
  if (null_cond && denoiser.has_unconditional()) {
    const Tensor4d un = denoiser.denoise(z_t, t, RegionConditioning::unmasked(*null_cond)).eps;
    eps_o = cfg_combine(un, eps_o, guidance.scale);
    eps_m = cfg_combine(un, eps_m, guidance.scale);
    step.guidance_applied = true;
  }
  const LatentVideo a = ddim_step(z_t, eps_o, t, sched);
  LatentVideo b = ddim_step(z_t, eps_m, t, sched);
  if (!region.mask) {
    step.next = std::move(b);
  } else {
    step.next = {fuse_latents(a.latents, b.latents, region.mask->masks), t - 1};
  }
  return step;
}

double latent_correspondence_error(const Tensor4d& latents, SearchWindow window,
                                   const std::vector<FlowMap>& backward,
                                   const std::vector<FlowMap>& forward) {
  const Index n = latents.frames();
  if (static_cast<Index>(backward.size()) < n - 1 || static_cast<Index>(forward.size()) < n - 1) {
    throw validation_error("latent_correspondence_error: flow list shorter than the video");
  }
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i + 1 < n; ++i) {
    const Tensor4d a = latents.frame(i);
    const Tensor4d b = latents.frame(i + 1);
    const CEMap fwd = correspondence_error_map(compute_nn_field(a, b, window),
                                               forward[static_cast<std::size_t>(i)]);
    const CEMap bwd = correspondence_error_map(compute_nn_field(b, a, window),
                                               backward[static_cast<std::size_t>(i)]);
    sum += fwd.mean * static_cast<double>(fwd.count) + bwd.mean * static_cast<double>(bwd.count);
    count += fwd.count + bwd.count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

EditResult run_edit(const EditRequest& req, const Backbone& backbone, bool masks_only) {
  if (!backbone.autoencoder || !backbone.embedder || !backbone.denoiser) {
    throw validation_error("edit_video: incomplete backbone");
  }
  const PipelineConfig& cfg = req.config;
  cfg.validate();
  if (req.source_video.size() < 1) throw validation_error("edit_video: empty source video");
  if (req.source_prompt.empty() || req.target_prompt.empty()) {
    throw validation_error("edit_video: prompts must be nonempty");
  }
  const DDIMSchedule& sched = cfg.schedule;
  const ConditionEmbedder& embedder = *backbone.embedder;
  const DenoiserBackend& denoiser = *backbone.denoiser;
  const Index frames = req.source_video.size();

  const LatentVideo clean = stage("encode", [&] { return backbone.autoencoder->encode(req.source_video); });

  struct Conds {
    Conditioning source, target, background, null;
  };
  const Conds conds = stage("embed", [&] {
    Eigen::MatrixXd j_src = embed_frames(embedder, req.source_video);
    if (cfg.invedit.source_image == SourceImageMode::random_frame) {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_int_distribution<Index> pick(0, frames - 1);
      j_src = Eigen::MatrixXd(j_src.row(pick(rng)));
    }
    const Tensor4d fg_mask = segment_target_foreground(req.target_image, cfg.mask_provider);
    const Index colors = req.target_image.channels() == 4 ? 3 : req.target_image.channels();
    const Eigen::VectorXd j_trg =
        embedder.embed_image(apply_foreground(req.target_image, fg_mask, colors));
    Conds c;
    c.source = make_conditioning(embedder, req.source_prompt, j_src);
    c.target = make_conditioning(embedder, req.target_prompt, j_trg.transpose());
    if (cfg.preserve_background) {
      c.background = make_conditioning(embedder, req.target_prompt, j_src);
    } else {
      const Eigen::VectorXd prior =
          backbone.prior ? backbone.prior->image_embedding(req.target_prompt)
                         : pooled_text(embedder.embed_text(req.target_prompt));
      c.background = make_conditioning(embedder, req.target_prompt, prior.transpose());
    }
    c.null = null_conditioning(embedder);
    return c;
  });

  const LatentVideo inverted = stage("invert", [&] {
    return ddim_invert(clean, RegionConditioning::unmasked(conds.source), denoiser, sched);
  });

  EditResult result;
  const InvEditResult inv = stage("invedit", [&] {
    return generate_masks(inverted, conds.source, conds.target, denoiser, sched, cfg.invedit,
                          cfg.guidance, &conds.null);
  });
  result.masks = inv.masks;
  result.heatmaps = inv.heat;
  result.invedit_steps = inv.steps;
  if (masks_only) return result;

  const Tensor4d& masks = result.masks.masks;
  const Index h = clean.latents.height();
  const Index w = clean.latents.width();
  if (masks.height() != h || masks.width() != w) {
    throw StageError("invedit", "mask resolution does not match the latents");
  }
  const bool have_flow = req.backward_flow && req.forward_flow;
  RegionConditioning region{conds.background, conds.target, result.masks};

  LatentVideo z = inverted;
  stage("inference", [&] {
    for (int t = sched.steps; t >= 1; --t) {
      StepDiagnostics d;
      d.t = t;
      d.mask_fraction = masks.values().mean();
      FusionStep fs = latent_fusion(z, conds.target, region, denoiser, sched, cfg.guidance, &conds.null);
      d.guidance_applied = fs.guidance_applied;
      Tensor4d next = std::move(fs.next.latents);
      {
        const Tensor4d masked_only = ddim_transfer(z.latents, fs.masked.eps, sched, t, t - 1);
        d.fusion_delta = d.guidance_applied ? 0.0 : max_abs_diff(next, masked_only);
      }
      d.correction_active = cfg.correction.active(t, sched.steps);
      if (d.correction_active) {
        const DenoiserOutput& src =
            cfg.correction.feature_pass == FeaturePass::unmasked ? fs.unmasked : fs.masked;
        const VideoFields fields =
            compute_video_fields(src.features(cfg.correction.block), cfg.correction.window, h, w);
        Tensor4d blended = blend_video(next, fields, masks, cfg.correction.weights);
        d.blend_delta = max_abs_diff(blended, next);
        if (have_flow) {
          d.ce_before = latent_correspondence_error(next, cfg.correction.window,
                                                    *req.backward_flow, *req.forward_flow);
          d.ce_after = latent_correspondence_error(blended, cfg.correction.window,
                                                   *req.backward_flow, *req.forward_flow);
        }
        next = std::move(blended);
      }
      if (cfg.preserve_background) next = preserve_background(next, masks, clean.latents);
      z = {std::move(next), t - 1};
      result.steps.push_back(d);
    }
    return 0;
  });

  result.edited_video = stage("decode", [&] {
    FrameVideo out = backbone.autoencoder->decode(z);
    out.frames.values() = out.frames.values().max(0.0).min(1.0);
    out.frame_rate = req.source_video.frame_rate;
    return out;
  });
  if (result.edited_video.size() != frames) {
    throw StageError("decode", "frame count changed");
  }
  return result;
}

}  // namespace

EditResult edit_video(const EditRequest& request, const Backbone& backbone) {
  return run_edit(request, backbone, false);
}

EditResult generate_edit_masks(const EditRequest& request, const Backbone& backbone) {
  return run_edit(request, backbone, true);
}

EditResult edit_image(const EditRequest& request, const Backbone& backbone) {
  if (request.source_video.size() != 1) {
    throw validation_error("edit_image: expected a single frame, got " +
                           std::to_string(request.source_video.size()));
  }
  return edit_video(request, backbone);
}

}  // namespace genvideo
