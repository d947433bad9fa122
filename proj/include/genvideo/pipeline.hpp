#pragma once

#include "genvideo/backbone.hpp"
#include "genvideo/correction.hpp"
#include "genvideo/invedit.hpp"
#include "genvideo/scheduler.hpp"
#include "genvideo/world.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace genvideo {

struct PipelineConfig {
  DDIMSchedule schedule = make_schedule(50, NoiseCurve::linear);
  GuidanceConfig guidance;
  InvEditConfig invedit;
  MaskProvider mask_provider;
  CorrectionConfig correction;
  bool preserve_background = true;
  std::uint64_t seed = 0;  // used by SourceImageMode::random_frame

  void validate() const;
};

struct EditRequest {
  FrameVideo source_video;
  std::string source_prompt;
  std::string target_prompt;
  Tensor4d target_image;  // [1, C, H, W]; RGBA allowed for the alpha_channel provider
  PipelineConfig config;
  /// Optional ground-truth flow (latent grid) for correspondence diagnostics:
  /// backward[i-1] maps frame i to i-1, forward[i] maps frame i to i+1.
  std::optional<std::vector<FlowMap>> backward_flow;
  std::optional<std::vector<FlowMap>> forward_flow;
};

struct StepDiagnostics {
  int t = 0;
  bool correction_active = false;
  bool guidance_applied = false;
  double mask_fraction = 0.0;
  double fusion_delta = 0.0;  // max |fused - masked pass|
  double blend_delta = 0.0;   // max |blended - fused|
  std::optional<double> ce_before;
  std::optional<double> ce_after;
};

struct EditResult {
  FrameVideo edited_video;
  MaskSequence masks;
  HeatmapSequence heatmaps;
  std::vector<InvEditStep> invedit_steps;
  std::vector<StepDiagnostics> steps;
};

/// M ? (a + b) / 2 : b, elementwise per frame.
template <typename Scalar>
Tensor4<Scalar> fuse_latents(const Tensor4<Scalar>& unmasked_next, const Tensor4<Scalar>& masked_next,
                             const Tensor4d& masks) {
  require_same_shape(unmasked_next, masked_next, "fuse_latents");
  Tensor4<Scalar> out = masked_next;
  for (Index n = 0; n < out.frames(); ++n) {
    const auto m = masks.plane(n, 0).array() > 0.5;
    for (Index c = 0; c < out.channels(); ++c) {
      out.plane(n, c) = m.select((unmasked_next.plane(n, c).array() + masked_next.plane(n, c).array()) /
                                     Scalar(2),
                                 masked_next.plane(n, c).array());
    }
  }
  return out;
}

struct FusionStep {
  LatentVideo next;        // z_{t-1}
  DenoiserOutput unmasked; // target-conditioned pass
  DenoiserOutput masked;   // region-conditioned pass
  bool guidance_applied = false;
};

/// One latent-fusion step: both passes, optional classifier-free guidance,
/// DDIM on each, then fuse under the region mask.
FusionStep latent_fusion(const LatentVideo& z_t, const Conditioning& target,
                         const RegionConditioning& region, const DenoiserBackend& denoiser,
                         const DDIMSchedule& sched, const GuidanceConfig& guidance,
                         const Conditioning* null_cond);

/// Mean CE of latent-space nearest-neighbour fields against ground truth,
/// over both neighbour directions.
double latent_correspondence_error(const Tensor4d& latents, SearchWindow window,
                                   const std::vector<FlowMap>& backward,
                                   const std::vector<FlowMap>& forward);

EditResult edit_video(const EditRequest& request, const Backbone& backbone);
/// Runs encode, embed, inversion and InvEdit only; edited_video stays empty.
EditResult generate_edit_masks(const EditRequest& request, const Backbone& backbone);
/// Single-frame editing; same pipeline with the temporal terms degenerate.
EditResult edit_image(const EditRequest& request, const Backbone& backbone);

}  // namespace genvideo
