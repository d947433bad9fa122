#pragma once

#include "genvideo/backbone.hpp"
#include "genvideo/scheduler.hpp"

#include <optional>
#include <string>
#include <vector>

namespace genvideo {

/// Channel-mean of |eps_src - eps_trg|, one [N, 1, h, w] heatmap.
HeatmapSequence noise_difference(const Tensor4d& eps_src, const Tensor4d& eps_trg);

/// Per-frame min-max normalization to [0, 1]; constant frames become zero.
HeatmapSequence normalize_per_frame(const HeatmapSequence& heat);

/// mask = heat > alpha.
MaskSequence binarize(const HeatmapSequence& heat, double alpha);

/// Morphological closing with a (2r+1)^2 square. Cells outside the grid count
/// as set during erosion, so closing never removes mask pixels.
MaskSequence close_mask(const MaskSequence& mask, int radius);

struct TimedHeatmap {
  int t = 0;
  HeatmapSequence heat;
};

/// Mean over the band's timesteps, per-frame normalization, then threshold.
/// `mean_heat` receives the normalized band mean.
MaskSequence accumulate_and_binarize(const std::vector<TimedHeatmap>& heat_per_t,
                                     TimestepBand band, double alpha,
                                     HeatmapSequence* mean_heat = nullptr);

enum class SourceImageMode { per_frame, random_frame };
SourceImageMode parse_source_image_mode(const std::string& name);
std::string to_string(SourceImageMode mode);

struct InvEditConfig {
  double threshold = 0.6;
  bool closing = false;
  int closing_radius = 1;
  SourceImageMode source_image = SourceImageMode::per_frame;

  void validate() const;
};

/// Named thresholds: "default" (0.6) and "alg1" (0.8).
double threshold_preset(const std::string& name);

struct InvEditStep {
  int t = 0;
  double heat_mean = 0.0;
  double heat_max = 0.0;
};

struct InvEditResult {
  MaskSequence masks;
  HeatmapSequence heat;  // normalized band mean
  std::vector<InvEditStep> steps;
};

/// Runs source- and target-conditioned DDIM branches from the shared inverted
/// latents z_T, accumulating noise differences over the schedule's band.
/// `null_cond` enables classifier-free guidance when `guidance.enabled_for_invedit`.
InvEditResult generate_masks(const LatentVideo& inverted, const Conditioning& source,
                             const Conditioning& target, const DenoiserBackend& denoiser,
                             const DDIMSchedule& sched, const InvEditConfig& config,
                             const GuidanceConfig& guidance = {},
                             const Conditioning* null_cond = nullptr);

enum class MaskStrategy { full_image, alpha_channel, intensity_threshold, external };
MaskStrategy parse_mask_strategy(const std::string& name);
std::string to_string(MaskStrategy strategy);

struct MaskProvider {
  MaskStrategy strategy = MaskStrategy::full_image;
  double threshold = 0.5;               // intensity_threshold: channel mean > threshold
  std::optional<Tensor4d> external;     // [1, 1, H, W]
};

/// Binary [1, 1, H, W] foreground mask of a target image [1, C, H, W].
Tensor4d segment_target_foreground(const Tensor4d& image, const MaskProvider& provider);

/// Color channels of `image` with everything outside `mask` set to zero. A
/// fourth (alpha) channel is dropped.
Tensor4d apply_foreground(const Tensor4d& image, const Tensor4d& mask, Index color_channels);

}  // namespace genvideo
