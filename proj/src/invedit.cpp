#include "genvideo/invedit.hpp"

#include "genvideo/error.hpp"

namespace genvideo {

HeatmapSequence noise_difference(const Tensor4d& eps_src, const Tensor4d& eps_trg) {
  if (!eps_src.same_shape(eps_trg)) {
    throw validation_error("noise_difference: shape mismatch " + eps_src.shape_string() + " vs " +
                           eps_trg.shape_string());
  }
  HeatmapSequence out{Tensor4d(eps_src.frames(), 1, eps_src.height(), eps_src.width()), false};
  for (Index n = 0; n < eps_src.frames(); ++n) {
    auto dst = out.heat.plane(n, 0);
    for (Index c = 0; c < eps_src.channels(); ++c) {
      dst.array() += (eps_src.plane(n, c).array() - eps_trg.plane(n, c).array()).abs();
    }
    dst /= static_cast<double>(eps_src.channels());
  }
  return out;
}

HeatmapSequence normalize_per_frame(const HeatmapSequence& heat) {
  HeatmapSequence out{heat.heat, true};
  for (Index n = 0; n < heat.size(); ++n) {
    auto p = out.heat.plane(n, 0);
    const double lo = p.minCoeff();
    const double hi = p.maxCoeff();
    if (!(hi > lo)) {
      p.setZero();
    } else {
      p = (p.array() - lo) / (hi - lo);
    }
  }
  return out;
}

MaskSequence binarize(const HeatmapSequence& heat, double alpha) {
  MaskSequence out{Tensor4d(heat.size(), 1, heat.heat.height(), heat.heat.width()), alpha};
  out.masks.values() = (heat.heat.values() > alpha).cast<double>();
  return out;
}

MaskSequence close_mask(const MaskSequence& mask, int radius) {
  if (radius < 0) throw validation_error("closing radius must be >= 0");
  if (radius == 0) return mask;
  const Index h = mask.masks.height();
  const Index w = mask.masks.width();
  auto morph = [&](const Tensor4d& in, bool dilate) {
    Tensor4d out(in.frames(), 1, h, w);
    for (Index n = 0; n < in.frames(); ++n) {
      auto src = in.plane(n, 0);
      auto dst = out.plane(n, 0);
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          bool acc = !dilate;
          for (Index dy = -radius; dy <= radius; ++dy) {
            for (Index dx = -radius; dx <= radius; ++dx) {
              const Index yy = y + dy;
              const Index xx = x + dx;
              const bool inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
              const bool v = inside ? src(yy, xx) > 0.5 : !dilate;
              acc = dilate ? (acc || v) : (acc && v);
            }
          }
          dst(y, x) = acc ? 1.0 : 0.0;
        }
      }
    }
    return out;
  };
  return {morph(morph(mask.masks, true), false), mask.threshold_used};
}

MaskSequence accumulate_and_binarize(const std::vector<TimedHeatmap>& heat_per_t,
                                     TimestepBand band, double alpha,
                                     HeatmapSequence* mean_heat) {
  if (band.first > band.last) throw validation_error("accumulate_and_binarize: empty band");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw validation_error("accumulate_and_binarize: alpha must lie in [0, 1]");
  }
  const Tensor4d* shape = nullptr;
  Tensor4d sum;
  int count = 0;
  for (const auto& h : heat_per_t) {
    if (!band.contains(h.t)) continue;
    if (!shape) {
      shape = &h.heat.heat;
      sum = Tensor4d(shape->frames(), 1, shape->height(), shape->width());
    } else if (!h.heat.heat.same_shape(*shape)) {
      throw validation_error("accumulate_and_binarize: heatmaps differ in shape");
    }
    sum.values() += h.heat.heat.values();
    ++count;
  }
  if (count == 0) throw validation_error("accumulate_and_binarize: no heatmap inside the band");
  sum.values() /= static_cast<double>(count);
  const HeatmapSequence normalized = normalize_per_frame({sum, false});
  if (mean_heat) *mean_heat = normalized;
  return binarize(normalized, alpha);
}

SourceImageMode parse_source_image_mode(const std::string& name) {
  if (name == "per_frame") return SourceImageMode::per_frame;
  if (name == "random_frame") return SourceImageMode::random_frame;
  throw validation_error("unknown source image mode '" + name + "'");
}

std::string to_string(SourceImageMode mode) {
  return mode == SourceImageMode::per_frame ? "per_frame" : "random_frame";
}

void InvEditConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw validation_error("invedit.threshold must lie in [0, 1]");
  }
  if (closing_radius < 0) throw validation_error("invedit closing radius must be >= 0");
}

double threshold_preset(const std::string& name) {
  if (name == "default") return 0.6;
  if (name == "alg1") return 0.8;
  throw validation_error("unknown threshold preset '" + name + "' (expected default or alg1)");
}

namespace {

Tensor4d branch_eps(const LatentVideo& z, int t, const Conditioning& cond,
                    const DenoiserBackend& denoiser, const GuidanceConfig& guidance,
                    const Conditioning* null_cond) {
  Tensor4d eps = denoiser.denoise(z, t, RegionConditioning::unmasked(cond)).eps;
  if (guidance.enabled_for_invedit && null_cond && denoiser.has_unconditional()) {
    const Tensor4d un = denoiser.denoise(z, t, RegionConditioning::unmasked(*null_cond)).eps;
    eps = cfg_combine(un, eps, guidance.scale);
  }
  return eps;
}

}  // namespace

InvEditResult generate_masks(const LatentVideo& inverted, const Conditioning& source,
                             const Conditioning& target, const DenoiserBackend& denoiser,
                             const DDIMSchedule& sched, const InvEditConfig& config,
                             const GuidanceConfig& guidance, const Conditioning* null_cond) {
  config.validate();
  if (inverted.timestep != sched.steps) {
    throw validation_error("generate_masks: expected latents at t=" + std::to_string(sched.steps));
  }
  InvEditResult result;
  std::vector<TimedHeatmap> heats;
  LatentVideo z_src = inverted;
  LatentVideo z_trg = inverted;
  for (int t = sched.steps; t >= sched.band.first; --t) {
    const Tensor4d e_src = branch_eps(z_src, t, source, denoiser, guidance, null_cond);
    const Tensor4d e_trg = branch_eps(z_trg, t, target, denoiser, guidance, null_cond);
    HeatmapSequence h = noise_difference(e_src, e_trg);
    result.steps.push_back({t, h.heat.values().mean(), h.heat.values().maxCoeff()});
    heats.push_back({t, std::move(h)});
    if (t > sched.band.first) {
      z_src = ddim_step(z_src, e_src, t, sched);
      z_trg = ddim_step(z_trg, e_trg, t, sched);
    }
  }
  result.masks = accumulate_and_binarize(heats, sched.band, config.threshold, &result.heat);
  if (config.closing) result.masks = close_mask(result.masks, config.closing_radius);
  return result;
}

MaskStrategy parse_mask_strategy(const std::string& name) {
  if (name == "full_image") return MaskStrategy::full_image;
  if (name == "alpha_channel") return MaskStrategy::alpha_channel;
  if (name == "intensity_threshold") return MaskStrategy::intensity_threshold;
  if (name == "external") return MaskStrategy::external;
  throw validation_error("unknown mask provider strategy '" + name + "'");
}

std::string to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::full_image: return "full_image";
    case MaskStrategy::alpha_channel: return "alpha_channel";
    case MaskStrategy::intensity_threshold: return "intensity_threshold";
    case MaskStrategy::external: return "external";
  }
  return "?";
}

Tensor4d segment_target_foreground(const Tensor4d& image, const MaskProvider& provider) {
  if (image.frames() != 1) throw validation_error("target image must be a single frame");
  const Index h = image.height();
  const Index w = image.width();
  Tensor4d mask(1, 1, h, w);
  switch (provider.strategy) {
    case MaskStrategy::full_image:
      mask.values().setOnes();
      break;
    case MaskStrategy::alpha_channel:
      if (image.channels() != 4) {
        throw validation_error("alpha_channel mask provider needs an RGBA target image");
      }
      mask.plane(0, 0) = (image.plane(0, 3).array() > 0.5).cast<double>().matrix();
      break;
    case MaskStrategy::intensity_threshold: {
      const Index colors = image.channels() == 4 ? 3 : image.channels();
      PlaneXd sum = PlaneXd::Zero(h, w);
      for (Index c = 0; c < colors; ++c) sum += image.plane(0, c);
      sum /= static_cast<double>(colors);
      mask.plane(0, 0) = (sum.array() > provider.threshold).cast<double>().matrix();
      break;
    }
    case MaskStrategy::external:
      if (!provider.external) {
        throw validation_error("external mask provider requires a mask file");
      }
      if (provider.external->height() != h || provider.external->width() != w ||
          provider.external->channels() != 1 || provider.external->frames() != 1) {
        throw validation_error("external target mask " + provider.external->shape_string() +
                               " does not match the target image " + image.shape_string());
      }
      mask.values() = (provider.external->values() > 0.5).cast<double>();
      break;
  }
  return mask;
}

Tensor4d apply_foreground(const Tensor4d& image, const Tensor4d& mask, Index color_channels) {
  Tensor4d out(1, color_channels, image.height(), image.width());
  for (Index c = 0; c < color_channels; ++c) {
    out.plane(0, c) = image.plane(0, c).cwiseProduct(mask.plane(0, 0));
  }
  return out;
}

}  // namespace genvideo
