#pragma once

#include "genvideo/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace genvideo {

class DenoiserBackend;

enum class NoiseCurve { linear, cosine };

NoiseCurve parse_noise_curve(const std::string& name);
std::string to_string(NoiseCurve curve);

/// Inclusive range of timesteps whose noise differences feed the mask.
struct TimestepBand {
  int first = 1;
  int last = 1;

  bool contains(int t) const { return t >= first && t <= last; }
  int count() const { return last - first + 1; }
};

/// Deterministic DDIM schedule over T steps. alpha_bar[0] == 1 is the clean end.
struct DDIMSchedule {
  int steps = 50;
  std::vector<double> alpha_bar;  // T + 1 entries, strictly decreasing
  TimestepBand band;

  double signal(int t) const { return std::sqrt(alpha_bar.at(static_cast<std::size_t>(t))); }
  double noise(int t) const { return std::sqrt(1.0 - alpha_bar.at(static_cast<std::size_t>(t))); }
  void validate() const;
};

/// Band of the noisiest steps: t in (floor(fraction * T), T]. For T = 50 and
/// fraction 0.8 that is t = 41..50.
TimestepBand noisiest_band(int steps, double fraction);

DDIMSchedule make_schedule(int steps, NoiseCurve curve, double band_fraction = 0.8);

struct GuidanceConfig {
  double scale = 12.5;
  bool enabled_for_invedit = false;
};

/// Coefficients of the eta = 0 DDIM transfer z_to = a * z_from + b * eps.
/// Expanding x0 = (z - sqrt(1 - ab_from) eps) / sqrt(ab_from) into
/// z_to = sqrt(ab_to) x0 + sqrt(1 - ab_to) eps.
struct TransferCoefficients {
  double latent;
  double eps;
};

inline TransferCoefficients ddim_coefficients(const DDIMSchedule& sched, int from, int to) {
  const double ratio = sched.signal(to) / sched.signal(from);
  return {ratio, sched.noise(to) - ratio * sched.noise(from)};
}

template <typename Scalar>
Tensor4<Scalar> ddim_transfer(const Tensor4<Scalar>& z, const Tensor4<Scalar>& eps,
                              const DDIMSchedule& sched, int from, int to) {
  require_same_shape(z, eps, "ddim_transfer");
  const auto k = ddim_coefficients(sched, from, to);
  Tensor4<Scalar> out(z.frames(), z.channels(), z.height(), z.width());
  out.values() = Scalar(k.latent) * z.values() + Scalar(k.eps) * eps.values();
  return out;
}

/// One deterministic DDIM denoising step t -> t-1.
LatentVideo ddim_step(const LatentVideo& z_t, const Tensor4d& eps, int t,
                      const DDIMSchedule& sched);

/// Clean-latent estimate implied by eps at timestep t.
Tensor4d predict_x0(const Tensor4d& z_t, const Tensor4d& eps, int t, const DDIMSchedule& sched);

/// Maps clean latents to timestep T by running the DDIM update in reverse,
/// evaluating eps at the current (lower-noise) latent with the target timestep.
LatentVideo ddim_invert(const LatentVideo& clean, const RegionConditioning& cond,
                        const DenoiserBackend& denoiser, const DDIMSchedule& sched);

/// Runs ddim_step from z.timestep down to `stop` (0 = clean).
LatentVideo ddim_sample(const LatentVideo& z, const RegionConditioning& cond,
                        const DenoiserBackend& denoiser, const DDIMSchedule& sched, int stop = 0);

template <typename Scalar>
Tensor4<Scalar> cfg_combine(const Tensor4<Scalar>& eps_uncond, const Tensor4<Scalar>& eps_cond,
                            Scalar scale) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  Tensor4<Scalar> out(eps_cond.frames(), eps_cond.channels(), eps_cond.height(),
                      eps_cond.width());
  out.values() = eps_uncond.values() + scale * (eps_cond.values() - eps_uncond.values());
  return out;
}

}  // namespace genvideo
