#include "genvideo/scheduler.hpp"

#include "genvideo/backbone.hpp"
#include "genvideo/error.hpp"

#include <numbers>

namespace genvideo {

NoiseCurve parse_noise_curve(const std::string& name) {
  if (name == "linear") return NoiseCurve::linear;
  if (name == "cosine") return NoiseCurve::cosine;
  throw validation_error("unknown noise curve '" + name + "'");
}

std::string to_string(NoiseCurve curve) {
  return curve == NoiseCurve::linear ? "linear" : "cosine";
}

void DDIMSchedule::validate() const {
  if (steps < 1) throw validation_error("schedule: steps must be >= 1");
  if (alpha_bar.size() != static_cast<std::size_t>(steps) + 1) {
    throw validation_error("schedule: expected T+1 alpha_bar values");
  }
  if (alpha_bar[0] != 1.0) throw validation_error("schedule: alpha_bar[0] must be 1");
  for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
    if (!(alpha_bar[t] < alpha_bar[t - 1])) {
      throw validation_error("schedule: alpha_bar must be strictly decreasing");
    }
  }
  if (!(alpha_bar.back() > 0.0)) throw validation_error("schedule: alpha_bar[T] must be > 0");
  if (band.first < 1 || band.last > steps || band.first > band.last) {
    throw validation_error("schedule: empty or out-of-range timestep band");
  }
}

TimestepBand noisiest_band(int steps, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw validation_error("band fraction must lie in [0, 1)");
  }
  const int first = static_cast<int>(std::floor(fraction * steps)) + 1;
  return {std::min(first, steps), steps};
}

DDIMSchedule make_schedule(int steps, NoiseCurve curve, double band_fraction) {
  if (steps < 1) throw validation_error("make_schedule: T must be >= 1");
  DDIMSchedule s;
  s.steps = steps;
  s.alpha_bar.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  if (curve == NoiseCurve::linear) {
    // Scaled-linear betas on a 1000-step training grid, sampled at the T
    // trailing timesteps (the usual latent-diffusion setup).
    constexpr int kTrainSteps = 1000;
    constexpr double kBetaStart = 0.00085;
    constexpr double kBetaEnd = 0.012;
    std::vector<double> train(kTrainSteps);
    double prod = 1.0;
    const double lo = std::sqrt(kBetaStart);
    const double hi = std::sqrt(kBetaEnd);
    for (int i = 0; i < kTrainSteps; ++i) {
      const double r = lo + (hi - lo) * i / (kTrainSteps - 1);
      prod *= 1.0 - r * r;
      train[static_cast<std::size_t>(i)] = prod;
    }
    for (int t = 1; t <= steps; ++t) {
      const auto idx = static_cast<std::size_t>(
          std::llround(static_cast<double>(t) * kTrainSteps / steps) - 1);
      s.alpha_bar[static_cast<std::size_t>(t)] = train[idx];
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [](double u) {
      const double c = std::cos((u + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
      return c * c;
    };
    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double beta =
          std::min(1.0 - f(static_cast<double>(t) / steps) / f(static_cast<double>(t - 1) / steps),
                   0.999);
      prod *= 1.0 - beta;
      s.alpha_bar[static_cast<std::size_t>(t)] = prod;
    }
  }
  s.band = noisiest_band(steps, band_fraction);
  s.validate();
  return s;
}

LatentVideo ddim_step(const LatentVideo& z_t, const Tensor4d& eps, int t,
                      const DDIMSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw validation_error("ddim_step: t=" + std::to_string(t) + " outside [1, " +
                           std::to_string(sched.steps) + "]");
  }
  return {ddim_transfer(z_t.latents, eps, sched, t, t - 1), t - 1};
}

Tensor4d predict_x0(const Tensor4d& z_t, const Tensor4d& eps, int t, const DDIMSchedule& sched) {
  require_same_shape(z_t, eps, "predict_x0");
  Tensor4d out(z_t.frames(), z_t.channels(), z_t.height(), z_t.width());
  out.values() = (z_t.values() - sched.noise(t) * eps.values()) / sched.signal(t);
  return out;
}

LatentVideo ddim_invert(const LatentVideo& clean, const RegionConditioning& cond,
                        const DenoiserBackend& denoiser, const DDIMSchedule& sched) {
  if (clean.timestep != 0) throw validation_error("ddim_invert: input must be clean (t = 0)");
  LatentVideo z = clean;
  for (int t = 1; t <= sched.steps; ++t) {
    const DenoiserOutput out = denoiser.denoise(z, t, cond);
    z = {ddim_transfer(z.latents, out.eps, sched, t - 1, t), t};
  }
  return z;
}

LatentVideo ddim_sample(const LatentVideo& z, const RegionConditioning& cond,
                        const DenoiserBackend& denoiser, const DDIMSchedule& sched, int stop) {
  LatentVideo cur = z;
  for (int t = z.timestep; t > stop; --t) {
    const DenoiserOutput out = denoiser.denoise(cur, t, cond);
    cur = ddim_step(cur, out.eps, t, sched);
  }
  return cur;
}

}  // namespace genvideo
