#pragma once

#include "genvideo/backbone.hpp"
#include "genvideo/correction.hpp"
#include "genvideo/pipeline.hpp"
#include "genvideo/scheduler.hpp"
#include "genvideo/world.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

namespace gvtest {

using namespace genvideo;

struct Toy {
  std::shared_ptr<const SyntheticWorld> world;
  DDIMSchedule sched;
  Backbone backbone;

  const ToyBackbone& toy() const { return static_cast<const ToyBackbone&>(*backbone.denoiser); }
};

inline Toy make_toy(int steps = 50, ToyBackboneOptions options = {},
                    NoiseCurve curve = NoiseCurve::linear) {
  Toy t;
  t.world = std::make_shared<const SyntheticWorld>(SyntheticWorld::builtin());
  t.sched = make_schedule(steps, curve);
  t.backbone = make_toy_backbone(t.world, t.sched, options);
  return t;
}

inline Tensor4d random_normal(Index n, Index c, Index h, Index w, std::mt19937_64& rng,
                              double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, sigma);
  Tensor4d t(n, c, h, w);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
  return t;
}

inline Tensor4d random_mask(Index n, Index h, Index w, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Tensor4d t(n, 1, h, w);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = b(rng) ? 1.0 : 0.0;
  return t;
}

/// Clean latents of a registry scene, frames [0, n).
inline Tensor4d scene_latents(const SyntheticWorld& world, const std::string& id, int n) {
  const SceneSpec& s = world.scene(id);
  Tensor4d out(n, world.channels, s.height, s.width);
  for (int k = 0; k < n; ++k) out.set_frame(k, world.render(id, k));
  return out;
}

inline Conditioning scene_conditioning(const Toy& toy, const std::string& id, int frames) {
  const SyntheticWorld& w = *toy.world;
  FrameVideo v{Tensor4d(frames, w.channels, w.scene(id).height * w.scale,
                        w.scene(id).width * w.scale),
               std::nullopt};
  for (int k = 0; k < frames; ++k) v.frames.set_frame(k, w.render_image(id, k));
  return make_conditioning(*toy.backbone.embedder, w.scene(id).prompt,
                           embed_frames(*toy.backbone.embedder, v));
}

/// Edit request turning scene `src` into scene `trg` on the toy world.
inline EditRequest scene_edit(const Toy& toy, const std::string& src, const std::string& trg,
                              int frames, bool preserve_background = true) {
  const SyntheticWorld& w = *toy.world;
  EditRequest req;
  const SynthClip clip = w.synth_video(src, frames);
  req.source_video = clip.video;
  req.source_prompt = w.scene(src).prompt;
  req.target_prompt = w.scene(trg).prompt;
  req.target_image = w.render_image(trg, 0);
  req.config.schedule = toy.sched;
  req.config.preserve_background = preserve_background;
  return req;
}

/// Geometric mask oracle: union of source and target footprints.
inline Tensor4d union_footprint(const SyntheticWorld& w, const std::string& src,
                                const std::string& trg, int frame) {
  Tensor4d a = w.footprint_mask(src, frame);
  const Tensor4d b = w.footprint_mask(trg, frame);
  a.values() = a.values().max(b.values());
  return a;
}

inline double iou(const PlaneXd& a, const PlaneXd& b) {
  const auto ab = a.array() > 0.5;
  const auto bb = b.array() > 0.5;
  const double inter = (ab && bb).count();
  const double uni = (ab || bb).count();
  return uni == 0.0 ? 1.0 : inter / uni;
}

/// Exhaustive oracle: scores every location of f_j, then keeps the window's
/// candidates and picks the best by (similarity desc, L1 asc, dy asc, dx asc).
inline NNField brute_force_field(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window) {
  const Index h = f_i.height(), w = f_i.width(), ch = f_i.channels();
  NNField out = NNField::identity(h, w, window);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      std::vector<std::tuple<double, int, int, int>> cand;
      for (Index qy = 0; qy < h; ++qy) {
        for (Index qx = 0; qx < w; ++qx) {
          double dot = 0, na = 0, nb = 0;
          for (Index c = 0; c < ch; ++c) {
            const double a = f_i(0, c, y, x), b = f_j(0, c, qy, qx);
            dot += a * b;
            na += a * a;
            nb += b * b;
          }
          na = std::sqrt(na);
          nb = std::sqrt(nb);
          const double sim = (na < 1e-12 || nb < 1e-12) ? 0.0 : dot / (na * nb);
          const int dy = static_cast<int>(qy - y), dx = static_cast<int>(qx - x);
          if (!window.contains(dy, dx)) continue;
          cand.emplace_back(-sim, std::abs(dy) + std::abs(dx), dy, dx);
        }
      }
      const auto best = *std::min_element(cand.begin(), cand.end());
      out.dy(y, x) = std::get<2>(best);
      out.dx(y, x) = std::get<3>(best);
    }
  }
  return out;
}

}  // namespace gvtest
