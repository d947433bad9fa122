#include "genvideo/backbone.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <sstream>

namespace genvideo {

Conditioning null_conditioning(const ConditionEmbedder& embedder) {
  return {embedder.embed_text(""), Eigen::MatrixXd::Zero(1, embedder.dim())};
}

Conditioning make_conditioning(const ConditionEmbedder& embedder, const std::string& prompt,
                               Eigen::MatrixXd image_rows) {
  Conditioning c{embedder.embed_text(prompt), std::move(image_rows)};
  if (c.image.cols() != c.text.cols()) {
    throw validation_error("conditioning: text width " + std::to_string(c.text.cols()) +
                           " != image width " + std::to_string(c.image.cols()));
  }
  if (!c.text.allFinite() || !c.image.allFinite()) {
    throw validation_error("conditioning: non-finite embedding");
  }
  return c;
}

Eigen::MatrixXd embed_frames(const ConditionEmbedder& embedder, const FrameVideo& video) {
  Eigen::MatrixXd rows(video.size(), embedder.dim());
  for (Index n = 0; n < video.size(); ++n) {
    rows.row(n) = embedder.embed_image(video.frames.frame(n)).transpose();
  }
  return rows;
}

Eigen::VectorXd pooled_text(const Eigen::MatrixXd& tokens) {
  Eigen::VectorXd v = tokens.colwise().mean().transpose();
  const double n = v.norm();
  if (n < 1e-12) return Eigen::VectorXd::Zero(v.size());
  return v / n;
}

Tensor4d resize_mask_nearest(const Tensor4d& mask, Index height, Index width) {
  if (mask.height() == height && mask.width() == width) return mask;
  Tensor4d out(mask.frames(), mask.channels(), height, width);
  for (Index n = 0; n < mask.frames(); ++n) {
    for (Index c = 0; c < mask.channels(); ++c) {
      auto src = mask.plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < height; ++y) {
        const Index sy = std::min(mask.height() - 1, (2 * y + 1) * mask.height() / (2 * height));
        for (Index x = 0; x < width; ++x) {
          const Index sx = std::min(mask.width() - 1, (2 * x + 1) * mask.width() / (2 * width));
          dst(y, x) = src(sy, sx) > 0.5 ? 1.0 : 0.0;
        }
      }
    }
  }
  return out;
}

Tensor4d average_pool(const Tensor4d& t, int factor) {
  if (factor < 1) throw validation_error("average_pool: factor must be >= 1");
  if (factor == 1) return t;
  if (t.height() % factor != 0 || t.width() % factor != 0) {
    throw validation_error("average_pool: " + t.shape_string() + " not divisible by " +
                           std::to_string(factor));
  }
  Tensor4d out(t.frames(), t.channels(), t.height() / factor, t.width() / factor);
  const double count = static_cast<double>(factor) * factor;
  for (Index n = 0; n < t.frames(); ++n) {
    for (Index c = 0; c < t.channels(); ++c) {
      auto src = t.plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < dst.rows(); ++y) {
        for (Index x = 0; x < dst.cols(); ++x) {
          auto block = src.block(y * factor, x * factor, factor, factor);
          // Offset by the first sample so a constant block pools to itself exactly.
          const double first = block(0, 0);
          dst(y, x) = first + (block.array() - first).sum() / count;
        }
      }
    }
  }
  return out;
}

// --- ToyAutoencoder ---------------------------------------------------------

ToyAutoencoder::ToyAutoencoder(int scale) : scale_(scale) {
  if (scale < 1) throw validation_error("autoencoder scale must be >= 1");
}

LatentVideo ToyAutoencoder::encode(const FrameVideo& video) const {
  if (video.size() < 1) throw validation_error("encode_frames: empty video");
  if (video.frames.height() % scale_ != 0 || video.frames.width() % scale_ != 0) {
    throw validation_error("encode_frames: frame size " + std::to_string(video.frames.height()) +
                           "x" + std::to_string(video.frames.width()) +
                           " not divisible by downscale factor " + std::to_string(scale_));
  }
  return {average_pool(video.frames, scale_), 0};
}

FrameVideo ToyAutoencoder::decode(const LatentVideo& latents) const {
  return {upsample_nearest(latents.latents, scale_), std::nullopt};
}

// --- ToyEmbedder ------------------------------------------------------------

ToyEmbedder::ToyEmbedder(int channels, int grid, std::uint64_t seed)
    : channels_(channels), grid_(grid), seed_(seed) {
  if (channels < 1 || grid < 1) throw validation_error("ToyEmbedder: bad dimensions");
}

Eigen::MatrixXd ToyEmbedder::embed_text(const std::string& prompt) const {
  const auto tokens = split_words(prompt);
  if (tokens.empty()) return Eigen::MatrixXd::Zero(1, dim());
  Eigen::MatrixXd out(static_cast<Index>(tokens.size()), dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::uint64_t state = fnv1a64(tokens[i]) ^ seed_;
    for (Index d = 0; d < dim(); ++d) {
      // splitmix64 stream
      state += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = state;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      out(static_cast<Index>(i), d) = static_cast<double>(z >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }
    out.row(static_cast<Index>(i)).normalize();
  }
  return out;
}

Eigen::VectorXd ToyEmbedder::embed_image(const Tensor4d& image) const {
  if (image.frames() != 1 || image.channels() != channels_) {
    throw validation_error("embed_image: expected [1, " + std::to_string(channels_) +
                           ", H, W], got " + image.shape_string());
  }
  const Index h = image.height();
  const Index w = image.width();
  Eigen::VectorXd v(dim());
  Index k = 0;
  for (int c = 0; c < channels_; ++c) {
    auto plane = image.plane(0, c);
    for (int gy = 0; gy < grid_; ++gy) {
      const Index y0 = gy * h / grid_;
      const Index y1 = std::max(y0 + 1, (gy + 1) * h / grid_);
      for (int gx = 0; gx < grid_; ++gx) {
        const Index x0 = gx * w / grid_;
        const Index x1 = std::max(x0 + 1, (gx + 1) * w / grid_);
        v[k++] = plane.block(y0, x0, std::min(y1, h) - y0, std::min(x1, w) - x0).mean();
      }
    }
  }
  const double n = v.norm();
  if (n < 1e-12) return Eigen::VectorXd::Zero(dim());
  return v / n;
}

// --- ToyBackbone ------------------------------------------------------------

ToyBackbone::ToyBackbone(std::shared_ptr<const SyntheticWorld> world,
                         std::shared_ptr<const ConditionEmbedder> embedder, DDIMSchedule schedule,
                         ToyBackboneOptions options)
    : world_(std::move(world)),
      embedder_(std::move(embedder)),
      schedule_(std::move(schedule)),
      options_(options) {
  if (!world_ || !embedder_) throw validation_error("ToyBackbone: world and embedder required");
  if (options_.feature_stride < 1) throw validation_error("ToyBackbone: feature_stride >= 1");
  schedule_.validate();
  constexpr int kCatalogFrames = 16;
  for (std::size_t s = 0; s < world_->scenes.size(); ++s) {
    const SceneSpec& scene = world_->scenes[s];
    const int frames = std::min(kCatalogFrames, scene.frames_in_bounds());
    for (int k = 0; k < frames; ++k) {
      for (bool fg : {false, true}) {
        catalog_.push_back({s, embedder_->embed_image(world_->render_image(scene.id, k, fg))});
      }
    }
    prompt_vectors_.push_back(pooled_text(embedder_->embed_text(scene.prompt)));
  }
}

std::vector<std::string> ToyBackbone::block_names() const { return {"conv_in", kCorrectionBlock}; }

std::string ToyBackbone::identify(const Conditioning& cond, Index frame) const {
  if (!cond.image_is_null()) {
    const Eigen::VectorXd j = cond.image_for(frame);
    const double jn = j.norm();
    if (jn > 1e-12) {
      double best = -2.0;
      std::size_t best_scene = 0;
      for (const auto& e : catalog_) {
        const double sim = j.dot(e.embedding) / jn;
        if (sim > best) {
          best = sim;
          best_scene = e.scene;
        }
      }
      if (best < options_.match_threshold) {
        throw validation_error("toy backbone: image embedding matches no registered scene "
                               "(best cosine " + format_double(best) + ")");
      }
      return world_->scenes[best_scene].id;
    }
  }
  if (!cond.text_is_null()) {
    const Eigen::VectorXd p = pooled_text(cond.text);
    for (std::size_t s = 0; s < prompt_vectors_.size(); ++s) {
      if (p.dot(prompt_vectors_[s]) > 1.0 - 1e-9) return world_->scenes[s].id;
    }
    throw validation_error("toy backbone: prompt matches no registered scene");
  }
  return {};
}

Tensor4d ToyBackbone::toy_render(const Conditioning& cond, int frame_index) const {
  const std::string id = identify(cond, frame_index);
  if (id.empty()) {
    if (!options_.unconditional) {
      throw validation_error("toy backbone: null conditioning has no scene");
    }
    return {};
  }
  return world_->render(id, frame_index);
}

Tensor4d ToyBackbone::region_render(const RegionConditioning& cond, Index frames, Index height,
                                    Index width) const {
  Tensor4d r(frames, world_->channels, height, width);
  std::optional<Tensor4d> mask;
  if (cond.mask) {
    if (cond.mask->size() != frames) {
      throw validation_error("denoise: mask has " + std::to_string(cond.mask->size()) +
                             " frames, latents have " + std::to_string(frames));
    }
    mask = resize_mask_nearest(cond.mask->masks, height, width);
  }
  auto render_checked = [&](const Conditioning& c, int n) {
    Tensor4d f = toy_render(c, n);
    if (f.empty()) return Tensor4d(1, world_->channels, height, width);
    if (f.height() != height || f.width() != width) {
      throw validation_error("toy backbone: scene grid " + std::to_string(f.height()) + "x" +
                             std::to_string(f.width()) + " does not match latents " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    return f;
  };
  for (Index n = 0; n < frames; ++n) {
    const int frame = static_cast<int>(n);
    if (!mask) {
      r.set_frame(n, render_checked(cond.foreground, frame));
      continue;
    }
    const Tensor4d fg = render_checked(cond.foreground, frame);
    const Tensor4d bg =
        cond.background == cond.foreground ? fg : render_checked(cond.background, frame);
    auto m = mask->plane(n, 0);
    for (Index c = 0; c < r.channels(); ++c) {
      r.plane(n, c) = (m.array() > 0.5).select(fg.plane(0, c), bg.plane(0, c));
    }
  }
  return r;
}

DenoiserOutput ToyBackbone::denoise(const LatentVideo& latents, int t,
                                    const RegionConditioning& cond) const {
  if (t < 1 || t > schedule_.steps) {
    throw validation_error("denoise: t=" + std::to_string(t) + " outside [1, " +
                           std::to_string(schedule_.steps) + "]");
  }
  const Tensor4d& z = latents.latents;
  if (z.channels() != world_->channels) {
    throw validation_error("denoise: latent channels " + std::to_string(z.channels()) +
                           " != world channels " + std::to_string(world_->channels));
  }
  const Tensor4d r = region_render(cond, z.frames(), z.height(), z.width());
  DenoiserOutput out;
  out.eps = Tensor4d(z.frames(), z.channels(), z.height(), z.width());
  out.eps.values() = (z.values() - schedule_.signal(t) * r.values()) / schedule_.noise(t);
  out.block_features["conv_in"] = average_pool(z, options_.feature_stride);
  out.block_features[kCorrectionBlock] = average_pool(r, options_.feature_stride);
  return out;
}

// --- WorldPrior -------------------------------------------------------------

WorldPrior::WorldPrior(std::shared_ptr<const SyntheticWorld> world,
                       std::shared_ptr<const ConditionEmbedder> embedder)
    : world_(std::move(world)), embedder_(std::move(embedder)) {}

Eigen::VectorXd WorldPrior::image_embedding(const std::string& prompt) const {
  if (const SceneSpec* s = world_->find_by_prompt(prompt)) {
    return embedder_->embed_image(world_->render_image(s->id, 0));
  }
  return pooled_text(embedder_->embed_text(prompt));
}

Backbone make_toy_backbone(std::shared_ptr<const SyntheticWorld> world,
                           const DDIMSchedule& schedule, ToyBackboneOptions options,
                           int autoencoder_scale) {
  auto embedder = std::make_shared<ToyEmbedder>(world->channels);
  Backbone b;
  b.autoencoder = std::make_shared<ToyAutoencoder>(autoencoder_scale);
  b.embedder = embedder;
  b.denoiser = std::make_shared<ToyBackbone>(world, embedder, schedule, options);
  b.prior = std::make_shared<WorldPrior>(world, embedder);
  return b;
}

}  // namespace genvideo
