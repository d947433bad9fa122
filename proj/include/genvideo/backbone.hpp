#pragma once

#include "genvideo/scheduler.hpp"
#include "genvideo/types.hpp"
#include "genvideo/world.hpp"

#include <memory>
#include <string>
#include <vector>

namespace genvideo {

// ---------------------------------------------------------------------------
// Contracts a real diffusion checkpoint adapter has to satisfy.
//
// Autoencoder      encode() maps [N, C_img, H, W] pixels to [N, C_lat, H/s, W/s]
//                  clean latents (timestep 0); decode() inverts it.
// ConditionEmbedder  embed_text() returns a [L_tok, D] token matrix, the empty
//                  prompt maps to a single all-zero row (the unconditional
//                  input); embed_image() returns a D-vector for one frame.
// DenoiserBackend  denoise() predicts eps with the input latent shape and
//                  returns decoder-block features; the block named
//                  kCorrectionBlock must always be present. With a mask the
//                  background image embedding is injected where M = 0 and the
//                  foreground one where M = 1, the mask resized to each feature
//                  resolution with resize_mask_nearest().
// ---------------------------------------------------------------------------

class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual LatentVideo encode(const FrameVideo& video) const = 0;
  virtual FrameVideo decode(const LatentVideo& latents) const = 0;
  virtual int scale() const = 0;
};

class ConditionEmbedder {
 public:
  virtual ~ConditionEmbedder() = default;
  virtual Eigen::MatrixXd embed_text(const std::string& prompt) const = 0;
  /// `image` is a single frame, [1, C, H, W].
  virtual Eigen::VectorXd embed_image(const Tensor4d& image) const = 0;
  virtual Index dim() const = 0;
};

/// Stand-in for a text-to-image-embedding prior, used to fill the background
/// image slot when the background is allowed to change.
class ImagePrior {
 public:
  virtual ~ImagePrior() = default;
  virtual Eigen::VectorXd image_embedding(const std::string& prompt) const = 0;
};

class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;
  virtual DenoiserOutput denoise(const LatentVideo& latents, int t,
                                 const RegionConditioning& cond) const = 0;
  /// False when the backend has no meaningful prediction for the null
  /// conditioning; callers then skip classifier-free guidance.
  virtual bool has_unconditional() const = 0;
  virtual std::vector<std::string> block_names() const = 0;
};

/// Everything the pipeline needs from a model.
struct Backbone {
  std::shared_ptr<const Autoencoder> autoencoder;
  std::shared_ptr<const ConditionEmbedder> embedder;
  std::shared_ptr<const DenoiserBackend> denoiser;
  std::shared_ptr<const ImagePrior> prior;  // optional
};

Conditioning null_conditioning(const ConditionEmbedder& embedder);
Conditioning make_conditioning(const ConditionEmbedder& embedder, const std::string& prompt,
                               Eigen::MatrixXd image_rows);
/// One image-embedding row per frame of `video`.
Eigen::MatrixXd embed_frames(const ConditionEmbedder& embedder, const FrameVideo& video);
/// Unit-norm mean of the token rows (zero for the null prompt).
Eigen::VectorXd pooled_text(const Eigen::MatrixXd& tokens);

/// Nearest-neighbour resize of a [N, 1, h, w] mask, re-binarized at > 0.5.
Tensor4d resize_mask_nearest(const Tensor4d& mask, Index height, Index width);

/// Average pooling by an integer factor. Constant blocks pool exactly.
Tensor4d average_pool(const Tensor4d& t, int factor);

// ---------------------------------------------------------------------------
// Toy backbone: analytic stand-ins that make every downstream stage checkable.
// ---------------------------------------------------------------------------

/// Identity (scale 1) or block-average encoder with nearest-neighbour decoder.
class ToyAutoencoder final : public Autoencoder {
 public:
  explicit ToyAutoencoder(int scale = 1);
  LatentVideo encode(const FrameVideo& video) const override;
  FrameVideo decode(const LatentVideo& latents) const override;
  int scale() const override { return scale_; }

 private:
  int scale_;
};

/// Images: unit-normalized vector of the frame average-pooled onto a
/// grid x grid raster. Text: per-token unit vectors drawn from a seeded hash.
class ToyEmbedder final : public ConditionEmbedder {
 public:
  explicit ToyEmbedder(int channels = 3, int grid = 8, std::uint64_t seed = 0x5eed);
  Eigen::MatrixXd embed_text(const std::string& prompt) const override;
  Eigen::VectorXd embed_image(const Tensor4d& image) const override;
  Index dim() const override { return static_cast<Index>(channels_) * grid_ * grid_; }

 private:
  int channels_;
  int grid_;
  std::uint64_t seed_;
};

struct ToyBackboneOptions {
  int feature_stride = 1;      // correction-block resolution = latent / stride
  bool unconditional = false;  // render the null conditioning as a blank scene
  double match_threshold = 0.98;
};

/// eps = (z_t - sqrt(ab_t) R) / sqrt(1 - ab_t) where R is the registry render
/// of the scene the conditioning names. Exact for DDIM: any z_t built as
/// sqrt(ab_t) R + sqrt(1 - ab_t) eta returns eta.
class ToyBackbone final : public DenoiserBackend {
 public:
  ToyBackbone(std::shared_ptr<const SyntheticWorld> world,
              std::shared_ptr<const ConditionEmbedder> embedder, DDIMSchedule schedule,
              ToyBackboneOptions options = {});

  DenoiserOutput denoise(const LatentVideo& latents, int t,
                         const RegionConditioning& cond) const override;
  bool has_unconditional() const override { return options_.unconditional; }
  std::vector<std::string> block_names() const override;

  /// Scene named by the conditioning for frame `frame`; empty for the null
  /// conditioning. Throws for embeddings that match no registered scene.
  std::string identify(const Conditioning& cond, Index frame) const;
  /// Clean latent frame [1, C, h, w] for the conditioning.
  Tensor4d toy_render(const Conditioning& cond, int frame_index) const;
  /// x0 target used by denoise(): per-location selection between background
  /// and foreground renders under the mask.
  Tensor4d region_render(const RegionConditioning& cond, Index frames, Index height,
                         Index width) const;

  const DDIMSchedule& schedule() const { return schedule_; }
  const SyntheticWorld& world() const { return *world_; }

 private:
  struct CatalogEntry {
    std::size_t scene;
    Eigen::VectorXd embedding;
  };

  std::shared_ptr<const SyntheticWorld> world_;
  std::shared_ptr<const ConditionEmbedder> embedder_;
  DDIMSchedule schedule_;
  ToyBackboneOptions options_;
  std::vector<CatalogEntry> catalog_;
  std::vector<Eigen::VectorXd> prompt_vectors_;
};

/// Maps a prompt to the embedding of its registry scene's first frame.
class WorldPrior final : public ImagePrior {
 public:
  WorldPrior(std::shared_ptr<const SyntheticWorld> world,
             std::shared_ptr<const ConditionEmbedder> embedder);
  Eigen::VectorXd image_embedding(const std::string& prompt) const override;

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  std::shared_ptr<const ConditionEmbedder> embedder_;
};

Backbone make_toy_backbone(std::shared_ptr<const SyntheticWorld> world,
                           const DDIMSchedule& schedule, ToyBackboneOptions options = {},
                           int autoencoder_scale = 1);

}  // namespace genvideo
