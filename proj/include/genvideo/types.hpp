#pragma once

#include "genvideo/tensor.hpp"

#include <map>
#include <optional>
#include <string>

namespace genvideo {

/// Pixel-space video, values in [0, 1].
struct FrameVideo {
  Tensor4d frames;  // [N, C_img, H, W]
  std::optional<double> frame_rate;

  Index size() const { return frames.frames(); }
};

/// Latent stack at a given diffusion timestep (0 = clean).
struct LatentVideo {
  Tensor4d latents;  // [N, C_lat, h, w]
  int timestep = 0;

  Index size() const { return latents.frames(); }
};

/// Per-frame binary masks at latent resolution, stored as [N, 1, h, w] of {0, 1}.
struct MaskSequence {
  Tensor4d masks;
  double threshold_used = 0.0;

  Index size() const { return masks.frames(); }
  bool is_binary() const { return ((masks.values() == 0.0) || (masks.values() == 1.0)).all(); }
  bool any() const { return (masks.values() > 0.5).any(); }

  static MaskSequence filled(Index frames, Index height, Index width, double value) {
    return {Tensor4d::constant(frames, 1, height, width, value), 0.0};
  }
};

/// Per-frame nonnegative heat, [N, 1, h, w].
struct HeatmapSequence {
  Tensor4d heat;
  bool normalized = false;

  Index size() const { return heat.frames(); }
};

/// Text token embedding plus image embedding. `image` holds one row shared by
/// every frame, or one row per frame.
struct Conditioning {
  Eigen::MatrixXd text;   // [L_tok, D]
  Eigen::MatrixXd image;  // [1 or N, D]

  Index dim() const { return text.cols(); }

  Eigen::VectorXd image_for(Index frame) const {
    return image.rows() == 1 ? Eigen::VectorXd(image.row(0).transpose())
                             : Eigen::VectorXd(image.row(frame).transpose());
  }

  bool image_is_null() const { return image.size() == 0 || image.isZero(0.0); }
  bool text_is_null() const { return text.size() == 0 || text.isZero(0.0); }

  friend bool operator==(const Conditioning& a, const Conditioning& b) {
    return a.text.rows() == b.text.rows() && a.text.cols() == b.text.cols() &&
           a.image.rows() == b.image.rows() && a.image.cols() == b.image.cols() &&
           a.text == b.text && a.image == b.image;
  }
};

/// Background/foreground conditioning pair with an optional mask. Without a
/// mask only the foreground conditioning is consulted (the "no mask" input).
struct RegionConditioning {
  Conditioning background;
  Conditioning foreground;
  std::optional<MaskSequence> mask;

  static RegionConditioning unmasked(Conditioning cond) {
    RegionConditioning out;
    out.background = cond;
    out.foreground = std::move(cond);
    return out;
  }
};

inline constexpr const char* kCorrectionBlock = "up_block_2";

struct DenoiserOutput {
  Tensor4d eps;                                   // same shape as the input latents
  std::map<std::string, Tensor4d> block_features; // block name -> [N, C_f, h_f, w_f]

  const Tensor4d& features(const std::string& block) const {
    auto it = block_features.find(block);
    if (it == block_features.end()) {
      throw std::invalid_argument("denoiser output has no block '" + block + "'");
    }
    return it->second;
  }
};

}  // namespace genvideo
