#pragma once

#include "genvideo/nnfield_kernel.h"
#include "genvideo/types.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace genvideo {

/// Offsets searched by the nearest-neighbour field: dy, dx in [lo, hi].
struct SearchWindow {
  int lo = -2;
  int hi = 1;

  /// Even or odd extent k: offsets {-(k/2), ..., k - 1 - k/2}. Extent 4 gives
  /// {-2, -1, 0, 1}.
  static SearchWindow from_extent(int extent);
  static SearchWindow symmetric(int radius) { return {-radius, radius}; }

  int radius() const { return std::max(-lo, hi); }
  int extent() const { return hi - lo + 1; }
  bool contains(int dy, int dx) const { return dy >= lo && dy <= hi && dx >= lo && dx <= hi; }
  void validate() const;
  friend bool operator==(const SearchWindow&, const SearchWindow&) = default;
};

enum class FieldDirection { prev, next };

/// Per-location integer offsets (target - source) from one frame to a neighbour.
struct NNField {
  Plane<int> dy;
  Plane<int> dx;
  SearchWindow window;
  FieldDirection direction = FieldDirection::next;

  Index height() const { return dy.rows(); }
  Index width() const { return dy.cols(); }
  static NNField identity(Index height, Index width, SearchWindow window = {});
  friend bool operator==(const NNField& a, const NNField& b) {
    return a.dy == b.dy && a.dx == b.dx;
  }
};

/// Cosine similarity as used by the field search (see nnfield_kernel.h).
double feature_cosine(const double* a, const double* b, Index channels, Index stride_a,
                      Index stride_b);

/// Reference implementation over frame 0 of two [1, C, h, w] feature maps.
NNField compute_nn_field_reference(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window);

/// Uses the registered accelerated kernel when present, else the reference.
NNField compute_nn_field(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window);

/// Kernel registry. A null function restores the reference path.
void set_nn_field_kernel(genvideo_nn_field_fn fn, std::string name = "custom");
/// dlopen()s a kernel library; returns false (and keeps the current kernel)
/// when the library or its symbols are missing or the ABI version differs.
bool load_nn_field_kernel(const std::string& path);
/// Name of the active implementation ("reference" when none is loaded).
std::string nn_field_kernel_name();
/// Loads the library named by GENVIDEO_NN_KERNEL, once. Called lazily by
/// compute_nn_field.
void init_nn_field_kernel_from_env();

/// Converts frame 0 of [1, C, h, w] features to a [h, w, C] slab buffer.
std::vector<double> to_slab(const Tensor4d& features);

/// Nearest replication of a field by `factor`, offsets scaled and clamped so
/// every mapped location stays in bounds.
NNField upsample_field(const NNField& field, int factor);
/// Upsamples to (height, width); both must be the same integer multiple.
NNField upsample_field_to(const NNField& field, Index height, Index width);

struct BlendWeights {
  double w_minus = 0.1;
  double w_zero = 0.8;
  double w_plus = 0.1;

  void validate() const;
  /// Weights for frame i of n: missing neighbours are dropped and the rest
  /// renormalized. A frame with no usable weight passes through (0, 1, 0).
  BlendWeights for_frame(Index i, Index n) const;
  double sum() const { return w_minus + w_zero + w_plus; }
};

/// Neighbour latent gathered along a field: out[p] = z[p + offset(p)].
template <typename Scalar>
Tensor4<Scalar> warp_frame(const Tensor4<Scalar>& z, Index frame, const NNField& field) {
  if (field.height() != z.height() || field.width() != z.width()) {
    throw std::invalid_argument("warp_frame: field " + std::to_string(field.height()) + "x" +
                                std::to_string(field.width()) + " vs latents " +
                                z.shape_string());
  }
  Tensor4<Scalar> out(1, z.channels(), z.height(), z.width());
  for (Index c = 0; c < z.channels(); ++c) {
    auto src = z.plane(frame, c);
    auto dst = out.plane(0, c);
    for (Index y = 0; y < z.height(); ++y) {
      for (Index x = 0; x < z.width(); ++x) {
        dst(y, x) = src(y + field.dy(y, x), x + field.dx(y, x));
      }
    }
  }
  return out;
}

/// Inter-frame blend of one frame [1, C, h, w]: inside the mask
/// z + w- (a - z) + w+ (b - z) with a, b the warped neighbours, outside z.
/// `prev`/`next` may be null at the sequence ends; `weights` must already be
/// the per-frame weights (see BlendWeights::for_frame).
template <typename Scalar>
Tensor4<Scalar> blend_frame(const Tensor4<Scalar>* prev_warped, const Tensor4<Scalar>& cur,
                            const Tensor4<Scalar>* next_warped, const PlaneXd& mask,
                            const BlendWeights& weights) {
  if (mask.rows() != cur.height() || mask.cols() != cur.width()) {
    throw std::invalid_argument("blend_frame: mask does not match latents");
  }
  if (weights.w_minus != 0.0 && !prev_warped) {
    throw std::invalid_argument("blend_frame: previous-frame weight without a previous frame");
  }
  if (weights.w_plus != 0.0 && !next_warped) {
    throw std::invalid_argument("blend_frame: next-frame weight without a next frame");
  }
  Tensor4<Scalar> out = cur;
  const Scalar wm = Scalar(weights.w_minus);
  const Scalar wp = Scalar(weights.w_plus);
  for (Index c = 0; c < cur.channels(); ++c) {
    auto z = cur.plane(0, c);
    auto o = out.plane(0, c);
    for (Index y = 0; y < cur.height(); ++y) {
      for (Index x = 0; x < cur.width(); ++x) {
        if (!(mask(y, x) > 0.5)) continue;
        Scalar v = z(y, x);
        if (weights.w_minus != 0.0) v += wm * (prev_warped->plane(0, c)(y, x) - z(y, x));
        if (weights.w_plus != 0.0) v += wp * (next_warped->plane(0, c)(y, x) - z(y, x));
        o(y, x) = v;
      }
    }
  }
  return out;
}

/// Fields of every frame toward its neighbours; prev[0] and next[N-1] are empty.
struct VideoFields {
  std::vector<std::optional<NNField>> prev;
  std::vector<std::optional<NNField>> next;
};

/// Fields from [N, C_f, h_f, w_f] features, upsampled to (height, width).
VideoFields compute_video_fields(const Tensor4d& features, SearchWindow window, Index height,
                                 Index width);

/// Jacobi-style blend of all frames: every frame reads its neighbours from the
/// input snapshot, so the result does not depend on frame order.
template <typename Scalar>
Tensor4<Scalar> blend_video(const Tensor4<Scalar>& z, const VideoFields& fields,
                            const Tensor4d& masks, const BlendWeights& weights) {
  weights.validate();
  const Index n = z.frames();
  if (masks.frames() != n || masks.height() != z.height() || masks.width() != z.width()) {
    throw std::invalid_argument("blend_video: mask " + masks.shape_string() + " vs latents " +
                                z.shape_string());
  }
  Tensor4<Scalar> out(n, z.channels(), z.height(), z.width());
  for (Index i = 0; i < n; ++i) {
    const BlendWeights w = weights.for_frame(i, n);
    std::optional<Tensor4<Scalar>> a, b;
    if (w.w_minus != 0.0) a = warp_frame(z, i - 1, fields.prev.at(static_cast<std::size_t>(i)).value());
    if (w.w_plus != 0.0) b = warp_frame(z, i + 1, fields.next.at(static_cast<std::size_t>(i)).value());
    const PlaneXd m = masks.plane(i, 0);
    out.set_frame(i, blend_frame(a ? &*a : nullptr, z.frame(i), b ? &*b : nullptr, m, w));
  }
  return out;
}

/// Outside the mask take the clean source latent, inside keep z.
template <typename Scalar>
Tensor4<Scalar> preserve_background(const Tensor4<Scalar>& z, const Tensor4d& masks,
                                    const Tensor4<Scalar>& clean) {
  require_same_shape(z, clean, "preserve_background");
  if (masks.frames() != z.frames() || masks.height() != z.height() ||
      masks.width() != z.width()) {
    throw std::invalid_argument("preserve_background: mask " + masks.shape_string() +
                                " vs latents " + z.shape_string());
  }
  Tensor4<Scalar> out = z;
  for (Index n = 0; n < z.frames(); ++n) {
    const auto m = masks.plane(n, 0).array() > 0.5;
    for (Index c = 0; c < z.channels(); ++c) {
      out.plane(n, c) = m.select(z.plane(n, c), clean.plane(n, c));
    }
  }
  return out;
}

enum class FeaturePass { unmasked, masked };
FeaturePass parse_feature_pass(const std::string& name);
std::string to_string(FeaturePass pass);

struct CorrectionConfig {
  bool enabled = true;
  std::string block = kCorrectionBlock;
  SearchWindow window = SearchWindow::from_extent(4);
  int active_steps = 5;  // blend while t >= T - active_steps
  BlendWeights weights;
  FeaturePass feature_pass = FeaturePass::unmasked;

  bool active(int t, int steps) const { return enabled && t >= steps - active_steps; }
  void validate() const;
};

}  // namespace genvideo
