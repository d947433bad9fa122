#pragma once

#include "genvideo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace genvideo {

/// Axis-aligned rectangle on the latent grid.
struct Rect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  bool contains(int y, int x) const {
    return y >= row && y < row + height && x >= col && x < col + width;
  }
  int area() const { return height * width; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Velocity {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const Velocity&, const Velocity&) = default;
};

/// One registered scene: a background and one rectangle translating at a
/// constant integer velocity (latent cells per frame). An optional texture
/// perturbs each cell; the rectangle's texture travels with it.
struct SceneSpec {
  std::string id;
  std::string prompt;
  int height = 8;
  int width = 8;
  double background = 0.0;
  double value = 1.0;
  Rect rect;
  Velocity velocity;
  double texture_amplitude = 0.0;
  std::uint64_t texture_seed = 0;

  Rect footprint(int frame) const {
    return {rect.row + velocity.dy * frame, rect.col + velocity.dx * frame, rect.height,
            rect.width};
  }
  bool footprint_in_bounds(int frame) const;
  /// Number of leading frames whose footprint stays inside the grid (capped).
  int frames_in_bounds(int cap = 64) const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Ground-truth correspondence from frame i to a neighbour, on the latent grid.
struct FlowMap {
  Plane<int> dy;
  Plane<int> dx;
  Plane<int> valid;  // 1 where the correspondence is visible in the neighbour
};

struct SynthClip {
  FrameVideo video;
  std::vector<Rect> footprints;
  std::vector<FlowMap> forward_flow;   // i -> i+1, N-1 entries
  std::vector<FlowMap> backward_flow;  // i -> i-1, index i-1 holds frame i's map
};

class SyntheticWorld {
 public:
  int scale = 1;     // image pixels per latent cell
  int channels = 3;  // image and latent channels
  std::vector<SceneSpec> scenes;

  const SceneSpec& scene(const std::string& id) const;
  const SceneSpec* find_scene(const std::string& id) const;
  const SceneSpec* find_by_prompt(const std::string& prompt) const;

  /// Clean latent frame [1, C, h, w]. With `foreground_only` everything outside
  /// the footprint is zero.
  Tensor4d render(const std::string& id, int frame, bool foreground_only = false) const;
  /// Pixel-space frame: render() replicated over scale x scale blocks.
  Tensor4d render_image(const std::string& id, int frame, bool foreground_only = false) const;

  SynthClip synth_video(const std::string& id, int frames) const;
  FlowMap flow(const std::string& id, int frame, int direction) const;
  /// Binary footprint mask [1, 1, h, w] on the latent grid.
  Tensor4d footprint_mask(const std::string& id, int frame) const;

  void validate() const;

  static SyntheticWorld parse(const std::string& text);
  std::string serialize() const;
  static SyntheticWorld load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Registry shipped with the tools and used throughout the tests.
  static SyntheticWorld builtin();
};

/// Nearest-neighbour upsampling of [N, C, h, w] by an integer factor.
Tensor4d upsample_nearest(const Tensor4d& t, int factor);

}  // namespace genvideo
