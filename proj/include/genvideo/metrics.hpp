#pragma once

#include "genvideo/backbone.hpp"
#include "genvideo/correction.hpp"
#include "genvideo/world.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace genvideo {

enum class EmbedderKind { toy_pixel, external_adapter };

/// Embedder used for scoring. Outputs are unit vectors (or zero for blank input).
class ScoreEmbedder {
 public:
  virtual ~ScoreEmbedder() = default;
  virtual EmbedderKind kind() const = 0;
  virtual Index dim() const = 0;
  virtual Eigen::VectorXd embed_image(const Tensor4d& frame) const = 0;
  virtual Eigen::VectorXd embed_text(const std::string& prompt) const = 0;
};

/// Pixel embedder: images through ToyEmbedder, text as pooled token vectors.
class ToyPixelEmbedder final : public ScoreEmbedder {
 public:
  explicit ToyPixelEmbedder(std::shared_ptr<const ConditionEmbedder> base);
  EmbedderKind kind() const override { return EmbedderKind::toy_pixel; }
  Index dim() const override { return base_->dim(); }
  Eigen::VectorXd embed_image(const Tensor4d& frame) const override;
  Eigen::VectorXd embed_text(const std::string& prompt) const override;

 private:
  std::shared_ptr<const ConditionEmbedder> base_;
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean cosine between each frame and the prompt.
double clip_t_score(const FrameVideo& video, const std::string& prompt,
                    const ScoreEmbedder& embedder);
double clip_t_score(const FrameVideo& video, const Eigen::VectorXd& text_embedding,
                    const ScoreEmbedder& embedder);
/// Mean cosine between each frame and the target image.
double dino_score(const FrameVideo& video, const Tensor4d& target_image,
                  const ScoreEmbedder& embedder);
/// Mean cosine over consecutive frame pairs; needs at least two frames.
double temp_score(const FrameVideo& video, const ScoreEmbedder& embedder);

struct CEMap {
  PlaneXd error;      // endpoint error, zero where not evaluated
  Plane<int> evaluated;
  double mean = 0.0;  // over evaluated locations
  Index count = 0;
};

/// Endpoint error of a field against ground-truth flow on locations where the
/// flow is valid and `mask` (if given) is set.
CEMap correspondence_error_map(const NNField& field, const FlowMap& gt,
                               const PlaneXd* mask = nullptr);

struct MetricsRow {
  std::string method;
  double clip_t = 0.0;
  double dino = 0.0;
  double temp = 0.0;
};

/// Published scores of the full method at scale, shipped for comparison only.
MetricsRow published_reference_row();

/// Comma-separated table with header "Method,CLIP-T,DINO,Temp".
std::string format_metrics_table(const std::vector<MetricsRow>& rows);
void write_metrics_table(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

}  // namespace genvideo
