#include "genvideo/metrics.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <fstream>

namespace genvideo {

ToyPixelEmbedder::ToyPixelEmbedder(std::shared_ptr<const ConditionEmbedder> base)
    : base_(std::move(base)) {
  if (!base_) throw validation_error("ToyPixelEmbedder: base embedder required");
}

Eigen::VectorXd ToyPixelEmbedder::embed_image(const Tensor4d& frame) const {
  return base_->embed_image(frame);
}

Eigen::VectorXd ToyPixelEmbedder::embed_text(const std::string& prompt) const {
  return pooled_text(base_->embed_text(prompt));
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double clip_t_score(const FrameVideo& video, const Eigen::VectorXd& text_embedding,
                    const ScoreEmbedder& embedder) {
  if (video.size() < 1) throw validation_error("clip_t_score: empty video");
  double sum = 0.0;
  for (Index n = 0; n < video.size(); ++n) {
    sum += cosine(embedder.embed_image(video.frames.frame(n)), text_embedding);
  }
  return sum / static_cast<double>(video.size());
}

double clip_t_score(const FrameVideo& video, const std::string& prompt,
                    const ScoreEmbedder& embedder) {
  return clip_t_score(video, embedder.embed_text(prompt), embedder);
}

double dino_score(const FrameVideo& video, const Tensor4d& target_image,
                  const ScoreEmbedder& embedder) {
  if (video.size() < 1) throw validation_error("dino_score: empty video");
  const Eigen::VectorXd target = embedder.embed_image(target_image);
  double sum = 0.0;
  for (Index n = 0; n < video.size(); ++n) {
    sum += cosine(embedder.embed_image(video.frames.frame(n)), target);
  }
  return sum / static_cast<double>(video.size());
}

double temp_score(const FrameVideo& video, const ScoreEmbedder& embedder) {
  if (video.size() < 2) throw validation_error("temp_score: needs at least two frames");
  Eigen::VectorXd prev = embedder.embed_image(video.frames.frame(0));
  double sum = 0.0;
  for (Index n = 1; n < video.size(); ++n) {
    Eigen::VectorXd cur = embedder.embed_image(video.frames.frame(n));
    // Identical frames embed identically; score them as exactly 1.
    sum += prev == cur && prev.norm() > 0.0 ? 1.0 : cosine(prev, cur);
    prev = std::move(cur);
  }
  return sum / static_cast<double>(video.size() - 1);
}

CEMap correspondence_error_map(const NNField& field, const FlowMap& gt, const PlaneXd* mask) {
  const Index h = field.height();
  const Index w = field.width();
  if (gt.dy.rows() != h || gt.dy.cols() != w) {
    throw validation_error("correspondence_error_map: field " + std::to_string(h) + "x" +
                           std::to_string(w) + " vs flow " + std::to_string(gt.dy.rows()) + "x" +
                           std::to_string(gt.dy.cols()));
  }
  if (mask && (mask->rows() != h || mask->cols() != w)) {
    throw validation_error("correspondence_error_map: mask size mismatch");
  }
  CEMap out{PlaneXd::Zero(h, w), Plane<int>::Zero(h, w), 0.0, 0};
  double sum = 0.0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (!gt.valid(y, x) || (mask && !((*mask)(y, x) > 0.5))) continue;
      const double ey = field.dy(y, x) - gt.dy(y, x);
      const double ex = field.dx(y, x) - gt.dx(y, x);
      out.error(y, x) = std::sqrt(ey * ey + ex * ex);
      out.evaluated(y, x) = 1;
      sum += out.error(y, x);
      ++out.count;
    }
  }
  out.mean = out.count ? sum / static_cast<double>(out.count) : 0.0;
  return out;
}

MetricsRow published_reference_row() { return {"published (reported)", 0.241, 0.374, 0.967}; }

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
  std::string out = "Method,CLIP-T,DINO,Temp\n";
  for (const auto& r : rows) {
    out += r.method + "," + format_double(r.clip_t) + "," + format_double(r.dino) + "," +
           format_double(r.temp) + "\n";
  }
  return out;
}

void write_metrics_table(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write metrics table " + path.string());
  out << format_metrics_table(rows);
}

}  // namespace genvideo
