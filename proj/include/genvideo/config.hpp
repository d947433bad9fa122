#pragma once

#include "genvideo/attention.hpp"
#include "genvideo/backbone.hpp"
#include "genvideo/finetune.hpp"
#include "genvideo/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace genvideo {

/// Every knob of a run. Defaults follow the published implementation details
/// where they exist.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string backbone = "toy";  // toy | attention
  std::string world;             // scene registry file; empty = built-in registry
  std::string source_dir;
  int source_frames = 0;         // expected frame count; 0 = whatever the directory holds
  std::string source_prompt;
  std::string target_prompt;
  std::string target_image;
  std::string target_mask;       // for mask_provider.strategy = external
  std::string output_dir = "out";
  std::string checkpoint;
  std::string flow_scene;        // registry scene providing ground-truth flow for diagnostics

  int steps = 50;
  NoiseCurve curve = NoiseCurve::linear;
  double band_fraction = 0.8;
  double guidance_scale = 12.5;
  bool guidance_invedit = false;

  double invedit_threshold = 0.6;
  bool invedit_closing = false;
  SourceImageMode source_image = SourceImageMode::per_frame;

  MaskStrategy mask_strategy = MaskStrategy::full_image;
  double mask_threshold = 0.5;

  bool correction_enabled = true;
  std::string correction_block = kCorrectionBlock;
  int correction_window = 4;         // extent of the search window
  int correction_window_radius = -1; // >= 0 selects a symmetric window instead
  int correction_active_steps = 5;
  BlendWeights correction_weights;
  FeaturePass feature_pass = FeaturePass::unmasked;

  bool preserve_background = true;

  FinetuneConfig finetune;

  int autoencoder_scale = 1;
  int toy_feature_stride = 1;
  bool toy_unconditional = false;
  int attention_width = 16;
  int attention_time_dim = 16;
  std::uint64_t attention_init_seed = 1234;

  bool eval_enabled = true;
  std::string eval_frames;  // frames scored by `eval`; empty = <output_dir>/frames

  /// Sets one key from its textual value; unknown keys are validation errors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;

  void validate() const;
  PipelineConfig pipeline_config() const;
  AttentionDenoiserConfig attention_config(Index channels, Index embed_dim) const;
};

/// Registry named by the config (built-in when `world` is empty).
SyntheticWorld load_world(const RunConfig& config);

/// Backbone for the config: the toy backbone, or the attention denoiser
/// (loading `checkpoint` when set) with toy autoencoder and embedder.
Backbone make_backbone(const RunConfig& config, std::shared_ptr<const SyntheticWorld> world);

}  // namespace genvideo
