#include "genvideo/config.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace genvideo {

namespace {

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  const std::string t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw validation_error("'" + key + "': expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

int parse_small_int(const std::string& s, const std::string& key) {
  const long long v = parse_int(s, key);
  if (v < -(1LL << 30) || v > (1LL << 30)) throw validation_error("'" + key + "': out of range");
  return static_cast<int>(v);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define GV_STRING(k, member)                                          \
  Field {                                                             \
    k, [](const RunConfig& c) { return c.member; },                   \
        [](RunConfig& c, const std::string& v) { c.member = v; }      \
  }
#define GV_INT(k, member)                                                          \
  Field {                                                                          \
    k, [](const RunConfig& c) { return std::to_string(c.member); },                \
        [](RunConfig& c, const std::string& v) { c.member = parse_small_int(v, k); } \
  }
#define GV_U64(k, member)                                                     \
  Field {                                                                     \
    k, [](const RunConfig& c) { return std::to_string(c.member); },           \
        [](RunConfig& c, const std::string& v) { c.member = parse_u64(v, k); } \
  }
#define GV_DOUBLE(k, member)                                                     \
  Field {                                                                        \
    k, [](const RunConfig& c) { return format_double(c.member); },               \
        [](RunConfig& c, const std::string& v) { c.member = parse_double(v, k); } \
  }
#define GV_BOOL(k, member)                                                     \
  Field {                                                                      \
    k, [](const RunConfig& c) { return bool_str(c.member); },                  \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(v, k); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GV_U64("seed", seed),
      GV_STRING("backbone", backbone),
      GV_STRING("world", world),
      GV_STRING("source_dir", source_dir),
      GV_INT("source_frames", source_frames),
      GV_STRING("source_prompt", source_prompt),
      GV_STRING("target_prompt", target_prompt),
      GV_STRING("target_image", target_image),
      GV_STRING("target_mask", target_mask),
      GV_STRING("output_dir", output_dir),
      GV_STRING("checkpoint", checkpoint),
      GV_STRING("diagnostics.flow_scene", flow_scene),
      GV_INT("schedule.steps", steps),
      Field{"schedule.curve", [](const RunConfig& c) { return to_string(c.curve); },
            [](RunConfig& c, const std::string& v) { c.curve = parse_noise_curve(v); }},
      GV_DOUBLE("schedule.band_fraction", band_fraction),
      GV_DOUBLE("guidance.scale", guidance_scale),
      GV_BOOL("guidance.invedit", guidance_invedit),
      GV_DOUBLE("invedit.threshold", invedit_threshold),
      GV_BOOL("invedit.closing", invedit_closing),
      Field{"invedit.source_image", [](const RunConfig& c) { return to_string(c.source_image); },
            [](RunConfig& c, const std::string& v) { c.source_image = parse_source_image_mode(v); }},
      Field{"mask_provider.strategy", [](const RunConfig& c) { return to_string(c.mask_strategy); },
            [](RunConfig& c, const std::string& v) { c.mask_strategy = parse_mask_strategy(v); }},
      GV_DOUBLE("mask_provider.threshold", mask_threshold),
      GV_BOOL("correction.enabled", correction_enabled),
      GV_STRING("correction.block", correction_block),
      GV_INT("correction.window", correction_window),
      GV_INT("correction.window_radius", correction_window_radius),
      GV_INT("correction.active_steps", correction_active_steps),
      Field{"correction.weights",
            [](const RunConfig& c) {
              return format_double(c.correction_weights.w_minus) + " " +
                     format_double(c.correction_weights.w_zero) + " " +
                     format_double(c.correction_weights.w_plus);
            },
            [](RunConfig& c, const std::string& v) {
              const auto w = parse_doubles(v, "correction.weights", 3);
              c.correction_weights = {w[0], w[1], w[2]};
            }},
      Field{"correction.feature_pass", [](const RunConfig& c) { return to_string(c.feature_pass); },
            [](RunConfig& c, const std::string& v) { c.feature_pass = parse_feature_pass(v); }},
      GV_BOOL("pipeline.preserve_background", preserve_background),
      GV_INT("finetune.frames", finetune.frames),
      GV_DOUBLE("finetune.lr", finetune.lr),
      GV_INT("finetune.iterations", finetune.iterations),
      GV_DOUBLE("finetune.cond_dropout", finetune.cond_dropout),
      GV_DOUBLE("finetune.weight_decay", finetune.weight_decay),
      Field{"finetune.betas",
            [](const RunConfig& c) {
              return format_double(c.finetune.beta1) + " " + format_double(c.finetune.beta2);
            },
            [](RunConfig& c, const std::string& v) {
              const auto b = parse_doubles(v, "finetune.betas", 2);
              c.finetune.beta1 = b[0];
              c.finetune.beta2 = b[1];
            }},
      GV_INT("autoencoder.scale", autoencoder_scale),
      GV_INT("toy.feature_stride", toy_feature_stride),
      GV_BOOL("toy.unconditional", toy_unconditional),
      GV_INT("attention.width", attention_width),
      GV_INT("attention.time_dim", attention_time_dim),
      GV_U64("attention.init_seed", attention_init_seed),
      GV_BOOL("eval.enabled", eval_enabled),
      GV_STRING("eval.frames", eval_frames),
  };
  return table;
}

#undef GV_STRING
#undef GV_INT
#undef GV_U64
#undef GV_DOUBLE
#undef GV_BOOL

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  // Write-only alias: named threshold presets.
  if (key == "invedit.threshold_preset") {
    invedit_threshold = threshold_preset(trim(value));
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw validation_error("unknown config key '" + key + "'");
  f->set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw validation_error("unknown config key '" + key + "'");
  return f->get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    out.emplace_back("invedit.threshold_preset");
    return out;
  }();
  return names;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig c;
  for (const auto& kv : parse_key_values(text, origin)) {
    try {
      c.set(kv.key, kv.value);
    } catch (const Error& e) {
      throw validation_error(origin + ":" + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (backbone != "toy" && backbone != "attention") {
    throw validation_error("backbone must be 'toy' or 'attention', got '" + backbone + "'");
  }
  if (source_frames < 0) throw validation_error("source_frames must be >= 0");
  if (steps < 1) throw validation_error("schedule.steps must be >= 1");
  if (correction_window < 1) throw validation_error("correction.window must be >= 1");
  if (autoencoder_scale < 1) throw validation_error("autoencoder.scale must be >= 1");
  if (toy_feature_stride < 1) throw validation_error("toy.feature_stride must be >= 1");
  if (attention_width < 1 || attention_time_dim < 1) {
    throw validation_error("attention dimensions must be >= 1");
  }
  if (mask_strategy == MaskStrategy::external && target_mask.empty()) {
    throw validation_error("mask_provider.strategy = external requires target_mask");
  }
  finetune.validate();
  pipeline_config().validate();
}

PipelineConfig RunConfig::pipeline_config() const {
  PipelineConfig p;
  p.schedule = make_schedule(steps, curve, band_fraction);
  p.guidance = {guidance_scale, guidance_invedit};
  p.invedit.threshold = invedit_threshold;
  p.invedit.closing = invedit_closing;
  p.invedit.source_image = source_image;
  p.mask_provider.strategy = mask_strategy;
  p.mask_provider.threshold = mask_threshold;
  p.correction.enabled = correction_enabled;
  p.correction.block = correction_block;
  p.correction.window = correction_window_radius >= 0
                            ? SearchWindow::symmetric(correction_window_radius)
                            : SearchWindow::from_extent(correction_window);
  p.correction.active_steps = correction_active_steps;
  p.correction.weights = correction_weights;
  p.correction.feature_pass = feature_pass;
  p.preserve_background = preserve_background;
  p.seed = seed;
  return p;
}

AttentionDenoiserConfig RunConfig::attention_config(Index channels, Index embed_dim) const {
  AttentionDenoiserConfig a;
  a.channels = channels;
  a.width = attention_width;
  a.time_dim = attention_time_dim;
  a.embed_dim = embed_dim;
  a.init_seed = attention_init_seed;
  return a;
}

SyntheticWorld load_world(const RunConfig& config) {
  return config.world.empty() ? SyntheticWorld::builtin() : SyntheticWorld::load(config.world);
}

Backbone make_backbone(const RunConfig& config, std::shared_ptr<const SyntheticWorld> world) {
  const DDIMSchedule sched = make_schedule(config.steps, config.curve, config.band_fraction);
  if (config.backbone == "toy") {
    if (config.autoencoder_scale != world->scale) {
      throw validation_error("autoencoder.scale " + std::to_string(config.autoencoder_scale) +
                             " must equal the world scale " + std::to_string(world->scale) +
                             " for the toy backbone");
    }
    ToyBackboneOptions options;
    options.feature_stride = config.toy_feature_stride;
    options.unconditional = config.toy_unconditional;
    return make_toy_backbone(world, sched, options, config.autoencoder_scale);
  }
  auto embedder = std::make_shared<ToyEmbedder>(world->channels);
  auto model = std::make_shared<AttentionDenoiser>(
      config.attention_config(world->channels, embedder->dim()));
  if (!config.checkpoint.empty()) load_checkpoint(*model, config.checkpoint);
  Backbone b;
  b.autoencoder = std::make_shared<ToyAutoencoder>(config.autoencoder_scale);
  b.embedder = embedder;
  b.denoiser = model;
  b.prior = std::make_shared<WorldPrior>(world, embedder);
  return b;
}

}  // namespace genvideo
