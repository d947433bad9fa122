#include "cli.hpp"

#include "genvideo/config.hpp"
#include "genvideo/error.hpp"
#include "genvideo/io.hpp"
#include "genvideo/keyvalue.hpp"
#include "genvideo/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <random>

namespace genvideo::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
  std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "key = value run config file");
  for (const auto& key : RunConfig::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&common, key](const std::string& v) { common.flags[key] = v; },
        "config key " + key);
  }
}

// File, then environment, then flags.
RunConfig resolve_config(const Common& common) {
  RunConfig c = common.config_file.empty() ? RunConfig{} : RunConfig::load(common.config_file);
  if (const char* env = std::getenv("GENVIDEO_OUTPUT_DIR"); env && *env) c.output_dir = env;
  for (const auto& [k, v] : common.flags) c.set(k, v);
  c.validate();
  return c;
}

FrameVideo load_source(const RunConfig& c) {
  if (c.source_dir.empty()) throw validation_error("source_dir is required");
  FrameVideo video = read_frame_dir(c.source_dir);
  if (c.source_frames > 0 && video.size() != c.source_frames) {
    throw validation_error("source_dir holds " + std::to_string(video.size()) +
                           " frames but source_frames = " + std::to_string(c.source_frames));
  }
  return video;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

EditRequest build_request(const RunConfig& c, const SyntheticWorld& world) {
  EditRequest req;
  req.source_video = load_source(c);
  req.source_prompt = c.source_prompt;
  req.target_prompt = c.target_prompt;
  if (c.target_image.empty()) throw validation_error("target_image is required");
  req.target_image = read_image(c.target_image);
  req.config = c.pipeline_config();
  if (c.mask_strategy == MaskStrategy::external) {
    req.config.mask_provider.external = read_image(c.target_mask);
  }
  if (!c.flow_scene.empty()) {
    std::vector<FlowMap> back, fwd;
    for (int i = 0; i + 1 < req.source_video.size(); ++i) {
      fwd.push_back(world.flow(c.flow_scene, i, +1));
      back.push_back(world.flow(c.flow_scene, i + 1, -1));
    }
    req.backward_flow = std::move(back);
    req.forward_flow = std::move(fwd);
  }
  return req;
}

void export_masks(const EditResult& r, const fs::path& root, int scale) {
  write_frame_dir(upsample_nearest(r.masks.masks, scale), root / "masks", "mask");
  write_frame_dir(upsample_nearest(r.heatmaps.heat, scale), root / "heatmaps", "heat");
  write_text(root / "mask_meta.txt",
             "threshold_used = " + format_double(r.masks.threshold_used) + "\nframes = " +
                 std::to_string(r.masks.size()) + "\n");
}

std::string diagnostics_jsonl(const EditResult& r) {
  std::map<int, InvEditStep> heat;
  for (const auto& s : r.invedit_steps) heat[s.t] = s;
  std::string out;
  for (const auto& d : r.steps) {
    nlohmann::json j;
    j["t"] = d.t;
    j["correction_active"] = d.correction_active;
    j["guidance_applied"] = d.guidance_applied;
    j["mask_fraction"] = d.mask_fraction;
    j["fusion_delta"] = d.fusion_delta;
    j["blend_delta"] = d.blend_delta;
    j["ce_before"] = d.ce_before ? nlohmann::json(*d.ce_before) : nlohmann::json(nullptr);
    j["ce_after"] = d.ce_after ? nlohmann::json(*d.ce_after) : nlohmann::json(nullptr);
    if (auto it = heat.find(d.t); it != heat.end()) {
      j["heat_mean"] = it->second.heat_mean;
      j["heat_max"] = it->second.heat_max;
    }
    out += j.dump() + "\n";
  }
  return out;
}

MetricsRow score(const FrameVideo& video, const RunConfig& c, const Tensor4d* target_image,
                 const std::string& method) {
  const ToyPixelEmbedder embedder(std::make_shared<ToyEmbedder>(static_cast<int>(video.frames.channels())));
  MetricsRow row{method};
  row.clip_t = clip_t_score(video, c.target_prompt, embedder);
  if (target_image) {
    const Index colors = target_image->channels() == 4 ? 3 : target_image->channels();
    Tensor4d rgb(1, colors, target_image->height(), target_image->width());
    for (Index ch = 0; ch < colors; ++ch) rgb.plane(0, ch) = target_image->plane(0, ch);
    row.dino = dino_score(video, rgb, embedder);
  }
  row.temp = video.size() >= 2 ? temp_score(video, embedder) : 1.0;
  return row;
}

int cmd_finetune(const Common& common, std::ostream& out) {
  const RunConfig c = resolve_config(common);
  const auto world = std::make_shared<SyntheticWorld>(load_world(c));
  const FrameVideo video = load_source(c);
  const DDIMSchedule sched = make_schedule(c.steps, c.curve, c.band_fraction);
  ToyAutoencoder ae(c.autoencoder_scale);
  ToyEmbedder embedder(static_cast<int>(video.frames.channels()));
  AttentionDenoiser model(c.attention_config(video.frames.channels(), embedder.dim()));
  std::mt19937_64 rng(c.seed);
  const FinetuneResult result =
      finetune(model, video, c.source_prompt, ae, embedder, sched, c.finetune, rng);

  const fs::path root = ensure_dir(c.output_dir);
  const fs::path ckpt = c.checkpoint.empty() ? root / "checkpoint.txt" : fs::path(c.checkpoint);
  save_checkpoint(model, ckpt);
  write_loss_log(result.losses, root / "loss.csv");
  out << "finetuned " << trainable_parameter_count(model) << " parameters for "
      << result.losses.size() << " iterations\n";
  out << "checkpoint: " << ckpt.string() << "\n";
  if (!result.losses.empty()) out << "final loss: " << format_double(result.losses.back()) << "\n";
  return ok;
}

int cmd_mask(const Common& common, std::ostream& out) {
  const RunConfig c = resolve_config(common);
  const auto world = std::make_shared<const SyntheticWorld>(load_world(c));
  const Backbone backbone = make_backbone(c, world);
  const EditRequest req = build_request(c, *world);
  const EditResult r = generate_edit_masks(req, backbone);
  const fs::path root = ensure_dir(c.output_dir);
  export_masks(r, root, backbone.autoencoder->scale());
  out << "wrote " << r.masks.size() << " masks (threshold " << format_double(r.masks.threshold_used)
      << ", coverage " << format_double(r.masks.masks.values().mean()) << ") to "
      << (root / "masks").string() << "\n";
  return ok;
}

int cmd_edit(const Common& common, std::ostream& out) {
  const RunConfig c = resolve_config(common);
  const auto world = std::make_shared<const SyntheticWorld>(load_world(c));
  const Backbone backbone = make_backbone(c, world);
  const EditRequest req = build_request(c, *world);
  const auto start = std::chrono::steady_clock::now();
  const EditResult r = edit_video(req, backbone);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path root = ensure_dir(c.output_dir);
  write_frame_dir(r.edited_video.frames, root / "frames", "frame");
  export_masks(r, root, backbone.autoencoder->scale());
  write_text(root / "diagnostics.jsonl", diagnostics_jsonl(r));
  write_text(root / "config_used.txt", c.serialize());
  if (c.eval_enabled) {
    const std::vector<MetricsRow> rows = {score(r.edited_video, c, &req.target_image, "this run"),
                                          published_reference_row()};
    write_metrics_table(rows, root / "metrics.csv");
  }
  out << "edited " << r.edited_video.size() << " frames in " << format_double(seconds) << " s -> "
      << (root / "frames").string() << "\n";
  return ok;
}

int cmd_eval(const Common& common, std::ostream& out) {
  const RunConfig c = resolve_config(common);
  const fs::path frames = c.eval_frames.empty() ? fs::path(c.output_dir) / "frames" : fs::path(c.eval_frames);
  const FrameVideo video = read_frame_dir(frames);
  if (c.target_prompt.empty()) throw validation_error("eval needs target_prompt");
  std::optional<Tensor4d> target;
  if (!c.target_image.empty()) target = read_image(c.target_image);
  const std::vector<MetricsRow> rows = {score(video, c, target ? &*target : nullptr, "this run"),
                                        published_reference_row()};
  const fs::path root = ensure_dir(c.output_dir);
  write_metrics_table(rows, root / "metrics.csv");
  out << format_metrics_table(rows);
  return ok;
}

struct SynthArgs {
  std::string world;
  std::string scene;
  int frames = 8;
  int first = 0;
  bool foreground = false;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticWorld world = a.world.empty() ? SyntheticWorld::builtin() : SyntheticWorld::load(a.world);
  const SceneSpec& s = world.scene(a.scene);
  if (a.frames < 1) throw validation_error("--frames must be >= 1");
  Tensor4d frames(a.frames, world.channels, s.height * world.scale, s.width * world.scale);
  for (int n = 0; n < a.frames; ++n) {
    frames.set_frame(n, world.render_image(a.scene, a.first + n, a.foreground));
  }
  const auto paths = write_frame_dir(frames, a.out_dir, "frame");
  out << "wrote " << paths.size() << " frames of '" << a.scene << "' to " << a.out_dir << "\n";
  out << "prompt: " << s.prompt << "\n";
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video editing guided by a prompt and a target image", "genvideo"};
  app.require_subcommand(1);
  Common finetune_opts, mask_opts, edit_opts, eval_opts;
  auto* finetune_cmd = app.add_subcommand("finetune", "one-shot finetuning of the attention denoiser");
  auto* mask_cmd = app.add_subcommand("mask", "InvEdit masks and heatmaps");
  auto* edit_cmd = app.add_subcommand("edit", "full editing pipeline");
  auto* eval_cmd = app.add_subcommand("eval", "CLIP-T / DINO / Temp style scores of a frame directory");
  add_config_flags(finetune_cmd, finetune_opts);
  add_config_flags(mask_cmd, mask_opts);
  add_config_flags(edit_cmd, edit_opts);
  add_config_flags(eval_cmd, eval_opts);
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "render a registry scene as numbered frames");
  synth_cmd->add_option("--world", synth.world, "scene registry file (default: built-in)");
  synth_cmd->add_option("--scene", synth.scene, "scene id")->required();
  synth_cmd->add_option("--frames", synth.frames, "frame count");
  synth_cmd->add_option("--first", synth.first, "index of the first rendered frame");
  synth_cmd->add_flag("--foreground", synth.foreground, "render the object on black");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  auto* keys_cmd = app.add_subcommand("config", "print the default config");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return invalid;
  }

  try {
    if (*finetune_cmd) return cmd_finetune(finetune_opts, out);
    if (*mask_cmd) return cmd_mask(mask_opts, out);
    if (*edit_cmd) return cmd_edit(edit_opts, out);
    if (*eval_cmd) return cmd_eval(eval_opts, out);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*keys_cmd) {
      out << RunConfig{}.serialize();
      return ok;
    }
  } catch (const StageError& e) {
    err << "error in stage " << e.stage() << ": " << e.what() << "\n";
    return pipeline_failure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::io: return io_failure;
      case ErrorKind::validation: return invalid;
      case ErrorKind::pipeline: return pipeline_failure;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return invalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return pipeline_failure;
  }
  return invalid;
}

}  // namespace genvideo::cli
