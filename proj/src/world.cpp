#include "genvideo/world.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace genvideo {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic texture value in [-1, 1] for one cell of one region.
double texture_value(std::uint64_t seed, int region, int c, int y, int x) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(region));
  h = splitmix64(h ^ static_cast<std::uint64_t>(c));
  h = splitmix64(h ^ static_cast<std::uint64_t>(y));
  h = splitmix64(h ^ static_cast<std::uint64_t>(x));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

}  // namespace

bool SceneSpec::footprint_in_bounds(int frame) const {
  const Rect r = footprint(frame);
  return r.row >= 0 && r.col >= 0 && r.row + r.height <= height && r.col + r.width <= width;
}

int SceneSpec::frames_in_bounds(int cap) const {
  int n = 0;
  while (n < cap && footprint_in_bounds(n)) ++n;
  return n;
}

const SceneSpec* SyntheticWorld::find_scene(const std::string& id) const {
  for (const auto& s : scenes) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const SceneSpec& SyntheticWorld::scene(const std::string& id) const {
  if (const auto* s = find_scene(id)) return *s;
  throw validation_error("unknown scene '" + id + "'");
}

const SceneSpec* SyntheticWorld::find_by_prompt(const std::string& prompt) const {
  for (const auto& s : scenes) {
    if (s.prompt == prompt) return &s;
  }
  return nullptr;
}

Tensor4d SyntheticWorld::render(const std::string& id, int frame, bool foreground_only) const {
  const SceneSpec& s = scene(id);
  if (frame < 0 || !s.footprint_in_bounds(frame)) {
    throw validation_error("scene '" + id + "': footprint leaves the frame at frame " +
                           std::to_string(frame));
  }
  const Rect fp = s.footprint(frame);
  Tensor4d out(1, channels, s.height, s.width);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        double v = 0.0;
        if (fp.contains(y, x)) {
          v = s.value;
          if (s.texture_amplitude > 0.0) {
            v += s.texture_amplitude * texture_value(s.texture_seed, 1, c, y - fp.row, x - fp.col);
          }
        } else if (!foreground_only) {
          v = s.background;
          if (s.texture_amplitude > 0.0) {
            v += s.texture_amplitude * texture_value(s.texture_seed, 0, c, y, x);
          }
        }
        out(0, c, y, x) = v;
      }
    }
  }
  return out;
}

Tensor4d upsample_nearest(const Tensor4d& t, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  if (factor == 1) return t;
  Tensor4d out(t.frames(), t.channels(), t.height() * factor, t.width() * factor);
  for (Index n = 0; n < t.frames(); ++n) {
    for (Index c = 0; c < t.channels(); ++c) {
      auto src = t.plane(n, c);
      auto dst = out.plane(n, c);
      for (Index y = 0; y < dst.rows(); ++y) {
        for (Index x = 0; x < dst.cols(); ++x) dst(y, x) = src(y / factor, x / factor);
      }
    }
  }
  return out;
}

Tensor4d SyntheticWorld::render_image(const std::string& id, int frame,
                                      bool foreground_only) const {
  return upsample_nearest(render(id, frame, foreground_only), scale);
}

Tensor4d SyntheticWorld::footprint_mask(const std::string& id, int frame) const {
  const SceneSpec& s = scene(id);
  const Rect fp = s.footprint(frame);
  Tensor4d out(1, 1, s.height, s.width);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) out(0, 0, y, x) = fp.contains(y, x) ? 1.0 : 0.0;
  }
  return out;
}

FlowMap SyntheticWorld::flow(const std::string& id, int frame, int direction) const {
  if (direction != 1 && direction != -1) {
    throw std::invalid_argument("flow: direction must be +1 or -1");
  }
  const SceneSpec& s = scene(id);
  const Rect here = s.footprint(frame);
  const Rect there = s.footprint(frame + direction);
  FlowMap f{Plane<int>::Zero(s.height, s.width), Plane<int>::Zero(s.height, s.width),
            Plane<int>::Zero(s.height, s.width)};
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (here.contains(y, x)) {
        f.dy(y, x) = direction * s.velocity.dy;
        f.dx(y, x) = direction * s.velocity.dx;
        f.valid(y, x) = 1;
      } else {
        // Static background; hidden in the neighbour when the object covers it.
        f.valid(y, x) = there.contains(y, x) ? 0 : 1;
      }
    }
  }
  return f;
}

SynthClip SyntheticWorld::synth_video(const std::string& id, int frames) const {
  if (frames < 1) throw validation_error("synth_video: need at least one frame");
  const SceneSpec& s = scene(id);
  SynthClip clip;
  clip.video.frames = Tensor4d(frames, channels, s.height * scale, s.width * scale);
  for (int n = 0; n < frames; ++n) {
    clip.video.frames.set_frame(n, render_image(id, n));
    clip.footprints.push_back(s.footprint(n));
  }
  for (int n = 0; n + 1 < frames; ++n) {
    clip.forward_flow.push_back(flow(id, n, +1));
    clip.backward_flow.push_back(flow(id, n + 1, -1));
  }
  return clip;
}

void SyntheticWorld::validate() const {
  if (scale < 1) throw validation_error("world.scale must be >= 1");
  if (channels < 1) throw validation_error("world.channels must be >= 1");
  std::map<std::string, int> ids;
  for (const auto& s : scenes) {
    const std::string where = "scene '" + s.id + "'";
    if (s.id.empty()) throw validation_error("scene with empty id");
    if (++ids[s.id] > 1) throw validation_error("duplicate " + where);
    if (s.height < 1 || s.width < 1) throw validation_error(where + ": size must be positive");
    if (s.rect.height < 1 || s.rect.width < 1) {
      throw validation_error(where + ": rect must be non-empty");
    }
    if (!s.footprint_in_bounds(0)) throw validation_error(where + ": rect outside the grid");
    if (s.texture_amplitude < 0.0) throw validation_error(where + ": negative texture amplitude");
    for (double base : {s.background, s.value}) {
      if (base - s.texture_amplitude < 0.0 || base + s.texture_amplitude > 1.0) {
        throw validation_error(where + ": intensities must stay within [0, 1]");
      }
    }
  }
}

SyntheticWorld SyntheticWorld::parse(const std::string& text) {
  SyntheticWorld world;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::map<std::string, std::string>> fields;
  for (const auto& kv : parse_key_values(text, "world")) {
    if (kv.key == "world.scale") {
      world.scale = static_cast<int>(parse_int(kv.value, kv.key));
      continue;
    }
    if (kv.key == "world.channels") {
      world.channels = static_cast<int>(parse_int(kv.value, kv.key));
      continue;
    }
    const std::string prefix = "scene.";
    const auto last_dot = kv.key.rfind('.');
    if (kv.key.rfind(prefix, 0) != 0 || last_dot <= prefix.size()) {
      throw validation_error("world: unknown key '" + kv.key + "'");
    }
    const std::string id = kv.key.substr(prefix.size(), last_dot - prefix.size());
    const std::string field = kv.key.substr(last_dot + 1);
    if (!index.count(id)) {
      index[id] = world.scenes.size();
      world.scenes.push_back(SceneSpec{});
      world.scenes.back().id = id;
    }
    fields[id][field] = kv.value;
  }
  for (auto& s : world.scenes) {
    const auto& f = fields[s.id];
    auto key = [&](const std::string& name) { return "scene." + s.id + "." + name; };
    for (const auto& [name, value] : f) {
      if (name == "prompt") {
        s.prompt = value;
      } else if (name == "size") {
        auto v = parse_ints(value, key(name), 2);
        s.height = static_cast<int>(v[0]);
        s.width = static_cast<int>(v[1]);
      } else if (name == "background") {
        s.background = parse_double(value, key(name));
      } else if (name == "value") {
        s.value = parse_double(value, key(name));
      } else if (name == "rect") {
        auto v = parse_ints(value, key(name), 4);
        s.rect = {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                  static_cast<int>(v[3])};
      } else if (name == "velocity") {
        auto v = parse_ints(value, key(name), 2);
        s.velocity = {static_cast<int>(v[0]), static_cast<int>(v[1])};
      } else if (name == "texture") {
        const auto words = split_words(value);
        if (words.size() != 2) throw validation_error(key(name) + ": expected 'amplitude seed'");
        s.texture_amplitude = parse_double(words[0], key(name));
        s.texture_seed = static_cast<std::uint64_t>(parse_int(words[1], key(name)));
      } else {
        throw validation_error("world: unknown key '" + key(name) + "'");
      }
    }
    for (const char* required : {"prompt", "size", "rect"}) {
      if (!f.count(required)) throw validation_error("world: missing " + key(required));
    }
  }
  world.validate();
  return world;
}

std::string SyntheticWorld::serialize() const {
  std::ostringstream out;
  out << "world.scale = " << scale << "\n";
  out << "world.channels = " << channels << "\n";
  for (const auto& s : scenes) {
    const std::string p = "scene." + s.id + ".";
    out << p << "prompt = " << s.prompt << "\n";
    out << p << "size = " << s.height << " " << s.width << "\n";
    out << p << "background = " << format_double(s.background) << "\n";
    out << p << "value = " << format_double(s.value) << "\n";
    out << p << "rect = " << s.rect.row << " " << s.rect.col << " " << s.rect.height << " "
        << s.rect.width << "\n";
    out << p << "velocity = " << s.velocity.dy << " " << s.velocity.dx << "\n";
    out << p << "texture = " << format_double(s.texture_amplitude) << " " << s.texture_seed
        << "\n";
  }
  return out.str();
}

SyntheticWorld SyntheticWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read world file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void SyntheticWorld::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write world file " + path.string());
  out << serialize();
}

SyntheticWorld SyntheticWorld::builtin() {
  SyntheticWorld w;
  auto add = [&](std::string id, std::string prompt, int size, double background, double value,
                 Rect rect, Velocity velocity, double texture = 0.0, std::uint64_t seed = 0) {
    SceneSpec s;
    s.id = std::move(id);
    s.prompt = std::move(prompt);
    s.height = size;
    s.width = size;
    s.background = background;
    s.value = value;
    s.rect = rect;
    s.velocity = velocity;
    s.texture_amplitude = texture;
    s.texture_seed = seed;
    w.scenes.push_back(std::move(s));
  };
  add("square-8", "a white square sliding right", 8, 0.2, 0.9, {2, 1, 3, 3}, {0, 1});
  // Source/target pairs: the target rectangle encloses the source one on every
  // frame and covers 2-4x its area. Target values differ so that no two
  // scenes ever render the same frame.
  add("car", "a silver car on a mountain road", 16, 0.1, 0.95, {7, 1, 3, 4}, {0, 1});
  add("bus", "a red bus on a mountain road", 16, 0.1, 0.5, {5, 1, 5, 6}, {0, 1});
  add("ball", "a ball falling down", 16, 0.1, 0.95, {6, 6, 2, 2}, {1, 0});
  add("balloon", "a balloon falling down", 16, 0.1, 0.55, {5, 5, 4, 3}, {1, 0});
  add("cat", "a cat jumping across", 16, 0.1, 0.95, {4, 4, 3, 3}, {1, 1});
  add("tiger", "a tiger jumping across", 16, 0.1, 0.6, {3, 3, 5, 6}, {1, 1});
  add("boat", "a boat sailing left", 16, 0.1, 0.95, {10, 10, 2, 4}, {0, -1});
  add("ship", "a ship sailing left", 16, 0.1, 0.45, {8, 9, 4, 6}, {0, -1});
  add("bird", "a bird perched still", 16, 0.1, 0.95, {2, 2, 3, 3}, {0, 0});
  add("eagle", "an eagle perched still", 16, 0.1, 0.52, {1, 1, 4, 5}, {0, 0});
  add("textured-pan", "a patterned crate sliding right", 16, 0.5, 0.5, {4, 2, 6, 6}, {0, 1},
      0.35, 7);
  w.validate();
  return w;
}

}  // namespace genvideo
