#include "genvideo/correction.hpp"

#include "genvideo/error.hpp"

#include <dlfcn.h>

#include <cmath>
#include <cstdlib>
#include <mutex>

namespace genvideo {

SearchWindow SearchWindow::from_extent(int extent) {
  if (extent < 1) throw validation_error("search window extent must be >= 1");
  return {-(extent / 2), extent - 1 - extent / 2};
}

void SearchWindow::validate() const {
  if (lo > 0 || hi < 0) throw validation_error("search window must contain the zero offset");
}

NNField NNField::identity(Index height, Index width, SearchWindow window) {
  return {Plane<int>::Zero(height, width), Plane<int>::Zero(height, width), window,
          FieldDirection::next};
}

double feature_cosine(const double* a, const double* b, Index channels, Index stride_a,
                      Index stride_b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Index c = 0; c < channels; ++c) {
    const double x = a[c * stride_a];
    const double y = b[c * stride_b];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot / (na * nb);
}

std::vector<double> to_slab(const Tensor4d& features) {
  const Index h = features.height();
  const Index w = features.width();
  const Index ch = features.channels();
  std::vector<double> slab(static_cast<std::size_t>(h * w * ch));
  for (Index c = 0; c < ch; ++c) {
    auto p = features.plane(0, c);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) slab[static_cast<std::size_t>((y * w + x) * ch + c)] = p(y, x);
    }
  }
  return slab;
}

namespace {

void check_pair(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window) {
  if (!f_i.same_shape(f_j)) {
    throw validation_error("compute_nn_field: shape mismatch " + f_i.shape_string() + " vs " +
                           f_j.shape_string());
  }
  if (f_i.frames() != 1) throw validation_error("compute_nn_field: expects single-frame features");
  window.validate();
  if (!f_i.values().allFinite() || !f_j.values().allFinite()) {
    throw validation_error("compute_nn_field: non-finite features");
  }
}

// Same search as the kernel contract, on [h, w, C] slabs.
void reference_slab(const double* fi, const double* fj, Index h, Index w, Index ch,
                    SearchWindow window, Plane<int>& dy_out, Plane<int>& dx_out) {
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double* a = fi + (y * w + x) * ch;
      double best = 0.0;
      int best_l1 = 0, best_dy = 0, best_dx = 0;
      bool found = false;
      for (int dy = window.lo; dy <= window.hi; ++dy) {
        const Index yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = window.lo; dx <= window.hi; ++dx) {
          const Index xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const double sim = feature_cosine(a, fj + (yy * w + xx) * ch, ch, 1, 1);
          const int l1 = std::abs(dy) + std::abs(dx);
          // Offsets are visited in row-major order, so an equal-sim, equal-L1
          // candidate seen later never wins.
          if (!found || sim > best || (sim == best && l1 < best_l1)) {
            found = true;
            best = sim;
            best_l1 = l1;
            best_dy = dy;
            best_dx = dx;
          }
        }
      }
      dy_out(y, x) = best_dy;
      dx_out(y, x) = best_dx;
    }
  }
}

struct KernelRegistry {
  std::mutex mutex;
  genvideo_nn_field_fn fn = nullptr;
  std::string name = "reference";
  bool env_checked = false;
};

KernelRegistry& registry() {
  static KernelRegistry r;
  return r;
}

}  // namespace

NNField compute_nn_field_reference(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window) {
  check_pair(f_i, f_j, window);
  const Index h = f_i.height();
  const Index w = f_i.width();
  NNField field = NNField::identity(h, w, window);
  const std::vector<double> a = to_slab(f_i);
  const std::vector<double> b = to_slab(f_j);
  reference_slab(a.data(), b.data(), h, w, f_i.channels(), window, field.dy, field.dx);
  return field;
}

NNField compute_nn_field(const Tensor4d& f_i, const Tensor4d& f_j, SearchWindow window) {
  init_nn_field_kernel_from_env();
  genvideo_nn_field_fn fn;
  {
    std::lock_guard lock(registry().mutex);
    fn = registry().fn;
  }
  if (!fn) return compute_nn_field_reference(f_i, f_j, window);

  check_pair(f_i, f_j, window);
  const Index h = f_i.height();
  const Index w = f_i.width();
  const std::vector<double> a = to_slab(f_i);
  const std::vector<double> b = to_slab(f_j);
  const genvideo_feature_slab sa{a.data(), static_cast<int32_t>(h), static_cast<int32_t>(w),
                                 static_cast<int32_t>(f_i.channels())};
  const genvideo_feature_slab sb{b.data(), sa.height, sa.width, sa.channels};
  std::vector<int32_t> offsets(static_cast<std::size_t>(2 * h * w));
  const int32_t rc = fn(&sa, &sb, window.lo, window.hi, offsets.data());
  if (rc != 0) {
    throw validation_error("nn-field kernel '" + nn_field_kernel_name() + "' failed with code " +
                           std::to_string(rc));
  }
  NNField field = NNField::identity(h, w, window);
  for (Index p = 0; p < h * w; ++p) {
    const int dy = offsets[static_cast<std::size_t>(2 * p)];
    const int dx = offsets[static_cast<std::size_t>(2 * p + 1)];
    const Index y = p / w, x = p % w;
    if (!window.contains(dy, dx) || y + dy < 0 || y + dy >= h || x + dx < 0 || x + dx >= w) {
      throw validation_error("nn-field kernel returned an offset outside the window");
    }
    field.dy(y, x) = dy;
    field.dx(y, x) = dx;
  }
  return field;
}

void set_nn_field_kernel(genvideo_nn_field_fn fn, std::string name) {
  std::lock_guard lock(registry().mutex);
  registry().env_checked = true;
  registry().fn = fn;
  registry().name = fn ? std::move(name) : "reference";
}

bool load_nn_field_kernel(const std::string& path) {
  void* lib = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!lib) return false;
  using VersionFn = int32_t (*)();
  auto version = reinterpret_cast<VersionFn>(dlsym(lib, "genvideo_nn_field_version"));
  auto fn = reinterpret_cast<genvideo_nn_field_fn>(dlsym(lib, "genvideo_nn_field_v1"));
  if (!version || !fn || version() != GENVIDEO_NN_FIELD_ABI) {
    dlclose(lib);
    return false;
  }
  // The library stays loaded for the life of the process.
  set_nn_field_kernel(fn, path);
  return true;
}

std::string nn_field_kernel_name() {
  std::lock_guard lock(registry().mutex);
  return registry().name;
}

void init_nn_field_kernel_from_env() {
  {
    std::lock_guard lock(registry().mutex);
    if (registry().env_checked) return;
    registry().env_checked = true;
  }
  if (const char* path = std::getenv("GENVIDEO_NN_KERNEL"); path && *path) {
    load_nn_field_kernel(path);
  }
}

NNField upsample_field(const NNField& field, int factor) {
  if (factor < 1) throw validation_error("upsample_field: factor must be >= 1");
  if (factor == 1) return field;
  const Index h = field.height() * factor;
  const Index w = field.width() * factor;
  NNField out = NNField::identity(h, w, field.window);
  out.window = {field.window.lo * factor, field.window.hi * factor};
  out.direction = field.direction;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index ty = std::clamp<Index>(y + Index{field.dy(y / factor, x / factor)} * factor, 0, h - 1);
      const Index tx = std::clamp<Index>(x + Index{field.dx(y / factor, x / factor)} * factor, 0, w - 1);
      out.dy(y, x) = static_cast<int>(ty - y);
      out.dx(y, x) = static_cast<int>(tx - x);
    }
  }
  return out;
}

NNField upsample_field_to(const NNField& field, Index height, Index width) {
  if (field.height() < 1 || field.width() < 1 || height % field.height() != 0 ||
      width % field.width() != 0 || height / field.height() != width / field.width()) {
    throw validation_error("upsample_field: latent size " + std::to_string(height) + "x" +
                           std::to_string(width) + " is not an integer multiple of field size " +
                           std::to_string(field.height()) + "x" + std::to_string(field.width()));
  }
  return upsample_field(field, static_cast<int>(height / field.height()));
}

void BlendWeights::validate() const {
  if (!(w_minus >= 0.0 && w_zero >= 0.0 && w_plus >= 0.0)) {
    throw validation_error("blend weights must be non-negative");
  }
  if (std::abs(sum() - 1.0) > 1e-12) throw validation_error("blend weights must sum to 1");
}

BlendWeights BlendWeights::for_frame(Index i, Index n) const {
  const bool has_prev = i > 0;
  const bool has_next = i + 1 < n;
  if (has_prev && has_next) return *this;
  const double wm = has_prev ? w_minus : 0.0;
  const double wp = has_next ? w_plus : 0.0;
  const double total = wm + w_zero + wp;
  if (!(total > 0.0)) return {0.0, 1.0, 0.0};
  return {wm / total, w_zero / total, wp / total};
}

VideoFields compute_video_fields(const Tensor4d& features, SearchWindow window, Index height,
                                 Index width) {
  const Index n = features.frames();
  VideoFields out;
  out.prev.resize(static_cast<std::size_t>(n));
  out.next.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Tensor4d fi = features.frame(i);
    if (i > 0) {
      NNField f = upsample_field_to(compute_nn_field(fi, features.frame(i - 1), window), height, width);
      f.direction = FieldDirection::prev;
      out.prev[static_cast<std::size_t>(i)] = std::move(f);
    }
    if (i + 1 < n) {
      NNField f = upsample_field_to(compute_nn_field(fi, features.frame(i + 1), window), height, width);
      f.direction = FieldDirection::next;
      out.next[static_cast<std::size_t>(i)] = std::move(f);
    }
  }
  return out;
}

FeaturePass parse_feature_pass(const std::string& name) {
  if (name == "unmasked") return FeaturePass::unmasked;
  if (name == "masked") return FeaturePass::masked;
  throw validation_error("unknown feature pass '" + name + "'");
}

std::string to_string(FeaturePass pass) {
  return pass == FeaturePass::unmasked ? "unmasked" : "masked";
}

void CorrectionConfig::validate() const {
  window.validate();
  weights.validate();
  if (active_steps < 0) throw validation_error("correction.active_steps must be >= 0");
  if (block.empty()) throw validation_error("correction.block must be nonempty");
}

}  // namespace genvideo
