#include "genvideo/finetune.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace genvideo {

void FinetuneConfig::validate() const {
  if (frames < 1) throw validation_error("finetune.frames must be >= 1");
  if (!(lr >= 0.0)) throw validation_error("finetune.lr must be >= 0");
  if (iterations < 0) throw validation_error("finetune.iterations must be >= 0");
  if (!(cond_dropout >= 0.0 && cond_dropout < 1.0)) {
    throw validation_error("finetune.cond_dropout must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw validation_error("finetune.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw validation_error("finetune.betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw validation_error("finetune epsilon must be > 0");
}

AdamW::AdamW(double lr, double beta1, double beta2, double epsilon, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {}

void AdamW::update(std::size_t slot, Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
  if (step_ < 1) throw std::logic_error("AdamW::update before begin_step");
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].size() == 0) {
    m_[slot] = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    v_[slot] = Eigen::MatrixXd::Zero(param.rows(), param.cols());
  }
  if (lr_ == 0.0) return;
  m_[slot] = beta1_ * m_[slot] + (1.0 - beta1_) * grad;
  v_[slot] = beta2_ * v_[slot] + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  param *= 1.0 - lr_ * weight_decay_;
  param.array() -= lr_ * (m_[slot].array() / c1) / ((v_[slot].array() / c2).sqrt() + epsilon_);
}

Tensor4d add_noise(const Tensor4d& lat0, const Tensor4d& noise, int t, const DDIMSchedule& sched) {
  require_same_shape(lat0, noise, "add_noise");
  Tensor4d z(lat0.frames(), lat0.channels(), lat0.height(), lat0.width());
  z.values() = sched.signal(t) * lat0.values() + sched.noise(t) * noise.values();
  return z;
}

double finetune_step(const LatentVideo& lat0, const RegionConditioning& cond, int t,
                     const Tensor4d& noise, const DenoiserBackend& denoiser,
                     const DDIMSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw validation_error("finetune_step: t=" + std::to_string(t) + " outside [1, " +
                           std::to_string(sched.steps) + "]");
  }
  if (!lat0.latents.same_shape(noise)) {
    throw validation_error("finetune_step: noise " + noise.shape_string() + " vs latents " +
                           lat0.latents.shape_string());
  }
  const LatentVideo z{add_noise(lat0.latents, noise, t, sched), t};
  const Tensor4d eps = denoiser.denoise(z, t, cond).eps;
  return (eps.values() - noise.values()).square().mean();
}

std::vector<Index> sample_frame_indices(Index total, Index count) {
  if (count < 1 || count > total) {
    throw validation_error("cannot sample " + std::to_string(count) + " frames from a " +
                           std::to_string(total) + "-frame video");
  }
  std::vector<Index> out;
  for (Index k = 0; k < count; ++k) out.push_back(k * total / count);
  return out;
}

FinetuneResult finetune(TrainableDenoiser& model, const FrameVideo& video,
                        const std::string& prompt, const Autoencoder& autoencoder,
                        const ConditionEmbedder& embedder, const DDIMSchedule& sched,
                        const FinetuneConfig& config, std::mt19937_64& rng) {
  config.validate();
  FinetuneResult result;
  result.frames = sample_frame_indices(video.size(), config.frames);

  FrameVideo clip;
  clip.frames = Tensor4d(static_cast<Index>(result.frames.size()), video.frames.channels(),
                         video.frames.height(), video.frames.width());
  for (std::size_t k = 0; k < result.frames.size(); ++k) {
    clip.frames.set_frame(static_cast<Index>(k), video.frames.frame(result.frames[k]));
  }
  const LatentVideo lat0 = autoencoder.encode(clip);
  const Eigen::MatrixXd text = embedder.embed_text(prompt);
  const Eigen::MatrixXd images = embed_frames(embedder, clip);
  const Conditioning null_cond = null_conditioning(embedder);

  AdamW opt(config.lr, config.beta1, config.beta2, config.epsilon, config.weight_decay);
  std::uniform_int_distribution<int> pick_t(1, sched.steps);
  std::uniform_int_distribution<Index> pick_frame(0, images.rows() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int it = 0; it < config.iterations; ++it) {
    const int t = pick_t(rng);
    Tensor4d noise(lat0.latents.frames(), lat0.latents.channels(), lat0.latents.height(),
                   lat0.latents.width());
    for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(rng);
    const Index k = pick_frame(rng);
    const bool drop = unit(rng) < config.cond_dropout;
    const Conditioning cond = drop ? null_cond : Conditioning{text, images.row(k)};

    std::vector<Eigen::MatrixXd> grads;
    const LatentVideo z{add_noise(lat0.latents, noise, t, sched), t};
    const double loss =
        model.loss_and_gradients(z, t, RegionConditioning::unmasked(cond), noise, &grads);
    result.losses.push_back(loss);

    opt.begin_step();
    const auto params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!params[p].trainable) continue;
      Eigen::MatrixXd value = params[p].value;
      opt.update(p, value, grads.at(p));
      model.set_parameter(params[p].name, value);
    }
  }
  return result;
}

Index trainable_parameter_count(const TrainableDenoiser& model) {
  Index n = 0;
  for (const auto& p : model.parameters()) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

// Format: header lines, then per trainable parameter
//   param <name> <rows> <cols>
// followed by rows*cols values in row-major order, one per line.
void save_checkpoint(const TrainableDenoiser& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write checkpoint " + path.string());
  out << "genvideo-checkpoint 1\n";
  out << "config_hash " << hex64(model.config_hash()) << "\n";
  for (const auto& p : model.parameters()) {
    if (!p.trainable) continue;
    out << "param " << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) out << format_double(p.value(r, c)) << "\n";
    }
  }
  if (!out) throw io_error("failed writing checkpoint " + path.string());
}

void load_checkpoint(TrainableDenoiser& model, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read checkpoint " + path.string());
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "genvideo-checkpoint" || version != 1) {
    throw io_error(path.string() + ": not a genvideo checkpoint");
  }
  std::string key, hash;
  in >> key >> hash;
  if (key != "config_hash") throw io_error(path.string() + ": missing config_hash");
  if (hash != hex64(model.config_hash())) {
    throw validation_error(path.string() + ": checkpoint config hash " + hash +
                           " does not match model " + hex64(model.config_hash()));
  }
  std::map<std::string, bool> trainable;
  for (const auto& p : model.parameters()) trainable[p.name] = p.trainable;
  std::string word;
  while (in >> word) {
    if (word != "param") throw io_error(path.string() + ": expected 'param', got '" + word + "'");
    std::string name;
    Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (!in || rows < 0 || cols < 0) throw io_error(path.string() + ": bad parameter header");
    auto it = trainable.find(name);
    if (it == trainable.end() || !it->second) {
      throw validation_error(path.string() + ": '" + name + "' is not a trainable parameter");
    }
    Eigen::MatrixXd value(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        std::string s;
        in >> s;
        if (!in) throw io_error(path.string() + ": truncated values for '" + name + "'");
        value(r, c) = parse_double(s, name);
      }
    }
    model.set_parameter(name, value);
  }
}

void write_loss_log(const std::vector<double>& losses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write loss log " + path.string());
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << "," << format_double(losses[i]) << "\n";
}

}  // namespace genvideo
