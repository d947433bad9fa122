#pragma once

#include "genvideo/attention.hpp"
#include "genvideo/backbone.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace genvideo {

struct FinetuneConfig {
  int frames = 16;
  double lr = 1e-5;
  int iterations = 400;
  double cond_dropout = 0.1;  // probability of training on the null conditioning
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Decoupled-weight-decay Adam over a list of matrices.
class AdamW {
 public:
  AdamW(double lr, double beta1, double beta2, double epsilon, double weight_decay);

  /// Updates `param` in place; `slot` identifies its moment buffers.
  void update(std::size_t slot, Eigen::MatrixXd& param, const Eigen::MatrixXd& grad);
  /// Marks the start of a new step (advances the bias-correction counter).
  void begin_step() { ++step_; }
  long step_count() const { return step_; }

 private:
  double lr_, beta1_, beta2_, epsilon_, weight_decay_;
  long step_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

/// Noised latent sqrt(ab_t) lat0 + sqrt(1 - ab_t) noise.
Tensor4d add_noise(const Tensor4d& lat0, const Tensor4d& noise, int t, const DDIMSchedule& sched);

/// Reconstruction loss of one training step: mean squared error between the
/// predicted eps at the noised latent and the injected noise.
double finetune_step(const LatentVideo& lat0, const RegionConditioning& cond, int t,
                     const Tensor4d& noise, const DenoiserBackend& denoiser,
                     const DDIMSchedule& sched);

/// `count` frame indices spread over [0, total) with a uniform stride.
std::vector<Index> sample_frame_indices(Index total, Index count);

struct FinetuneResult {
  std::vector<double> losses;  // one per iteration
  std::vector<Index> frames;   // source frames used for training
};

/// Finetunes the trainable parameters of `model` on one source video.
/// Every random draw (timestep, noise, conditioning frame, dropout) comes from
/// `rng`.
FinetuneResult finetune(TrainableDenoiser& model, const FrameVideo& video,
                        const std::string& prompt, const Autoencoder& autoencoder,
                        const ConditionEmbedder& embedder, const DDIMSchedule& sched,
                        const FinetuneConfig& config, std::mt19937_64& rng);

/// Sum of the sizes of all trainable parameters.
Index trainable_parameter_count(const TrainableDenoiser& model);

void save_checkpoint(const TrainableDenoiser& model, const std::filesystem::path& path);
/// Restores trainable parameters; the checkpoint's config hash must match.
void load_checkpoint(TrainableDenoiser& model, const std::filesystem::path& path);

/// CSV with header "iteration,loss".
void write_loss_log(const std::vector<double>& losses, const std::filesystem::path& path);

}  // namespace genvideo
