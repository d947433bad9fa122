#pragma once

#include "genvideo/backbone.hpp"

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace genvideo {

/// Parameter groups that one-shot finetuning may update.
enum class AttentionGroup { st_attn_query, cross_attn_query, t_attn_all };

std::string to_string(AttentionGroup group);
AttentionGroup parse_attention_group(const std::string& name);

enum class KeyFramePolicy { first_and_previous };

struct AttentionInflationSpec {
  KeyFramePolicy st_attn_key_frames = KeyFramePolicy::first_and_previous;
  bool t_attn_enabled = true;
  std::set<AttentionGroup> trainable_set = {AttentionGroup::st_attn_query,
                                            AttentionGroup::cross_attn_query,
                                            AttentionGroup::t_attn_all};

  /// Query of ST-attn, query of cross-attn and all of T-attn trainable.
  static AttentionInflationSpec faithful() { return {}; }
  bool is_faithful() const { return t_attn_enabled && trainable_set.size() == 3; }
};

struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  bool trainable = false;
};

/// softmax(q k^T / sqrt(d)) v, row-wise. `probs` receives the attention matrix.
Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v, Eigen::MatrixXd* probs = nullptr);

struct AttentionGrad {
  Eigen::MatrixXd dq;
  Eigen::MatrixXd dk;
  Eigen::MatrixXd dv;
};

AttentionGrad attention_backward(const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& q,
                                 const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                 const Eigen::MatrixXd& probs);

/// Frames (0-based) whose features form ST-attn keys/values for frame n:
/// the first frame plus the previous one, without duplicates.
std::vector<Index> st_context_frames(Index n);

/// Spatio-temporal, cross and temporal attention over per-frame token
/// matrices [L, width]. Each layer is residual: h + softmax(...) V W_o.
class InflatedAttention {
 public:
  enum Slot { st_q, st_k, st_v, st_o, ca_q, ca_k, ca_v, ca_o, t_q, t_k, t_v, t_o, kSlots };

  InflatedAttention(const AttentionInflationSpec& spec, Index width, Index text_dim,
                    std::uint64_t seed);

  using Frames = std::vector<Eigen::MatrixXd>;

  Frames spatio_temporal(const Frames& hidden) const;
  Frames cross(const Frames& hidden, const Eigen::MatrixXd& text) const;
  Frames temporal(const Frames& hidden) const;

  struct Cache {
    Frames st_in, ca_in, t_in;
    Frames st_q, st_k, st_v, st_p;
    Frames ca_q, ca_k, ca_v, ca_p;
    std::vector<Eigen::MatrixXd> t_seq, t_q, t_k, t_v, t_p;  // one per location
  };

  Frames forward(const Frames& hidden, const Eigen::MatrixXd& text, Cache* cache) const;
  /// Accumulates parameter gradients (indexed by Slot) for trainable slots.
  void backward(const Frames& d_out, const Cache& cache, std::vector<Eigen::MatrixXd>& grads) const;

  const AttentionInflationSpec& spec() const { return spec_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Eigen::MatrixXd& weight(Slot s) const { return params_[static_cast<std::size_t>(s)].value; }
  bool trainable(Slot s) const { return params_[static_cast<std::size_t>(s)].trainable; }

 private:
  AttentionInflationSpec spec_;
  Index width_;
  std::vector<Parameter> params_;
};

/// A denoiser with parameters that finetuning can update.
class TrainableDenoiser : public DenoiserBackend {
 public:
  virtual std::vector<Parameter> parameters() const = 0;
  virtual void set_parameter(const std::string& name, const Eigen::MatrixXd& value) = 0;
  /// Mean squared error between predicted eps at z_t and `target`, plus its
  /// gradient for every trainable parameter (same order as parameters()).
  virtual double loss_and_gradients(const LatentVideo& z_t, int t, const RegionConditioning& cond,
                                    const Tensor4d& target,
                                    std::vector<Eigen::MatrixXd>* grads) const = 0;
  /// Hash identifying the architecture a checkpoint belongs to.
  virtual std::uint64_t config_hash() const = 0;
};

struct AttentionDenoiserConfig {
  Index channels = 3;      // latent channels
  Index width = 16;        // hidden width
  Index time_dim = 16;     // sinusoidal timestep embedding width
  Index embed_dim = 192;   // text/image embedding width
  std::uint64_t init_seed = 1234;
  AttentionInflationSpec inflation;
};

/// Sinusoidal timestep embedding.
Eigen::RowVectorXd timestep_embedding(int t, Index dim);

/// Small inflated-attention denoiser: frozen input projection, timestep and
/// masked image-embedding injection, ST/cross/T attention, frozen output
/// projection. The correction block exposes the attention stack output.
class AttentionDenoiser final : public TrainableDenoiser {
 public:
  explicit AttentionDenoiser(AttentionDenoiserConfig config);

  DenoiserOutput denoise(const LatentVideo& latents, int t,
                         const RegionConditioning& cond) const override;
  bool has_unconditional() const override { return true; }
  std::vector<std::string> block_names() const override;

  std::vector<Parameter> parameters() const override;
  void set_parameter(const std::string& name, const Eigen::MatrixXd& value) override;
  double loss_and_gradients(const LatentVideo& z_t, int t, const RegionConditioning& cond,
                            const Tensor4d& target,
                            std::vector<Eigen::MatrixXd>* grads) const override;

  const AttentionDenoiserConfig& config() const { return config_; }
  const InflatedAttention& attention_stack() const { return attn_; }
  /// Stable hash of the architecture and frozen initialisation.
  std::uint64_t config_hash() const override;

 private:
  struct Forward {
    std::vector<Eigen::MatrixXd> h0, h4, eps;
    InflatedAttention::Cache cache;
  };
  Forward run(const LatentVideo& latents, int t, const RegionConditioning& cond,
              bool keep_cache) const;

  AttentionDenoiserConfig config_;
  std::vector<Parameter> frozen_;  // in, in_bias, t_proj, j_proj, out, out_bias
  InflatedAttention attn_;
};

}  // namespace genvideo
