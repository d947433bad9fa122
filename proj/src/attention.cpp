#include "genvideo/attention.hpp"

#include "genvideo/error.hpp"
#include "genvideo/keyvalue.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace genvideo {

std::string to_string(AttentionGroup group) {
  switch (group) {
    case AttentionGroup::st_attn_query: return "st_attn_query";
    case AttentionGroup::cross_attn_query: return "cross_attn_query";
    case AttentionGroup::t_attn_all: return "t_attn_all";
  }
  return "?";
}

AttentionGroup parse_attention_group(const std::string& name) {
  for (auto g : {AttentionGroup::st_attn_query, AttentionGroup::cross_attn_query,
                 AttentionGroup::t_attn_all}) {
    if (to_string(g) == name) return g;
  }
  throw validation_error("unknown attention group '" + name + "'");
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v, Eigen::MatrixXd* probs) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Eigen::MatrixXd s = (q * k.transpose()) * scale;
  for (Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
  Eigen::MatrixXd out = s * v;
  if (probs) *probs = std::move(s);
  return out;
}

AttentionGrad attention_backward(const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& q,
                                 const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                 const Eigen::MatrixXd& probs) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const Eigen::MatrixXd dp = d_out * v.transpose();
  const Eigen::VectorXd row_dot = (dp.array() * probs.array()).rowwise().sum();
  const Eigen::MatrixXd ds = (probs.array() * (dp.colwise() - row_dot).array()).matrix();
  return {ds * k * scale, ds.transpose() * q * scale, probs.transpose() * d_out};
}

std::vector<Index> st_context_frames(Index n) {
  if (n <= 1) return {0};
  return {0, n - 1};
}

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Eigen::MatrixXd stack_rows(const std::vector<const Eigen::MatrixXd*>& parts) {
  Index rows = 0;
  for (const auto* p : parts) rows += p->rows();
  Eigen::MatrixXd out(rows, parts.front()->cols());
  Index r = 0;
  for (const auto* p : parts) {
    out.middleRows(r, p->rows()) = *p;
    r += p->rows();
  }
  return out;
}

}  // namespace

InflatedAttention::InflatedAttention(const AttentionInflationSpec& spec, Index width,
                                     Index text_dim, std::uint64_t seed)
    : spec_(spec), width_(width) {
  std::mt19937_64 rng(seed);
  const auto has = [&](AttentionGroup g) { return spec_.trainable_set.count(g) > 0; };
  const bool t_on = spec_.t_attn_enabled;
  auto add = [&](std::string name, Eigen::MatrixXd value, bool trainable) {
    params_.push_back({std::move(name), std::move(value), trainable});
  };
  add("st_attn.q", random_matrix(width, width, rng), has(AttentionGroup::st_attn_query));
  add("st_attn.k", random_matrix(width, width, rng), false);
  add("st_attn.v", random_matrix(width, width, rng), false);
  add("st_attn.o", random_matrix(width, width, rng), false);
  add("cross_attn.q", random_matrix(width, width, rng), has(AttentionGroup::cross_attn_query));
  add("cross_attn.k", random_matrix(text_dim, width, rng), false);
  add("cross_attn.v", random_matrix(text_dim, width, rng), false);
  add("cross_attn.o", random_matrix(width, width, rng), false);
  const bool t_train = t_on && has(AttentionGroup::t_attn_all);
  const Index tw = t_on ? width : 0;
  add("t_attn.q", random_matrix(tw, tw, rng), t_train);
  add("t_attn.k", random_matrix(tw, tw, rng), t_train);
  add("t_attn.v", random_matrix(tw, tw, rng), t_train);
  // Zero output projection: the inflated network starts as the spatial one.
  add("t_attn.o", Eigen::MatrixXd::Zero(tw, tw), t_train);
}

InflatedAttention::Frames InflatedAttention::spatio_temporal(const Frames& hidden) const {
  Frames out(hidden.size());
  for (std::size_t n = 0; n < hidden.size(); ++n) {
    std::vector<const Eigen::MatrixXd*> ctx;
    for (Index c : st_context_frames(static_cast<Index>(n))) ctx.push_back(&hidden[static_cast<std::size_t>(c)]);
    const Eigen::MatrixXd kv = stack_rows(ctx);
    out[n] = hidden[n] +
             attention(hidden[n] * weight(st_q), kv * weight(st_k), kv * weight(st_v)) *
                 weight(st_o);
  }
  return out;
}

InflatedAttention::Frames InflatedAttention::cross(const Frames& hidden,
                                                   const Eigen::MatrixXd& text) const {
  const Eigen::MatrixXd k = text * weight(ca_k);
  const Eigen::MatrixXd v = text * weight(ca_v);
  Frames out(hidden.size());
  for (std::size_t n = 0; n < hidden.size(); ++n) {
    out[n] = hidden[n] + attention(hidden[n] * weight(ca_q), k, v) * weight(ca_o);
  }
  return out;
}

InflatedAttention::Frames InflatedAttention::temporal(const Frames& hidden) const {
  if (!spec_.t_attn_enabled) return hidden;
  Frames out = hidden;
  const Index frames = static_cast<Index>(hidden.size());
  const Index tokens = hidden.front().rows();
  Eigen::MatrixXd seq(frames, width_);
  for (Index p = 0; p < tokens; ++p) {
    for (Index n = 0; n < frames; ++n) seq.row(n) = hidden[static_cast<std::size_t>(n)].row(p);
    const Eigen::MatrixXd upd =
        attention(seq * weight(t_q), seq * weight(t_k), seq * weight(t_v)) * weight(t_o);
    for (Index n = 0; n < frames; ++n) out[static_cast<std::size_t>(n)].row(p) += upd.row(n);
  }
  return out;
}

InflatedAttention::Frames InflatedAttention::forward(const Frames& hidden,
                                                     const Eigen::MatrixXd& text,
                                                     Cache* cache) const {
  if (!cache) return temporal(cross(spatio_temporal(hidden), text));

  const std::size_t frames = hidden.size();
  Cache& c = *cache;
  c = Cache{};
  // Spatio-temporal attention.
  c.st_in = hidden;
  Frames h2(frames);
  for (std::size_t n = 0; n < frames; ++n) {
    std::vector<const Eigen::MatrixXd*> ctx;
    for (Index f : st_context_frames(static_cast<Index>(n))) ctx.push_back(&hidden[static_cast<std::size_t>(f)]);
    const Eigen::MatrixXd kv = stack_rows(ctx);
    c.st_q.push_back(hidden[n] * weight(st_q));
    c.st_k.push_back(kv * weight(st_k));
    c.st_v.push_back(kv * weight(st_v));
    Eigen::MatrixXd p;
    const Eigen::MatrixXd a = attention(c.st_q.back(), c.st_k.back(), c.st_v.back(), &p);
    c.st_p.push_back(std::move(p));
    h2[n] = hidden[n] + a * weight(st_o);
  }
  // Cross attention on text tokens.
  c.ca_in = h2;
  const Eigen::MatrixXd k = text * weight(ca_k);
  const Eigen::MatrixXd v = text * weight(ca_v);
  Frames h3(frames);
  for (std::size_t n = 0; n < frames; ++n) {
    c.ca_q.push_back(h2[n] * weight(ca_q));
    c.ca_k.push_back(k);
    c.ca_v.push_back(v);
    Eigen::MatrixXd p;
    const Eigen::MatrixXd a = attention(c.ca_q.back(), k, v, &p);
    c.ca_p.push_back(std::move(p));
    h3[n] = h2[n] + a * weight(ca_o);
  }
  // Temporal attention per location.
  c.t_in = h3;
  if (!spec_.t_attn_enabled) return h3;
  Frames h4 = h3;
  const Index tokens = h3.front().rows();
  for (Index p = 0; p < tokens; ++p) {
    Eigen::MatrixXd seq(static_cast<Index>(frames), width_);
    for (std::size_t n = 0; n < frames; ++n) seq.row(static_cast<Index>(n)) = h3[n].row(p);
    c.t_q.push_back(seq * weight(t_q));
    c.t_k.push_back(seq * weight(t_k));
    c.t_v.push_back(seq * weight(t_v));
    Eigen::MatrixXd probs;
    const Eigen::MatrixXd a = attention(c.t_q.back(), c.t_k.back(), c.t_v.back(), &probs);
    c.t_p.push_back(std::move(probs));
    const Eigen::MatrixXd upd = a * weight(t_o);
    for (std::size_t n = 0; n < frames; ++n) h4[n].row(p) += upd.row(static_cast<Index>(n));
    c.t_seq.push_back(std::move(seq));
  }
  return h4;
}

void InflatedAttention::backward(const Frames& d_out, const Cache& c,
                                 std::vector<Eigen::MatrixXd>& grads) const {
  grads.resize(kSlots);
  for (int s = 0; s < kSlots; ++s) {
    auto& g = grads[static_cast<std::size_t>(s)];
    if (g.size() == 0) g = Eigen::MatrixXd::Zero(weight(Slot(s)).rows(), weight(Slot(s)).cols());
  }
  const std::size_t frames = d_out.size();

  // Temporal attention.
  Frames d_h3 = d_out;
  if (spec_.t_attn_enabled) {
    const Index tokens = d_out.front().rows();
    for (Index p = 0; p < tokens; ++p) {
      const auto pi = static_cast<std::size_t>(p);
      Eigen::MatrixXd d_upd(static_cast<Index>(frames), width_);
      for (std::size_t n = 0; n < frames; ++n) d_upd.row(static_cast<Index>(n)) = d_out[n].row(p);
      const Eigen::MatrixXd a = c.t_p[pi] * c.t_v[pi];
      const Eigen::MatrixXd d_a = d_upd * weight(t_o).transpose();
      const AttentionGrad g = attention_backward(d_a, c.t_q[pi], c.t_k[pi], c.t_v[pi], c.t_p[pi]);
      if (trainable(t_o)) {
        grads[t_o] += a.transpose() * d_upd;
        grads[t_q] += c.t_seq[pi].transpose() * g.dq;
        grads[t_k] += c.t_seq[pi].transpose() * g.dk;
        grads[t_v] += c.t_seq[pi].transpose() * g.dv;
      }
      const Eigen::MatrixXd d_seq = g.dq * weight(t_q).transpose() +
                                    g.dk * weight(t_k).transpose() +
                                    g.dv * weight(t_v).transpose();
      for (std::size_t n = 0; n < frames; ++n) d_h3[n].row(p) += d_seq.row(static_cast<Index>(n));
    }
  }

  // Cross attention: only the query path reaches the hidden states.
  Frames d_h2(frames);
  for (std::size_t n = 0; n < frames; ++n) {
    const Eigen::MatrixXd d_a = d_h3[n] * weight(ca_o).transpose();
    const AttentionGrad g = attention_backward(d_a, c.ca_q[n], c.ca_k[n], c.ca_v[n], c.ca_p[n]);
    if (trainable(ca_q)) grads[ca_q] += c.ca_in[n].transpose() * g.dq;
    d_h2[n] = d_h3[n] + g.dq * weight(ca_q).transpose();
  }

  // Spatio-temporal attention: nothing upstream is trainable, so only the
  // query gradient is needed.
  if (trainable(st_q)) {
    for (std::size_t n = 0; n < frames; ++n) {
      const Eigen::MatrixXd d_a = d_h2[n] * weight(st_o).transpose();
      const AttentionGrad g = attention_backward(d_a, c.st_q[n], c.st_k[n], c.st_v[n], c.st_p[n]);
      grads[st_q] += c.st_in[n].transpose() * g.dq;
    }
  }
}

Eigen::RowVectorXd timestep_embedding(int t, Index dim) {
  Eigen::RowVectorXd e(dim);
  const Index half = dim / 2;
  for (Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(t * freq);
    e[i + half] = std::cos(t * freq);
  }
  if (dim % 2) e[dim - 1] = 0.0;
  return e;
}

// --- AttentionDenoiser ------------------------------------------------------

namespace {
enum Frozen { in_w, in_b, t_proj, j_proj, out_w, out_b };
}

AttentionDenoiser::AttentionDenoiser(AttentionDenoiserConfig config)
    : config_(std::move(config)),
      attn_(config_.inflation, config_.width, config_.embed_dim, config_.init_seed + 1) {
  if (config_.channels < 1 || config_.width < 1 || config_.time_dim < 1 || config_.embed_dim < 1) {
    throw validation_error("AttentionDenoiser: dimensions must be positive");
  }
  std::mt19937_64 rng(config_.init_seed);
  frozen_.push_back({"conv_in.weight", random_matrix(config_.channels, config_.width, rng), false});
  frozen_.push_back({"conv_in.bias", Eigen::MatrixXd::Zero(1, config_.width), false});
  frozen_.push_back({"time_proj.weight", random_matrix(config_.time_dim, config_.width, rng), false});
  frozen_.push_back({"image_proj.weight", random_matrix(config_.embed_dim, config_.width, rng), false});
  frozen_.push_back({"conv_out.weight", random_matrix(config_.width, config_.channels, rng), false});
  frozen_.push_back({"conv_out.bias", Eigen::MatrixXd::Zero(1, config_.channels), false});
}

std::vector<std::string> AttentionDenoiser::block_names() const {
  return {"conv_in", kCorrectionBlock};
}

std::vector<Parameter> AttentionDenoiser::parameters() const {
  std::vector<Parameter> all = frozen_;
  for (const auto& p : attn_.parameters()) all.push_back(p);
  return all;
}

void AttentionDenoiser::set_parameter(const std::string& name, const Eigen::MatrixXd& value) {
  auto assign = [&](Parameter& p) {
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols()) {
      throw validation_error("parameter '" + name + "': shape mismatch");
    }
    p.value = value;
  };
  for (auto& p : frozen_) {
    if (p.name == name) return assign(p);
  }
  for (auto& p : attn_.parameters()) {
    if (p.name == name) return assign(p);
  }
  throw validation_error("unknown parameter '" + name + "'");
}

std::uint64_t AttentionDenoiser::config_hash() const {
  std::ostringstream s;
  s << "attention-denoiser/1 channels=" << config_.channels << " width=" << config_.width
    << " time_dim=" << config_.time_dim << " embed_dim=" << config_.embed_dim
    << " init_seed=" << config_.init_seed << " t_attn=" << config_.inflation.t_attn_enabled
    << " trainable=";
  for (auto g : config_.inflation.trainable_set) s << to_string(g) << ",";
  return fnv1a64(s.str());
}

AttentionDenoiser::Forward AttentionDenoiser::run(const LatentVideo& latents, int t,
                                                  const RegionConditioning& cond,
                                                  bool keep_cache) const {
  const Tensor4d& z = latents.latents;
  if (z.channels() != config_.channels) {
    throw validation_error("denoise: expected " + std::to_string(config_.channels) +
                           " latent channels, got " + std::to_string(z.channels()));
  }
  if (t < 0) throw validation_error("denoise: negative timestep");
  const Index frames = z.frames();
  const Index h = z.height();
  const Index w = z.width();
  const Index tokens = h * w;
  if (cond.foreground.dim() != config_.embed_dim || cond.foreground.image.cols() != config_.embed_dim) {
    throw validation_error("denoise: conditioning width does not match the model");
  }
  std::optional<Tensor4d> mask;
  if (cond.mask) {
    if (cond.mask->size() != frames) {
      throw validation_error("denoise: mask has " + std::to_string(cond.mask->size()) +
                             " frames, latents have " + std::to_string(frames));
    }
    mask = resize_mask_nearest(cond.mask->masks, h, w);
  }

  const Eigen::RowVectorXd temb = timestep_embedding(t, config_.time_dim) * frozen_[t_proj].value;
  Forward f;
  std::vector<Eigen::MatrixXd> h1(static_cast<std::size_t>(frames));
  for (Index n = 0; n < frames; ++n) {
    Eigen::MatrixXd x(tokens, config_.channels);
    for (Index c = 0; c < config_.channels; ++c) {
      x.col(c) = Eigen::Map<const Eigen::VectorXd>(z.plane(n, c).data(), tokens);
    }
    Eigen::MatrixXd h0 = x * frozen_[in_w].value;
    h0.rowwise() += frozen_[in_b].value.row(0);
    const Eigen::RowVectorXd fg =
        cond.foreground.image_for(n).transpose() * frozen_[j_proj].value + temb;
    Eigen::MatrixXd hn = h0;
    if (!mask) {
      hn.rowwise() += fg;
    } else {
      const Eigen::RowVectorXd bg =
          cond.background.image_for(n).transpose() * frozen_[j_proj].value + temb;
      for (Index p = 0; p < tokens; ++p) {
        hn.row(p) += mask->plane(n, 0).data()[p] > 0.5 ? fg : bg;
      }
    }
    f.h0.push_back(std::move(h0));
    h1[static_cast<std::size_t>(n)] = std::move(hn);
  }
  f.h4 = attn_.forward(h1, cond.foreground.text, keep_cache ? &f.cache : nullptr);
  for (const auto& hn : f.h4) {
    Eigen::MatrixXd e = hn * frozen_[out_w].value;
    e.rowwise() += frozen_[out_b].value.row(0);
    f.eps.push_back(std::move(e));
  }
  return f;
}

namespace {

Tensor4d tokens_to_tensor(const std::vector<Eigen::MatrixXd>& frames, Index h, Index w) {
  const Index ch = frames.front().cols();
  Tensor4d out(static_cast<Index>(frames.size()), ch, h, w);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    for (Index c = 0; c < ch; ++c) {
      Eigen::Map<Eigen::VectorXd>(out.plane(static_cast<Index>(n), c).data(), h * w) =
          frames[n].col(c);
    }
  }
  return out;
}

}  // namespace

DenoiserOutput AttentionDenoiser::denoise(const LatentVideo& latents, int t,
                                          const RegionConditioning& cond) const {
  const Forward f = run(latents, t, cond, false);
  const Index h = latents.latents.height();
  const Index w = latents.latents.width();
  DenoiserOutput out;
  out.eps = tokens_to_tensor(f.eps, h, w);
  out.block_features["conv_in"] = tokens_to_tensor(f.h0, h, w);
  out.block_features[kCorrectionBlock] = tokens_to_tensor(f.h4, h, w);
  return out;
}

double AttentionDenoiser::loss_and_gradients(const LatentVideo& z_t, int t,
                                             const RegionConditioning& cond,
                                             const Tensor4d& target,
                                             std::vector<Eigen::MatrixXd>* grads) const {
  require_same_shape(z_t.latents, target, "loss_and_gradients");
  const Forward f = run(z_t, t, cond, grads != nullptr);
  const Index h = z_t.latents.height();
  const Index w = z_t.latents.width();
  const Index tokens = h * w;
  const double count = static_cast<double>(target.size());

  double loss = 0.0;
  std::vector<Eigen::MatrixXd> d_h4(f.eps.size());
  for (std::size_t n = 0; n < f.eps.size(); ++n) {
    Eigen::MatrixXd diff(tokens, config_.channels);
    for (Index c = 0; c < config_.channels; ++c) {
      diff.col(c) = f.eps[n].col(c) -
                    Eigen::Map<const Eigen::VectorXd>(target.plane(static_cast<Index>(n), c).data(), tokens);
    }
    loss += diff.squaredNorm();
    if (grads) d_h4[n] = (2.0 / count) * diff * frozen_[out_w].value.transpose();
  }
  loss /= count;
  if (!grads) return loss;

  std::vector<Eigen::MatrixXd> attn_grads;
  attn_.backward(d_h4, f.cache, attn_grads);
  grads->clear();
  for (const auto& p : frozen_) grads->push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  for (auto& g : attn_grads) grads->push_back(std::move(g));
  return loss;
}

}  // namespace genvideo
