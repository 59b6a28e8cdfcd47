#pragma once

// Target-guided planning branch. The target point is lifted with a fixed
// random Fourier bank and an MLP into a single target token, which then runs
// target self-attention (TSA), target->plan cross-attention (TPA), an MLP and
// finally plan->target cross-attention (PTA) back onto the lane features.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lanecraft/double_edge.hpp"
#include "lanecraft/nn.hpp"
#include "lanecraft/rng.hpp"
#include "lanecraft/tensor.hpp"

namespace lanecraft {

struct PlannerConfig {
  std::size_t embed = 256;
  std::size_t attn_width = 128;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 128;
  std::size_t frequencies = 16;
  double coord_scale = 32.0;  // meters mapped to unit range before the Fourier lift

  void validate() const {
    if (embed == 0 || attn_width == 0 || heads == 0 || mlp_hidden == 0 || frequencies == 0) {
      throw std::invalid_argument("planner config: sizes must be positive");
    }
    if (attn_width % heads != 0) throw std::invalid_argument("planner config: attn_width must be divisible by heads");
    if (!(coord_scale > 0)) throw std::invalid_argument("planner config: coord_scale must be > 0");
  }

  static PlannerConfig small() {
    PlannerConfig c;
    c.embed = 16;
    c.attn_width = 16;
    c.heads = 4;
    c.mlp_hidden = 16;
    return c;
  }
};

template <class Real>
class TargetPlanner {
 public:
  explicit TargetPlanner(PlannerConfig cfg, std::uint64_t seed = 0)
      : cfg_(cfg),
        freqs_({cfg.frequencies, 2}),
        vec_mlp_(2 * cfg.frequencies, cfg.mlp_hidden, cfg.embed),
        tsa_(cfg.embed, cfg.embed, cfg.attn_width, cfg.embed, cfg.heads),
        tpa_(cfg.embed, cfg.embed, cfg.attn_width, cfg.embed, cfg.heads),
        mlp_(cfg.embed, cfg.mlp_hidden, cfg.embed),
        pta_(cfg.embed, cfg.embed, cfg.attn_width, cfg.embed, cfg.heads),
        head_(cfg.embed, 1) {
    cfg_.validate();
    init(seed);
  }

  const PlannerConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& f : freqs_.storage()) f = static_cast<Real>(rng.normal());
    vec_mlp_.init(rng);
    tsa_.init(rng);
    tpa_.init(rng);
    mlp_.init(rng);
    pta_.init(rng);
    head_.init(rng);
  }

  void visit_params(const nn::ParamVisitor<Real>& f) {
    f("planner.fourier", freqs_);
    vec_mlp_.visit("planner.encoder_vec", f);
    tsa_.visit("planner.tsa", f);
    tpa_.visit("planner.tpa", f);
    mlp_.visit("planner.mlp", f);
    pta_.visit("planner.pta", f);
    head_.visit("planner.head", f);
  }

  nn::MultiHeadAttention<Real>& tsa() { return tsa_; }
  const nn::MultiHeadAttention<Real>& tsa() const { return tsa_; }
  nn::Linear<Real>& head() { return head_; }
  const nn::Linear<Real>& head() const { return head_; }

  // [E x 1]
  BasicTensor<Real> encode_target(const TargetPoint& t) const {
    if (!std::isfinite(t.x) || !std::isfinite(t.y)) throw std::invalid_argument("target point must be finite");
    const std::size_t F = cfg_.frequencies;
    BasicTensor<Real> lift({1, 2 * F});
    const double u = t.x / cfg_.coord_scale, w = t.y / cfg_.coord_scale;
    for (std::size_t k = 0; k < F; ++k) {
      const double phase = 2 * std::numbers::pi * (freqs_(k, 0) * u + freqs_(k, 1) * w);
      lift(0, k) = static_cast<Real>(std::sin(phase));
      lift(0, F + k) = static_cast<Real>(std::cos(phase));
    }
    return transpose(vec_mlp_(lift));
  }

  // f_vec [E x n_tok], f_plan [E x N_d x N_p] -> F_plan [E x N_d x N_p]
  BasicTensor<Real> plan_decode(const BasicTensor<Real>& f_vec, const BasicTensor<Real>& f_plan,
                                nn::AttentionStats* stats = nullptr) const {
    const std::size_t E = cfg_.embed;
    if (f_vec.rank() != 2 || f_vec.dim(0) != E) {
      throw ShapeError("plan_decode: target embedding " + shape_string(f_vec.shape()) + ", expected [" +
                       std::to_string(E) + " x n_tok]");
    }
    if (f_plan.rank() != 3 || f_plan.dim(0) != E) {
      throw ShapeError("plan_decode: plan features " + shape_string(f_plan.shape()) + ", expected [" +
                       std::to_string(E) + " x N_d x N_p]");
    }
    const std::size_t Nd = f_plan.dim(1), Np = f_plan.dim(2);
    auto tgt = transpose(f_vec);                                // [n_tok x E]
    auto lanes = transpose(reshape(f_plan, {E, Nd * Np}));      // [N_d*N_p x E]
    nn::add_inplace(tgt, tsa_(tgt, tgt, stats));
    nn::add_inplace(tgt, tpa_(tgt, lanes, stats));
    nn::add_inplace(tgt, mlp_(tgt));
    nn::add_inplace(lanes, pta_(lanes, tgt, stats));
    return reshape(transpose(lanes), {E, Nd, Np});
  }

  // [N_d x N_p x 1] probabilities
  BasicTensor<Real> plan_head(const BasicTensor<Real>& F_plan) const {
    if (F_plan.rank() != 3 || F_plan.dim(0) != cfg_.embed) {
      throw ShapeError("plan_head expects [E x N_d x N_p], got " + shape_string(F_plan.shape()));
    }
    const std::size_t Nd = F_plan.dim(1), Np = F_plan.dim(2);
    auto logits = head_(transpose(reshape(F_plan, {cfg_.embed, Nd * Np})));
    for (auto& v : logits.storage()) v = static_cast<Real>(nn::sigmoid(static_cast<double>(v)));
    return reshape(logits, {Nd, Np, 1});
  }

 private:
  PlannerConfig cfg_;
  BasicTensor<Real> freqs_;  // [frequencies x 2], standard normal
  nn::Mlp<Real> vec_mlp_;
  nn::MultiHeadAttention<Real> tsa_, tpa_;
  nn::Mlp<Real> mlp_;
  nn::MultiHeadAttention<Real> pta_;
  nn::Linear<Real> head_;
};

}  // namespace lanecraft
