#pragma once

// Toy-scale perception transformer: synthetic per-view feature grids ->
// tokens (+ fixed sinusoidal PE) -> K encoder layers -> K decoder layers driven
// by double-edge, speed and traffic queries -> feature bundle -> heads.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanecraft/double_edge.hpp"
#include "lanecraft/nn.hpp"
#include "lanecraft/rng.hpp"
#include "lanecraft/tensor.hpp"

namespace lanecraft {

struct NetConfig {
  std::size_t embed = 256;         // E
  std::size_t layers = 6;          // K, per stack
  std::size_t heads = 8;
  std::size_t lane_slots = 30;     // N_d
  std::size_t points_per_lane = 20;  // N_p
  std::size_t grid_h = 7;
  std::size_t grid_w = 7;
  std::size_t views = 4;
  std::size_t ffn_hidden = 128;
  double bev_range = 32.0;

  std::size_t tokens() const { return views * grid_h * grid_w; }
  std::size_t lane_queries() const { return lane_slots * points_per_lane; }
  std::size_t points_per_edge() const { return points_per_lane / 2; }

  void validate() const {
    if (embed == 0 || layers > 64 || heads == 0 || lane_slots == 0 || points_per_lane == 0 || grid_h == 0 ||
        grid_w == 0 || views == 0 || ffn_hidden == 0) {
      throw std::invalid_argument("net config: sizes must be positive");
    }
    if (embed % heads != 0) throw std::invalid_argument("net config: embed must be divisible by heads");
    if (embed % 4 != 0) throw std::invalid_argument("net config: embed must be divisible by 4");
    if (points_per_lane % 2 != 0) throw std::invalid_argument("net config: points_per_lane must be even");
  }

  // Small configuration used throughout the unit tests.
  static NetConfig small() {
    NetConfig c;
    c.embed = 16;
    c.layers = 2;
    c.heads = 4;
    c.lane_slots = 3;
    c.points_per_lane = 4;
    c.grid_h = 3;
    c.grid_w = 3;
    c.ffn_hidden = 16;
    return c;
  }
};

template <class Real>
struct QuerySet {
  BasicTensor<Real> double_edge;  // [E x N_d*N_p], lane-major columns
  BasicTensor<Real> speed;        // [E x 1]
  BasicTensor<Real> traffic;      // [E x 1]
};

template <class Real>
struct FeatureBundle {
  BasicTensor<Real> double_edge;   // [E x N_d x N_p]
  BasicTensor<Real> intersection;  // [E x N_d]
  BasicTensor<Real> direction;     // [E x N_d]
  BasicTensor<Real> occupancy;     // [E x N_d x N_p]
};

template <class Real>
struct DecoderOutput {
  FeatureBundle<Real> bundle;
  BasicTensor<Real> speed_feature;   // [E x 1]
  BasicTensor<Real> signal_feature;  // [E x 1]
};

// Points of slot i: indices [0, N_p/2) are the left edge, [N_p/2, N_p) the right.
template <class Real>
struct PerceptionOutput {
  BasicTensor<Real> points;        // [N_d x N_p x 2], BEV meters
  BasicTensor<Real> p_int;         // [N_d x 1]
  BasicTensor<Real> p_dir;         // [N_d x 1]
  BasicTensor<Real> p_occ;         // [N_d x N_p x 1]
  double speed = 0.0;              // m/s
  BasicTensor<Real> signal_logits; // [4]
};

// Deterministic stand-in for the camera backbone: rasterizes the scene into
// `views` feature grids of shape [E x H x W]. View v looks along the ego yaw
// rotated by v * 90 degrees; its grid spans [0, R) ahead and [-R, R) across.
template <class Real = double>
std::vector<BasicTensor<Real>> synthetic_features(const SceneAnnotation& scene, const NetConfig& cfg,
                                                  std::uint64_t seed) {
  cfg.validate();
  const std::size_t E = cfg.embed, H = cfg.grid_h, W = cfg.grid_w;
  Rng rng(seed);
  std::vector<std::vector<double>> grids(cfg.views, std::vector<double>(E * H * W));
  for (auto& g : grids) {
    for (auto& v : g) v = rng.uniform(-0.1, 0.1);
  }
  auto signature = [&] {
    std::vector<double> s(E);
    for (auto& v : s) v = rng.uniform(-1.0, 1.0);
    return s;
  };
  const auto sig_point = signature(), sig_int = signature(), sig_dir = signature(), sig_occ = signature();
  const auto sig_dx = signature(), sig_dy = signature(), sig_side = signature(), sig_speed = signature();
  std::vector<std::vector<double>> sig_signal;
  for (int s = 0; s < kSignalClasses; ++s) sig_signal.push_back(signature());

  const double R = cfg.bev_range;
  for (std::size_t v = 0; v < cfg.views; ++v) {
    const double th = static_cast<double>(v) * std::numbers::pi / 2.0;
    const double c = std::cos(th), s = std::sin(th);
    auto& g = grids[v];
    for (const auto& lane : scene.lanes) {
      for (int side = 0; side < 2; ++side) {
        const Edge& edge = side == 0 ? lane.left : lane.right;
        for (const auto& p : edge) {
          const double xv = c * p.x + s * p.y;
          const double yv = -s * p.x + c * p.y;
          if (xv < 0 || xv >= R || yv < -R || yv >= R) continue;
          const double fr = xv / R * static_cast<double>(H);
          const double fc = (yv + R) / (2 * R) * static_cast<double>(W);
          const auto r = static_cast<std::size_t>(fr), col = static_cast<std::size_t>(fc);
          if (r >= H || col >= W) continue;
          const double dx = fr - static_cast<double>(r) - 0.5, dy = fc - static_cast<double>(col) - 0.5;
          const double sgn = side == 0 ? 1.0 : -1.0;
          for (std::size_t e = 0; e < E; ++e) {
            g[(e * H + r) * W + col] +=
                0.5 * (sig_point[e] + lane.intersection * sig_int[e] + lane.direction * sig_dir[e] +
                       p.occ * sig_occ[e] + dx * sig_dx[e] + dy * sig_dy[e] + sgn * sig_side[e]);
          }
        }
      }
    }
  }
  // Speed limit and signal state are visible to the front view only.
  auto& front = grids[0];
  for (std::size_t e = 0; e < E; ++e) {
    double add = scene.speed / 10.0 * sig_speed[e];
    if (scene.signal != Signal::none) add += sig_signal[signal_index(scene.signal)][e];
    if (add == 0.0) continue;
    for (std::size_t k = 0; k < H * W; ++k) front[e * H * W + k] += add;
  }

  std::vector<BasicTensor<Real>> out;
  for (auto& g : grids) out.emplace_back(Shape{E, H, W}, std::vector<Real>(g.begin(), g.end()));
  return out;
}

template <class Real>
class PerceptionNet {
 public:
  explicit PerceptionNet(NetConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t E = cfg_.embed;
    tokenizer_ = nn::Linear<Real>(E, E);
    for (std::size_t k = 0; k < cfg_.layers; ++k) {
      encoder_.emplace_back(E, cfg_.heads, cfg_.ffn_hidden);
      decoder_.emplace_back(E, cfg_.heads, cfg_.ffn_hidden);
    }
    encoder_norm_ = nn::LayerNorm<Real>(E);
    decoder_norm_ = nn::LayerNorm<Real>(E);
    int_extract_ = nn::Mlp<Real>(E, E, E);
    dir_extract_ = nn::Mlp<Real>(E, E, E);
    occ_extract_ = nn::Mlp<Real>(E, E, E);
    bev_head_ = nn::Mlp<Real>(E, E, 2);
    int_head_ = nn::Linear<Real>(E, 1);
    dir_head_ = nn::Linear<Real>(E, 1);
    occ_head_ = nn::Linear<Real>(E, 1);
    speed_head_ = nn::Linear<Real>(E, 1);
    signal_head_ = nn::Linear<Real>(E, kSignalClasses);
    queries_.double_edge = BasicTensor<Real>({E, cfg_.lane_queries()});
    queries_.speed = BasicTensor<Real>({E, 1});
    queries_.traffic = BasicTensor<Real>({E, 1});
    init(seed);
  }

  const NetConfig& config() const { return cfg_; }
  const QuerySet<Real>& queries() const { return queries_; }
  QuerySet<Real>& queries() { return queries_; }

  // Deterministic seeded initialization, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init(std::uint64_t seed) {
    Rng rng(seed);
    tokenizer_.init(rng);
    for (auto& l : encoder_) l.init(rng);
    for (auto& l : decoder_) l.init(rng);
    for (auto* m : {&int_extract_, &dir_extract_, &occ_extract_, &bev_head_}) m->init(rng);
    for (auto* l : {&int_head_, &dir_head_, &occ_head_, &speed_head_, &signal_head_}) l->init(rng);

    // Hierarchical queries: lane embedding + point embedding (the point
    // embedding already distinguishes the two edges).
    const std::size_t E = cfg_.embed, Nd = cfg_.lane_slots, Np = cfg_.points_per_lane;
    std::vector<double> lane(Nd * E), point(Np * E);
    for (auto& v : lane) v = rng.uniform(-0.5, 0.5);
    for (auto& v : point) v = rng.uniform(-0.5, 0.5);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t i = 0; i < Nd; ++i) {
        for (std::size_t p = 0; p < Np; ++p) {
          queries_.double_edge(e, i * Np + p) = static_cast<Real>(lane[i * E + e] + point[p * E + e]);
        }
      }
      queries_.speed(e, 0) = static_cast<Real>(rng.uniform(-0.5, 0.5));
      queries_.traffic(e, 0) = static_cast<Real>(rng.uniform(-0.5, 0.5));
    }
  }

  void visit_params(const nn::ParamVisitor<Real>& f) {
    tokenizer_.visit("tokenizer.proj", f);
    for (std::size_t k = 0; k < encoder_.size(); ++k) encoder_[k].visit("encoder." + std::to_string(k), f);
    encoder_norm_.visit("encoder.norm", f);
    f("queries.double_edge", queries_.double_edge);
    f("queries.speed", queries_.speed);
    f("queries.traffic", queries_.traffic);
    for (std::size_t k = 0; k < decoder_.size(); ++k) decoder_[k].visit("decoder." + std::to_string(k), f);
    decoder_norm_.visit("decoder.norm", f);
    int_extract_.visit("extract.int", f);
    dir_extract_.visit("extract.dir", f);
    occ_extract_.visit("extract.occ", f);
    bev_head_.visit("head.bev", f);
    int_head_.visit("head.int", f);
    dir_head_.visit("head.dir", f);
    occ_head_.visit("head.occ", f);
    speed_head_.visit("head.speed", f);
    signal_head_.visit("head.signal", f);
  }

  // Shared 1x1 projection per view, flatten, add PE, concatenate views.
  // Returns [E x views*H*W].
  BasicTensor<Real> tokenize(const std::vector<BasicTensor<Real>>& grids) const {
    return transpose(tokenize_rows(grids));
  }

  // [E x T] -> [E x T]
  BasicTensor<Real> encode(const BasicTensor<Real>& tokens, nn::AttentionStats* stats = nullptr) const {
    if (tokens.rank() != 2 || tokens.dim(0) != cfg_.embed) {
      throw ShapeError("encode expects [E x T], got " + shape_string(tokens.shape()));
    }
    return transpose(encode_rows(transpose(tokens), stats));
  }

  DecoderOutput<Real> decode(const BasicTensor<Real>& memory, const QuerySet<Real>& queries,
                             nn::AttentionStats* stats = nullptr) const {
    if (memory.rank() != 2 || memory.dim(0) != cfg_.embed) {
      throw ShapeError("decode expects memory [E x T], got " + shape_string(memory.shape()));
    }
    return decode_rows(transpose(memory), queries, stats);
  }

  PerceptionOutput<Real> heads(const FeatureBundle<Real>& bundle, const BasicTensor<Real>& speed_feature,
                               const BasicTensor<Real>& signal_feature) const {
    const std::size_t E = cfg_.embed, Nd = cfg_.lane_slots, Np = cfg_.points_per_lane;
    PerceptionOutput<Real> out;
    const auto de_rows = transpose(reshape(bundle.double_edge, {E, Nd * Np}));
    out.points = reshape(bev_head_(de_rows), {Nd, Np, 2});
    out.p_int = sigmoid_of(int_head_(transpose(bundle.intersection)));
    out.p_dir = sigmoid_of(dir_head_(transpose(bundle.direction)));
    out.p_occ = reshape(sigmoid_of(occ_head_(transpose(reshape(bundle.occupancy, {E, Nd * Np})))), {Nd, Np, 1});
    out.speed = nn::softplus(static_cast<double>(speed_head_(transpose(speed_feature))[0]));
    out.signal_logits = reshape(signal_head_(transpose(signal_feature)), {static_cast<std::size_t>(kSignalClasses)});
    return out;
  }

  struct Forward {
    DecoderOutput<Real> decoded;
    PerceptionOutput<Real> output;
  };

  Forward forward(const std::vector<BasicTensor<Real>>& grids, nn::AttentionStats* stats = nullptr) const {
    const auto memory = encode_rows(tokenize_rows(grids), stats);
    Forward f{decode_rows(memory, queries_, stats), {}};
    f.output = heads(f.decoded.bundle, f.decoded.speed_feature, f.decoded.signal_feature);
    return f;
  }

 private:
  static BasicTensor<Real> sigmoid_of(BasicTensor<Real> t) {
    for (auto& v : t.storage()) v = static_cast<Real>(nn::sigmoid(static_cast<double>(v)));
    return t;
  }

  BasicTensor<Real> tokenize_rows(const std::vector<BasicTensor<Real>>& grids) const {
    const std::size_t E = cfg_.embed, HW = cfg_.grid_h * cfg_.grid_w;
    if (grids.size() != cfg_.views) {
      throw ShapeError("tokenize expects " + std::to_string(cfg_.views) + " views, got " +
                       std::to_string(grids.size()));
    }
    const auto pe = transpose(sinusoidal_pe<Real>(cfg_.grid_h, cfg_.grid_w, E));  // [HW x E]
    BasicTensor<Real> tokens({cfg_.views * HW, E});
    for (std::size_t v = 0; v < cfg_.views; ++v) {
      const Shape want{E, cfg_.grid_h, cfg_.grid_w};
      if (grids[v].shape() != want) {
        throw ShapeError("view " + std::to_string(v) + " grid " + shape_string(grids[v].shape()) +
                         ", expected " + shape_string(want));
      }
      const auto z = tokenizer_(transpose(reshape(grids[v], {E, HW})));
      for (std::size_t t = 0; t < HW; ++t) {
        for (std::size_t e = 0; e < E; ++e) tokens(v * HW + t, e) = z(t, e) + pe(t, e);
      }
    }
    return tokens;
  }

  BasicTensor<Real> encode_rows(BasicTensor<Real> x, nn::AttentionStats* stats) const {
    for (const auto& layer : encoder_) layer.forward(x, stats);
    if (!encoder_.empty()) x = encoder_norm_(x);
    return x;
  }

  DecoderOutput<Real> decode_rows(const BasicTensor<Real>& memory_rows, const QuerySet<Real>& queries,
                                  nn::AttentionStats* stats) const {
    const std::size_t E = cfg_.embed, Nd = cfg_.lane_slots, Np = cfg_.points_per_lane, NL = Nd * Np;
    if (queries.double_edge.shape() != Shape{E, NL} || queries.speed.shape() != Shape{E, 1} ||
        queries.traffic.shape() != Shape{E, 1}) {
      throw ShapeError("query set does not match the net config");
    }
    BasicTensor<Real> x({NL + 2, E});
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t t = 0; t < NL; ++t) x(t, e) = queries.double_edge(e, t);
      x(NL, e) = queries.speed(e, 0);
      x(NL + 1, e) = queries.traffic(e, 0);
    }
    for (const auto& layer : decoder_) layer.forward(x, memory_rows, Nd, Np, stats);
    if (!decoder_.empty()) x = decoder_norm_(x);

    BasicTensor<Real> lanes_rows({NL, E});
    std::copy(x.ptr(), x.ptr() + NL * E, lanes_rows.ptr());
    BasicTensor<Real> pooled({Nd, E});
    for (std::size_t i = 0; i < Nd; ++i) {
      for (std::size_t p = 0; p < Np; ++p) {
        for (std::size_t e = 0; e < E; ++e) pooled(i, e) += lanes_rows(i * Np + p, e);
      }
      for (std::size_t e = 0; e < E; ++e) pooled(i, e) /= static_cast<Real>(Np);
    }

    DecoderOutput<Real> out;
    out.bundle.double_edge = reshape(transpose(lanes_rows), {E, Nd, Np});
    out.bundle.intersection = transpose(int_extract_(pooled));
    out.bundle.direction = transpose(dir_extract_(pooled));
    out.bundle.occupancy = reshape(transpose(occ_extract_(lanes_rows)), {E, Nd, Np});
    out.speed_feature = BasicTensor<Real>({E, 1});
    out.signal_feature = BasicTensor<Real>({E, 1});
    for (std::size_t e = 0; e < E; ++e) {
      out.speed_feature(e, 0) = x(NL, e);
      out.signal_feature(e, 0) = x(NL + 1, e);
    }
    return out;
  }

  NetConfig cfg_;
  nn::Linear<Real> tokenizer_;
  std::vector<nn::EncoderLayer<Real>> encoder_;
  nn::LayerNorm<Real> encoder_norm_;
  QuerySet<Real> queries_;
  std::vector<nn::DecoderLayer<Real>> decoder_;
  nn::LayerNorm<Real> decoder_norm_;
  nn::Mlp<Real> int_extract_, dir_extract_, occ_extract_, bev_head_;
  nn::Linear<Real> int_head_, dir_head_, occ_head_, speed_head_, signal_head_;
};

}  // namespace lanecraft
