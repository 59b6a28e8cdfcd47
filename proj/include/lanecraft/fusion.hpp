#pragma once

// Hierarchical early fusion: lane-level intersection x direction affinity
// weights the occupancy embedding, and a gated residual folds the result back
// into the lane features.

#include <string>

#include "lanecraft/tensor.hpp"

namespace lanecraft {

struct FusionParams {
  double gamma = 0.0;  // starts closed so fusion begins as the identity
};

// [E x N_d] columns repeated over N_p point slots -> [E x N_d x N_p].
template <class Real>
BasicTensor<Real> expand_lane_attr(const BasicTensor<Real>& f, std::size_t points) {
  if (f.rank() != 2) throw ShapeError("expand_lane_attr expects [E x N_d], got " + shape_string(f.shape()));
  const std::size_t E = f.dim(0), Nd = f.dim(1);
  BasicTensor<Real> out({E, Nd, points});
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t i = 0; i < Nd; ++i) {
      for (std::size_t p = 0; p < points; ++p) out(e, i, p) = f(e, i);
    }
  }
  return out;
}

template <class Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> expand_lane_attrs(const BasicTensor<Real>& f_int,
                                                                  const BasicTensor<Real>& f_dir,
                                                                  std::size_t points) {
  require_same_shape(f_int, f_dir, "expand_lane_attrs");
  return {expand_lane_attr(f_int, points), expand_lane_attr(f_dir, points)};
}

namespace detail {
template <class Real>
BasicTensor<Real> flatten_points(const BasicTensor<Real>& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + " expects [E x N_d x N_p], got " + shape_string(t.shape()));
  return reshape(t, {t.dim(0), t.dim(1) * t.dim(2)});
}
}  // namespace detail

// [N_d*N_p x N_d*N_p]; entry (a, b) = <f_int column a, f_dir column b>.
template <class Real>
BasicTensor<Real> int2dir(const BasicTensor<Real>& f_int_exp, const BasicTensor<Real>& f_dir_exp) {
  require_same_shape(f_int_exp, f_dir_exp, "int2dir");
  const auto a = detail::flatten_points(f_int_exp, "int2dir");
  const auto b = detail::flatten_points(f_dir_exp, "int2dir");
  return matmul(transpose(a), b);
}

// Row a of softmax(m) is the attention distribution of point a over all
// points; output column a = sum_b softmax(m)[a, b] * f_occ column b.
template <class Real>
BasicTensor<Real> fuse_occupancy(const BasicTensor<Real>& f_occ, const BasicTensor<Real>& m) {
  const auto occ = detail::flatten_points(f_occ, "fuse_occupancy");
  const std::size_t n = occ.dim(1);
  if (m.shape() != Shape{n, n}) {
    throw ShapeError("fuse_occupancy: occupancy " + shape_string(f_occ.shape()) + " vs affinity " +
                     shape_string(m.shape()));
  }
  return matmul(occ, transpose(softmax(m, 1)));
}

// f_plan = gamma * R(f_fusion) + f_double_edge
template <class Real>
BasicTensor<Real> blend(const BasicTensor<Real>& f_fusion, const BasicTensor<Real>& f_double_edge, double gamma) {
  if (f_double_edge.rank() != 3 || f_fusion.size() != f_double_edge.size() ||
      f_fusion.dim(0) != f_double_edge.dim(0)) {
    throw ShapeError("blend: fusion " + shape_string(f_fusion.shape()) + " vs double-edge " +
                     shape_string(f_double_edge.shape()));
  }
  BasicTensor<Real> out(f_double_edge.shape());
  const Real g = static_cast<Real>(gamma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f_fusion[i] * g + f_double_edge[i];
  return out;
}

template <class Real>
BasicTensor<Real> fuse(const BasicTensor<Real>& f_double_edge, const BasicTensor<Real>& f_int,
                       const BasicTensor<Real>& f_dir, const BasicTensor<Real>& f_occ, const FusionParams& params) {
  const std::size_t points = f_double_edge.dim(2);
  const auto [ie, de] = expand_lane_attrs(f_int, f_dir, points);
  return blend(fuse_occupancy(f_occ, int2dir(ie, de)), f_double_edge, params.gamma);
}

}  // namespace lanecraft
