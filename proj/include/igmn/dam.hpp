#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igmn/autodiff.hpp"
#include "igmn/config.hpp"
#include "igmn/geometry.hpp"
#include "igmn/params.hpp"
#include "igmn/records.hpp"

namespace igmn {

// Per-cell spatial descriptor (x_r, y_r, alpha, alpha_bar): the grid
// coordinate, the polar angle about the target's center, and the
// containment-weighted mean of the interference actors' polar angles.
struct GeometryEmbedding {
  int k = 0;
  std::vector<double> d;  // (gx * k + gy) * 4 + component

  GeometryEmbedding() = default;
  explicit GeometryEmbedding(int kk) : k(kk), d(static_cast<std::size_t>(kk) * kk * 4, 0.0) {}

  double& at(int gx, int gy, int comp) { return d[(static_cast<std::size_t>(gx) * k + gy) * 4 + comp]; }
  double at(int gx, int gy, int comp) const {
    return d[(static_cast<std::size_t>(gx) * k + gy) * 4 + comp];
  }

  // (k*k) x 4 with row index gx*k + gy, matching FeatureMap::cells_by_channels.
  Matrix cells() const {
    Matrix m(k * k, 4);
    for (int gx = 0; gx < k; ++gx)
      for (int gy = 0; gy < k; ++gy)
        for (int c = 0; c < 4; ++c) m(gx * k + gy, c) = at(gx, gy, c);
    return m;
  }
};

inline GeometryEmbedding geometry_embedding(const ActorRecord& target,
                                            const std::vector<ActorRecord>& all_actors, int k,
                                            double epsilon, bool axis_swap = false) {
  if (!(epsilon > 0)) throw std::invalid_argument("geometry_embedding: epsilon must be positive");
  GeometryEmbedding geo(k);
  const double cx = target.box.center_x();
  const double cy = target.box.center_y();
  for (int gx = 0; gx < k; ++gx)
    for (int gy = 0; gy < k; ++gy) {
      const auto [px, py] = roi_grid_point(target.box, gx, gy, k, axis_swap);
      double wsum = 0.0;
      double asum = 0.0;
      for (const auto& other : all_actors) {
        if (other.track_id == target.track_id && other.clip_index == target.clip_index) continue;
        if (!contains(other.box, px, py)) continue;
        wsum += 1.0;
        asum += polar_angle(other.box.center_x(), other.box.center_y(), px, py);
      }
      geo.at(gx, gy, 0) = gx;
      geo.at(gx, gy, 1) = gy;
      geo.at(gx, gy, 2) = polar_angle(cx, cy, px, py);
      geo.at(gx, gy, 3) = asum / (wsum + epsilon);
    }
  return geo;
}

// Binary K x K map marking cells whose sample point lies in any other
// actor's box; cells in the expansion ring outside the original box are
// always marked.
inline Matrix interference_indicator(std::size_t target_index,
                                     const std::vector<ActorRecord>& all_actors, int k,
                                     const BoundingBox& expanded_box, bool axis_swap = false) {
  if (target_index >= all_actors.size())
    throw std::invalid_argument("interference_indicator: bad target index");
  const ActorRecord& target = all_actors[target_index];
  Matrix p_hat(k * k, 1);
  for (int gx = 0; gx < k; ++gx)
    for (int gy = 0; gy < k; ++gy) {
      const auto [px, py] = roi_grid_point(expanded_box, gx, gy, k, axis_swap);
      double v = 0.0;
      if (!contains(target.box, px, py)) {
        v = 1.0;
      } else {
        for (std::size_t j = 0; j < all_actors.size(); ++j) {
          if (j == target_index) continue;
          if (contains(all_actors[j].box, px, py)) {
            v = 1.0;
            break;
          }
        }
      }
      p_hat(gx * k + gy, 0) = v;
    }
  return p_hat;
}

// Two chained per-cell channel mixers with a rectifier between.
struct FfnParams {
  Matrix w1, b1;  // c_in x hidden
  Matrix w2, b2;  // hidden x 1

  static FfnParams init(Rng& rng, int c_in, int hidden) {
    FfnParams p;
    p.w1 = xavier_uniform(rng, c_in, hidden);
    p.b1 = Matrix(1, hidden);
    p.w2 = xavier_uniform(rng, hidden, 1);
    p.b2 = Matrix(1, 1);
    return p;
  }
};

struct DAMParams {
  FfnParams sem;
  FfnParams idt;

  static DAMParams init(Rng& rng, int c_dam) {
    DAMParams p;
    const int hidden = std::max(4, c_dam / 2);
    p.sem = FfnParams::init(rng, c_dam, hidden);
    p.idt = FfnParams::init(rng, c_dam, hidden);
    return p;
  }

  void visit(const std::string& prefix, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn(prefix + ".sem.w1", sem.w1);
    fn(prefix + ".sem.b1", sem.b1);
    fn(prefix + ".sem.w2", sem.w2);
    fn(prefix + ".sem.b2", sem.b2);
    fn(prefix + ".idt.w1", idt.w1);
    fn(prefix + ".idt.b1", idt.b1);
    fn(prefix + ".idt.w2", idt.w2);
    fn(prefix + ".idt.b2", idt.b2);
  }
};

struct DualAttentionOutput {
  ad::Var omega_sem;       // k*k x 1, in (0,1)
  ad::Var omega_idt;       // k*k x 1, in (0,1)
  ad::Var omega_idt_comb;  // omega_sem (*) omega_idt
  ad::Var f_sem;           // 1 x c_dam
  ad::Var f_idt;           // 1 x c_dam
  ad::Var f_dam;           // k*k x c_dam
};

inline ad::Var ffn_per_cell(ad::Tape& t, ParamTape& P, ad::Var x, const FfnParams& p) {
  ad::Var h = t.relu(t.add_bias(t.matmul(x, P(p.w1)), P(p.b1)));
  return t.add_bias(t.matmul(h, P(p.w2)), P(p.b2));
}

// f_dam = concat(features, geometry, tiled memory feature); both attention
// maps come from per-cell FFNs under a sigmoid, and the pooled outputs
// average the attention-weighted cells.
inline DualAttentionOutput dual_attention(ad::Tape& t, ParamTape& P, ad::Var feature_cells,
                                          const GeometryEmbedding& geo, ad::Var f_mem_row,
                                          const DAMParams& params) {
  const int cells = t.val(feature_cells).rows;
  if (geo.k * geo.k != cells) throw std::invalid_argument("dual_attention: geometry/feature size mismatch");
  if (t.val(f_mem_row).rows != 1) throw std::invalid_argument("dual_attention: f_mem must be one row");

  std::vector<int> tile_idx(cells, 0);
  ad::Var tiled_mem = t.gather_rows(f_mem_row, tile_idx);
  ad::Var geo_cells = t.input(geo.cells());
  ad::Var f_dam = t.concat_cols({feature_cells, geo_cells, tiled_mem});

  DualAttentionOutput out;
  out.f_dam = f_dam;
  out.omega_sem = t.sigmoid(ffn_per_cell(t, P, f_dam, params.sem));
  out.omega_idt = t.sigmoid(ffn_per_cell(t, P, f_dam, params.idt));
  out.omega_idt_comb = t.mul(out.omega_sem, out.omega_idt);
  const double inv = 1.0 / cells;
  out.f_sem = t.scale(t.matmul_tn(out.omega_sem, f_dam), inv);
  out.f_idt = t.scale(t.matmul_tn(out.omega_idt_comb, f_dam), inv);
  return out;
}

// Plain-value attention maps for inspection and dumping.
struct AttentionMaps {
  Matrix omega_sem;       // k x k
  Matrix omega_idt;       // k x k
  Matrix omega_idt_comb;  // k x k
};

inline Matrix cells_to_grid(const Matrix& column, int k) {
  Matrix m(k, k);
  for (int gx = 0; gx < k; ++gx)
    for (int gy = 0; gy < k; ++gy) m(gx, gy) = column(gx * k + gy, 0);
  return m;
}

}  // namespace igmn
