#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igmn/config.hpp"
#include "igmn/dam.hpp"
#include "igmn/hgnn.hpp"
#include "igmn/losses.hpp"
#include "igmn/memory_bank.hpp"
#include "igmn/serialize.hpp"

namespace igmn {

// Projects the identity-pooled feature into memory channels and maps the
// fused feature to class logits with two chained channel mixers.
struct FusionHeadParams {
  Matrix proj_w, proj_b;  // c_dam -> c_mem
  Matrix h1_w, h1_b;      // c_mem -> c_mem
  Matrix h2_w, h2_b;      // c_mem -> c_cls

  static FusionHeadParams init(Rng& rng, int c_dam, int c_mem, int c_cls) {
    FusionHeadParams p;
    p.proj_w = xavier_uniform(rng, c_dam, c_mem);
    p.proj_b = Matrix(1, c_mem);
    p.h1_w = xavier_uniform(rng, c_mem, c_mem);
    p.h1_b = Matrix(1, c_mem);
    p.h2_w = xavier_uniform(rng, c_mem, c_cls);
    p.h2_b = Matrix(1, c_cls);
    return p;
  }

  void visit(const std::string& prefix, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn(prefix + ".proj_w", proj_w);
    fn(prefix + ".proj_b", proj_b);
    fn(prefix + ".h1_w", h1_w);
    fn(prefix + ".h1_b", h1_b);
    fn(prefix + ".h2_w", h2_w);
    fn(prefix + ".h2_b", h2_b);
  }
};

// Independent linear classifiers over the two attention-pooled features.
struct AuxHeadParams {
  Matrix sem_w, sem_b;
  Matrix idt_w, idt_b;

  static AuxHeadParams init(Rng& rng, int c_dam, int c_cls) {
    AuxHeadParams p;
    p.sem_w = xavier_uniform(rng, c_dam, c_cls);
    p.sem_b = Matrix(1, c_cls);
    p.idt_w = xavier_uniform(rng, c_dam, c_cls);
    p.idt_b = Matrix(1, c_cls);
    return p;
  }

  void visit(const std::string& prefix, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn(prefix + ".sem_w", sem_w);
    fn(prefix + ".sem_b", sem_b);
    fn(prefix + ".idt_w", idt_w);
    fn(prefix + ".idt_b", idt_b);
  }
};

struct ModelParams {
  HGNNParams hgnn;
  DAMParams dam;
  FusionHeadParams fusion;
  AuxHeadParams aux;

  static ModelParams init(Rng& rng, const ModelConfig& cfg) {
    ModelParams p;
    p.hgnn = HGNNParams::init(rng, cfg.c_feat, cfg.c_mem, cfg.num_layers);
    p.dam = DAMParams::init(rng, cfg.dam_channels());
    p.fusion = FusionHeadParams::init(rng, cfg.dam_channels(), cfg.c_mem, cfg.c_cls);
    p.aux = AuxHeadParams::init(rng, cfg.dam_channels(), cfg.c_cls);
    return p;
  }

  void visit(const std::function<void(const std::string&, Matrix&)>& fn) {
    hgnn.visit("hgnn", fn);
    dam.visit("dam", fn);
    fusion.visit("fusion", fn);
    aux.visit("aux", fn);
  }

  std::vector<ParamRef> refs() {
    std::vector<ParamRef> out;
    visit([&out](const std::string& name, Matrix& m) { out.push_back({name, &m}); });
    return out;
  }
};

struct ForwardOutput {
  HgnnOutput hgnn;
  std::vector<DualAttentionOutput> dam;  // per actor; empty when DAM is off
  ad::Var fused_logits;                  // num_actors x c_cls
  ad::Var sem_logits;                    // valid when DAM is on
  ad::Var idt_logits;                    // valid when DAM is on
};

// Graph construction, the graph network, per-actor dual attention and the
// fusion head, end to end on one tape.
inline ForwardOutput model_forward(ad::Tape& t, ParamTape& P, const ModelConfig& cfg,
                                   const AblationConfig& ab, const std::vector<ActorRecord>& actors,
                                   const MemoryWindow& window, ModelParams& params) {
  if (actors.empty()) throw std::invalid_argument("model_forward: empty actor list");
  for (const auto& a : actors) validate_record(a, cfg.c_feat, cfg.k);
  if (window.c_feat != cfg.c_feat)
    throw std::invalid_argument("model_forward: window c_feat mismatch");

  const IdentityGraph g = build_graph(actors, window);
  ad::Var table0 = t.input(initial_node_features(actors, window, g));
  HgnnSwitches sw;
  sw.intra_actor = ab.use_intra_actor;
  sw.downsample = ab.use_downsample;
  sw.freeze_memory = ab.freeze_memory;

  ForwardOutput out;
  out.hgnn = hgnn_forward(t, P, g, table0, params.hgnn, sw);

  const int n = static_cast<int>(actors.size());
  std::vector<ad::Var> fused_rows, sem_rows, idt_rows;
  for (int i = 0; i < n; ++i) {
    ad::Var f_mem_row = t.row(out.hgnn.f_mem, i);
    if (ab.use_dam) {
      const GeometryEmbedding geo =
          geometry_embedding(actors[i], actors, cfg.k, cfg.epsilon, cfg.geometry_axis_swap);
      ad::Var cells = t.input(actors[i].feature_map.cells_by_channels());
      DualAttentionOutput d = dual_attention(t, P, cells, geo, f_mem_row, params.dam);
      ad::Var f_idt_proj =
          t.add_bias(t.matmul(d.f_idt, P(params.fusion.proj_w)), P(params.fusion.proj_b));
      fused_rows.push_back(t.add(f_mem_row, f_idt_proj));
      sem_rows.push_back(d.f_sem);
      idt_rows.push_back(d.f_idt);
      out.dam.push_back(std::move(d));
    } else {
      fused_rows.push_back(f_mem_row);
    }
  }

  ad::Var fused = t.vstack(fused_rows);
  ad::Var hidden = t.relu(t.add_bias(t.matmul(fused, P(params.fusion.h1_w)), P(params.fusion.h1_b)));
  out.fused_logits = t.add_bias(t.matmul(hidden, P(params.fusion.h2_w)), P(params.fusion.h2_b));

  if (ab.use_dam) {
    ad::Var sem = t.vstack(sem_rows);
    ad::Var idt = t.vstack(idt_rows);
    out.sem_logits = t.add_bias(t.matmul(sem, P(params.aux.sem_w)), P(params.aux.sem_b));
    out.idt_logits = t.add_bias(t.matmul(idt, P(params.aux.idt_w)), P(params.aux.idt_b));
  }
  return out;
}

// Pose classes are scored with a softmax over the pose subset, everything
// else with an independent sigmoid.
inline Matrix scores_from_logits(const Matrix& logits, const ModelConfig& cfg) {
  Matrix scores(logits.rows, logits.cols);
  std::vector<std::uint8_t> is_pose(cfg.c_cls, 0);
  for (int p : cfg.pose_class_indices) is_pose[p] = 1;
  for (int r = 0; r < logits.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int p : cfg.pose_class_indices) mx = std::max(mx, logits(r, p));
    double z = 0.0;
    for (int p : cfg.pose_class_indices) z += std::exp(logits(r, p) - mx);
    for (int c = 0; c < logits.cols; ++c) {
      if (is_pose[c])
        scores(r, c) = std::exp(logits(r, c) - mx) / z;
      else
        scores(r, c) = 1.0 / (1.0 + std::exp(-logits(r, c)));
    }
  }
  return scores;
}

struct BatchLossVars {
  ad::Var cls_sem, cls_idt, prior_sem, prior_idt, cls_fuse, total;
};

namespace lossdetail {

inline Matrix non_pose_mask(int rows, const ModelConfig& cfg) {
  Matrix m(rows, cfg.c_cls, 1.0);
  for (int r = 0; r < rows; ++r)
    for (int p : cfg.pose_class_indices) m(r, p) = 0.0;
  return m;
}

// Mean over actors of the softmax cross entropy over the pose subset;
// actors without a positive pose label contribute zero.
inline ad::Var pose_cross_entropy(ad::Tape& t, ad::Var logits,
                                  const std::vector<ActionLabelVector>& labels,
                                  const ModelConfig& cfg) {
  const int n = static_cast<int>(labels.size());
  Matrix onehot(n, static_cast<int>(cfg.pose_class_indices.size()));
  for (int r = 0; r < n; ++r)
    for (std::size_t j = 0; j < cfg.pose_class_indices.size(); ++j)
      onehot(r, static_cast<int>(j)) = labels[r].values[cfg.pose_class_indices[j]];
  ad::Var pose_logits = t.gather_cols(logits, cfg.pose_class_indices);
  ad::Var ls = t.log_softmax_rows(pose_logits);
  return t.scale(t.sum_all(t.mul_const(ls, onehot)), -1.0 / n);
}

}  // namespace lossdetail

// All five objectives for one clip batch. The relaxation uses the boxes the
// model saw (after any augmentation); p_hats are the per-actor interference
// maps. Pose classes are excluded from the auxiliary class sums and
// supervised only through the fused head's softmax term.
inline BatchLossVars batch_losses(ad::Tape& t, const ForwardOutput& fwd,
                                  const std::vector<ActionLabelVector>& labels,
                                  const std::vector<BoundingBox>& boxes,
                                  const std::vector<Matrix>& p_hats, const ModelConfig& cfg,
                                  const AblationConfig& ab) {
  const int n = static_cast<int>(labels.size());
  if (n == 0) throw std::invalid_argument("batch_losses: no labels");
  const Matrix label_m = lossdetail::label_matrix(labels);
  const Matrix np_mask = lossdetail::non_pose_mask(n, cfg);

  BatchLossVars out;
  ad::Var fuse_preds = t.sigmoid(fwd.fused_logits);
  out.cls_fuse = t.add(standard_bce_v(t, fuse_preds, label_m, np_mask),
                       lossdetail::pose_cross_entropy(t, fwd.fused_logits, labels, cfg));

  const bool aux_on = ab.use_dam && ab.use_aux;
  if (aux_on) {
    Matrix e(n, cfg.c_cls);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> ei = relaxation(labels, boxes, static_cast<std::size_t>(i));
      for (int c = 0; c < cfg.c_cls; ++c) e(i, c) = ei[c];
    }
    out.cls_sem = relaxed_bce_v(t, t.sigmoid(fwd.sem_logits), label_m, e, np_mask);
    out.cls_idt = standard_bce_v(t, t.sigmoid(fwd.idt_logits), label_m, np_mask);

    if (static_cast<int>(p_hats.size()) != n)
      throw std::invalid_argument("batch_losses: p_hat count mismatch");
    ad::Var ps_acc, pi_acc;
    for (int i = 0; i < n; ++i) {
      ad::Var ps = semantic_prior_loss_v(t, fwd.dam[i].omega_sem, p_hats[i], cfg.gamma);
      ad::Var pi = identity_prior_loss_v(t, fwd.dam[i].omega_idt, p_hats[i]);
      ps_acc = ps_acc.valid() ? t.add(ps_acc, ps) : ps;
      pi_acc = pi_acc.valid() ? t.add(pi_acc, pi) : pi;
    }
    out.prior_sem = t.scale(ps_acc, 1.0 / n);
    out.prior_idt = t.scale(pi_acc, 1.0 / n);
  } else {
    out.cls_sem = t.zeros(1, 1);
    out.cls_idt = t.zeros(1, 1);
    out.prior_sem = t.zeros(1, 1);
    out.prior_idt = t.zeros(1, 1);
  }

  // Same association order as LossReport::total_of so the report identity
  // holds exactly.
  ad::Var aux_sum = t.add(t.add(t.add(out.cls_sem, out.cls_idt), out.prior_sem), out.prior_idt);
  out.total = t.add(out.cls_fuse, t.scale(aux_sum, cfg.lambda_aux));
  return out;
}

inline LossReport report_from_vars(const ad::Tape& t, const BatchLossVars& v, double lambda_aux) {
  LossReport r = total_loss(t.val(v.cls_sem)(0, 0), t.val(v.cls_idt)(0, 0),
                            t.val(v.prior_sem)(0, 0), t.val(v.prior_idt)(0, 0),
                            t.val(v.cls_fuse)(0, 0), lambda_aux);
  return r;
}

// ---- checkpointing ----

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::vector<Matrix> velocity;  // optimizer state, in visit order
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                            ModelParams& params, const std::vector<Matrix>& velocity,
                            std::int64_t step, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write("IGMNCKPT", 8);
  io::write_u32(os, 1);
  io::write_u64(os, config_hash(cfg));
  nlohmann::json j = cfg;
  io::write_string(os, j.dump());
  io::write_i64(os, step);
  io::write_u64(os, seed);
  std::uint32_t count = 0;
  params.visit([&count](const std::string&, Matrix&) { ++count; });
  io::write_u32(os, count);
  params.visit([&os](const std::string& name, Matrix& m) {
    io::write_string(os, name);
    io::write_u32(os, static_cast<std::uint32_t>(m.rows));
    io::write_u32(os, static_cast<std::uint32_t>(m.cols));
    io::write_f64s(os, m.d);
  });
  io::write_u32(os, static_cast<std::uint32_t>(velocity.size()));
  for (const Matrix& m : velocity) {
    io::write_u32(os, static_cast<std::uint32_t>(m.rows));
    io::write_u32(os, static_cast<std::uint32_t>(m.cols));
    io::write_f64s(os, m.d);
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  io::expect_magic(is, "IGMNCKPT", "load_checkpoint");
  const std::uint32_t version = io::read_u32(is, "version");
  if (version != 1)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t stored_hash = io::read_u64(is, "config hash");
  Checkpoint ck;
  const std::string cfg_json = io::read_string(is, "config");
  ck.config = nlohmann::json::parse(cfg_json).get<ModelConfig>();
  if (config_hash(ck.config) != stored_hash)
    throw std::runtime_error("load_checkpoint: config hash mismatch (corrupt checkpoint)");
  ck.step = io::read_i64(is, "step");
  ck.seed = io::read_u64(is, "seed");
  Rng rng(1);  // overwritten below
  ck.params = ModelParams::init(rng, ck.config);
  const std::uint32_t count = io::read_u32(is, "param count");
  std::uint32_t loaded = 0;
  ck.params.visit([&](const std::string& name, Matrix& m) {
    const std::string stored_name = io::read_string(is, "param name");
    if (stored_name != name)
      throw std::runtime_error("load_checkpoint: parameter order mismatch at " + name);
    const int rows = static_cast<int>(io::read_u32(is, "rows"));
    const int cols = static_cast<int>(io::read_u32(is, "cols"));
    if (rows != m.rows || cols != m.cols)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    m.d = io::read_f64s(is, static_cast<std::size_t>(rows) * cols, "param data");
    ++loaded;
  });
  if (loaded != count) throw std::runtime_error("load_checkpoint: parameter count mismatch");
  const std::uint32_t vcount = io::read_u32(is, "velocity count");
  ck.velocity.resize(vcount);
  for (auto& m : ck.velocity) {
    const int rows = static_cast<int>(io::read_u32(is, "rows"));
    const int cols = static_cast<int>(io::read_u32(is, "cols"));
    m = Matrix(rows, cols);
    m.d = io::read_f64s(is, static_cast<std::size_t>(rows) * cols, "velocity data");
  }
  return ck;
}

}  // namespace igmn
