#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "igmn/autodiff.hpp"
#include "igmn/graph.hpp"
#include "igmn/params.hpp"

namespace igmn {

// Query/key projections and the output map of one self-attention block.
// The projected keys double as the values.
struct AttentionBlockParams {
  Matrix wq;  // c x c_attn
  Matrix wk;  // c x c_attn
  Matrix wo;  // c_attn x c

  static AttentionBlockParams init(Rng& rng, int c, int c_attn) {
    AttentionBlockParams p;
    p.wq = xavier_uniform(rng, c, c_attn);
    p.wk = xavier_uniform(rng, c, c_attn);
    p.wo = xavier_uniform(rng, c_attn, c, 0.5);
    return p;
  }
};

// One graph layer: two attention blocks plus the direction-specific affine
// maps of the ordered temporal aggregator.
struct HgnnLayerParams {
  AttentionBlockParams intra_clip;
  AttentionBlockParams inter_clip;
  Matrix fwd_w, fwd_b;  // earlier -> later
  Matrix bwd_w, bwd_b;  // later -> earlier

  static HgnnLayerParams init(Rng& rng, int c, int c_attn) {
    HgnnLayerParams p;
    p.intra_clip = AttentionBlockParams::init(rng, c, c_attn);
    p.inter_clip = AttentionBlockParams::init(rng, c, c_attn);
    p.fwd_w = xavier_uniform(rng, c, c, 0.5);
    p.fwd_b = Matrix(1, c);
    p.bwd_w = xavier_uniform(rng, c, c, 0.5);
    p.bwd_b = Matrix(1, c);
    return p;
  }
};

struct HGNNParams {
  std::vector<HgnnLayerParams> layers;
  Matrix reduce_w, reduce_b;  // c_feat -> c_mem channel reduction

  static HGNNParams init(Rng& rng, int c_feat, int c_mem, int num_layers) {
    HGNNParams p;
    const int c_attn = std::max(4, c_feat / 2);
    for (int i = 0; i < num_layers; ++i) p.layers.push_back(HgnnLayerParams::init(rng, c_feat, c_attn));
    p.reduce_w = xavier_uniform(rng, c_feat, c_mem);
    p.reduce_b = Matrix(1, c_mem);
    return p;
  }

  void visit(const std::string& prefix, const std::function<void(const std::string&, Matrix&)>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& l = layers[i];
      const std::string base = prefix + ".layer" + std::to_string(i);
      fn(base + ".intra_clip.wq", l.intra_clip.wq);
      fn(base + ".intra_clip.wk", l.intra_clip.wk);
      fn(base + ".intra_clip.wo", l.intra_clip.wo);
      fn(base + ".inter_clip.wq", l.inter_clip.wq);
      fn(base + ".inter_clip.wk", l.inter_clip.wk);
      fn(base + ".inter_clip.wo", l.inter_clip.wo);
      fn(base + ".fwd_w", l.fwd_w);
      fn(base + ".fwd_b", l.fwd_b);
      fn(base + ".bwd_w", l.bwd_w);
      fn(base + ".bwd_b", l.bwd_b);
    }
    fn(prefix + ".reduce_w", reduce_w);
    fn(prefix + ".reduce_b", reduce_b);
  }
};

struct HgnnSwitches {
  bool intra_actor = true;
  bool downsample = true;
  bool freeze_memory = false;
};

// Scaled dot-product attention from `queries` into `keys` where the
// projected keys serve as the values, followed by the output projection, a
// residual connection and per-row normalization. Keys with mask 0 receive
// exactly zero weight; an all-masked key set skips the block entirely.
inline ad::Var attention_block(ad::Tape& t, ParamTape& P, ad::Var queries, ad::Var keys,
                               const std::vector<std::uint8_t>* key_mask,
                               const AttentionBlockParams& params) {
  if (key_mask) {
    bool any = false;
    for (auto m : *key_mask) any = any || (m != 0);
    if (!any) return queries;
  }
  const int c_attn = params.wq.cols;
  ad::Var q = t.matmul(queries, P(params.wq));
  ad::Var k = t.matmul(keys, P(params.wk));
  ad::Var scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(c_attn)));
  ad::Var weights = t.softmax_rows(scores, key_mask);
  ad::Var pooled = t.matmul(weights, k);
  ad::Var delta = t.matmul(pooled, P(params.wo));
  return t.layer_norm_rows(t.add(queries, delta));
}

namespace detail {

// Predecessor/successor row per node along E_intra; -1 marks "none".
inline void intra_neighbors(const IdentityGraph& g, std::vector<int>& pred, std::vector<int>& succ) {
  const int n = static_cast<int>(g.nodes.size());
  pred.assign(n, -1);
  succ.assign(n, -1);
  std::map<int, const GraphNode*> by_id;
  for (const auto& v : g.nodes) by_id[v.node_id] = &v;
  for (auto [a, b] : g.edges.intra) {
    const GraphNode* va = by_id.at(a);
    const GraphNode* vb = by_id.at(b);
    const GraphNode* earlier = va->clip_index < vb->clip_index ? va : vb;
    const GraphNode* later = va->clip_index < vb->clip_index ? vb : va;
    pred[later->feature_slot] = earlier->feature_slot;
    succ[earlier->feature_slot] = later->feature_slot;
  }
}

inline std::vector<int> clip_groups_order(const IdentityGraph& g,
                                          std::map<std::int64_t, std::vector<int>>& groups) {
  groups.clear();
  for (const auto& v : g.nodes) groups[v.clip_index].push_back(v.feature_slot);
  std::vector<int> node_to_pos(g.nodes.size());
  int pos = 0;
  for (auto& [clip, slots] : groups)
    for (int s : slots) node_to_pos[s] = pos++;
  return node_to_pos;
}

}  // namespace detail

// Ordered temporal aggregator: new(v) = norm(old(v) + FWD(old(pred)) +
// BWD(old(succ))) with missing neighbors contributing zero. When memory is
// frozen only actor rows take the update.
inline ad::Var intra_actor_pass(ad::Tape& t, ParamTape& P, const IdentityGraph& g, ad::Var table,
                                const HgnnLayerParams& lp, bool freeze_memory) {
  const int n = t.val(table).rows;
  const int c = t.val(table).cols;
  std::vector<int> pred, succ;
  detail::intra_neighbors(g, pred, succ);

  ad::Var fwd = t.add_bias(t.matmul(table, P(lp.fwd_w)), P(lp.fwd_b));
  ad::Var bwd = t.add_bias(t.matmul(table, P(lp.bwd_w)), P(lp.bwd_b));
  // A zero row appended so "-1" neighbors select it.
  ad::Var fwd_z = t.vstack({fwd, t.zeros(1, c)});
  ad::Var bwd_z = t.vstack({bwd, t.zeros(1, c)});
  std::vector<int> pred_idx(n), succ_idx(n);
  for (int i = 0; i < n; ++i) {
    pred_idx[i] = pred[i] < 0 ? n : pred[i];
    succ_idx[i] = succ[i] < 0 ? n : succ[i];
  }
  ad::Var updated = t.layer_norm_rows(
      t.add(table, t.add(t.gather_rows(fwd_z, pred_idx), t.gather_rows(bwd_z, succ_idx))));
  if (!freeze_memory) return updated;

  Matrix actor_mask(n, c), memory_mask(n, c);
  for (const auto& v : g.nodes)
    for (int j = 0; j < c; ++j)
      (v.is_actor ? actor_mask : memory_mask)(v.feature_slot, j) = 1.0;
  return t.add(t.mul_const(updated, actor_mask), t.mul_const(table, memory_mask));
}

// Self-attention among the nodes of each clip, every clip processed
// independently. Frozen memory skips the non-center clips.
inline ad::Var inter_intra_clip_pass(ad::Tape& t, ParamTape& P, const IdentityGraph& g,
                                     ad::Var table, const HgnnLayerParams& lp, bool freeze_memory) {
  std::map<std::int64_t, std::vector<int>> groups;
  std::vector<int> node_to_pos = detail::clip_groups_order(g, groups);
  std::vector<ad::Var> parts;
  for (auto& [clip, slots] : groups) {
    ad::Var q = t.gather_rows(table, slots);
    if (freeze_memory && clip != g.center) {
      parts.push_back(q);
    } else {
      parts.push_back(attention_block(t, P, q, q, nullptr, lp.intra_clip));
    }
  }
  ad::Var stacked = t.vstack(parts);
  return t.gather_rows(stacked, node_to_pos);
}

// Cross-attention with the actor nodes as queries and every surviving
// memory node as keys; memory rows pass through unchanged.
inline ad::Var inter_inter_clip_pass(ad::Tape& t, ParamTape& P, const IdentityGraph& g,
                                     ad::Var table, const HgnnLayerParams& lp) {
  std::vector<int> actor_slots, memory_slots;
  for (const auto& v : g.nodes) (v.is_actor ? actor_slots : memory_slots).push_back(v.feature_slot);
  if (memory_slots.empty()) return table;
  ad::Var q = t.gather_rows(table, actor_slots);
  ad::Var k = t.gather_rows(table, memory_slots);
  ad::Var updated = attention_block(t, P, q, k, nullptr, lp.inter_clip);
  // Actor rows come first by construction, so restacking keeps slot order.
  ad::Var mem = t.gather_rows(table, memory_slots);
  return t.vstack({updated, mem});
}

struct HgnnOutput {
  ad::Var f_mem;                        // num_actors x c_mem
  std::vector<ad::Var> layer_features;  // per layer, num_actors x c_feat
  std::vector<IdentityGraph> layer_graphs;  // graph seen by each layer
};

// Full stack: per layer the three passes in order, down-sampling between
// layers, and the channel-reduced average of the per-layer actor features.
inline HgnnOutput hgnn_forward(ad::Tape& t, ParamTape& P, const IdentityGraph& g0, ad::Var table0,
                               const HGNNParams& params, const HgnnSwitches& sw) {
  const int num_layers = static_cast<int>(params.layers.size());
  if (num_layers < 1) throw std::invalid_argument("hgnn_forward: no layers");
  HgnnOutput out;
  IdentityGraph g = g0;
  ad::Var table = table0;
  std::vector<int> actor_slots;
  for (const auto& v : g0.nodes)
    if (v.is_actor) actor_slots.push_back(v.feature_slot);

  for (int l = 0; l < num_layers; ++l) {
    out.layer_graphs.push_back(g);
    const HgnnLayerParams& lp = params.layers[l];
    if (sw.intra_actor) table = intra_actor_pass(t, P, g, table, lp, sw.freeze_memory);
    table = inter_intra_clip_pass(t, P, g, table, lp, sw.freeze_memory);
    table = inter_inter_clip_pass(t, P, g, table, lp);
    out.layer_features.push_back(t.gather_rows(table, actor_slots));
    if (l + 1 < num_layers && sw.downsample) {
      DownsampleResult ds = downsample_with_rows(g);
      g = std::move(ds.graph);
      table = t.gather_rows(table, ds.kept_slots);
      // Actors stay in the leading rows after every down-sampling step.
      actor_slots.clear();
      for (const auto& v : g.nodes)
        if (v.is_actor) actor_slots.push_back(v.feature_slot);
    }
  }

  ad::Var acc = out.layer_features[0];
  for (int l = 1; l < num_layers; ++l) acc = t.add(acc, out.layer_features[l]);
  ad::Var mean_feat = t.scale(acc, 1.0 / num_layers);
  out.f_mem = t.add_bias(t.matmul(mean_feat, P(params.reduce_w)), P(params.reduce_b));
  return out;
}

}  // namespace igmn
