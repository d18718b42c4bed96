#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "igmn/matrix.hpp"
#include "igmn/memory_bank.hpp"
#include "igmn/records.hpp"

namespace igmn {

struct GraphNode {
  int node_id = -1;
  std::int64_t clip_index = 0;
  std::int64_t track_id = -1;
  BoundingBox box;
  bool is_actor = false;  // true iff clip_index equals the graph center
  int feature_slot = -1;  // row in the node feature table
};

// The three edge sets. Pairs hold node ids; intra and inter_intra_clip are
// undirected and stored with the smaller id first, inter_inter_clip is
// directed memory -> actor.
struct EdgeSet {
  std::vector<std::pair<int, int>> intra;
  std::vector<std::pair<int, int>> inter_intra_clip;
  std::vector<std::pair<int, int>> inter_inter_clip;
};

struct IdentityGraph {
  std::int64_t center = 0;
  std::vector<GraphNode> nodes;
  EdgeSet edges;

  int num_actors() const {
    int n = 0;
    for (const auto& v : nodes) n += v.is_actor ? 1 : 0;
    return n;
  }

  const GraphNode* find(int node_id) const {
    for (const auto& v : nodes)
      if (v.node_id == node_id) return &v;
    return nullptr;
  }
};

namespace detail {

inline void sort_pairs(std::vector<std::pair<int, int>>& v) { std::sort(v.begin(), v.end()); }

// Undirected intra adjacency as id -> neighbor ids.
inline std::map<int, std::vector<int>> intra_adjacency(const IdentityGraph& g) {
  std::map<int, std::vector<int>> adj;
  for (const auto& v : g.nodes) adj[v.node_id];
  for (auto [a, b] : g.edges.intra) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& [id, nbrs] : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

}  // namespace detail

// Builds the typed graph over the clip's actors and the window's valid
// memory slots. Actor nodes come first in input order, then memory nodes by
// (clip, slot); node ids equal initial feature slots.
inline IdentityGraph build_graph(const std::vector<ActorRecord>& actors, const MemoryWindow& window) {
  if (actors.empty()) throw std::invalid_argument("build_graph: no actors");
  IdentityGraph g;
  g.center = window.center;
  for (const auto& a : actors) {
    if (a.clip_index != window.center)
      throw std::invalid_argument("build_graph: actor clip does not match window center");
    GraphNode v;
    v.node_id = static_cast<int>(g.nodes.size());
    v.clip_index = a.clip_index;
    v.track_id = a.track_id;
    v.box = a.box;
    v.is_actor = true;
    v.feature_slot = v.node_id;
    g.nodes.push_back(v);
  }
  for (std::size_t ci = 0; ci < window.clip_of_slot.size(); ++ci) {
    for (const auto& slot : window.slots[ci]) {
      if (!slot.valid) continue;
      GraphNode v;
      v.node_id = static_cast<int>(g.nodes.size());
      v.clip_index = window.clip_of_slot[ci];
      v.track_id = slot.track_id;
      v.box = slot.box;
      v.is_actor = false;
      v.feature_slot = v.node_id;
      g.nodes.push_back(v);
    }
  }

  // E_intra: temporally adjacent observations of the same track.
  std::map<std::int64_t, std::vector<const GraphNode*>> tracks;
  for (const auto& v : g.nodes) tracks[v.track_id].push_back(&v);
  for (auto& [track, obs] : tracks) {
    std::sort(obs.begin(), obs.end(),
              [](const GraphNode* a, const GraphNode* b) { return a->clip_index < b->clip_index; });
    for (std::size_t i = 0; i + 1 < obs.size(); ++i) {
      if (obs[i]->clip_index == obs[i + 1]->clip_index)
        throw std::invalid_argument("build_graph: duplicate observation of track " +
                                    std::to_string(track) + " in one clip");
      g.edges.intra.emplace_back(std::min(obs[i]->node_id, obs[i + 1]->node_id),
                                 std::max(obs[i]->node_id, obs[i + 1]->node_id));
    }
  }

  // E_inter^1: every node pair sharing a clip.
  std::map<std::int64_t, std::vector<int>> by_clip;
  for (const auto& v : g.nodes) by_clip[v.clip_index].push_back(v.node_id);
  for (auto& [clip, ids] : by_clip)
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        g.edges.inter_intra_clip.emplace_back(ids[i], ids[j]);

  // E_inter^2: every memory node feeds every actor node.
  for (const auto& m : g.nodes) {
    if (m.is_actor) continue;
    for (const auto& a : g.nodes)
      if (a.is_actor) g.edges.inter_inter_clip.emplace_back(m.node_id, a.node_id);
  }

  detail::sort_pairs(g.edges.intra);
  detail::sort_pairs(g.edges.inter_intra_clip);
  detail::sort_pairs(g.edges.inter_inter_clip);
  return g;
}

// Node feature table matching the graph's slot order: max-pooled maps for
// actor nodes, stored pooled vectors for memory nodes.
inline Matrix initial_node_features(const std::vector<ActorRecord>& actors,
                                    const MemoryWindow& window, const IdentityGraph& g) {
  const int c = window.c_feat;
  Matrix table(static_cast<int>(g.nodes.size()), c);
  int row = 0;
  for (const auto& a : actors) {
    if (a.feature_map.channels != c)
      throw std::invalid_argument("initial_node_features: actor channel mismatch");
    table.set_row(row++, a.feature_map.max_pooled());
  }
  for (std::size_t ci = 0; ci < window.clip_of_slot.size(); ++ci)
    for (const auto& slot : window.slots[ci]) {
      if (!slot.valid) continue;
      for (int j = 0; j < c; ++j) table(row, j) = slot.feature[j];
      ++row;
    }
  if (row != table.rows) throw std::logic_error("initial_node_features: row count mismatch");
  return table;
}

// Hop count to the unique actor node reachable over E_intra, or nullopt when
// the node's track never touches the center clip.
inline std::optional<int> intra_distance(const IdentityGraph& g, int node_id) {
  auto adj = detail::intra_adjacency(g);
  if (!adj.count(node_id)) throw std::invalid_argument("intra_distance: unknown node id");
  std::map<int, int> dist;
  std::deque<int> queue{node_id};
  dist[node_id] = 0;
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const GraphNode* n = g.find(cur);
    if (n->is_actor) return dist[cur];
    for (int nb : adj[cur])
      if (!dist.count(nb)) {
        dist[nb] = dist[cur] + 1;
        queue.push_back(nb);
      }
  }
  return std::nullopt;
}

struct DownsampleResult {
  IdentityGraph graph;
  std::vector<int> kept_slots;  // surviving rows of the previous feature table, in order
};

// Parity-based node removal. Even-distance nodes survive; a removed node
// bridging two survivors leaves a direct intra edge behind; inter edge sets
// are rebuilt from scratch over the survivors. Tracks that never reach an
// actor node anchor their parity at the observation temporally closest to
// the center (ties toward the earlier timestamp).
inline DownsampleResult downsample_with_rows(const IdentityGraph& g) {
  auto adj = detail::intra_adjacency(g);

  // Parity source per node: actor-node distance where defined, otherwise
  // distance from the track's anchor node.
  std::map<int, int> parity_dist;
  std::set<int> seen;
  for (const auto& v : g.nodes) {
    if (seen.count(v.node_id)) continue;
    // collect the connected intra component
    std::vector<int> comp;
    std::deque<int> queue{v.node_id};
    seen.insert(v.node_id);
    while (!queue.empty()) {
      int cur = queue.front();
      queue.pop_front();
      comp.push_back(cur);
      for (int nb : adj[cur])
        if (!seen.count(nb)) {
          seen.insert(nb);
          queue.push_back(nb);
        }
    }
    // pick the root: an actor node if present, else the anchor
    int root = -1;
    for (int id : comp)
      if (g.find(id)->is_actor) root = id;
    if (root < 0) {
      for (int id : comp) {
        if (root < 0) {
          root = id;
          continue;
        }
        const GraphNode* a = g.find(id);
        const GraphNode* b = g.find(root);
        const auto da = std::llabs(a->clip_index - g.center);
        const auto db = std::llabs(b->clip_index - g.center);
        if (da < db || (da == db && a->clip_index < b->clip_index)) root = id;
      }
    }
    std::map<int, int> dist;
    std::deque<int> q2{root};
    dist[root] = 0;
    while (!q2.empty()) {
      int cur = q2.front();
      q2.pop_front();
      for (int nb : adj[cur])
        if (!dist.count(nb)) {
          dist[nb] = dist[cur] + 1;
          q2.push_back(nb);
        }
    }
    for (auto [id, d] : dist) parity_dist[id] = d;
  }

  std::set<int> reference;
  for (const auto& v : g.nodes)
    if (parity_dist[v.node_id] % 2 == 0) reference.insert(v.node_id);

  DownsampleResult out;
  out.graph.center = g.center;
  std::map<int, int> new_slot;
  for (const auto& v : g.nodes) {
    if (!reference.count(v.node_id)) continue;
    GraphNode kept = v;
    kept.feature_slot = static_cast<int>(out.graph.nodes.size());
    new_slot[v.node_id] = kept.feature_slot;
    out.graph.nodes.push_back(kept);
    out.kept_slots.push_back(v.feature_slot);
  }

  // Surviving intra edges plus rewired bridges. Parity alternates along a
  // path, so a removed node bridges at most two references.
  std::set<std::pair<int, int>> intra;
  for (auto [a, b] : g.edges.intra)
    if (reference.count(a) && reference.count(b)) intra.insert({std::min(a, b), std::max(a, b)});
  for (const auto& v : g.nodes) {
    if (reference.count(v.node_id)) continue;
    std::vector<int> ref_nbrs;
    for (int nb : adj[v.node_id])
      if (reference.count(nb)) ref_nbrs.push_back(nb);
    if (ref_nbrs.size() == 2)
      intra.insert({std::min(ref_nbrs[0], ref_nbrs[1]), std::max(ref_nbrs[0], ref_nbrs[1])});
  }
  out.graph.edges.intra.assign(intra.begin(), intra.end());

  // Inter edge sets rebuilt by the construction rules.
  std::map<std::int64_t, std::vector<int>> by_clip;
  for (const auto& v : out.graph.nodes) by_clip[v.clip_index].push_back(v.node_id);
  for (auto& [clip, ids] : by_clip)
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        out.graph.edges.inter_intra_clip.emplace_back(ids[i], ids[j]);
  for (const auto& m : out.graph.nodes) {
    if (m.is_actor) continue;
    for (const auto& a : out.graph.nodes)
      if (a.is_actor) out.graph.edges.inter_inter_clip.emplace_back(m.node_id, a.node_id);
  }
  detail::sort_pairs(out.graph.edges.inter_intra_clip);
  detail::sort_pairs(out.graph.edges.inter_inter_clip);
  return out;
}

inline IdentityGraph downsample(const IdentityGraph& g) { return downsample_with_rows(g).graph; }

// Structured-text description for the inspect command.
inline std::string dump_graph(const IdentityGraph& g) {
  std::ostringstream os;
  os << "graph center=" << g.center << " nodes=" << g.nodes.size() << "\n";
  for (const auto& v : g.nodes)
    os << "  node id=" << v.node_id << " clip=" << v.clip_index << " track=" << v.track_id
       << (v.is_actor ? " actor" : " memory") << " box=(" << v.box.x << "," << v.box.y << ","
       << v.box.h << "," << v.box.w << ")\n";
  auto dump_edges = [&os](const char* name, const std::vector<std::pair<int, int>>& es) {
    os << "  " << name << " (" << es.size() << "):";
    for (auto [a, b] : es) os << " (" << a << "," << b << ")";
    os << "\n";
  };
  dump_edges("intra", g.edges.intra);
  dump_edges("inter_intra_clip", g.edges.inter_intra_clip);
  dump_edges("inter_inter_clip", g.edges.inter_inter_clip);
  return os.str();
}

}  // namespace igmn
