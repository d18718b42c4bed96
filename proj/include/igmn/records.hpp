#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "igmn/geometry.hpp"
#include "igmn/matrix.hpp"

namespace igmn {

// Multi-label target over C_cls classes. The pose classes form a mutually
// exclusive subset: an actor carries at most one positive pose label.
struct ActionLabelVector {
  std::vector<std::uint8_t> values;
  std::vector<std::uint8_t> pose_mask;

  int num_classes() const { return static_cast<int>(values.size()); }

  void validate() const {
    if (values.size() != pose_mask.size())
      throw std::invalid_argument("ActionLabelVector: values/pose_mask size mismatch");
    int pose_positives = 0;
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (values[c] > 1 || pose_mask[c] > 1)
        throw std::invalid_argument("ActionLabelVector: entries must be binary");
      if (values[c] && pose_mask[c]) ++pose_positives;
    }
    if (pose_positives > 1)
      throw std::invalid_argument("ActionLabelVector: more than one positive pose class");
  }
};

// RoI feature block of shape channels x k x k, channel-major storage.
struct FeatureMap {
  int channels = 0;
  int k = 0;
  std::vector<double> d;

  FeatureMap() = default;
  FeatureMap(int c, int kk)
      : channels(c), k(kk), d(static_cast<std::size_t>(c) * kk * kk, 0.0) {}

  double& at(int c, int gx, int gy) {
    return d[(static_cast<std::size_t>(c) * k + gx) * k + gy];
  }
  double at(int c, int gx, int gy) const {
    return d[(static_cast<std::size_t>(c) * k + gx) * k + gy];
  }

  bool empty() const { return d.empty(); }

  // (k*k) x channels layout with row index gx*k + gy.
  Matrix cells_by_channels() const {
    Matrix m(k * k, channels);
    for (int c = 0; c < channels; ++c)
      for (int gx = 0; gx < k; ++gx)
        for (int gy = 0; gy < k; ++gy) m(gx * k + gy, c) = at(c, gx, gy);
    return m;
  }

  // Spatial max per channel, 1 x channels.
  Matrix max_pooled() const {
    Matrix m(1, channels);
    for (int c = 0; c < channels; ++c) {
      double best = at(c, 0, 0);
      for (int gx = 0; gx < k; ++gx)
        for (int gy = 0; gy < k; ++gy) best = std::max(best, at(c, gx, gy));
      m(0, c) = best;
    }
    return m;
  }
};

// One detected (and tracked) actor in one clip.
struct ActorRecord {
  std::int64_t clip_index = 0;
  BoundingBox box;
  std::int64_t track_id = 0;
  double score = 1.0;
  FeatureMap feature_map;
  std::optional<ActionLabelVector> labels;
};

inline void validate_record(const ActorRecord& r, int c_feat, int k) {
  if (!r.box.valid()) throw std::invalid_argument("ActorRecord: degenerate box");
  if (r.track_id < 0) throw std::invalid_argument("ActorRecord: negative track id");
  if (r.feature_map.channels != c_feat || r.feature_map.k != k)
    throw std::invalid_argument("ActorRecord: feature map shape mismatch");
  if (r.labels) r.labels->validate();
}

}  // namespace igmn
