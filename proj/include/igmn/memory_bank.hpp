#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "igmn/geometry.hpp"
#include "igmn/serialize.hpp"

namespace igmn {

// Pooled features of every actor kept for one clip, ordered by descending
// detection score.
struct MemoryEntry {
  struct Slot {
    std::int64_t track_id = 0;
    BoundingBox box;
    double score = 0.0;
    std::vector<double> feature;  // length c_feat
  };
  std::int64_t clip_index = 0;
  std::vector<Slot> actors;
};

inline bool operator==(const MemoryEntry::Slot& a, const MemoryEntry::Slot& b) {
  return a.track_id == b.track_id && a.box == b.box && a.score == b.score && a.feature == b.feature;
}
inline bool operator==(const MemoryEntry& a, const MemoryEntry& b) {
  return a.clip_index == b.clip_index && a.actors == b.actors;
}

// The 2L-clip retrieval view around a center clip, which itself is excluded.
// Each clip contributes a fixed array of n_max slots; absent slots carry
// zeroed features and a cleared validity flag.
struct MemoryWindow {
  struct Slot {
    std::vector<double> feature;
    BoundingBox box{0, 0, 1, 1};
    std::int64_t track_id = -1;
    bool valid = false;
  };
  std::int64_t center = 0;
  int half_width = 0;
  int n_max = 0;
  int c_feat = 0;
  std::vector<std::int64_t> clip_of_slot;    // size 2L: t-L..t-1, t+1..t+L
  std::vector<std::vector<Slot>> slots;      // [2L][n_max]

  int num_valid() const {
    int n = 0;
    for (const auto& clip : slots)
      for (const auto& s : clip) n += s.valid ? 1 : 0;
    return n;
  }
};

// Clip-indexed store of pooled actor features. Reads are shared, writes
// exclusive; a reader sees either the old or the new entry of a concurrent
// write, never a mixture.
class MemoryBank {
 public:
  MemoryBank(int c_feat, int n_max)
      : c_feat_(c_feat), n_max_(n_max), mu_(std::make_unique<std::shared_mutex>()) {
    if (c_feat < 1 || n_max < 1) throw std::invalid_argument("MemoryBank: bad config");
  }

  MemoryBank(MemoryBank&&) = default;
  MemoryBank& operator=(MemoryBank&&) = default;

  int c_feat() const { return c_feat_; }
  int n_max() const { return n_max_; }

  void write(MemoryEntry entry) {
    for (const auto& a : entry.actors)
      if (static_cast<int>(a.feature.size()) != c_feat_)
        throw std::invalid_argument("MemoryBank::write: feature length mismatch");
    std::stable_sort(entry.actors.begin(), entry.actors.end(),
                     [](const MemoryEntry::Slot& a, const MemoryEntry::Slot& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.track_id < b.track_id;
                     });
    if (static_cast<int>(entry.actors.size()) > n_max_) entry.actors.resize(n_max_);
    std::unique_lock lock(*mu_);
    entries_[entry.clip_index] = std::move(entry);
  }

  MemoryWindow window(std::int64_t t, int half_width) const {
    if (half_width < 1) throw std::invalid_argument("MemoryBank::window: half width must be >= 1");
    MemoryWindow w;
    w.center = t;
    w.half_width = half_width;
    w.n_max = n_max_;
    w.c_feat = c_feat_;
    for (std::int64_t c = t - half_width; c <= t + half_width; ++c) {
      if (c == t) continue;
      w.clip_of_slot.push_back(c);
      w.slots.emplace_back(n_max_);
      for (auto& s : w.slots.back()) s.feature.assign(c_feat_, 0.0);
    }
    std::shared_lock lock(*mu_);
    for (std::size_t i = 0; i < w.clip_of_slot.size(); ++i) {
      auto it = entries_.find(w.clip_of_slot[i]);
      if (it == entries_.end()) continue;
      const MemoryEntry& e = it->second;
      const int n = std::min<int>(n_max_, static_cast<int>(e.actors.size()));
      for (int s = 0; s < n; ++s) {
        w.slots[i][s].feature = e.actors[s].feature;
        w.slots[i][s].box = e.actors[s].box;
        w.slots[i][s].track_id = e.actors[s].track_id;
        w.slots[i][s].valid = true;
      }
    }
    return w;
  }

  std::size_t num_entries() const {
    std::shared_lock lock(*mu_);
    return entries_.size();
  }

  const MemoryEntry* find(std::int64_t clip) const {
    std::shared_lock lock(*mu_);
    auto it = entries_.find(clip);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("MemoryBank::save: cannot open " + path.string());
    std::shared_lock lock(*mu_);
    os.write(kMagic, 8);
    io::write_u32(os, 1);  // format version
    io::write_u32(os, static_cast<std::uint32_t>(c_feat_));
    io::write_u32(os, static_cast<std::uint32_t>(n_max_));
    io::write_u64(os, entries_.size());
    for (const auto& [clip, e] : entries_) {
      io::write_i64(os, clip);
      io::write_u32(os, static_cast<std::uint32_t>(e.actors.size()));
      for (const auto& a : e.actors) {
        io::write_i64(os, a.track_id);
        io::write_f64(os, a.box.x);
        io::write_f64(os, a.box.y);
        io::write_f64(os, a.box.h);
        io::write_f64(os, a.box.w);
        io::write_f64(os, a.score);
        io::write_f64s(os, a.feature);
      }
    }
    if (!os) throw std::runtime_error("MemoryBank::save: write failed for " + path.string());
  }

  // Fails loudly on truncated files, version drift and shape mismatches.
  // Pass expected_c_feat < 0 to accept whatever the snapshot declares.
  static MemoryBank load(const std::filesystem::path& path, int expected_c_feat = -1) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("MemoryBank::load: cannot open " + path.string());
    io::expect_magic(is, kMagic, "MemoryBank::load");
    const std::uint32_t version = io::read_u32(is, "version");
    if (version != 1)
      throw std::runtime_error("MemoryBank::load: unsupported format version " + std::to_string(version));
    const int c_feat = static_cast<int>(io::read_u32(is, "c_feat"));
    const int n_max = static_cast<int>(io::read_u32(is, "n_max"));
    if (expected_c_feat >= 0 && c_feat != expected_c_feat)
      throw std::runtime_error("MemoryBank::load: snapshot c_feat=" + std::to_string(c_feat) +
                               " does not match expected c_feat=" + std::to_string(expected_c_feat));
    MemoryBank bank(c_feat, n_max);
    const std::uint64_t count = io::read_u64(is, "entry count");
    for (std::uint64_t i = 0; i < count; ++i) {
      MemoryEntry e;
      e.clip_index = io::read_i64(is, "clip index");
      const std::uint32_t n = io::read_u32(is, "actor count");
      e.actors.resize(n);
      for (auto& a : e.actors) {
        a.track_id = io::read_i64(is, "track id");
        a.box.x = io::read_f64(is, "box");
        a.box.y = io::read_f64(is, "box");
        a.box.h = io::read_f64(is, "box");
        a.box.w = io::read_f64(is, "box");
        a.score = io::read_f64(is, "score");
        a.feature = io::read_f64s(is, static_cast<std::size_t>(c_feat), "feature");
      }
      bank.entries_[e.clip_index] = std::move(e);
    }
    return bank;
  }

  bool operator==(const MemoryBank& o) const {
    std::shared_lock l1(*mu_);
    std::shared_lock l2(*o.mu_);
    return c_feat_ == o.c_feat_ && n_max_ == o.n_max_ && entries_ == o.entries_;
  }

 private:
  static constexpr const char kMagic[9] = "IGMNBANK";
  int c_feat_;
  int n_max_;
  std::map<std::int64_t, MemoryEntry> entries_;
  mutable std::unique_ptr<std::shared_mutex> mu_;
};

}  // namespace igmn
