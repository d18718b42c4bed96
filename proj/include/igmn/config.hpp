#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "igmn/rng.hpp"

namespace igmn {

// Shape and hyper-parameter contract shared by every module.
struct ModelConfig {
  int c_feat = 32;                             // feature channels
  int k = 5;                                   // RoI grid side
  int c_cls = 12;                              // number of action classes
  std::vector<int> pose_class_indices = {0, 1, 2};
  int l = 4;                                   // memory half-window, in clips
  int n_max = 4;                               // max actors kept per memory clip
  int num_layers = 2;                          // graph network depth
  int c_mem = 16;                              // reduced memory channels
  double gamma = 0.1;                          // ranking margin
  double lambda_aux = 0.5;                     // auxiliary loss weight
  double epsilon = 1e-6;                       // division guard in the geometry embedding
  bool geometry_axis_swap = false;             // pair grid axes with (w, h) instead of (h, w)

  int dam_channels() const { return c_feat + 4 + c_mem; }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0)) throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be positive");
    };
    positive(c_feat, "c_feat");
    positive(k, "k");
    positive(c_cls, "c_cls");
    positive(l, "l");
    positive(c_mem, "c_mem");
    positive(gamma, "gamma");
    positive(lambda_aux, "lambda_aux");
    positive(epsilon, "epsilon");
    if (n_max < 1) throw std::invalid_argument("ModelConfig: n_max must be >= 1");
    if (num_layers < 1) throw std::invalid_argument("ModelConfig: num_layers must be >= 1");
    for (int p : pose_class_indices)
      if (p < 0 || p >= c_cls)
        throw std::invalid_argument("ModelConfig: pose class index out of range");
  }
};

struct OptimizerConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<std::int64_t> milestones;  // steps at which lr is multiplied by lr_decay
  double lr_decay = 0.1;

  double lr_at(std::int64_t step) const {
    double v = lr;
    for (std::int64_t m : milestones)
      if (step >= m) v *= lr_decay;
    return v;
  }
};

struct AugmentationConfig {
  bool enabled = true;
  double max_scale = 1.5;   // per-proposal scale drawn from [1, max_scale]
  double jitter_frac = 0.1; // center jitter as a fraction of box size
};

// Switches for the study matrix. All on = the full model.
struct AblationConfig {
  bool use_memory = true;       // populate and read the memory bank
  bool use_dam = true;          // dual attention branch
  bool use_intra_actor = true;  // ordered temporal aggregator
  bool use_downsample = true;   // graph down-sampling between layers
  bool use_aux = true;          // auxiliary classification + prior losses
  bool freeze_memory = false;   // memory node features not updated by passes
};

// Whether a training step writes its clip's features to the bank before the
// forward pass or after the optimizer update. The window never contains the
// step's own clip, so with single-clip batches both orders coincide.
enum class MemoryWriteOrder { write_after_update, write_before_forward };

struct TrainConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  AugmentationConfig augmentation;
  AblationConfig ablation;
  MemoryWriteOrder memory_write_order = MemoryWriteOrder::write_after_update;
  int epochs = 3;
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"c_feat", c.c_feat},
                     {"k", c.k},
                     {"c_cls", c.c_cls},
                     {"pose_class_indices", c.pose_class_indices},
                     {"l", c.l},
                     {"n_max", c.n_max},
                     {"num_layers", c.num_layers},
                     {"c_mem", c.c_mem},
                     {"gamma", c.gamma},
                     {"lambda_aux", c.lambda_aux},
                     {"epsilon", c.epsilon},
                     {"geometry_axis_swap", c.geometry_axis_swap}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig def;
  c.c_feat = j.value("c_feat", def.c_feat);
  c.k = j.value("k", def.k);
  c.c_cls = j.value("c_cls", def.c_cls);
  c.pose_class_indices = j.value("pose_class_indices", def.pose_class_indices);
  c.l = j.value("l", def.l);
  c.n_max = j.value("n_max", def.n_max);
  c.num_layers = j.value("num_layers", def.num_layers);
  c.c_mem = j.value("c_mem", def.c_mem);
  c.gamma = j.value("gamma", def.gamma);
  c.lambda_aux = j.value("lambda_aux", def.lambda_aux);
  c.epsilon = j.value("epsilon", def.epsilon);
  c.geometry_axis_swap = j.value("geometry_axis_swap", def.geometry_axis_swap);
}

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"milestones", c.milestones},
                     {"lr_decay", c.lr_decay}};
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  OptimizerConfig def;
  c.lr = j.value("lr", def.lr);
  c.momentum = j.value("momentum", def.momentum);
  c.weight_decay = j.value("weight_decay", def.weight_decay);
  c.milestones = j.value("milestones", def.milestones);
  c.lr_decay = j.value("lr_decay", def.lr_decay);
}

inline void to_json(nlohmann::json& j, const AugmentationConfig& c) {
  j = nlohmann::json{{"enabled", c.enabled}, {"max_scale", c.max_scale}, {"jitter_frac", c.jitter_frac}};
}

inline void from_json(const nlohmann::json& j, AugmentationConfig& c) {
  AugmentationConfig def;
  c.enabled = j.value("enabled", def.enabled);
  c.max_scale = j.value("max_scale", def.max_scale);
  c.jitter_frac = j.value("jitter_frac", def.jitter_frac);
}

inline void to_json(nlohmann::json& j, const AblationConfig& c) {
  j = nlohmann::json{{"use_memory", c.use_memory},
                     {"use_dam", c.use_dam},
                     {"use_intra_actor", c.use_intra_actor},
                     {"use_downsample", c.use_downsample},
                     {"use_aux", c.use_aux},
                     {"freeze_memory", c.freeze_memory}};
}

inline void from_json(const nlohmann::json& j, AblationConfig& c) {
  AblationConfig def;
  c.use_memory = j.value("use_memory", def.use_memory);
  c.use_dam = j.value("use_dam", def.use_dam);
  c.use_intra_actor = j.value("use_intra_actor", def.use_intra_actor);
  c.use_downsample = j.value("use_downsample", def.use_downsample);
  c.use_aux = j.value("use_aux", def.use_aux);
  c.freeze_memory = j.value("freeze_memory", def.freeze_memory);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"optimizer", c.optimizer},
                     {"augmentation", c.augmentation},
                     {"ablation", c.ablation},
                     {"memory_write_order",
                      c.memory_write_order == MemoryWriteOrder::write_after_update
                          ? "write_after_update"
                          : "write_before_forward"},
                     {"epochs", c.epochs},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig def;
  c.model = j.value("model", def.model);
  c.optimizer = j.value("optimizer", def.optimizer);
  c.augmentation = j.value("augmentation", def.augmentation);
  c.ablation = j.value("ablation", def.ablation);
  const std::string order = j.value("memory_write_order", std::string("write_after_update"));
  if (order == "write_after_update") {
    c.memory_write_order = MemoryWriteOrder::write_after_update;
  } else if (order == "write_before_forward") {
    c.memory_write_order = MemoryWriteOrder::write_before_forward;
  } else {
    throw std::invalid_argument("TrainConfig: unknown memory_write_order '" + order + "'");
  }
  c.epochs = j.value("epochs", def.epochs);
  c.seed = j.value("seed", def.seed);
}

// Canonical hash of the shape contract; checkpoints refuse to resume when it
// differs. nlohmann::json orders keys alphabetically, so dump() is canonical.
inline std::uint64_t config_hash(const ModelConfig& c) {
  nlohmann::json j = c;
  return fnv1a(j.dump());
}

}  // namespace igmn
