#pragma once

#include "jepa/model/action_head.hpp"
#include "jepa/model/backbone.hpp"
#include "jepa/model/target_encoder.hpp"
#include "jepa/model/world_model.hpp"

namespace jepa {

struct ModelConfig {
  TargetEncoderConfig encoder;
  BackboneConfig backbone;
  WorldModelConfig wm;
  ActionHeadConfig head;
  // Cross-module consistency; each sub-config validates itself in init.
  void validate() const;
};

// All four modules with one parameter namespace. Group 0 covers the backbone
// and world model, group 1 the action head; the frozen encoder's parameters
// are collected (checkpoints carry them) but marked non-trainable.
struct ModelBundle {
  ModelConfig cfg;
  TargetEncoder encoder;
  Backbone backbone;
  WorldModel wm;
  ActionHead head;

  void init(const ModelConfig& c, std::uint64_t seed);
  std::vector<NamedParameter> named_params();
};

}  // namespace jepa
