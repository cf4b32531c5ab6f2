#pragma once

#include "jepa/core/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace jepa::train {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// Decoupled-weight-decay adaptive moments over two learning-rate groups.
// A parameter whose gradient buffer was never touched this step is skipped
// entirely (no moment update, no decay): structurally unreached parameters
// must not drift.
class AdamW {
 public:
  AdamW(std::vector<NamedParameter> params, AdamWConfig cfg);

  void step(const std::array<float, 2>& group_lr);
  void zero_grad();

  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  const std::vector<NamedParameter>& params() const { return params_; }
  // Moment buffers by parameter index, sized on first use; exposed for
  // checkpointing.
  ArrayX& moment1(size_t i) { return m_[i]; }
  ArrayX& moment2(size_t i) { return v_[i]; }

 private:
  AdamWConfig cfg_;
  std::vector<NamedParameter> params_;
  std::vector<ArrayX> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace jepa::train
