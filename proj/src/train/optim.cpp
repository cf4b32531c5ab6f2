#include "jepa/train/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace jepa::train {

AdamW::AdamW(std::vector<NamedParameter> params, AdamWConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  m_.resize(params_.size());
  v_.resize(params_.size());
}

void AdamW::step(const std::array<float, 2>& group_lr) {
  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, float(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, float(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const NamedParameter& np = params_[i];
    if (!np.param->trainable()) continue;
    Tensor& val = np.param->value();
    if (!val.grad_touched()) continue;
    if (np.group < 0 || np.group > 1)
      throw std::runtime_error("optimizer: parameter group out of range");
    const float lr = group_lr[size_t(np.group)];

    ArrayX& m = m_[i];
    ArrayX& v = v_[i];
    if (m.size() == 0) {
      m = ArrayX::Zero(val.numel());
      v = ArrayX::Zero(val.numel());
    }
    Eigen::Map<const ArrayX> g(val.grad_raw().data(), val.numel());
    m = cfg_.beta1 * m + (1.0f - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0f - cfg_.beta2) * g.square();
    Eigen::Map<ArrayX> p(val.data(), val.numel());
    p -= lr * ((m / bc1) / ((v / bc2).sqrt() + cfg_.eps) + cfg_.weight_decay * p);
  }
}

void AdamW::zero_grad() {
  for (auto& np : params_) np.param->value().zero_grad();
}

}  // namespace jepa::train
