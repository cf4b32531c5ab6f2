#pragma once

#include "jepa/core/mask.hpp"
#include "jepa/core/ops.hpp"
#include "jepa/core/rng.hpp"
#include "jepa/core/tensor.hpp"

#include <string>
#include <vector>

namespace jepa {

inline constexpr Scalar kInitStd = 0.02f;

struct LinearM {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
  void init(Eigen::Index in, Eigen::Index out, rng::KeyStream& ks, bool trainable);
  Tensor forward(const Tensor& x) const { return linear(x, weight.value(), bias.value()); }
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

struct LayerNormM {
  Parameter gain, bias;
  void init(Eigen::Index d, bool trainable);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain.value(), bias.value()); }
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

// Self-attention over [..., S, d]. attn_capture, when set, receives the dense
// weights [groups*heads, S, S] of this call.
struct MultiHeadAttention {
  int heads = 0;
  LinearM q, k, v, o;
  void init(Eigen::Index d, int n_heads, rng::KeyStream& ks, bool trainable);
  Tensor forward(const Tensor& x, const MaskPtr& mask, Tensor* attn_capture = nullptr) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

// Queries from x [..., Sq, d], keys/values from cond [..., Sk, d_cond].
struct CrossAttention {
  int heads = 0;
  LinearM q, k, v, o;
  void init(Eigen::Index d, Eigen::Index d_cond, int n_heads, rng::KeyStream& ks, bool trainable);
  Tensor forward(const Tensor& x, const Tensor& cond, const MaskPtr& mask) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

struct Mlp {
  LinearM fc1, fc2;
  void init(Eigen::Index d, int mult, rng::KeyStream& ks, bool trainable);
  Tensor forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

// Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct EncoderBlock {
  LayerNormM ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;
  void init(Eigen::Index d, int n_heads, int mlp_mult, rng::KeyStream& ks, bool trainable);
  Tensor forward(const Tensor& x, const MaskPtr& mask, Tensor* attn_capture = nullptr) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

// Pre-norm block with an extra cross-attention read of conditioning tokens.
struct CrossBlock {
  LayerNormM ln1, ln2, ln3;
  MultiHeadAttention self_attn;
  CrossAttention cross_attn;
  Mlp mlp;
  void init(Eigen::Index d, Eigen::Index d_cond, int n_heads, int mlp_mult, rng::KeyStream& ks,
            bool trainable);
  Tensor forward(const Tensor& x, const Tensor& cond, const MaskPtr& self_mask,
                 const MaskPtr& cross_mask) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

}  // namespace jepa
