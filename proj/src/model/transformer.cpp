#include "jepa/model/transformer.hpp"

namespace jepa {


void LinearM::init(Eigen::Index in, Eigen::Index out, rng::KeyStream& ks, bool trainable) {
  weight = Parameter(Tensor::randn({in, out}, ks.next(), kInitStd), trainable);
  bias = Parameter(Tensor::zeros({out}), trainable);
}

void LinearM::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".weight", &weight, group});
  out.push_back({prefix + ".bias", &bias, group});
}

void LayerNormM::init(Eigen::Index d, bool trainable) {
  gain = Parameter(Tensor::full({d}, 1.0f), trainable);
  bias = Parameter(Tensor::zeros({d}), trainable);
}

void LayerNormM::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".gain", &gain, group});
  out.push_back({prefix + ".bias", &bias, group});
}

void MultiHeadAttention::init(Eigen::Index d, int n_heads, rng::KeyStream& ks, bool trainable) {
  heads = n_heads;
  q.init(d, d, ks, trainable);
  k.init(d, d, ks, trainable);
  v.init(d, d, ks, trainable);
  o.init(d, d, ks, trainable);
}

Tensor MultiHeadAttention::forward(const Tensor& x, const MaskPtr& mask,
                                   Tensor* attn_capture) const {
  Tensor qs = split_heads(q.forward(x), heads);
  Tensor ks = split_heads(k.forward(x), heads);
  Tensor vs = split_heads(v.forward(x), heads);
  Tensor att = masked_attention(qs, ks, vs, mask, attn_capture);
  return o.forward(merge_heads(att));
}

void MultiHeadAttention::collect(const std::string& prefix, int group,
                                 std::vector<NamedParameter>& out) {
  q.collect(prefix + ".q", group, out);
  k.collect(prefix + ".k", group, out);
  v.collect(prefix + ".v", group, out);
  o.collect(prefix + ".o", group, out);
}

void CrossAttention::init(Eigen::Index d, Eigen::Index d_cond, int n_heads, rng::KeyStream& ks,
                          bool trainable) {
  heads = n_heads;
  q.init(d, d, ks, trainable);
  k.init(d_cond, d, ks, trainable);
  v.init(d_cond, d, ks, trainable);
  o.init(d, d, ks, trainable);
}

Tensor CrossAttention::forward(const Tensor& x, const Tensor& cond, const MaskPtr& mask) const {
  Tensor qs = split_heads(q.forward(x), heads);
  Tensor ks = split_heads(k.forward(cond), heads);
  Tensor vs = split_heads(v.forward(cond), heads);
  Tensor att = masked_attention(qs, ks, vs, mask);
  return o.forward(merge_heads(att));
}

void CrossAttention::collect(const std::string& prefix, int group,
                             std::vector<NamedParameter>& out) {
  q.collect(prefix + ".q", group, out);
  k.collect(prefix + ".k", group, out);
  v.collect(prefix + ".v", group, out);
  o.collect(prefix + ".o", group, out);
}

void Mlp::init(Eigen::Index d, int mult, rng::KeyStream& ks, bool trainable) {
  fc1.init(d, d * mult, ks, trainable);
  fc2.init(d * mult, d, ks, trainable);
}

void Mlp::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  fc1.collect(prefix + ".fc1", group, out);
  fc2.collect(prefix + ".fc2", group, out);
}

void EncoderBlock::init(Eigen::Index d, int n_heads, int mlp_mult, rng::KeyStream& ks,
                        bool trainable) {
  ln1.init(d, trainable);
  ln2.init(d, trainable);
  attn.init(d, n_heads, ks, trainable);
  mlp.init(d, mlp_mult, ks, trainable);
}

Tensor EncoderBlock::forward(const Tensor& x, const MaskPtr& mask, Tensor* attn_capture) const {
  Tensor h = add(x, attn.forward(ln1.forward(x), mask, attn_capture));
  return add(h, mlp.forward(ln2.forward(h)));
}

void EncoderBlock::collect(const std::string& prefix, int group,
                           std::vector<NamedParameter>& out) {
  ln1.collect(prefix + ".ln1", group, out);
  ln2.collect(prefix + ".ln2", group, out);
  attn.collect(prefix + ".attn", group, out);
  mlp.collect(prefix + ".mlp", group, out);
}

void CrossBlock::init(Eigen::Index d, Eigen::Index d_cond, int n_heads, int mlp_mult,
                      rng::KeyStream& ks, bool trainable) {
  ln1.init(d, trainable);
  ln2.init(d, trainable);
  ln3.init(d, trainable);
  self_attn.init(d, n_heads, ks, trainable);
  cross_attn.init(d, d_cond, n_heads, ks, trainable);
  mlp.init(d, mlp_mult, ks, trainable);
}

Tensor CrossBlock::forward(const Tensor& x, const Tensor& cond, const MaskPtr& self_mask,
                           const MaskPtr& cross_mask) const {
  Tensor h = add(x, self_attn.forward(ln1.forward(x), self_mask));
  h = add(h, cross_attn.forward(ln2.forward(h), cond, cross_mask));
  return add(h, mlp.forward(ln3.forward(h)));
}

void CrossBlock::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  ln1.collect(prefix + ".ln1", group, out);
  ln2.collect(prefix + ".ln2", group, out);
  ln3.collect(prefix + ".ln3", group, out);
  self_attn.collect(prefix + ".self", group, out);
  cross_attn.collect(prefix + ".cross", group, out);
  mlp.collect(prefix + ".mlp", group, out);
}

}  // namespace jepa
