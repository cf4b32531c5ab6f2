#pragma once

#include "jepa/core/mask.hpp"
#include "jepa/core/tensor.hpp"

#include <vector>

namespace jepa {

// Elementwise. Shapes must match exactly unless stated otherwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar c);
Tensor gelu(const Tensor& a);

// Broadcast adds. add_bcast0: e matches a's trailing dims, repeated over the
// leading ones. add_rows: a is [..., S, d], e is [..., d], repeated over S.
Tensor add_bcast0(const Tensor& a, const Tensor& e);
Tensor add_rows(const Tensor& a, const Tensor& e);

// Shape ops (all copy; axis may be negative).
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, Eigen::Index start, Eigen::Index len);
Tensor stack0(const std::vector<Tensor>& parts);
// Gathers rows along the second-to-last axis; indices may repeat.
Tensor gather_tokens(const Tensor& a, std::vector<Eigen::Index> idx);

// Lookup table [V, d] -> [n, d].
Tensor embedding(const Tensor& table, const std::vector<Eigen::Index>& ids);

// [H, W, 3] -> [(H/p)*(W/p), p*p*3] leaf, patches in row-major grid order.
// Pure data rearrangement of input pixels; never carries gradient.
Tensor patchify(const Tensor& frame, int patch);

// [..., S, D] -> [..., H, S, D/H] and back.
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

// matmul: [.., m, k] @ [k, n] runs as one stacked GEMM; two equal-rank inputs
// with matching leading dims multiply batch by batch.
Tensor matmul(const Tensor& a, const Tensor& b);
// x [..., in] @ w [in, out] + b [out]; pass a default Tensor for no bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = 1e-5f);
Tensor softmax_lastdim(const Tensor& x);

// Scaled dot-product attention over q [..., Sq, dh], k/v [..., Sk, dh] with a
// shared boolean mask. Masked weights are exactly zero. Prefix-structured
// masks skip masked columns in the GEMMs; if attn_capture is non-null, the
// dense weights [G, Sq, Sk] are written there (forward only).
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, MaskPtr mask,
                        Tensor* attn_capture = nullptr);

// Reductions to scalar, accumulated in double.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
// factor * sum(a^2)
Tensor sum_squares_scaled(const Tensor& a, Scalar factor);

// Fresh leaf with copied values, cut off from the tape.
Tensor detach(const Tensor& a);

}  // namespace jepa
