#pragma once

#include <random>
#include <string>
#include <vector>

#include "sdtc/ops.hpp"
#include "sdtc/tensor.hpp"

namespace sdtc {

// Multi-head cross-attention parameters. d_model must divide evenly
// across heads; the output projection maps M·d_k back to d_model.
struct MhaParams {
  int num_heads = 0;
  int d_model = 0;
  int d_k = 0;
  std::vector<Tensor> wq;  // per head, [d_model × d_k]
  std::vector<Tensor> wk;
  std::vector<Tensor> wv;
  Tensor wo;               // [M·d_k × d_model]

  static MhaParams create(int num_heads, int d_model, std::mt19937_64& rng);
  std::vector<NamedTensor> parameters(const std::string& prefix);
};

// Band mask: (t,u) allowed iff t-⌊L/2⌋ <= u <= t+⌊L/2⌋, clipped at edges.
BoolMatrix band_mask(int t_q, int t_k, int window);

// softmax(Q·K^T/√d_k, mask)·V. attn_weights_out, when non-null, receives the
// post-softmax weight matrix [T_q×T_k].
Tensor scaled_dot_attention(Tape* tape, const Tensor& q, const Tensor& k,
                            const Tensor& v, const BoolMatrix* mask = nullptr,
                            Tensor* attn_weights_out = nullptr);

// Per-head projections, (masked) scaled dot-product attention, head concat,
// output projection.
Tensor mha_forward(Tape* tape, const Tensor& query_seq,
                   const Tensor& key_value_seq, MhaParams& params,
                   const BoolMatrix* mask = nullptr);

// Element-wise sum fusion; shapes must match exactly.
Tensor fuse_add(Tape* tape, const Tensor& daf_seq, const Tensor& attn_out);
// Feature-axis concatenation fusion -> [T×2d].
Tensor fuse_concat(Tape* tape, const Tensor& daf_seq, const Tensor& attn_out);

}  // namespace sdtc
