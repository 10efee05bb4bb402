#include "sdtc/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "sdtc/adam.hpp"

namespace sdtc {

MhaParams MhaParams::create(int num_heads, int d_model, std::mt19937_64& rng) {
  if (num_heads < 1 || d_model < 1 || d_model % num_heads != 0)
    throw std::invalid_argument(
        "d_model " + std::to_string(d_model) +
        " is not divisible by num_heads " + std::to_string(num_heads));
  MhaParams p;
  p.num_heads = num_heads;
  p.d_model = d_model;
  p.d_k = d_model / num_heads;
  for (int i = 0; i < num_heads; ++i) {
    p.wq.push_back(init_uniform({d_model, p.d_k}, d_model, rng));
    p.wk.push_back(init_uniform({d_model, p.d_k}, d_model, rng));
    p.wv.push_back(init_uniform({d_model, p.d_k}, d_model, rng));
  }
  p.wo = init_uniform({num_heads * p.d_k, d_model}, num_heads * p.d_k, rng);
  return p;
}

std::vector<NamedTensor> MhaParams::parameters(const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (int i = 0; i < num_heads; ++i) {
    const std::string h = prefix + ".head" + std::to_string(i);
    out.push_back({h + ".wq", wq[static_cast<size_t>(i)]});
    out.push_back({h + ".wk", wk[static_cast<size_t>(i)]});
    out.push_back({h + ".wv", wv[static_cast<size_t>(i)]});
  }
  out.push_back({prefix + ".wo", wo});
  return out;
}

BoolMatrix band_mask(int t_q, int t_k, int window) {
  if (window < 0) throw std::invalid_argument("band_mask window must be >= 0");
  BoolMatrix m;
  m.rows = t_q;
  m.cols = t_k;
  m.v.assign(static_cast<size_t>(t_q) * static_cast<size_t>(t_k), 0);
  const int half = window / 2;
  for (int t = 0; t < t_q; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(t_k - 1, t + half);
    for (int u = lo; u <= hi; ++u) m.set(t, u, true);
  }
  return m;
}

Tensor scaled_dot_attention(Tape* tape, const Tensor& q, const Tensor& k,
                            const Tensor& v, const BoolMatrix* mask,
                            Tensor* attn_weights_out) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1))
    throw std::invalid_argument("attention Q/K dim mismatch: " +
                                q.shape_str() + " vs " + k.shape_str());
  if (k.dim(0) != v.dim(0))
    throw std::invalid_argument("attention K/V length mismatch");
  if (mask && (mask->rows != q.dim(0) || mask->cols != k.dim(0)))
    throw std::invalid_argument("attention mask shape mismatch");
  Tensor e = ops::matmul_nt(tape, q, k);
  e = ops::scale(tape, e, 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  Tensor a = ops::softmax(tape, e, mask ? &mask->v : nullptr);
  if (attn_weights_out) *attn_weights_out = a;
  return ops::matmul(tape, a, v);
}

Tensor mha_forward(Tape* tape, const Tensor& query_seq,
                   const Tensor& key_value_seq, MhaParams& params,
                   const BoolMatrix* mask) {
  if (query_seq.dim(1) != params.d_model ||
      key_value_seq.dim(1) != params.d_model)
    throw std::invalid_argument("mha_forward feature dim must equal d_model " +
                                std::to_string(params.d_model));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(params.num_heads));
  for (int i = 0; i < params.num_heads; ++i) {
    const auto idx = static_cast<size_t>(i);
    Tensor q = ops::matmul(tape, query_seq, params.wq[idx]);
    Tensor k = ops::matmul(tape, key_value_seq, params.wk[idx]);
    Tensor v = ops::matmul(tape, key_value_seq, params.wv[idx]);
    heads.push_back(scaled_dot_attention(tape, q, k, v, mask));
  }
  return ops::matmul(tape, ops::concat_cols(tape, heads), params.wo);
}

Tensor fuse_add(Tape* tape, const Tensor& daf_seq, const Tensor& attn_out) {
  return ops::add(tape, daf_seq, attn_out);
}

Tensor fuse_concat(Tape* tape, const Tensor& daf_seq, const Tensor& attn_out) {
  if (daf_seq.shape() != attn_out.shape())
    throw std::invalid_argument("fuse_concat shape mismatch: " +
                                daf_seq.shape_str() + " vs " +
                                attn_out.shape_str());
  return ops::concat_cols(tape, {daf_seq, attn_out});
}

}  // namespace sdtc
