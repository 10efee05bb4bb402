#pragma once

#include <cstdint>
#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc {

// Boolean matrix used for attention masks and padding masks.
struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;  // row-major, 1 = allowed

  std::uint8_t at(int r, int c) const {
    return v[static_cast<size_t>(r) * static_cast<size_t>(cols) +
             static_cast<size_t>(c)];
  }
  void set(int r, int c, bool b) {
    v[static_cast<size_t>(r) * static_cast<size_t>(cols) +
      static_cast<size_t>(c)] = b ? 1 : 0;
  }
};

namespace ops {

// All ops: pass tape==nullptr for inference (no recording). An op's output
// requires_grad iff the tape is active and any input requires_grad.

Tensor matmul(Tape* tape, Tensor a, Tensor b);
// a[m×k] · b[n×k]^T -> [m×n]
Tensor matmul_nt(Tape* tape, Tensor a, Tensor b);

Tensor add(Tape* tape, Tensor a, Tensor b);
// x[T×d] + bias[d], broadcast over rows
Tensor add_bias(Tape* tape, Tensor x, Tensor bias);
Tensor scale(Tape* tape, Tensor x, double c);

// Row-wise softmax along the last axis. mask, when given, must match x's
// flat size; masked entries get a -inf energy and come out exactly 0.
// A fully masked row is a contract violation.
Tensor softmax(Tape* tape, Tensor x,
               const std::vector<std::uint8_t>* mask = nullptr);

// Per-row layer normalization with population variance.
Tensor layer_norm(Tape* tape, Tensor x, Tensor gain,
                  Tensor bias, double epsilon = 1e-5);

// Inverted dropout, deterministic given rng_seed.
Tensor dropout(Tape* tape, Tensor x, double rate, bool training,
               std::uint64_t rng_seed);

// x·W + b
Tensor linear(Tape* tape, Tensor x, Tensor w, Tensor b);
// rank-1 x[d]·W[d×k] + b[k] -> [k]
Tensor vec_linear(Tape* tape, Tensor x, Tensor w,
                  Tensor b);

// Feature-axis concatenation of [T×d_i] pieces.
Tensor concat_cols(Tape* tape, std::vector<Tensor> parts);
// Concatenation of rank-1 tensors.
Tensor concat_vec(Tape* tape, std::vector<Tensor> parts);

// Column-wise max over rows where keep[t] is true. keep must have >=1 entry.
Tensor maxpool_rows(Tape* tape, Tensor x,
                    const std::vector<std::uint8_t>& keep);

// Log-softmax over a rank-1 tensor.
Tensor log_softmax(Tape* tape, Tensor x);
// Negative log-likelihood of one class from log-probabilities.
Tensor nll(Tape* tape, Tensor log_probs, int target);

// Mean of scalar tensors (batch loss reduction).
Tensor mean_scalars(Tape* tape, std::vector<Tensor> scalars);

// Fixed-coefficient contraction sum_i c_i * x_i -> scalar.
Tensor weighted_sum(Tape* tape, Tensor x,
                    const std::vector<double>& coeffs);

}  // namespace ops
}  // namespace sdtc
