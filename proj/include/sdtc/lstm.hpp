#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc {

// One direction's gate parameters, gate row blocks ordered i, f, g, o.
struct LstmDir {
  Tensor w;  // [4H × D]
  Tensor u;  // [4H × H]
  Tensor b;  // [4H]
};

struct LstmLayer {
  int input_dim = 0;
  int hidden_dim = 0;
  LstmDir fwd;
  LstmDir bwd;

  // Uniform init with forget-gate bias 1.0, other biases zero.
  static LstmLayer create(int input_dim, int hidden_dim, std::mt19937_64& rng);
  std::vector<NamedTensor> parameters(const std::string& prefix);
};

// Single cell step: sigmoid gates, tanh candidate,
// c_t = f*c_prev + i*g, h_t = o*tanh(c_t). Not taped.
std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t,
                                         const Tensor& h_prev,
                                         const Tensor& c_prev,
                                         const LstmDir& p);

// Stacked bidirectional forward over x[T×D]: per layer, dropout on the
// layer's input (training only), then forward and backward passes from zero
// states, concatenated per frame to [T×2H].
Tensor bilstm_forward(Tape* tape, const Tensor& x,
                      std::vector<LstmLayer>& layers, double dropout_rate,
                      bool training, std::uint64_t dropout_seed);

}  // namespace sdtc
