#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc {

struct AdamState {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m;  // aligned with the parameter list
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam over a fixed named-parameter group.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, double learning_rate,
       double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update from the parameters' current gradients.
  // Throws if any parameter has no populated gradient.
  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  const std::vector<NamedTensor>& params() const { return params_; }

 private:
  std::vector<NamedTensor> params_;
  AdamState state_;
};

// Uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor init_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng);

}  // namespace sdtc
