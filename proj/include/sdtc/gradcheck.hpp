#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc {

// Max relative error between analytic gradients and central finite
// differences (default step 1e-5) over every element of the listed tensors.
// `forward` must rebuild the graph define-by-run, reading the tensors'
// current values, and return a scalar loss.
double finite_diff_check(const std::function<Tensor(Tape*)>& forward,
                         const std::vector<Tensor>& wrt, double step = 1e-5);

struct GradCheckResult {
  std::string name;
  double max_rel_err;
};

// Seeded finite-difference suite covering every differentiable operation
// and the fusion+head micro model.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace sdtc
