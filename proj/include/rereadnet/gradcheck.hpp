#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rereadnet/tensor.hpp"

namespace rereadnet {

// Central-difference check against the analytic gradient of a parameter that
// is already wired into a model: perturbs the tensor in place.
double grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param,
                        double eps = 1e-5);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double threshold = 1e-4;
  bool all_pass = false;
};

// Every differentiable operation plus both end-to-end models, each on a
// tiny seeded instance kept away from relu/max/clamp kinks.
GradCheckReport run_gradcheck_all(double threshold = 1e-4);

}  // namespace rereadnet
