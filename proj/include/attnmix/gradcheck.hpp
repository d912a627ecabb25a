#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "attnmix/matrix.hpp"

namespace attnmix {

// A parameter tensor paired with its gradient buffer.
struct Var {
    Matrix v;
    Matrix g;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
};

// Central-difference check of an analytic gradient of a scalar function of
// one matrix. Error per entry is |analytic - fd| / max(1e-8, |analytic| + |fd|).
// The perturbation uses the actually-representable step (x+h and x-h are
// rounded to `real` before evaluation).
double backprop_check(const std::function<double(const Matrix&)>& value,
                      const std::function<Matrix(const Matrix&)>& gradient,
                      const Matrix& x, double step = 1e-3);

// Same check across every entry of a set of parameter tensors.
// compute_grads() must zero the gradient buffers and refill them analytically;
// forward_loss() must evaluate the scalar at the current parameter values
// without touching gradients.
GradCheckReport full_gradient_check(
    const std::vector<std::pair<std::string, Var*>>& params,
    const std::function<double()>& forward_loss,
    const std::function<void()>& compute_grads, double step = 1e-3);

}  // namespace attnmix
