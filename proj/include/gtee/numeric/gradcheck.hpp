#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "gtee/numeric/tensor.hpp"

namespace gtee::num {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

// Compares the analytic gradient of the scalar f at x against central
// differences. x must be a leaf; its values are perturbed in place and restored.
// The error of one coordinate is |analytic - numeric| / (|analytic| + 1e-12).
// When max_coords is nonzero and smaller than x.numel(), an evenly strided
// subset of coordinates (offset by `offset`) is checked. A coordinate where
// both gradients are below `zero_tol` in magnitude counts as exact agreement,
// which covers parameters whose gradient vanishes identically (for example an
// attention key bias, which shifts every score of a row equally).
enum class FdMethod {
    Central,  // (f(x+h) - f(x-h)) / 2h with h = eps
    // Ridders' extrapolation: central differences at h = eps, eps/1.4, ...
    // combined in a Neville tableau. Keeps both truncation and roundoff small,
    // so gradients near 1e-8 are resolved without giving up on curved coordinates.
    Ridders,
};

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, Tensor x, double eps,
                                        std::size_t max_coords = 0, std::size_t offset = 0, double zero_tol = 0.0,
                                        FdMethod method = FdMethod::Central);

// Convenience overload for f(x) style callers.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps);

}  // namespace gtee::num
