#pragma once

#include <functional>
#include <vector>

#include "captnet/tensor.hpp"

namespace captnet {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t coordinates = 0;
    /// Coordinates whose plain central difference was refined.
    std::size_t refined = 0;
};

/// Plain central differences that disagree by more than this are refined.
inline constexpr double kRefineThreshold = 1e-6;
/// Largest step of the refinement sequence.
inline constexpr double kRefineStep = 1e-2;

/// Compares the reverse-mode gradient of `f` w.r.t. each tensor in `thetas`
/// with central differences of step `eps`. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8); the maximum is
/// returned. Where the plain difference disagrees by more than
/// kRefineThreshold (usually round-off on tiny gradients), the numeric value
/// is replaced by a Richardson extrapolation of central differences over a
/// shrinking step sequence starting at kRefineStep. `f` is re-evaluated with grad recording off for the
/// differences. All thetas must be F64 leaves. Throws NumericError if an
/// evaluation is non-finite.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> thetas,
                           double eps = 1e-6);

GradCheckResult grad_check(const std::function<Tensor()>& f, const Tensor& theta,
                           double eps = 1e-6);

} // namespace captnet
