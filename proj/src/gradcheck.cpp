#include "captnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace captnet {

namespace {

double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Richardson extrapolation over central differences with steps h0, h0/1.4, ...
/// (Ridders). Returns the estimate with the smallest internal error estimate.
template <typename Eval>
double extrapolated_difference(Eval&& at, double h0) {
    constexpr int kTable = 10;
    constexpr double kShrink = 1.4;
    constexpr double kShrink2 = kShrink * kShrink;
    double table[kTable][kTable];
    double h = h0;
    double best = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    table[0][0] = (at(h) - at(-h)) / (2.0 * h);
    best = table[0][0];
    for (int i = 1; i < kTable; ++i) {
        h /= kShrink;
        table[0][i] = (at(h) - at(-h)) / (2.0 * h);
        double fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double err = std::max(std::abs(table[j][i] - table[j - 1][i]),
                                        std::abs(table[j][i] - table[j - 1][i - 1]));
            if (err <= best_err) {
                best_err = err;
                best = table[j][i];
            }
        }
        if (std::abs(table[i][i] - table[i - 1][i - 1]) >= 2.0 * best_err) {
            break;
        }
    }
    return best;
}

} // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> thetas,
                           double eps) {
    for (Tensor& t : thetas) {
        if (t.precision() != Precision::F64) {
            throw std::invalid_argument("grad_check: parameters must be F64");
        }
        if (!t.is_leaf()) {
            throw std::invalid_argument("grad_check: parameters must be leaves");
        }
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        const Tensor loss = f();
        if (!std::isfinite(loss.item())) {
            throw NumericError("grad_check: non-finite loss");
        }
        backward(loss);
    }

    GradCheckResult result;
    NoGradGuard no_grad;
    for (Tensor& t : thetas) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        analytic.resize(t.numel(), 0.0);
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            auto at = [&](double delta) {
                values[i] = saved + delta;
                const double v = f().item();
                values[i] = saved;
                if (!std::isfinite(v)) {
                    throw NumericError("grad_check: non-finite evaluation");
                }
                return v;
            };
            double numeric = (at(eps) - at(-eps)) / (2.0 * eps);
            if (rel_error(analytic[i], numeric) > kRefineThreshold) {
                numeric = extrapolated_difference(at, kRefineStep);
                ++result.refined;
            }
            const double err = rel_error(analytic[i], numeric);
            if (err > result.max_rel_error || result.coordinates == 0) {
                result.max_rel_error = std::max(err, result.max_rel_error);
                result.worst_index = result.coordinates;
                result.analytic_at_worst = analytic[i];
                result.numeric_at_worst = numeric;
            }
            ++result.coordinates;
        }
    }
    return result;
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const Tensor& theta, double eps) {
    return grad_check(f, std::vector<Tensor>{theta}, eps);
}

} // namespace captnet
