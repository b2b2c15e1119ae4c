#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "captnet/blocks.hpp"
#include "captnet/gradcheck.hpp"

namespace captnet {

/// Overwrites every parameter with uniform noise in [-scale, scale]
/// (attention temperatures drawn from [0.5, 1.5]). Used to move the
/// zero-initialised branches off zero before a gradient check. Values of
/// F32 parameters are rounded to float.
void randomize_params(const ParamRegistry& params, Rng& rng, double scale = 0.5);

struct GradSuiteRow {
    std::string name;
    GradCheckResult result;
    double seconds = 0.0;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradStep = 1e-5;

/// Central-difference checks in F64 of naf_block, mrap (prompts on), sgfn,
/// spt_block, ffm, and a tiny full model (C=4, one block per level,
/// 1x3x8x8 input), each w.r.t. its input(s) and every parameter.
std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed);

} // namespace captnet
