#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "captnet/degradation.hpp"
#include "captnet/image.hpp"

namespace captnet {

class CaptNet;

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Reported in place of +inf when the two inputs are identical.
inline constexpr double kPsnrCap = 99.99;

/// 10*log10(peak^2 / MSE); kPsnrCap when MSE == 0.
double psnr_metric(std::span<const double> a, std::span<const double> b, double peak = 1.0);
double psnr_metric(const Image& a, const Image& b, double peak = 1.0);
/// Integer-code form: inputs in [0, 2^bits - 1], peak (2^bits - 1).
double psnr_bits(std::span<const double> a, std::span<const double> b, int bits);

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

/// Mean local SSIM over all valid (fully inside) Gaussian windows, averaged
/// over channels.
double ssim_metric(const Image& a, const Image& b, const SsimParams& params = {});

/// Dense self-attention cost, 4*H*W*C^2 + 2*(H*W)^2*C.
std::uint64_t flops_sa(std::uint64_t height, std::uint64_t width, std::uint64_t channels);
/// Channel-attention cost, 5*H*W*C^2 + H*W*C.
std::uint64_t flops_mrap(std::uint64_t height, std::uint64_t width, std::uint64_t channels);
/// Closed form of the instrumented counter: 2 * heads * (C/heads)^2 * H*W.
std::uint64_t mrap_core_macs(std::uint64_t height, std::uint64_t width, std::uint64_t channels,
                             std::uint64_t heads);

struct MrapDims {
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t channels = 8;
};

/// Runs one randomly initialised MRAP forward pass on a [1,C,H,W] input
/// and returns the MACs counted inside its two attention matmuls.
std::uint64_t measure_mrap_core(const MrapDims& dims, std::size_t heads, std::uint64_t seed = 0);

struct FlopReport {
    std::uint64_t analytic_sa = 0;
    std::uint64_t analytic_mrap = 0;
    std::uint64_t measured_mrap_core = 0;
    MrapDims dims;
    std::size_t heads = 1;
};

FlopReport flop_report(const MrapDims& dims, std::size_t heads);

/// Mean silhouette with Euclidean distance. Requires >= 2 distinct labels,
/// each with >= 2 members.
double silhouette(const std::vector<std::vector<double>>& features, const std::vector<int>& labels);

struct ClusterReport {
    double silhouette_encoder = 0.0;
    double silhouette_output = 0.0;
    std::size_t n_per_label = 0;
    std::size_t samples = 0;
    std::size_t encoder_dims = 0;
    std::size_t output_dims = 0;
};

/// Pools bottleneck and restored-output features of every sample through
/// `model` and scores how well each separates the degradation labels.
ClusterReport cluster_report(const CaptNet& model, const std::vector<PairedSample>& samples);

} // namespace captnet
