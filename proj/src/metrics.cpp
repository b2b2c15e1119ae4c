#include "captnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "captnet/blocks.hpp"
#include "captnet/model.hpp"

namespace captnet {

double psnr_metric(std::span<const double> a, std::span<const double> b, double peak) {
    if (a.size() != b.size() || a.empty()) {
        throw MetricError("psnr: inputs differ in size");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.size());
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr_metric(const Image& a, const Image& b, double peak) {
    if (a.height != b.height || a.width != b.width) {
        throw MetricError("psnr: images differ in size");
    }
    return psnr_metric(a.data, b.data, peak);
}

double psnr_bits(std::span<const double> a, std::span<const double> b, int bits) {
    const double peak = std::ldexp(1.0, bits) - 1.0;
    return psnr_metric(a, b, peak);
}

double ssim_metric(const Image& a, const Image& b, const SsimParams& params) {
    if (a.height != b.height || a.width != b.width) {
        throw MetricError("ssim: images differ in size");
    }
    const std::size_t win = params.window;
    if (a.height < win || a.width < win) {
        throw MetricError("ssim: image smaller than the " + std::to_string(win) + "x" +
                          std::to_string(win) + " window");
    }
    std::vector<double> kernel(win * win);
    const double r = static_cast<double>(win / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
            const double dy = i - r, dx = j - r;
            kernel[i * win + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * params.sigma * params.sigma));
            total += kernel[i * win + j];
        }
    }
    for (double& k : kernel) {
        k /= total;
    }
    const double c1 = (params.k1 * params.peak) * (params.k1 * params.peak);
    const double c2 = (params.k2 * params.peak) * (params.k2 * params.peak);

    const std::size_t oh = a.height - win + 1, ow = a.width - win + 1;
    double acc = 0.0;
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t i = 0; i < win; ++i) {
                    for (std::size_t j = 0; j < win; ++j) {
                        const double w = kernel[i * win + j];
                        const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            }
        }
    }
    return acc / static_cast<double>(Image::kChannels * oh * ow);
}

std::uint64_t flops_sa(std::uint64_t height, std::uint64_t width, std::uint64_t channels) {
    const std::uint64_t hw = height * width;
    return 4 * hw * channels * channels + 2 * hw * hw * channels;
}

std::uint64_t flops_mrap(std::uint64_t height, std::uint64_t width, std::uint64_t channels) {
    const std::uint64_t hw = height * width;
    return 5 * hw * channels * channels + hw * channels;
}

std::uint64_t mrap_core_macs(std::uint64_t height, std::uint64_t width, std::uint64_t channels,
                             std::uint64_t heads) {
    const std::uint64_t d = channels / heads;
    return 2 * heads * d * d * height * width;
}

std::uint64_t measure_mrap_core(const MrapDims& dims, std::size_t heads, std::uint64_t seed) {
    Rng rng(seed);
    const MrapParams params = MrapParams::create(dims.channels, heads, true, rng, Precision::F32);
    std::vector<double> input(dims.channels * dims.height * dims.width);
    for (double& v : input) {
        v = rng.uniform(-1.0, 1.0);
    }
    const Tensor x =
        Tensor::from_data({1, dims.channels, dims.height, dims.width}, std::move(input));
    NoGradGuard no_grad;
    MacCounter counter;
    mrap(x, params, {&counter, nullptr});
    return counter.macs;
}

FlopReport flop_report(const MrapDims& dims, std::size_t heads) {
    FlopReport r;
    r.dims = dims;
    r.heads = heads;
    r.analytic_sa = flops_sa(dims.height, dims.width, dims.channels);
    r.analytic_mrap = flops_mrap(dims.height, dims.width, dims.channels);
    r.measured_mrap_core = measure_mrap_core(dims, heads);
    return r;
}

double silhouette(const std::vector<std::vector<double>>& features, const std::vector<int>& labels) {
    const std::size_t n = features.size();
    if (labels.size() != n) {
        throw MetricError("silhouette: features and labels differ in length");
    }
    std::map<int, std::size_t> counts;
    for (int l : labels) {
        ++counts[l];
    }
    if (counts.size() < 2) {
        throw MetricError("silhouette: need at least two labels");
    }
    for (const auto& [label, count] : counts) {
        if (count < 2) {
            throw MetricError("silhouette: label " + std::to_string(label) +
                              " has fewer than two samples");
        }
    }
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != features[0].size()) {
            throw MetricError("silhouette: feature vectors differ in length");
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < features[i].size(); ++k) {
                const double d = features[i][k] - features[j][k];
                acc += d * d;
            }
            dist[i * n + j] = dist[j * n + i] = std::sqrt(acc);
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, double> sums;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sums[labels[j]] += dist[i * n + j];
            }
        }
        const double a = sums[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, s] : sums) {
            if (label != labels[i]) {
                b = std::min(b, s / static_cast<double>(counts[label]));
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

ClusterReport cluster_report(const CaptNet& model, const std::vector<PairedSample>& samples) {
    NoGradGuard no_grad;
    std::vector<std::vector<double>> enc, out;
    std::vector<int> labels;
    std::map<int, std::size_t> counts;
    for (const auto& s : samples) {
        const Tensor x = to_batch(s.degraded, model.precision());
        const ForwardResult r = model.forward_full(x);
        const Tensor e = global_avg_pool(r.bottleneck);
        const Tensor o = global_avg_pool(r.output);
        enc.emplace_back(e.data().begin(), e.data().end());
        out.emplace_back(o.data().begin(), o.data().end());
        labels.push_back(static_cast<int>(s.label));
        ++counts[labels.back()];
    }
    ClusterReport rep;
    rep.silhouette_encoder = silhouette(enc, labels);
    rep.silhouette_output = silhouette(out, labels);
    rep.samples = samples.size();
    rep.n_per_label = counts.empty() ? 0 : counts.begin()->second;
    for (const auto& [label, c] : counts) {
        rep.n_per_label = std::min(rep.n_per_label, c);
    }
    rep.encoder_dims = enc.empty() ? 0 : enc.front().size();
    rep.output_dims = out.empty() ? 0 : out.front().size();
    return rep;
}

} // namespace captnet
