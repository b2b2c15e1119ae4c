#include <gtest/gtest.h>

#include <cmath>

#include "captnet/metrics.hpp"
#include "captnet/model.hpp"
#include "captnet/rng.hpp"

using namespace captnet;

namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
    Image img(h, w);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

} // namespace

TEST(Psnr, UniformHalfDifference) {
    const Image a(16, 16, 0.2), b(16, 16, 0.7);
    EXPECT_NEAR(psnr_metric(a, b), 10.0 * std::log10(4.0), 1e-12);
    EXPECT_NEAR(psnr_metric(a, b), 6.0206, 1e-3);
}

TEST(Psnr, IdenticalImagesAreCapped) {
    Rng rng(1);
    const Image a = random_image(8, 8, rng);
    EXPECT_EQ(psnr_metric(a, a), kPsnrCap);
    EXPECT_EQ(kPsnrCap, 99.99);
}

TEST(Psnr, IntegerCodeFormAgreesWithUnitPeak) {
    const std::vector<double> a(300, 0.0), b(300, 127.5);
    EXPECT_NEAR(psnr_bits(a, b, 8), 6.0206, 1e-3);
    Rng rng(7);
    for (int pair = 0; pair < 10; ++pair) {
        std::vector<double> ca(3 * 16 * 16), cb(ca.size()), ua(ca.size()), ub(ca.size());
        for (std::size_t i = 0; i < ca.size(); ++i) {
            ca[i] = static_cast<double>(rng.below(256));
            cb[i] = static_cast<double>(rng.below(256));
            ua[i] = ca[i] / 255.0;
            ub[i] = cb[i] / 255.0;
        }
        EXPECT_NEAR(psnr_bits(ca, cb, 8), psnr_metric(ua, ub), 1e-6);
    }
}

TEST(Psnr, SymmetricAndShiftInvariant) {
    Rng rng(3);
    const Image a = random_image(12, 12, rng), b = random_image(12, 12, rng);
    EXPECT_EQ(psnr_metric(a, b), psnr_metric(b, a));
    Image sa = a, sb = b;
    for (double& v : sa.data) v += 0.25;
    for (double& v : sb.data) v += 0.25;
    EXPECT_NEAR(psnr_metric(sa, sb), psnr_metric(a, b), 1e-9);
}

TEST(Psnr, ShapeMismatchThrows) {
    EXPECT_THROW(psnr_metric(Image(8, 8), Image(8, 9)), MetricError);
    const std::vector<double> a(4), b(5);
    EXPECT_THROW(psnr_metric(a, b), MetricError);
}

TEST(Ssim, SelfSimilarityIsOne) {
    Rng rng(11);
    const Image a = random_image(24, 20, rng);
    EXPECT_NEAR(ssim_metric(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const SsimParams p;
    const double c1 = 0.3, c2 = 0.8;
    const double k1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double expected = (2 * c1 * c2 + k1) / (c1 * c1 + c2 * c2 + k1);
    EXPECT_NEAR(ssim_metric(Image(16, 16, c1), Image(16, 16, c2)), expected, 1e-12);
}

TEST(Ssim, InvertedTextureIsDissimilar) {
    Rng rng(5);
    const Image a = random_image(32, 32, rng);
    Image inv = a;
    for (double& v : inv.data) v = 1.0 - v;
    EXPECT_LT(ssim_metric(a, inv), 0.2);
}

TEST(Ssim, SymmetricAndBounded) {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const Image a = random_image(16, 16, rng);
        Image b = a;
        for (double& v : b.data) v = std::clamp(v + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0);
        const double s = ssim_metric(a, b);
        EXPECT_NEAR(s, ssim_metric(b, a), 1e-12);
        EXPECT_LE(s, 1.0);
        EXPECT_GE(s, -1.0);
    }
}

TEST(Ssim, ImageSmallerThanWindowThrows) {
    EXPECT_THROW(ssim_metric(Image(10, 16), Image(10, 16)), MetricError);
    EXPECT_THROW(ssim_metric(Image(16, 16), Image(16, 12)), MetricError);
}

TEST(Flops, SelfAttentionValues) {
    EXPECT_EQ(flops_sa(64, 64, 32), 1090519040u);
    EXPECT_EQ(flops_sa(1, 1, 1), 6u);
    // the (HW)^2 term grows 16x when H and W double
    const auto quad = [](std::uint64_t h, std::uint64_t w, std::uint64_t c) {
        return flops_sa(h, w, c) - 4 * h * w * c * c;
    };
    EXPECT_EQ(quad(32, 24, 16), 16 * quad(16, 12, 16));
}

TEST(Flops, ChannelAttentionValues) {
    EXPECT_EQ(flops_mrap(64, 64, 32), 21102592u);
    EXPECT_EQ(flops_mrap(128, 128, 32), 4 * flops_mrap(64, 64, 32));
    EXPECT_NEAR(static_cast<double>(flops_sa(64, 64, 32)) / flops_mrap(64, 64, 32), 51.67, 0.01);
}

TEST(Flops, QuadraticVersusLinearGrowth) {
    const double sa = static_cast<double>(flops_sa(16, 16, 32)) / flops_sa(8, 8, 32);
    const double mrap = static_cast<double>(flops_mrap(16, 16, 32)) / flops_mrap(8, 8, 32);
    EXPECT_GT(sa, 4.0);
    EXPECT_EQ(mrap, 4.0);
}

TEST(Flops, MeasuredCoreMatchesClosedForm) {
    EXPECT_EQ(mrap_core_macs(8, 8, 8, 2), 4096u);
    EXPECT_EQ(measure_mrap_core({8, 8, 8}, 2), 4096u);
    EXPECT_EQ(measure_mrap_core({16, 16, 8}, 2), 4 * measure_mrap_core({8, 8, 8}, 2));
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t heads = 1 + rng.below(3);
        const std::size_t c = heads * (1 + rng.below(4));
        const std::size_t h = 2 + rng.below(10), w = 2 + rng.below(10);
        EXPECT_EQ(measure_mrap_core({h, w, c}, heads, trial), mrap_core_macs(h, w, c, heads))
            << h << "x" << w << " C=" << c << " heads=" << heads;
    }
}

TEST(Flops, ReportFields) {
    const FlopReport r = flop_report({64, 64, 32}, 1);
    EXPECT_EQ(r.analytic_sa, flops_sa(64, 64, 32));
    EXPECT_EQ(r.analytic_mrap, flops_mrap(64, 64, 32));
    EXPECT_EQ(r.measured_mrap_core, mrap_core_macs(64, 64, 32, 1));
    EXPECT_EQ(r.heads, 1u);
}

TEST(Silhouette, HandComputedLineExample) {
    const std::vector<std::vector<double>> f{{0.0}, {1.0}, {10.0}, {12.0}};
    const std::vector<int> l{0, 0, 1, 1};
    const double expected = (10.0 / 11.0 + 9.0 / 10.0 + 7.5 / 9.5 + 9.5 / 11.5) / 4.0;
    EXPECT_NEAR(silhouette(f, l), expected, 1e-14);
}

TEST(Silhouette, SeparatedClustersScoreHigh) {
    Rng rng(2);
    std::vector<std::vector<double>> f;
    std::vector<int> l;
    for (int label = 0; label < 3; ++label)
        for (int i = 0; i < 10; ++i) {
            f.push_back({100.0 * label + rng.uniform(), -50.0 * label + rng.uniform()});
            l.push_back(label);
        }
    EXPECT_GT(silhouette(f, l), 0.9);
}

TEST(Silhouette, RandomLabelsOnOneBlobNearZero) {
    Rng rng(42);
    std::vector<std::vector<double>> f;
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) {
        f.push_back({rng.normal(), rng.normal(), rng.normal()});
        l.push_back(static_cast<int>(rng.below(4)));
    }
    EXPECT_LT(std::abs(silhouette(f, l)), 0.15);
}

TEST(Silhouette, DegenerateLabelsThrow) {
    const std::vector<std::vector<double>> f{{0.0}, {1.0}, {2.0}};
    EXPECT_THROW(silhouette(f, {0, 0, 0}), MetricError);
    EXPECT_THROW(silhouette(f, {0, 0, 1}), MetricError);
    EXPECT_THROW(silhouette(f, {0, 1}), MetricError);
}

TEST(Cluster, ReportOnSmallModel) {
    CaptNetConfig cfg;
    cfg.base_width = 4;
    const CaptNet model = CaptNet::build(cfg, 3);
    const auto samples = make_balanced_dataset(2, 16, 16, 8);
    const ClusterReport r = cluster_report(model, samples);
    EXPECT_EQ(r.n_per_label, 2u);
    EXPECT_EQ(r.samples, 8u);
    EXPECT_EQ(r.encoder_dims, 32u);
    EXPECT_EQ(r.output_dims, 3u);
    EXPECT_GE(r.silhouette_encoder, -1.0);
    EXPECT_LE(r.silhouette_encoder, 1.0);
    EXPECT_GE(r.silhouette_output, -1.0);
    EXPECT_LE(r.silhouette_output, 1.0);
}
