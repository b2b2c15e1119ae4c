#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "captnet/degradation.hpp"

using namespace captnet;

namespace {

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

bool in_unit_range(const Image& img) {
    return std::all_of(img.data.begin(), img.data.end(),
                       [](double v) { return v >= 0.0 && v <= 1.0; });
}

Image flat(std::size_t h, std::size_t w, double v) { return Image(h, w, v); }

} // namespace

TEST(CleanImages, DeterministicAndInRange) {
    const Image a = generate_clean(5, 32, 24);
    EXPECT_EQ(a.height, 32u);
    EXPECT_EQ(a.width, 24u);
    EXPECT_EQ(a, generate_clean(5, 32, 24));
    EXPECT_TRUE(in_unit_range(a));
    EXPECT_THROW(generate_clean(1, 8, 32), DegradationError);
}

TEST(CleanImages, SeedsGiveDifferentImages) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        EXPECT_GT(mean_abs_diff(generate_clean(2 * s, 32, 32), generate_clean(2 * s + 1, 32, 32)),
                  0.01)
            << "seed pair " << s;
    }
}

TEST(CleanImages, HaveStructure) {
    const Image a = generate_clean(11, 32, 32);
    double mean = std::accumulate(a.data.begin(), a.data.end(), 0.0) / a.data.size();
    double var = 0.0;
    for (double v : a.data) var += (v - mean) * (v - mean) / a.data.size();
    EXPECT_GT(var, 1e-3);
}

TEST(Noise, ZeroSigmaIsIdentityAndFieldIsAdditive) {
    const Image clean = generate_clean(1, 32, 32);
    EXPECT_EQ(apply_degradation(clean, {NoiseSpec{0.0}}, 9), clean);
    const Image noisy = apply_degradation(clean, {NoiseSpec{0.1}}, 9);
    const Image field = noise_field(32, 32, 0.1, 9);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        const double raw = clean.data[i] + field.data[i];
        if (raw > 0.0 && raw < 1.0) {
            EXPECT_EQ(noisy.data[i], raw);
            ++checked;
        }
    }
    EXPECT_GT(checked, clean.data.size() / 2);
    EXPECT_TRUE(in_unit_range(noisy));
}

TEST(Noise, FieldStatistics) {
    const Image field = noise_field(64, 64, 0.2, 3);
    double m = 0.0, v = 0.0;
    for (double x : field.data) m += x / field.data.size();
    for (double x : field.data) v += (x - m) * (x - m) / field.data.size();
    EXPECT_NEAR(m, 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(v), 0.2, 0.01);
}

TEST(Rain, AdditiveBrightStreaks) {
    const Image clean = flat(32, 32, 0.3);
    const RainSpec spec{8, 10, 15.0, 0.6};
    const Image rainy = apply_degradation(clean, {spec}, 4);
    const Image field = rain_field(32, 32, spec, 4);
    double total = 0.0;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        EXPECT_GE(field.data[i], 0.0);
        total += field.data[i];
        const double raw = clean.data[i] + field.data[i];
        if (raw < 1.0) EXPECT_EQ(rainy.data[i], raw);
    }
    EXPECT_GT(total, 1.0);
    // same field in every channel
    for (std::size_t p = 0; p < 32 * 32; ++p) {
        EXPECT_EQ(field.data[p], field.data[1024 + p]);
        EXPECT_EQ(field.data[p], field.data[2048 + p]);
    }
}

TEST(Haze, TransmissionLimitsAndHandArithmetic) {
    const Image clean = generate_clean(2, 16, 16);
    const std::vector<double> ones(256, 1.0), zeros(256, 0.0);
    EXPECT_EQ(apply_scattering(clean, ones, 0.8), clean);
    const Image all_air = apply_scattering(clean, zeros, 0.8);
    for (double v : all_air.data) EXPECT_EQ(v, 0.8);
    const Image half = flat(16, 16, 0.5);
    const Image mixed = apply_scattering(half, std::vector<double>(256, 0.6), 1.0);
    for (double v : mixed.data) EXPECT_NEAR(v, 0.7, 1e-15);
    // beta_sc -> 0 gives t -> 1
    const Image thin = apply_degradation(clean, {HazeSpec{0.9, 1e-12}}, 3);
    EXPECT_LT(mean_abs_diff(thin, clean), 1e-10);
}

TEST(Haze, ConvexCombination) {
    const Image clean = generate_clean(8, 32, 32);
    const double a = 0.85;
    const Image hazy = apply_degradation(clean, {HazeSpec{a, 2.0}}, 17);
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        EXPECT_GE(hazy.data[i], std::min(clean.data[i], a) - 1e-15);
        EXPECT_LE(hazy.data[i], std::max(clean.data[i], a) + 1e-15);
    }
    const auto d = depth_field(32, 32, 17);
    EXPECT_EQ(*std::min_element(d.begin(), d.end()), 0.0);
    EXPECT_EQ(*std::max_element(d.begin(), d.end()), 1.0);
}

TEST(Haze, InvalidSpecs) {
    const Image clean = generate_clean(2, 16, 16);
    EXPECT_THROW(apply_degradation(clean, {HazeSpec{0.5, 1.0}}, 1), DegradationError);
    EXPECT_THROW(apply_degradation(clean, {HazeSpec{0.9, 0.0}}, 1), DegradationError);
}

TEST(Blur, KernelIsNormalized) {
    for (double angle : {0.0, 33.0, 90.0, 145.0}) {
        const auto k = motion_blur_kernel(5, angle);
        ASSERT_EQ(k.size(), 25u);
        EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
        for (double v : k) EXPECT_GE(v, 0.0);
    }
}

TEST(Blur, ConservesInteriorMean) {
    const Image clean = generate_clean(21, 32, 32);
    const auto k = motion_blur_kernel(5, 40.0);
    const Image blurred = apply_degradation(clean, {BlurSpec{5, k}}, 0);
    for (std::size_t c = 0; c < 3; ++c) {
        double a = 0.0, b = 0.0;
        // interior window far enough from the border that padding is irrelevant
        for (std::size_t y = 8; y < 24; ++y)
            for (std::size_t x = 8; x < 24; ++x) {
                a += clean.at(c, y, x);
                b += blurred.at(c, y, x);
            }
        EXPECT_NEAR(a / 256.0, b / 256.0, 1e-2);
    }
    // a constant image stays constant away from the border
    const Image grey = apply_degradation(flat(16, 16, 0.4), {BlurSpec{5, k}}, 0);
    for (std::size_t y = 2; y < 14; ++y)
        for (std::size_t x = 2; x < 14; ++x) EXPECT_NEAR(grey.at(1, y, x), 0.4, 1e-12);
}

TEST(Blur, DirectConvolutionOracle) {
    const Image clean = generate_clean(4, 16, 16);
    std::vector<double> k(9, 0.0);
    k[0] = 0.5;
    k[5] = 0.25;
    k[7] = 0.25;
    const Image out = convolve(clean, k, 3);
    for (std::size_t c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                double s = 0.0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        const int sy = y - (i - 1), sx = x - (j - 1);
                        if (sy >= 0 && sx >= 0 && sy < 16 && sx < 16)
                            s += k[i * 3 + j] * clean.at(c, sy, sx);
                    }
                EXPECT_NEAR(out.at(c, y, x), s, 1e-15);
            }
}

TEST(Blur, RejectsUnnormalizedKernel) {
    const Image clean = generate_clean(2, 16, 16);
    EXPECT_THROW(apply_degradation(clean, {BlurSpec{3, std::vector<double>(9, 0.2)}}, 0),
                 DegradationError);
    EXPECT_THROW(apply_degradation(clean, {BlurSpec{4, std::vector<double>(16, 1.0 / 16)}}, 0),
                 DegradationError);
    std::vector<double> neg(9, 0.0);
    neg[0] = -0.5;
    neg[1] = 1.5;
    EXPECT_THROW(apply_degradation(clean, {BlurSpec{3, neg}}, 0), DegradationError);
}

TEST(Degradation, RejectsOutOfRangeClean) {
    Image bad = flat(16, 16, 0.5);
    bad.data[3] = 1.5;
    EXPECT_THROW(apply_degradation(bad, {NoiseSpec{0.1}}, 0), DegradationError);
}

TEST(Degradation, SpecLabels) {
    const DegradationParams params;
    for (DegradationLabel l : kAllLabels) {
        const DegradationSpec s = sample_spec(l, params, 5);
        EXPECT_EQ(s.label(), l);
        EXPECT_NO_THROW(s.validate());
        EXPECT_EQ(parse_label(std::string(1, label_code(l))), l);
    }
    EXPECT_THROW(parse_label("X"), DegradationError);
}

TEST(Dataset, BalancedShuffledDeterministic) {
    const auto a = make_balanced_dataset(2, 32, 32, 77);
    ASSERT_EQ(a.size(), 8u);
    std::map<DegradationLabel, int> hist;
    for (const auto& s : a) {
        ++hist[s.label];
        EXPECT_TRUE(in_unit_range(s.degraded));
        EXPECT_TRUE(in_unit_range(s.clean));
        EXPECT_EQ(s.clean.height, s.degraded.height);
    }
    for (DegradationLabel l : kAllLabels) EXPECT_EQ(hist[l], 2);
    const auto b = make_balanced_dataset(2, 32, 32, 77);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].label, b[i].label);
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_EQ(a[i].degraded, b[i].degraded);
    }
    const auto big = make_balanced_dataset(5, 16, 16, 3);
    std::map<DegradationLabel, int> h2;
    for (const auto& s : big) ++h2[s.label];
    for (DegradationLabel l : kAllLabels) EXPECT_EQ(h2[l], 5);
    EXPECT_THROW(make_balanced_dataset(0, 16, 16, 3), DegradationError);
}

TEST(Dataset, RegeneratesFromStoredSeed) {
    for (const auto& s : make_balanced_dataset(2, 32, 32, 123)) {
        const PairedSample again = make_sample(s.label, s.seed, 32, 32);
        EXPECT_EQ(again.clean, s.clean);
        EXPECT_EQ(again.degraded, s.degraded);
        EXPECT_GT(mean_abs_diff(s.clean, s.degraded), 1e-3);
    }
}
