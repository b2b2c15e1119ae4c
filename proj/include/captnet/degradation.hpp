#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "captnet/image.hpp"

namespace captnet {

enum class DegradationLabel { Blur, Rain, Noise, Haze };

inline constexpr std::array<DegradationLabel, 4> kAllLabels{
    DegradationLabel::Blur, DegradationLabel::Rain, DegradationLabel::Noise,
    DegradationLabel::Haze};

/// Single-letter code: B, R, N, H.
char label_code(DegradationLabel label);
DegradationLabel parse_label(const std::string& text);

struct NoiseSpec {
    double sigma = 25.0 / 255.0;
};

struct RainSpec {
    int num_streaks = 12;
    int length_px = 10;
    double angle_deg = 0.0; // from vertical
    double intensity = 0.6;
};

struct HazeSpec {
    double airlight = 0.9;  // in [0.7, 1.0]
    double beta_sc = 1.5;   // > 0
};

struct BlurSpec {
    std::size_t size = 5;       // odd
    std::vector<double> kernel; // size*size, row-major, nonnegative, sums to 1
};

class DegradationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DegradationSpec {
    std::variant<NoiseSpec, RainSpec, HazeSpec, BlurSpec> variant;

    DegradationLabel label() const;
    /// Throws DegradationError on an invalid parameter set.
    void validate() const;
};

/// Dataset-level knobs; per-sample specs are drawn around these.
struct DegradationParams {
    double noise_sigma = 25.0 / 255.0;
    int rain_streaks = 12;
    int rain_length = 10;
    double rain_intensity = 0.6;
    double haze_beta = 1.5;
    std::size_t blur_size = 5;

    bool operator==(const DegradationParams&) const = default;
};

/// Procedural clean image: smooth colour gradient, blended rectangles and
/// sinusoidal texture. Deterministic in `seed`. H, W >= 16.
Image generate_clean(std::uint64_t seed, std::size_t height, std::size_t width);

/// Gaussian noise field, identical in every call with the same seed.
Image noise_field(std::size_t height, std::size_t width, double sigma, std::uint64_t seed);
/// Bright additive streaks with a Gaussian cross-section, same in all channels.
Image rain_field(std::size_t height, std::size_t width, const RainSpec& spec, std::uint64_t seed);
/// Smooth scene depth in [0,1].
std::vector<double> depth_field(std::size_t height, std::size_t width, std::uint64_t seed);
/// Atmospheric scattering J*t + A*(1-t) with a per-pixel transmission map.
Image apply_scattering(const Image& clean, const std::vector<double>& transmission,
                       double airlight);
/// Normalised linear motion kernel through the centre at `angle_deg`.
std::vector<double> motion_blur_kernel(std::size_t size, double angle_deg);
/// Zero-padded 2-D convolution of every channel.
Image convolve(const Image& img, const std::vector<double>& kernel, std::size_t size);

/// L = F(H) + N with F and N taken from `spec`; clipped to [0,1].
Image apply_degradation(const Image& clean, const DegradationSpec& spec, std::uint64_t seed);

/// Randomised DegradationSpec for a label (rain angle, haze airlight, blur angle...).
DegradationSpec sample_spec(DegradationLabel label, const DegradationParams& params,
                            std::uint64_t seed);

struct PairedSample {
    Image degraded;
    Image clean;
    DegradationLabel label = DegradationLabel::Noise;
    std::uint64_t seed = 0;
};

/// Rebuilds one sample from its label and seed.
PairedSample make_sample(DegradationLabel label, std::uint64_t seed, std::size_t height,
                         std::size_t width, const DegradationParams& params = {});

/// n_per_task samples of every label, deterministically shuffled.
std::vector<PairedSample> make_balanced_dataset(std::size_t n_per_task, std::size_t height,
                                                std::size_t width, std::uint64_t seed,
                                                const DegradationParams& params = {});

} // namespace captnet
