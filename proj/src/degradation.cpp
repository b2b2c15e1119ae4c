#include "captnet/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "captnet/rng.hpp"

namespace captnet {

namespace {

constexpr double kPi = std::numbers::pi;

// sub-seed streams
constexpr std::uint64_t kStreamClean = 1;
constexpr std::uint64_t kStreamSpec = 2;
constexpr std::uint64_t kStreamApply = 3;
constexpr std::uint64_t kStreamShuffle = 0x5348;

} // namespace

char label_code(DegradationLabel label) {
    switch (label) {
    case DegradationLabel::Blur: return 'B';
    case DegradationLabel::Rain: return 'R';
    case DegradationLabel::Noise: return 'N';
    case DegradationLabel::Haze: return 'H';
    }
    return '?';
}

DegradationLabel parse_label(const std::string& text) {
    if (text == "B") return DegradationLabel::Blur;
    if (text == "R") return DegradationLabel::Rain;
    if (text == "N") return DegradationLabel::Noise;
    if (text == "H") return DegradationLabel::Haze;
    throw DegradationError("unknown degradation label '" + text + "'");
}

DegradationLabel DegradationSpec::label() const {
    struct Visitor {
        DegradationLabel operator()(const NoiseSpec&) const { return DegradationLabel::Noise; }
        DegradationLabel operator()(const RainSpec&) const { return DegradationLabel::Rain; }
        DegradationLabel operator()(const HazeSpec&) const { return DegradationLabel::Haze; }
        DegradationLabel operator()(const BlurSpec&) const { return DegradationLabel::Blur; }
    };
    return std::visit(Visitor{}, variant);
}

void DegradationSpec::validate() const {
    if (const auto* n = std::get_if<NoiseSpec>(&variant)) {
        if (!(n->sigma >= 0.0 && n->sigma <= 1.0)) {
            throw DegradationError("noise sigma must lie in [0,1]");
        }
    } else if (const auto* r = std::get_if<RainSpec>(&variant)) {
        if (r->num_streaks < 0 || r->length_px < 1 || !(r->intensity >= 0.0)) {
            throw DegradationError("rain needs streaks >= 0, length >= 1, intensity >= 0");
        }
    } else if (const auto* h = std::get_if<HazeSpec>(&variant)) {
        if (!(h->airlight >= 0.7 && h->airlight <= 1.0)) {
            throw DegradationError("haze airlight must lie in [0.7,1]");
        }
        if (!(h->beta_sc > 0.0)) {
            throw DegradationError("haze scattering coefficient must be positive");
        }
    } else {
        const auto& b = std::get<BlurSpec>(variant);
        if (b.size % 2 == 0 || b.kernel.size() != b.size * b.size) {
            throw DegradationError("blur kernel must be odd-sized and square");
        }
        double total = 0.0;
        for (double v : b.kernel) {
            if (!(v >= 0.0)) {
                throw DegradationError("blur kernel entries must be nonnegative");
            }
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw DegradationError("blur kernel must sum to 1 (sum=" + std::to_string(total) + ")");
        }
    }
}

Image generate_clean(std::uint64_t seed, std::size_t height, std::size_t width) {
    if (height < 16 || width < 16) {
        throw DegradationError("clean images need H, W >= 16");
    }
    Rng rng(seed);
    Image img(height, width);
    const double fh = static_cast<double>(height), fw = static_cast<double>(width);

    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const double base = rng.uniform(0.2, 0.8);
        const double gx = rng.uniform(-0.3, 0.3);
        const double gy = rng.uniform(-0.3, 0.3);
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                img.at(c, y, x) = base + gx * (x / fw - 0.5) + gy * (y / fh - 0.5);
            }
        }
    }

    const std::uint64_t rects = 3 + rng.below(4);
    for (std::uint64_t r = 0; r < rects; ++r) {
        const std::size_t y0 = rng.below(height), x0 = rng.below(width);
        const std::size_t rh = 2 + rng.below(height / 2), rw = 2 + rng.below(width / 2);
        const double alpha = rng.uniform(0.4, 0.9);
        std::array<double, 3> colour{rng.uniform(), rng.uniform(), rng.uniform()};
        for (std::size_t y = y0; y < std::min(height, y0 + rh); ++y) {
            for (std::size_t x = x0; x < std::min(width, x0 + rw); ++x) {
                for (std::size_t c = 0; c < Image::kChannels; ++c) {
                    double& v = img.at(c, y, x);
                    v = (1.0 - alpha) * v + alpha * colour[c];
                }
            }
        }
    }

    const int waves = 2;
    for (int k = 0; k < waves; ++k) {
        const double fx = rng.uniform(1.0, 6.0) * 2.0 * kPi / fw;
        const double fy = rng.uniform(1.0, 6.0) * 2.0 * kPi / fh;
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        std::array<double, 3> amp{rng.uniform(0.02, 0.12), rng.uniform(0.02, 0.12),
                                  rng.uniform(0.02, 0.12)};
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const double s = std::sin(fx * x + fy * y + phase);
                for (std::size_t c = 0; c < Image::kChannels; ++c) {
                    img.at(c, y, x) += amp[c] * s;
                }
            }
        }
    }
    clip01(img);
    return img;
}

Image noise_field(std::size_t height, std::size_t width, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    Image field(height, width);
    for (double& v : field.data) {
        v = sigma * rng.normal();
    }
    return field;
}

Image rain_field(std::size_t height, std::size_t width, const RainSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Image field(height, width);
    const double profile = 0.6; // cross-section std-dev in pixels
    const double angle = spec.angle_deg * kPi / 180.0;
    const double dx = std::sin(angle), dy = std::cos(angle);
    const double half = 0.5 * spec.length_px;
    const double reach = half + 3.0 * profile;
    std::vector<double> plane(height * width, 0.0);
    for (int s = 0; s < spec.num_streaks; ++s) {
        const double cy = rng.uniform(0.0, static_cast<double>(height));
        const double cx = rng.uniform(0.0, static_cast<double>(width));
        const double strength = spec.intensity * rng.uniform(0.6, 1.0);
        const long y0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
        const long y1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::ceil(cy + reach)));
        const long x0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
        const long x1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::ceil(cx + reach)));
        for (long y = y0; y <= y1; ++y) {
            for (long x = x0; x <= x1; ++x) {
                const double py = y + 0.5 - cy, px = x + 0.5 - cx;
                const double along = std::clamp(px * dx + py * dy, -half, half);
                const double ey = py - along * dy, ex = px - along * dx;
                const double d2 = ey * ey + ex * ex;
                plane[y * width + x] += strength * std::exp(-d2 / (2.0 * profile * profile));
            }
        }
    }
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        std::copy(plane.begin(), plane.end(), field.data.begin() + c * plane.size());
    }
    return field;
}

std::vector<double> depth_field(std::size_t height, std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> depth(height * width, 0.0);
    const double ramp_x = rng.uniform(-1.0, 1.0), ramp_y = rng.uniform(-1.0, 1.0);
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<Wave, 3> waves{};
    for (auto& w : waves) {
        w = {rng.uniform(0.2, 1.5) * 2.0 * kPi, rng.uniform(0.2, 1.5) * 2.0 * kPi,
             rng.uniform(0.0, 2.0 * kPi), rng.uniform(0.2, 0.6)};
    }
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
            double d = ramp_x * u + ramp_y * v;
            for (const auto& w : waves) {
                d += w.amp * std::cos(w.fx * u + w.fy * v + w.phase);
            }
            depth[y * width + x] = d;
        }
    }
    const auto [lo, hi] = std::minmax_element(depth.begin(), depth.end());
    const double min = *lo, span = std::max(*hi - *lo, 1e-12);
    for (double& d : depth) {
        d = (d - min) / span;
    }
    return depth;
}

Image apply_scattering(const Image& clean, const std::vector<double>& transmission,
                       double airlight) {
    if (transmission.size() != clean.plane()) {
        throw DegradationError("transmission map size mismatch");
    }
    Image out(clean.height, clean.width);
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        for (std::size_t p = 0; p < clean.plane(); ++p) {
            const double t = transmission[p];
            out.data[c * clean.plane() + p] =
                clean.data[c * clean.plane() + p] * t + airlight * (1.0 - t);
        }
    }
    return out;
}

std::vector<double> motion_blur_kernel(std::size_t size, double angle_deg) {
    if (size % 2 == 0) {
        throw DegradationError("motion blur kernel size must be odd");
    }
    std::vector<double> k(size * size, 0.0);
    const double r = static_cast<double>(size / 2);
    const double angle = angle_deg * kPi / 180.0;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const int steps = static_cast<int>(size) * 16;
    for (int i = 0; i <= steps; ++i) {
        const double t = -r + 2.0 * r * i / steps;
        const double x = r + t * dx, y = r + t * dy;
        const double fx = std::floor(x), fy = std::floor(y);
        const double wx = x - fx, wy = y - fy;
        for (int oy = 0; oy < 2; ++oy) {
            for (int ox = 0; ox < 2; ++ox) {
                const long xx = static_cast<long>(fx) + ox, yy = static_cast<long>(fy) + oy;
                if (xx < 0 || yy < 0 || xx >= static_cast<long>(size) ||
                    yy >= static_cast<long>(size)) {
                    continue;
                }
                k[yy * size + xx] += (ox ? wx : 1.0 - wx) * (oy ? wy : 1.0 - wy);
            }
        }
    }
    double total = 0.0;
    for (double v : k) {
        total += v;
    }
    for (double& v : k) {
        v /= total;
    }
    return k;
}

Image convolve(const Image& img, const std::vector<double>& kernel, std::size_t size) {
    const long r = static_cast<long>(size / 2);
    const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    Image out(img.height, img.width);
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        for (long y = 0; y < h; ++y) {
            for (long x = 0; x < w; ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i) {
                    const long sy = y - i;
                    if (sy < 0 || sy >= h) {
                        continue;
                    }
                    for (long j = -r; j <= r; ++j) {
                        const long sx = x - j;
                        if (sx < 0 || sx >= w) {
                            continue;
                        }
                        acc += kernel[(i + r) * static_cast<long>(size) + (j + r)] *
                               img.at(c, sy, sx);
                    }
                }
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

Image apply_degradation(const Image& clean, const DegradationSpec& spec, std::uint64_t seed) {
    spec.validate();
    for (double v : clean.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DegradationError("clean image must lie in [0,1]");
        }
    }
    Image out = clean;
    if (const auto* n = std::get_if<NoiseSpec>(&spec.variant)) {
        if (n->sigma > 0.0) {
            const Image field = noise_field(clean.height, clean.width, n->sigma, seed);
            for (std::size_t i = 0; i < out.data.size(); ++i) {
                out.data[i] += field.data[i];
            }
        }
    } else if (const auto* r = std::get_if<RainSpec>(&spec.variant)) {
        const Image field = rain_field(clean.height, clean.width, *r, seed);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] += field.data[i];
        }
    } else if (const auto* hz = std::get_if<HazeSpec>(&spec.variant)) {
        std::vector<double> t = depth_field(clean.height, clean.width, seed);
        for (double& v : t) {
            v = std::exp(-hz->beta_sc * v);
        }
        out = apply_scattering(clean, t, hz->airlight);
    } else {
        const auto& b = std::get<BlurSpec>(spec.variant);
        out = convolve(clean, b.kernel, b.size);
    }
    clip01(out);
    return out;
}

DegradationSpec sample_spec(DegradationLabel label, const DegradationParams& params,
                            std::uint64_t seed) {
    Rng rng(seed);
    switch (label) {
    case DegradationLabel::Noise:
        return {NoiseSpec{params.noise_sigma}};
    case DegradationLabel::Rain:
        return {RainSpec{params.rain_streaks, params.rain_length, rng.uniform(-30.0, 30.0),
                         params.rain_intensity}};
    case DegradationLabel::Haze:
        return {HazeSpec{rng.uniform(0.7, 1.0), params.haze_beta * rng.uniform(0.75, 1.25)}};
    case DegradationLabel::Blur: {
        const double angle = rng.uniform(0.0, 180.0);
        return {BlurSpec{params.blur_size, motion_blur_kernel(params.blur_size, angle)}};
    }
    }
    throw DegradationError("unknown label");
}

PairedSample make_sample(DegradationLabel label, std::uint64_t seed, std::size_t height,
                         std::size_t width, const DegradationParams& params) {
    PairedSample s;
    s.label = label;
    s.seed = seed;
    s.clean = generate_clean(mix_seed(seed, kStreamClean), height, width);
    const DegradationSpec spec = sample_spec(label, params, mix_seed(seed, kStreamSpec));
    s.degraded = apply_degradation(s.clean, spec, mix_seed(seed, kStreamApply));
    return s;
}

std::vector<PairedSample> make_balanced_dataset(std::size_t n_per_task, std::size_t height,
                                                std::size_t width, std::uint64_t seed,
                                                const DegradationParams& params) {
    if (n_per_task == 0) {
        throw DegradationError("n_per_task must be >= 1");
    }
    std::vector<PairedSample> samples;
    samples.reserve(4 * n_per_task);
    std::uint64_t index = 0;
    for (DegradationLabel label : kAllLabels) {
        for (std::size_t i = 0; i < n_per_task; ++i) {
            samples.push_back(make_sample(label, mix_seed(seed, index++), height, width, params));
        }
    }
    Rng rng(mix_seed(seed, kStreamShuffle));
    for (std::size_t i = samples.size(); i > 1; --i) {
        std::swap(samples[i - 1], samples[rng.below(i)]);
    }
    return samples;
}

} // namespace captnet
