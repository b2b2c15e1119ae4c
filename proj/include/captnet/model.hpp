#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "captnet/blocks.hpp"

namespace captnet {

enum class Side { Encoder, Decoder };

struct PromptPosition {
    Side side = Side::Decoder;
    int level = 3;

    bool operator==(const PromptPosition&) const = default;
    auto operator<=>(const PromptPosition&) const = default;
};

/// "decoder3" <-> {Decoder, 3}
std::string to_string(const PromptPosition& pos);
PromptPosition parse_prompt_position(const std::string& text);

struct CaptNetConfig {
    std::size_t base_width = 8;
    std::array<std::size_t, 4> encoder_blocks{1, 1, 1, 2};
    std::array<std::size_t, 4> decoder_blocks{1, 1, 1, 1};
    /// Attention heads for the transformer levels 3 and 4.
    std::array<std::size_t, 2> heads{2, 4};
    std::vector<PromptPosition> prompts{{Side::Decoder, 3}, {Side::Decoder, 4}};
    bool ffm = true;

    std::size_t width(int level) const { return base_width << (level - 1); }
    bool has_prompt(Side side, int level) const;
    /// Throws std::invalid_argument on an inconsistent config.
    void validate() const;

    bool operator==(const CaptNetConfig&) const = default;
};

class CaptNetError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ForwardResult {
    Tensor output;     // restored image, [N,3,H,W]
    Tensor bottleneck; // level-4 encoder output, [N,8C,H/8,W/8]
};

/// Four-level encoder-decoder. Levels 1-2 use conv blocks, levels 3-4
/// transformer blocks; downsampling is pixel-unshuffle + 1x1 conv,
/// upsampling 1x1 conv + pixel-shuffle; skips are additive and the level-3
/// skip is replaced by the fusion of levels 3 and 4 when `ffm` is set. The
/// network predicts a residual that is added to the input.
class CaptNet {
public:
    static CaptNet build(const CaptNetConfig& config, std::uint64_t seed,
                         Precision precision = Precision::F32);

    CaptNet(CaptNet&&) = default;
    CaptNet& operator=(CaptNet&&) = default;
    CaptNet(const CaptNet&) = delete;
    CaptNet& operator=(const CaptNet&) = delete;

    /// Same config, independent parameter storage with equal values.
    CaptNet deep_copy() const;

    const CaptNetConfig& config() const { return config_; }
    const ParamRegistry& params() const { return registry_; }
    std::size_t parameter_count() const { return registry_.scalar_count(); }
    Precision precision() const { return precision_; }
    void set_precision(Precision precision);

    /// Toggles injection for every prompt set; names are unaffected.
    void set_prompts_enabled(bool enabled);
    bool prompts_enabled() const;
    /// All prompt tensors, in registry order.
    std::vector<Tensor> prompt_tensors() const;
    /// Output projections of every MRAP, in registry order.
    std::vector<Tensor> mrap_projections() const;

    ForwardResult forward_full(const Tensor& image) const;
    Tensor forward(const Tensor& image) const { return forward_full(image).output; }

private:
    CaptNet() = default;
    void rebuild_registry();

    CaptNetConfig config_;
    Precision precision_ = Precision::F32;
    Conv shallow_;
    std::vector<NafParams> enc1_, enc2_, dec1_, dec2_;
    std::vector<SptParams> enc3_, enc4_, dec3_, dec4_;
    std::array<Conv, 3> down_; // level l -> l+1
    std::array<Conv, 3> up_;   // level l+1 -> l
    std::optional<FfmParams> ffm_;
    Conv out_;
    ParamRegistry registry_;
};

/// -PSNR with unit peak: 10*log10(MSE + 1e-8) over all elements.
Tensor psnr_loss(const Tensor& pred, const Tensor& target);
inline constexpr double kPsnrLossEps = 1e-8;

/// Spatially pooled level-4 encoder output, [N, 8C].
Tensor encoder_features(const CaptNet& model, const Tensor& image);
/// Spatially pooled restored image, [N, 3].
Tensor restored_features(const CaptNet& model, const Tensor& image);

} // namespace captnet
