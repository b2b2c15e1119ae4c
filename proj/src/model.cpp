#include "captnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace captnet {

std::string to_string(const PromptPosition& pos) {
    return (pos.side == Side::Encoder ? "encoder" : "decoder") + std::to_string(pos.level);
}

PromptPosition parse_prompt_position(const std::string& text) {
    PromptPosition pos;
    if (text.size() == 8 && text.rfind("encoder", 0) == 0) {
        pos.side = Side::Encoder;
    } else if (text.size() == 8 && text.rfind("decoder", 0) == 0) {
        pos.side = Side::Decoder;
    } else {
        throw CaptNetError("invalid prompt position '" + text + "' (expected e.g. decoder3)");
    }
    const char digit = text.back();
    if (digit < '1' || digit > '4') {
        throw CaptNetError("invalid prompt position '" + text + "'");
    }
    pos.level = digit - '0';
    return pos;
}

bool CaptNetConfig::has_prompt(Side side, int level) const {
    return std::find(prompts.begin(), prompts.end(), PromptPosition{side, level}) != prompts.end();
}

void CaptNetConfig::validate() const {
    if (base_width == 0) {
        throw CaptNetError("base width must be positive");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (encoder_blocks[i] == 0 || decoder_blocks[i] == 0) {
            throw CaptNetError("every level needs at least one encoder and one decoder block");
        }
    }
    for (int level = 3; level <= 4; ++level) {
        const std::size_t h = heads[level - 3];
        if (h == 0 || width(level) % h != 0) {
            throw CaptNetError("heads " + std::to_string(h) + " do not divide level-" +
                               std::to_string(level) + " width " + std::to_string(width(level)));
        }
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (prompts[i].level != 3 && prompts[i].level != 4) {
            throw CaptNetError("prompt position " + to_string(prompts[i]) +
                               " is not a transformer level (3 or 4)");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (prompts[i] == prompts[j]) {
                throw CaptNetError("duplicate prompt position " + to_string(prompts[i]));
            }
        }
    }
}

CaptNet CaptNet::build(const CaptNetConfig& config, std::uint64_t seed, Precision precision) {
    config.validate();
    CaptNet net;
    net.config_ = config;
    net.precision_ = precision;
    Rng rng(seed);
    const std::size_t c1 = config.width(1), c2 = config.width(2), c3 = config.width(3),
                      c4 = config.width(4);

    net.shallow_ = Conv::create(3, c1, 3, 1, rng, precision);
    for (std::size_t i = 0; i < config.encoder_blocks[0]; ++i) {
        net.enc1_.push_back(NafParams::create(c1, rng, precision));
    }
    net.down_[0] = Conv::create(4 * c1, c2, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.encoder_blocks[1]; ++i) {
        net.enc2_.push_back(NafParams::create(c2, rng, precision));
    }
    net.down_[1] = Conv::create(4 * c2, c3, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.encoder_blocks[2]; ++i) {
        net.enc3_.push_back(SptParams::create(c3, config.heads[0],
                                              config.has_prompt(Side::Encoder, 3), rng, precision));
    }
    net.down_[2] = Conv::create(4 * c3, c4, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.encoder_blocks[3]; ++i) {
        net.enc4_.push_back(SptParams::create(c4, config.heads[1],
                                              config.has_prompt(Side::Encoder, 4), rng, precision));
    }
    if (config.ffm) {
        net.ffm_ = FfmParams::create(c3, c4, rng, precision);
    }
    for (std::size_t i = 0; i < config.decoder_blocks[3]; ++i) {
        net.dec4_.push_back(SptParams::create(c4, config.heads[1],
                                              config.has_prompt(Side::Decoder, 4), rng, precision));
    }
    net.up_[2] = Conv::create(c4, 4 * c3, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.decoder_blocks[2]; ++i) {
        net.dec3_.push_back(SptParams::create(c3, config.heads[0],
                                              config.has_prompt(Side::Decoder, 3), rng, precision));
    }
    net.up_[1] = Conv::create(c3, 4 * c2, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.decoder_blocks[1]; ++i) {
        net.dec2_.push_back(NafParams::create(c2, rng, precision));
    }
    net.up_[0] = Conv::create(c2, 4 * c1, 1, 1, rng, precision);
    for (std::size_t i = 0; i < config.decoder_blocks[0]; ++i) {
        net.dec1_.push_back(NafParams::create(c1, rng, precision));
    }
    net.out_ = Conv::create(c1, 3, 3, 1, rng, precision, true);
    net.rebuild_registry();
    return net;
}

void CaptNet::rebuild_registry() {
    registry_ = ParamRegistry{};
    auto blocks = [this](const auto& list, const std::string& prefix) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            list[i].collect(registry_, prefix + "." + std::to_string(i));
        }
    };
    shallow_.collect(registry_, "shallow");
    blocks(enc1_, "enc1");
    down_[0].collect(registry_, "down1");
    blocks(enc2_, "enc2");
    down_[1].collect(registry_, "down2");
    blocks(enc3_, "enc3");
    down_[2].collect(registry_, "down3");
    blocks(enc4_, "enc4");
    if (ffm_) {
        ffm_->collect(registry_, "ffm");
    }
    blocks(dec4_, "dec4");
    up_[2].collect(registry_, "up4");
    blocks(dec3_, "dec3");
    up_[1].collect(registry_, "up3");
    blocks(dec2_, "dec2");
    up_[0].collect(registry_, "up2");
    blocks(dec1_, "dec1");
    out_.collect(registry_, "out");
}

CaptNet CaptNet::deep_copy() const {
    CaptNet copy = build(config_, 0, precision_);
    for (std::size_t i = 0; i < registry_.size(); ++i) {
        auto src = registry_.entries()[i].value.data();
        Tensor dst = copy.registry_.entries()[i].value;
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
    copy.set_prompts_enabled(prompts_enabled());
    return copy;
}

void CaptNet::set_precision(Precision precision) {
    precision_ = precision;
    for (const auto& e : registry_.entries()) {
        Tensor t = e.value;
        t.set_precision(precision);
    }
}

void CaptNet::set_prompts_enabled(bool enabled) {
    for (auto* list : {&enc3_, &enc4_, &dec4_, &dec3_}) {
        for (auto& p : *list) {
            if (p.mrap.prompts) {
                p.mrap.prompts->enabled = enabled;
            }
        }
    }
}

bool CaptNet::prompts_enabled() const {
    for (const auto* list : {&enc3_, &enc4_, &dec4_, &dec3_}) {
        for (const auto& p : *list) {
            if (p.mrap.prompts && !p.mrap.prompts->enabled) {
                return false;
            }
        }
    }
    return true;
}

std::vector<Tensor> CaptNet::prompt_tensors() const {
    std::vector<Tensor> out;
    for (const auto& e : registry_.entries()) {
        if (e.name.find(".prompt.") != std::string::npos) {
            out.push_back(e.value);
        }
    }
    return out;
}

std::vector<Tensor> CaptNet::mrap_projections() const {
    std::vector<Tensor> out;
    for (const auto& e : registry_.entries()) {
        if (e.name.find(".mrap.proj.") != std::string::npos) {
            out.push_back(e.value);
        }
    }
    return out;
}

ForwardResult CaptNet::forward_full(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3) {
        throw CaptNetError("forward: expected [N,3,H,W] image, got " + shape_str(image.shape()));
    }
    if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0) {
        throw CaptNetError("forward: H and W must be divisible by 8, got " +
                           shape_str(image.shape()));
    }
    auto run_naf = [](Tensor x, const std::vector<NafParams>& list) {
        for (const auto& p : list) {
            x = naf_block(x, p);
        }
        return x;
    };
    auto run_spt = [](Tensor x, const std::vector<SptParams>& list) {
        for (const auto& p : list) {
            x = spt_block(x, p);
        }
        return x;
    };
    auto down = [](const Tensor& x, const Conv& c) { return conv(c, pixel_unshuffle(x, 2)); };
    auto up = [](const Tensor& x, const Conv& c) { return pixel_shuffle(conv(c, x), 2); };

    const Tensor e1 = run_naf(conv(shallow_, image), enc1_);
    const Tensor e2 = run_naf(down(e1, down_[0]), enc2_);
    const Tensor e3 = run_spt(down(e2, down_[1]), enc3_);
    const Tensor e4 = run_spt(down(e3, down_[2]), enc4_);
    const Tensor skip3 = ffm_ ? ffm(e3, e4, *ffm_) : e3;

    const Tensor d4 = run_spt(e4, dec4_);
    const Tensor d3 = run_spt(add(up(d4, up_[2]), skip3), dec3_);
    const Tensor d2 = run_naf(add(up(d3, up_[1]), e2), dec2_);
    const Tensor d1 = run_naf(add(up(d2, up_[0]), e1), dec1_);
    return {add(conv(out_, d1), image), e4};
}

Tensor psnr_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("psnr_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    const Tensor diff = sub(pred, target);
    const Tensor mse = mean(mul(diff, diff));
    return scale(log(add_scalar(mse, kPsnrLossEps)), 10.0 / std::numbers::ln10);
}

namespace {

Tensor pooled_rows(const Tensor& x) {
    const Tensor pooled = global_avg_pool(x);
    return reshape(pooled, {x.dim(0), x.dim(1)});
}

} // namespace

Tensor encoder_features(const CaptNet& model, const Tensor& image) {
    return pooled_rows(model.forward_full(image).bottleneck);
}

Tensor restored_features(const CaptNet& model, const Tensor& image) {
    return pooled_rows(model.forward(image));
}

} // namespace captnet
