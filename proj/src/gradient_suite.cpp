#include "captnet/gradient_suite.hpp"

#include <chrono>

#include "captnet/model.hpp"

namespace captnet {

void randomize_params(const ParamRegistry& params, Rng& rng, double scale) {
    for (const auto& e : params.entries()) {
        Tensor t = e.value;
        const bool temperature = e.name.size() >= 5 && e.name.ends_with(".beta");
        const bool f32 = t.precision() == Precision::F32;
        for (double& v : t.mutable_data()) {
            v = temperature ? rng.uniform(0.5, 1.5) : rng.uniform(-scale, scale);
            if (f32) {
                v = static_cast<double>(static_cast<float>(v));
            }
        }
    }
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
        v = rng.uniform(-1.0, 1.0);
    }
    return Tensor::from_data(std::move(shape), std::move(data), Precision::F64, true);
}

/// sum(out * w) for a fixed random w, so every output element matters.
Tensor projected(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

std::vector<Tensor> with_params(std::vector<Tensor> inputs, const ParamRegistry& reg) {
    for (const auto& e : reg.entries()) {
        inputs.push_back(e.value);
    }
    return inputs;
}

template <typename Fn>
GradSuiteRow timed(const std::string& name, Fn fn) {
    const auto start = std::chrono::steady_clock::now();
    GradSuiteRow row{name, fn(), 0.0};
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

} // namespace

std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed) {
    constexpr Precision f64 = Precision::F64;
    Rng rng(seed);
    std::vector<GradSuiteRow> rows;

    {
        const NafParams p = NafParams::create(4, rng, f64);
        ParamRegistry reg;
        p.collect(reg, "naf");
        randomize_params(reg, rng);
        const Tensor x = random_tensor({1, 4, 4, 4}, rng);
        const Tensor w = random_tensor({1, 4, 4, 4}, rng);
        rows.push_back(timed("naf_block", [&] {
            return grad_check([&] { return projected(naf_block(x, p), w); }, with_params({x}, reg),
                              kGradStep);
        }));
    }
    {
        const MrapParams p = MrapParams::create(8, 2, true, rng, f64);
        ParamRegistry reg;
        p.collect(reg, "mrap");
        randomize_params(reg, rng);
        const Tensor x = random_tensor({1, 8, 4, 4}, rng);
        const Tensor w = random_tensor({1, 8, 4, 4}, rng);
        rows.push_back(timed("mrap", [&] {
            return grad_check([&] { return projected(mrap(x, p), w); }, with_params({x}, reg),
                              kGradStep);
        }));
    }
    {
        const SgfnParams p = SgfnParams::create(4, rng, f64);
        ParamRegistry reg;
        p.collect(reg, "sgfn");
        randomize_params(reg, rng);
        const Tensor x = random_tensor({1, 4, 4, 4}, rng);
        const Tensor w = random_tensor({1, 4, 4, 4}, rng);
        rows.push_back(timed("sgfn", [&] {
            return grad_check([&] { return projected(sgfn(x, p), w); }, with_params({x}, reg),
                              kGradStep);
        }));
    }
    {
        const SptParams p = SptParams::create(8, 2, true, rng, f64);
        ParamRegistry reg;
        p.collect(reg, "spt");
        randomize_params(reg, rng);
        const Tensor x = random_tensor({1, 8, 4, 4}, rng);
        const Tensor w = random_tensor({1, 8, 4, 4}, rng);
        rows.push_back(timed("spt_block", [&] {
            return grad_check([&] { return projected(spt_block(x, p), w); }, with_params({x}, reg),
                              kGradStep);
        }));
    }
    {
        const FfmParams p = FfmParams::create(4, 8, rng, f64);
        ParamRegistry reg;
        p.collect(reg, "ffm");
        randomize_params(reg, rng);
        const Tensor e3 = random_tensor({1, 4, 4, 4}, rng);
        const Tensor e4 = random_tensor({1, 8, 2, 2}, rng);
        const Tensor w = random_tensor({1, 4, 4, 4}, rng);
        rows.push_back(timed("ffm", [&] {
            return grad_check([&] { return projected(ffm(e3, e4, p), w); },
                              with_params({e3, e4}, reg), kGradStep);
        }));
    }
    {
        CaptNetConfig cfg;
        cfg.base_width = 4;
        cfg.encoder_blocks = {1, 1, 1, 1};
        cfg.decoder_blocks = {1, 1, 1, 1};
        cfg.heads = {2, 2};
        const CaptNet model = CaptNet::build(cfg, seed, f64);
        randomize_params(model.params(), rng);
        const Tensor x = random_tensor({1, 3, 8, 8}, rng);
        std::vector<double> target(x.numel());
        for (double& v : target) {
            v = rng.uniform();
        }
        const Tensor y = Tensor::from_data({1, 3, 8, 8}, std::move(target), f64);
        // end-to-end training objective against a random target
        rows.push_back(timed("captnet_c4", [&] {
            return grad_check([&] { return psnr_loss(model.forward(x), y); },
                              with_params({x}, model.params()), kGradStep);
        }));
    }
    return rows;
}

} // namespace captnet
