#include "captnet/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace captnet {

void ParamRegistry::add(const std::string& name, const Tensor& value) {
    if (find(name) != nullptr) {
        throw std::logic_error("duplicate parameter name: " + name);
    }
    entries_.push_back({name, value});
}

const Tensor* ParamRegistry::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) {
            return &e.value;
        }
    }
    return nullptr;
}

std::size_t ParamRegistry::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        n += e.value.numel();
    }
    return n;
}

Conv Conv::create(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t groups,
                  Rng& rng, Precision precision, bool zero_init) {
    Conv c;
    c.groups = groups;
    const std::size_t cin_g = cin / groups;
    Shape wshape{cout, cin_g, kernel, kernel};
    std::vector<double> w(shape_numel(wshape), 0.0);
    if (!zero_init) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin_g * kernel * kernel));
        for (double& v : w) {
            v = rng.uniform(-bound, bound);
        }
    }
    c.weight = Tensor::from_data(std::move(wshape), std::move(w), precision, true);
    c.bias = Tensor::zeros({cout}, precision, true);
    return c;
}

void Conv::collect(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".weight", weight);
    reg.add(prefix + ".bias", bias);
}

Tensor conv(const Conv& c, const Tensor& x) { return conv2d(x, c.weight, c.bias, c.groups); }

LayerNormParams LayerNormParams::create(std::size_t channels, Precision precision) {
    return {Tensor::full({channels}, 1.0, precision, true),
            Tensor::zeros({channels}, precision, true)};
}

void LayerNormParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".shift", shift);
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
    return layer_norm(x, p.gamma, p.shift);
}

NafParams NafParams::create(std::size_t channels, Rng& rng, Precision precision) {
    const std::size_t c = channels;
    NafParams p;
    p.channels = c;
    p.ln1 = LayerNormParams::create(c, precision);
    p.pw1 = Conv::create(c, 2 * c, 1, 1, rng, precision);
    p.dw1 = Conv::create(2 * c, 2 * c, 3, 2 * c, rng, precision);
    p.sca = Conv::create(c, c, 1, 1, rng, precision);
    p.pw2 = Conv::create(c, c, 1, 1, rng, precision, true);
    p.ln2 = LayerNormParams::create(c, precision);
    p.pw3 = Conv::create(c, 2 * c, 1, 1, rng, precision);
    p.pw4 = Conv::create(c, c, 1, 1, rng, precision, true);
    return p;
}

void NafParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    ln1.collect(reg, prefix + ".ln1");
    pw1.collect(reg, prefix + ".pw1");
    dw1.collect(reg, prefix + ".dw1");
    sca.collect(reg, prefix + ".sca");
    pw2.collect(reg, prefix + ".pw2");
    ln2.collect(reg, prefix + ".ln2");
    pw3.collect(reg, prefix + ".pw3");
    pw4.collect(reg, prefix + ".pw4");
}

PromptSet PromptSet::create(std::size_t channels, std::size_t heads, Precision precision) {
    const Shape shape{heads, channels / heads};
    return {Tensor::zeros(shape, precision, true), Tensor::zeros(shape, precision, true),
            Tensor::zeros(shape, precision, true), true};
}

void PromptSet::collect(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".q", q);
    reg.add(prefix + ".k", k);
    reg.add(prefix + ".v", v);
}

MrapParams MrapParams::create(std::size_t channels, std::size_t heads, bool with_prompts,
                              Rng& rng, Precision precision) {
    if (heads == 0 || channels % heads != 0) {
        throw ShapeError("mrap: heads (" + std::to_string(heads) + ") must divide channels (" +
                         std::to_string(channels) + ")");
    }
    const std::size_t c = channels;
    MrapParams p;
    p.channels = c;
    p.heads = heads;
    p.q_pw = Conv::create(c, c, 1, 1, rng, precision);
    p.q_dw = Conv::create(c, c, 3, c, rng, precision);
    p.k_pw = Conv::create(c, c, 1, 1, rng, precision);
    p.k_dw = Conv::create(c, c, 3, c, rng, precision);
    p.v_pw = Conv::create(c, c, 1, 1, rng, precision);
    p.v_dw = Conv::create(c, c, 3, c, rng, precision);
    p.proj = Conv::create(c, c, 1, 1, rng, precision, true);
    p.beta = Tensor::full({heads}, 1.0, precision, true);
    if (with_prompts) {
        p.prompts = PromptSet::create(c, heads, precision);
    }
    return p;
}

void MrapParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    q_pw.collect(reg, prefix + ".q_pw");
    q_dw.collect(reg, prefix + ".q_dw");
    k_pw.collect(reg, prefix + ".k_pw");
    k_dw.collect(reg, prefix + ".k_dw");
    v_pw.collect(reg, prefix + ".v_pw");
    v_dw.collect(reg, prefix + ".v_dw");
    proj.collect(reg, prefix + ".proj");
    reg.add(prefix + ".beta", beta);
    if (prompts) {
        prompts->collect(reg, prefix + ".prompt");
    }
}

SgfnParams SgfnParams::create(std::size_t channels, Rng& rng, Precision precision) {
    const std::size_t c = channels;
    SgfnParams p;
    p.channels = c;
    p.pw1 = Conv::create(c, 2 * c, 1, 1, rng, precision);
    p.dw1 = Conv::create(2 * c, 2 * c, 3, 2 * c, rng, precision);
    p.pw0 = Conv::create(c, c, 1, 1, rng, precision, true);
    return p;
}

void SgfnParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    pw1.collect(reg, prefix + ".pw1");
    dw1.collect(reg, prefix + ".dw1");
    pw0.collect(reg, prefix + ".pw0");
}

SptParams SptParams::create(std::size_t channels, std::size_t heads, bool with_prompts, Rng& rng,
                            Precision precision) {
    SptParams p;
    p.ln1 = LayerNormParams::create(channels, precision);
    p.mrap = MrapParams::create(channels, heads, with_prompts, rng, precision);
    p.ln2 = LayerNormParams::create(channels, precision);
    p.sgfn = SgfnParams::create(channels, rng, precision);
    return p;
}

void SptParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    ln1.collect(reg, prefix + ".ln1");
    mrap.collect(reg, prefix + ".mrap");
    ln2.collect(reg, prefix + ".ln2");
    sgfn.collect(reg, prefix + ".sgfn");
}

FfmParams FfmParams::create(std::size_t c3, std::size_t c4, Rng& rng, Precision precision) {
    FfmParams p;
    p.up = Conv::create(c4, 4 * c3, 1, 1, rng, precision);
    p.ff = NafParams::create(c3, rng, precision);
    return p;
}

void FfmParams::collect(ParamRegistry& reg, const std::string& prefix) const {
    up.collect(reg, prefix + ".up");
    ff.collect(reg, prefix + ".ff");
}

Tensor simple_gate(const Tensor& x) {
    auto [first, second] = channel_chunk2(x);
    return mul(first, second);
}

Tensor sca(const Tensor& x, const Conv& weights) {
    return mul(x, conv(weights, global_avg_pool(x)));
}

namespace {

void require_channels(const Tensor& x, std::size_t channels, const char* block) {
    if (x.rank() != 4 || x.dim(1) != channels) {
        throw ShapeError(std::string(block) + ": expected [N," + std::to_string(channels) +
                         ",H,W] input, got " + shape_str(x.shape()));
    }
}

Tensor to_heads(const Tensor& t, std::size_t heads) {
    const std::size_t n = t.dim(0), c = t.dim(1), hw = t.dim(2) * t.dim(3);
    return reshape(t, {n, heads, c / heads, hw});
}

Tensor inject(const Tensor& tokens, const Tensor& prompt) {
    const std::size_t heads = tokens.dim(1), d = tokens.dim(2);
    if (prompt.shape() != Shape{heads, d}) {
        throw ShapeError("mrap: prompt shape " + shape_str(prompt.shape()) + " != [" +
                         std::to_string(heads) + "," + std::to_string(d) + "]");
    }
    return add(tokens, reshape(prompt, {heads, d, 1}));
}

} // namespace

Tensor naf_block(const Tensor& x, const NafParams& p) {
    require_channels(x, p.channels, "naf_block");
    Tensor y = conv(p.dw1, conv(p.pw1, layer_norm(x, p.ln1)));
    y = sca(simple_gate(y), p.sca);
    const Tensor x1 = add(x, conv(p.pw2, y));
    Tensor z = simple_gate(conv(p.pw3, layer_norm(x1, p.ln2)));
    return add(x1, conv(p.pw4, z));
}

Tensor mrap(const Tensor& x, const MrapParams& p, const MrapProbe& probe) {
    require_channels(x, p.channels, "mrap");
    Tensor q = to_heads(conv(p.q_dw, conv(p.q_pw, x)), p.heads);
    Tensor k = to_heads(conv(p.k_dw, conv(p.k_pw, x)), p.heads);
    Tensor v = to_heads(conv(p.v_dw, conv(p.v_pw, x)), p.heads);
    if (p.prompts && p.prompts->enabled) {
        q = inject(q, p.prompts->q);
        k = inject(k, p.prompts->k);
        v = inject(v, p.prompts->v);
    }
    q = l2_normalize_lastdim(q);
    k = l2_normalize_lastdim(k);
    Tensor logits = batched_matmul(q, transpose_last2(k), probe.counter);
    const Tensor inv_beta =
        reshape(reciprocal_clamped(p.beta, MrapParams::kMinBeta), {p.heads, 1, 1});
    const Tensor attention = softmax_lastdim(mul(logits, inv_beta));
    if (probe.attention != nullptr) {
        *probe.attention = attention;
    }
    const Tensor out = batched_matmul(attention, v, probe.counter);
    return conv(p.proj, reshape(out, x.shape()));
}

Tensor sgfn(const Tensor& x, const SgfnParams& p) {
    require_channels(x, p.channels, "sgfn");
    return conv(p.pw0, simple_gate(conv(p.dw1, conv(p.pw1, x))));
}

Tensor spt_block(const Tensor& x, const SptParams& p, const MrapProbe& probe) {
    const Tensor x1 = add(x, mrap(layer_norm(x, p.ln1), p.mrap, probe));
    return add(x1, sgfn(layer_norm(x1, p.ln2), p.sgfn));
}

Tensor ffm(const Tensor& e3, const Tensor& e4, const FfmParams& p) {
    const Tensor up = pixel_shuffle(conv(p.up, e4), 2);
    if (up.shape() != e3.shape()) {
        throw ShapeError("ffm: upsampled level-4 features " + shape_str(up.shape()) +
                         " do not match level-3 features " + shape_str(e3.shape()));
    }
    return naf_block(add(up, e3), p.ff);
}

} // namespace captnet
