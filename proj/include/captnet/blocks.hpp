#pragma once

#include <optional>
#include <string>
#include <vector>

#include "captnet/ops.hpp"
#include "captnet/rng.hpp"
#include "captnet/tensor.hpp"

namespace captnet {

struct NamedParam {
    std::string name;
    Tensor value;
};

/// Ordered name -> parameter map. Names must be unique.
class ParamRegistry {
public:
    void add(const std::string& name, const Tensor& value);
    const std::vector<NamedParam>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    /// nullptr when absent.
    const Tensor* find(const std::string& name) const;
    std::size_t scalar_count() const;

private:
    std::vector<NamedParam> entries_;
};

struct Conv {
    Tensor weight; // [Cout, Cin/groups, k, k]
    Tensor bias;   // [Cout]
    std::size_t groups = 1;

    /// Weights uniform in +-1/sqrt(fan_in), zero bias; all zeros when
    /// `zero_init`.
    static Conv create(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t groups,
                       Rng& rng, Precision precision, bool zero_init = false);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

Tensor conv(const Conv& c, const Tensor& x);

struct LayerNormParams {
    Tensor gamma; // ones
    Tensor shift; // zeros

    static LayerNormParams create(std::size_t channels, Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

/// Conv block: two residual branches, the first with depthwise conv and
/// channel attention, the second a gated pointwise MLP. The branch output
/// projections (pw2, pw4) start at zero so the block starts as identity.
struct NafParams {
    std::size_t channels = 0;
    LayerNormParams ln1;
    Conv pw1; // C -> 2C
    Conv dw1; // depthwise 2C
    Conv sca; // C -> C on the pooled descriptor
    Conv pw2; // C -> C, zero init
    LayerNormParams ln2;
    Conv pw3; // C -> 2C
    Conv pw4; // C -> C, zero init

    static NafParams create(std::size_t channels, Rng& rng, Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

/// Learnable per-head offsets added to every token of Q, K and V.
struct PromptSet {
    Tensor q; // [heads, C/heads]
    Tensor k;
    Tensor v;
    bool enabled = true;

    static PromptSet create(std::size_t channels, std::size_t heads, Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

struct MrapParams {
    std::size_t channels = 0;
    std::size_t heads = 1;
    Conv q_pw, q_dw;
    Conv k_pw, k_dw;
    Conv v_pw, v_dw;
    Conv proj; // zero init
    Tensor beta; // [heads], ones; |beta| clamped to >= kMinBeta at use
    std::optional<PromptSet> prompts;

    static constexpr double kMinBeta = 1e-4;

    static MrapParams create(std::size_t channels, std::size_t heads, bool with_prompts, Rng& rng,
                             Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

struct SgfnParams {
    std::size_t channels = 0;
    Conv pw1; // C -> 2C
    Conv dw1; // depthwise 2C
    Conv pw0; // C -> C, zero init

    static SgfnParams create(std::size_t channels, Rng& rng, Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

struct SptParams {
    LayerNormParams ln1;
    MrapParams mrap;
    LayerNormParams ln2;
    SgfnParams sgfn;

    static SptParams create(std::size_t channels, std::size_t heads, bool with_prompts, Rng& rng,
                            Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

struct FfmParams {
    Conv up;    // 1x1, C4 -> 4*C3, followed by pixel shuffle
    NafParams ff; // at C3

    static FfmParams create(std::size_t c3, std::size_t c4, Rng& rng, Precision precision);
    void collect(ParamRegistry& reg, const std::string& prefix) const;
};

/// Optional instrumentation of one mrap evaluation.
struct MrapProbe {
    MacCounter* counter = nullptr;  // MACs of the two attention matmuls
    Tensor* attention = nullptr;    // receives softmax output [N, h, C/h, C/h]
};

Tensor simple_gate(const Tensor& x);
Tensor sca(const Tensor& x, const Conv& weights);
Tensor naf_block(const Tensor& x, const NafParams& p);
Tensor mrap(const Tensor& x, const MrapParams& p, const MrapProbe& probe = {});
Tensor sgfn(const Tensor& x, const SgfnParams& p);
Tensor spt_block(const Tensor& x, const SptParams& p, const MrapProbe& probe = {});
Tensor ffm(const Tensor& e3, const Tensor& e4, const FfmParams& p);

} // namespace captnet
