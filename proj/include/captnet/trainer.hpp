#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "captnet/degradation.hpp"
#include "captnet/model.hpp"

namespace captnet {

struct TrainConfig {
    double lr_init = 5e-4;
    double lr_final = 1e-7;
    std::size_t total_iters = 2000;
    std::size_t patch_size = 32;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    bool augment = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamState {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit AdamState(const ParamRegistry& params);

    std::uint64_t step_count() const { return t_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

    /// One update of every parameter in `params` (same registry layout as
    /// at construction) from its accumulated gradient. Parameters without
    /// a gradient are treated as having a zero gradient. F32 parameters are
    /// rounded to float after the update.
    void step(const ParamRegistry& params, double lr);

private:
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

/// Single-tensor form used by tests and the scalar algebra checks.
void adam_update(Tensor& param, std::span<const double> grad, std::vector<double>& m,
                 std::vector<double>& v, std::uint64_t t, double lr);

/// eta(i) = lr_final + 0.5 (lr_init - lr_final) (1 + cos(pi i / total)).
double cosine_lr(std::size_t iter, const TrainConfig& cfg);

struct Batch {
    Tensor degraded; // [B,3,P,P]
    Tensor clean;
    std::vector<DegradationLabel> labels;
    std::vector<std::size_t> indices; // dataset positions
};

/// Aligned random crops (and, with augmentation, shared H/V flips) for
/// iteration `iter`. Samples are visited in per-epoch permutations.
/// Deterministic in (cfg.seed, iter).
Batch sample_batch(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                   std::size_t iter, Precision precision = Precision::F32);

struct LossRecord {
    std::size_t iter = 0;
    double lr = 0.0;
    double loss_db = 0.0;
};

struct TrainOptions {
    /// Called after every `checkpoint_every` iterations (0 = never).
    std::size_t checkpoint_every = 0;
    std::function<void(std::size_t iter, const CaptNet&)> on_checkpoint;
    /// Called after each iteration with the record just appended.
    std::function<void(const LossRecord&)> on_iteration;
};

/// Runs cfg.total_iters steps of sample -> forward -> PSNR loss ->
/// backward -> Adam with cosine lr. Throws TrainingError on a non-finite
/// loss or gradient.
std::vector<LossRecord> train(CaptNet& model, const std::vector<PairedSample>& dataset,
                              const TrainConfig& cfg, const TrainOptions& options = {});

/// CSV with header `iter,lr,loss_db`; values in shortest round-trip form.
void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& trace);

} // namespace captnet
