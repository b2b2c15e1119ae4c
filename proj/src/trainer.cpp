#include "captnet/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "captnet/rng.hpp"
#include "captnet/text.hpp"

namespace captnet {

namespace {

constexpr std::uint64_t kStreamEpoch = 0xE90C;
constexpr std::uint64_t kStreamCrop = 0xC209;

} // namespace

void TrainConfig::validate() const {
    if (!(lr_final < lr_init) || !(lr_final >= 0.0)) {
        throw std::invalid_argument("train: need 0 <= lr_final < lr_init");
    }
    if (patch_size == 0 || patch_size % 8 != 0) {
        throw std::invalid_argument("train: patch size must be a positive multiple of 8, got " +
                                    std::to_string(patch_size));
    }
    if (batch_size == 0) {
        throw std::invalid_argument("train: batch size must be positive");
    }
}

AdamState::AdamState(const ParamRegistry& params) {
    for (const auto& e : params.entries()) {
        m_.emplace_back(e.value.numel(), 0.0);
        v_.emplace_back(e.value.numel(), 0.0);
    }
}

void adam_update(Tensor& param, std::span<const double> grad, std::vector<double>& m,
                 std::vector<double>& v, std::uint64_t t, double lr) {
    const std::size_t n = param.numel();
    if (m.size() != n || v.size() != n || (!grad.empty() && grad.size() != n)) {
        throw ShapeError("adam: gradient/state shape does not match parameter");
    }
    const double b1 = AdamState::kBeta1, b2 = AdamState::kBeta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto values = param.mutable_data();
    const bool f32 = param.precision() == Precision::F32;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad.empty() ? 0.0 : grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        double updated = values[i] - lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
        if (f32) {
            updated = static_cast<double>(static_cast<float>(updated));
        }
        values[i] = updated;
    }
}

void AdamState::step(const ParamRegistry& params, double lr) {
    if (params.size() != m_.size()) {
        throw ShapeError("adam: registry layout changed since construction");
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params.entries()[i].value;
        adam_update(p, p.grad(), m_[i], v_[i], t_, lr);
    }
}

double cosine_lr(std::size_t iter, const TrainConfig& cfg) {
    if (iter > cfg.total_iters) {
        throw std::out_of_range("cosine_lr: iteration " + std::to_string(iter) +
                                " beyond schedule length " + std::to_string(cfg.total_iters));
    }
    if (cfg.total_iters == 0) {
        return cfg.lr_init;
    }
    const double progress = static_cast<double>(iter) / static_cast<double>(cfg.total_iters);
    return cfg.lr_final +
           0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(mix_seed(seed, kStreamEpoch), epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

void copy_patch(const Image& src, std::size_t y0, std::size_t x0, std::size_t size, bool flip_h,
                bool flip_v, std::vector<double>& dst) {
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        for (std::size_t y = 0; y < size; ++y) {
            const std::size_t sy = y0 + (flip_v ? size - 1 - y : y);
            for (std::size_t x = 0; x < size; ++x) {
                const std::size_t sx = x0 + (flip_h ? size - 1 - x : x);
                dst.push_back(src.at(c, sy, sx));
            }
        }
    }
}

} // namespace

Batch sample_batch(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                   std::size_t iter, Precision precision) {
    if (dataset.empty()) {
        throw std::invalid_argument("sample_batch: empty dataset");
    }
    const std::size_t n = dataset.size(), b = cfg.batch_size, p = cfg.patch_size;
    Rng rng(mix_seed(mix_seed(cfg.seed, kStreamCrop), iter));
    Batch batch;
    std::vector<double> degraded, clean;
    degraded.reserve(b * 3 * p * p);
    clean.reserve(b * 3 * p * p);
    std::uint64_t cached_epoch = ~std::uint64_t{0};
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < b; ++k) {
        const std::uint64_t pos = static_cast<std::uint64_t>(iter) * b + k;
        const std::uint64_t epoch = pos / n;
        if (epoch != cached_epoch) {
            order = epoch_order(n, cfg.seed, epoch);
            cached_epoch = epoch;
        }
        const std::size_t idx = order[pos % n];
        const PairedSample& s = dataset[idx];
        if (s.clean.height < p || s.clean.width < p) {
            throw std::invalid_argument("sample_batch: patch " + std::to_string(p) +
                                        " larger than image " + std::to_string(s.clean.height) +
                                        "x" + std::to_string(s.clean.width));
        }
        const std::size_t y0 = rng.below(s.clean.height - p + 1);
        const std::size_t x0 = rng.below(s.clean.width - p + 1);
        const bool flip_h = rng.coin() && cfg.augment;
        const bool flip_v = rng.coin() && cfg.augment;
        copy_patch(s.degraded, y0, x0, p, flip_h, flip_v, degraded);
        copy_patch(s.clean, y0, x0, p, flip_h, flip_v, clean);
        batch.labels.push_back(s.label);
        batch.indices.push_back(idx);
    }
    batch.degraded = Tensor::from_data({b, 3, p, p}, std::move(degraded), precision);
    batch.clean = Tensor::from_data({b, 3, p, p}, std::move(clean), precision);
    return batch;
}

std::vector<LossRecord> train(CaptNet& model, const std::vector<PairedSample>& dataset,
                              const TrainConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    if (dataset.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    std::vector<LossRecord> trace;
    trace.reserve(cfg.total_iters);
    AdamState adam(model.params());
    for (std::size_t it = 0; it < cfg.total_iters; ++it) {
        const double lr = cosine_lr(it, cfg);
        const Batch batch = sample_batch(dataset, cfg, it, model.precision());
        for (const auto& e : model.params().entries()) {
            Tensor t = e.value;
            t.zero_grad();
        }
        double loss_value = 0.0;
        try {
            const Tensor loss = psnr_loss(model.forward(batch.degraded), batch.clean);
            loss_value = loss.item();
            backward(loss);
        } catch (const NumericError& err) {
            std::ostringstream msg;
            msg << "non-finite value at iteration " << it << " (lr " << lr << "): " << err.what();
            throw TrainingError(msg.str());
        }
        double grad_sq = 0.0;
        for (const auto& e : model.params().entries()) {
            for (double g : e.value.grad()) {
                grad_sq += g * g;
            }
        }
        if (!std::isfinite(loss_value) || !std::isfinite(grad_sq)) {
            std::ostringstream msg;
            msg << "non-finite loss/gradient at iteration " << it << " (lr " << lr
                << ", loss " << loss_value << ", grad norm " << std::sqrt(grad_sq) << ")";
            throw TrainingError(msg.str());
        }
        adam.step(model.params(), lr);
        trace.push_back({it, lr, loss_value});
        if (options.on_iteration) {
            options.on_iteration(trace.back());
        }
        if (options.checkpoint_every != 0 && (it + 1) % options.checkpoint_every == 0 &&
            options.on_checkpoint) {
            options.on_checkpoint(it + 1, model);
        }
    }
    return trace;
}

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& trace) {
    os << "iter,lr,loss_db\n";
    for (const auto& r : trace) {
        os << r.iter << ',' << format_double(r.lr) << ',' << format_double(r.loss_db) << '\n';
    }
}

} // namespace captnet
