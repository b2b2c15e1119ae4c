#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "captnet/degradation.hpp"
#include "captnet/model.hpp"
#include "captnet/trainer.hpp"

namespace captnet {

struct DataConfig {
    std::size_t n_per_task = 2;
    std::size_t size = 32;
    std::uint64_t seed = 1;
    /// Held-out samples per label for the clustering analysis.
    std::size_t heldout_per_task = 10;
    DegradationParams degradation;

    bool operator==(const DataConfig&) const = default;
};

struct IoConfig {
    std::string out = "out";
    std::string manifest;
    std::string checkpoint;
    std::string init_checkpoint;

    bool operator==(const IoConfig&) const = default;
};

/// Text configuration:
///
///   # comment
///   [model]   width, encoder_blocks, decoder_blocks, heads, prompts, ffm, seed
///   [train]   lr_init, lr_final, iters, patch, batch, seed, augment
///   [data]    n_per_task, size, seed, heldout_per_task, noise_sigma,
///             rain_streaks, rain_length, rain_intensity, haze_beta, blur_size
///   [io]      out, manifest, checkpoint, init_checkpoint
///
/// Every key is optional and defaults to the value of a default-constructed
/// RunConfig. Lists are comma separated; `prompts = none` clears the list.
struct RunConfig {
    CaptNetConfig model;
    std::uint64_t model_seed = 0;
    TrainConfig train;
    DataConfig data;
    IoConfig io;

    /// Cross-field checks (model shape, patch fits the images, ...).
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The balanced training set described by `data`.
std::vector<PairedSample> training_dataset(const DataConfig& data);
/// Held-out set (heldout_per_task per label) drawn from a seed stream
/// disjoint from the training set.
std::vector<PairedSample> heldout_dataset(const DataConfig& data);

/// Throws ConfigError naming the first offending line.
RunConfig parse_config(const std::string& text);
/// Canonical text form; parse_config(emit_config(c)) == c.
std::string emit_config(const RunConfig& config);
RunConfig load_config_file(const std::string& path);

} // namespace captnet
