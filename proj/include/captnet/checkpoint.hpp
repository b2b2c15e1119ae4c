#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "captnet/model.hpp"

namespace captnet {

/// Binary parameter snapshot:
///   "CAPTCKPT" | u32 version | u32 count |
///   count x { u16 name_len | name | u8 rank | u32 dims[rank] | f32 payload }
/// All integers and floats little-endian; entries sorted by name; no
/// trailing bytes.
inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'P', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> checkpoint_save(const ParamRegistry& params);
std::vector<std::uint8_t> checkpoint_save(const CaptNet& model);

/// Validates the whole blob against the registry (names, shapes, sizes)
/// before writing any parameter. Throws CheckpointError naming the first
/// offending entry.
void checkpoint_load(std::span<const std::uint8_t> bytes, const ParamRegistry& params);
void checkpoint_load(std::span<const std::uint8_t> bytes, CaptNet& model);

void save_checkpoint_file(const std::string& path, const CaptNet& model);
void load_checkpoint_file(const std::string& path, CaptNet& model);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace captnet
