#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "captnet/degradation.hpp"

namespace captnet {

/// Entry point shared by the `captnet` executable and the CLI tests.
/// `args` excludes the program name. Returns 0 on success, 2 on usage
/// errors, 1 on contract violations or failed checks.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ManifestRow {
    std::size_t sample_id = 0;
    DegradationLabel label = DegradationLabel::Noise;
    std::uint64_t seed = 0;
    std::string clean_path;
    std::string degraded_path;
};

/// CSV `sample_id,label,seed,clean_path,degraded_path` with header row.
/// Relative image paths are resolved against the manifest's directory.
std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

} // namespace captnet
