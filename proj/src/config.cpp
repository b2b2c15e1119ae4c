#include "captnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "captnet/rng.hpp"
#include "captnet/text.hpp"

namespace captnet {

namespace {

constexpr std::uint64_t kHeldoutStream = 0x401D;

[[noreturn]] void fail(std::size_t line, const std::string& message) {
    throw ConfigError("line " + std::to_string(line) + ": " + message);
}

std::uint64_t parse_uint(const std::string& v, std::size_t line, const std::string& key) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        fail(line, "'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& v, std::size_t line, const std::string& key) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        fail(line, "'" + key + "' expects a real number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(line, "'" + key + "' expects true or false, got '" + v + "'");
}

template <std::size_t N>
std::array<std::size_t, N> parse_counts(const std::string& v, std::size_t line,
                                        const std::string& key) {
    const auto parts = split(v, ',');
    if (parts.size() != N) {
        fail(line, "'" + key + "' expects " + std::to_string(N) + " comma-separated integers");
    }
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = parse_uint(parts[i], line, key);
    }
    return out;
}

template <std::size_t N>
std::string join(const std::array<std::size_t, N>& values) {
    std::string out;
    for (std::size_t i = 0; i < N; ++i) {
        out += (i ? "," : "") + std::to_string(values[i]);
    }
    return out;
}

void set_model(RunConfig& c, const std::string& key, const std::string& v, std::size_t line) {
    auto& m = c.model;
    if (key == "width") {
        m.base_width = parse_uint(v, line, key);
        if (m.base_width == 0) fail(line, "'width' must be positive");
    } else if (key == "encoder_blocks") {
        m.encoder_blocks = parse_counts<4>(v, line, key);
    } else if (key == "decoder_blocks") {
        m.decoder_blocks = parse_counts<4>(v, line, key);
    } else if (key == "heads") {
        m.heads = parse_counts<2>(v, line, key);
    } else if (key == "prompts") {
        m.prompts.clear();
        if (v != "none") {
            for (const auto& part : split(v, ',')) {
                try {
                    m.prompts.push_back(parse_prompt_position(part));
                } catch (const CaptNetError& e) {
                    fail(line, e.what());
                }
            }
        }
    } else if (key == "ffm") {
        m.ffm = parse_bool(v, line, key);
    } else if (key == "seed") {
        c.model_seed = parse_uint(v, line, key);
    } else {
        fail(line, "unknown key '" + key + "' in [model]");
    }
}

void set_train(RunConfig& c, const std::string& key, const std::string& v, std::size_t line) {
    auto& t = c.train;
    if (key == "lr_init") {
        t.lr_init = parse_real(v, line, key);
    } else if (key == "lr_final") {
        t.lr_final = parse_real(v, line, key);
    } else if (key == "iters") {
        t.total_iters = parse_uint(v, line, key);
    } else if (key == "patch") {
        t.patch_size = parse_uint(v, line, key);
        if (t.patch_size == 0 || t.patch_size % 8 != 0) {
            fail(line, "'patch' must be a positive multiple of 8, got " + v);
        }
    } else if (key == "batch") {
        t.batch_size = parse_uint(v, line, key);
        if (t.batch_size == 0) fail(line, "'batch' must be positive");
    } else if (key == "seed") {
        t.seed = parse_uint(v, line, key);
    } else if (key == "augment") {
        t.augment = parse_bool(v, line, key);
    } else {
        fail(line, "unknown key '" + key + "' in [train]");
    }
}

void set_data(RunConfig& c, const std::string& key, const std::string& v, std::size_t line) {
    auto& d = c.data;
    auto& g = d.degradation;
    if (key == "n_per_task") {
        d.n_per_task = parse_uint(v, line, key);
        if (d.n_per_task == 0) fail(line, "'n_per_task' must be >= 1");
    } else if (key == "size") {
        d.size = parse_uint(v, line, key);
        if (d.size < 16 || d.size % 8 != 0) fail(line, "'size' must be a multiple of 8 and >= 16");
    } else if (key == "seed") {
        d.seed = parse_uint(v, line, key);
    } else if (key == "heldout_per_task") {
        d.heldout_per_task = parse_uint(v, line, key);
        if (d.heldout_per_task < 2) fail(line, "'heldout_per_task' must be >= 2");
    } else if (key == "noise_sigma") {
        g.noise_sigma = parse_real(v, line, key);
        if (!(g.noise_sigma >= 0.0 && g.noise_sigma <= 1.0)) fail(line, "'noise_sigma' must lie in [0,1]");
    } else if (key == "rain_streaks") {
        g.rain_streaks = static_cast<int>(parse_uint(v, line, key));
    } else if (key == "rain_length") {
        g.rain_length = static_cast<int>(parse_uint(v, line, key));
        if (g.rain_length < 1) fail(line, "'rain_length' must be >= 1");
    } else if (key == "rain_intensity") {
        g.rain_intensity = parse_real(v, line, key);
        if (!(g.rain_intensity >= 0.0)) fail(line, "'rain_intensity' must be >= 0");
    } else if (key == "haze_beta") {
        g.haze_beta = parse_real(v, line, key);
        if (!(g.haze_beta > 0.0)) fail(line, "'haze_beta' must be > 0");
    } else if (key == "blur_size") {
        g.blur_size = parse_uint(v, line, key);
        if (g.blur_size % 2 == 0) fail(line, "'blur_size' must be odd");
    } else {
        fail(line, "unknown key '" + key + "' in [data]");
    }
}

void set_io(RunConfig& c, const std::string& key, const std::string& v, std::size_t line) {
    auto& io = c.io;
    if (key == "out") {
        io.out = v;
    } else if (key == "manifest") {
        io.manifest = v;
    } else if (key == "checkpoint") {
        io.checkpoint = v;
    } else if (key == "init_checkpoint") {
        io.init_checkpoint = v;
    } else {
        fail(line, "unknown key '" + key + "' in [io]");
    }
}

} // namespace

void RunConfig::validate() const {
    try {
        model.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (train.patch_size > data.size) {
        throw ConfigError("patch " + std::to_string(train.patch_size) +
                          " exceeds image size " + std::to_string(data.size));
    }
}

std::vector<PairedSample> training_dataset(const DataConfig& data) {
    return make_balanced_dataset(data.n_per_task, data.size, data.size, data.seed,
                                 data.degradation);
}

std::vector<PairedSample> heldout_dataset(const DataConfig& data) {
    return make_balanced_dataset(data.heldout_per_task, data.size, data.size,
                                 mix_seed(data.seed, kHeldoutStream), data.degradation);
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body(trim(std::string_view(raw).substr(0, hash)));
        if (body.empty()) {
            continue;
        }
        if (body.front() == '[') {
            if (body.back() != ']') fail(line, "malformed section header");
            section = std::string(trim(std::string_view(body).substr(1, body.size() - 2)));
            if (section != "model" && section != "train" && section != "data" && section != "io") {
                fail(line, "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) fail(line, "expected 'key = value'");
        const std::string key(trim(std::string_view(body).substr(0, eq)));
        const std::string value(trim(std::string_view(body).substr(eq + 1)));
        if (section.empty()) fail(line, "key '" + key + "' outside of a section");
        if (key.empty()) fail(line, "missing key");
        if (value.empty() && section != "io") fail(line, "missing value for '" + key + "'");
        if (section == "model") set_model(c, key, value, line);
        else if (section == "train") set_train(c, key, value, line);
        else if (section == "data") set_data(c, key, value, line);
        else set_io(c, key, value, line);
    }
    c.validate();
    return c;
}

std::string emit_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[model]\n"
       << "width = " << c.model.base_width << '\n'
       << "encoder_blocks = " << join(c.model.encoder_blocks) << '\n'
       << "decoder_blocks = " << join(c.model.decoder_blocks) << '\n'
       << "heads = " << join(c.model.heads) << '\n'
       << "prompts = ";
    if (c.model.prompts.empty()) {
        os << "none";
    }
    for (std::size_t i = 0; i < c.model.prompts.size(); ++i) {
        os << (i ? "," : "") << to_string(c.model.prompts[i]);
    }
    os << '\n'
       << "ffm = " << (c.model.ffm ? "true" : "false") << '\n'
       << "seed = " << c.model_seed << "\n\n"
       << "[train]\n"
       << "lr_init = " << format_double(c.train.lr_init) << '\n'
       << "lr_final = " << format_double(c.train.lr_final) << '\n'
       << "iters = " << c.train.total_iters << '\n'
       << "patch = " << c.train.patch_size << '\n'
       << "batch = " << c.train.batch_size << '\n'
       << "seed = " << c.train.seed << '\n'
       << "augment = " << (c.train.augment ? "true" : "false") << "\n\n"
       << "[data]\n"
       << "n_per_task = " << c.data.n_per_task << '\n'
       << "size = " << c.data.size << '\n'
       << "seed = " << c.data.seed << '\n'
       << "heldout_per_task = " << c.data.heldout_per_task << '\n'
       << "noise_sigma = " << format_double(c.data.degradation.noise_sigma) << '\n'
       << "rain_streaks = " << c.data.degradation.rain_streaks << '\n'
       << "rain_length = " << c.data.degradation.rain_length << '\n'
       << "rain_intensity = " << format_double(c.data.degradation.rain_intensity) << '\n'
       << "haze_beta = " << format_double(c.data.degradation.haze_beta) << '\n'
       << "blur_size = " << c.data.degradation.blur_size << "\n\n"
       << "[io]\n"
       << "out = " << c.io.out << '\n'
       << "manifest = " << c.io.manifest << '\n'
       << "checkpoint = " << c.io.checkpoint << '\n'
       << "init_checkpoint = " << c.io.init_checkpoint << '\n';
    return os.str();
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace captnet
