#include "captnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace captnet {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const std::string& what) {
        need(sizeof(T), what);
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(T);
        return value;
    }

    std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
        need(n, what);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const std::string& what) const {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError("checkpoint truncated while reading " + what);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

struct Entry {
    Shape shape;
    std::span<const std::uint8_t> payload;
};

} // namespace

std::vector<std::uint8_t> checkpoint_save(const ParamRegistry& params) {
    std::vector<const NamedParam*> sorted;
    for (const auto& e : params.entries()) {
        sorted.push_back(&e);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const NamedParam* a, const NamedParam* b) { return a->name < b->name; });

    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sorted.size()));
    for (const NamedParam* e : sorted) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e->name.size()));
        out.insert(out.end(), e->name.begin(), e->name.end());
        const Shape& shape = e->value.shape();
        put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
        for (std::size_t d : shape) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (double v : e->value.data()) {
            put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    return out;
}

std::vector<std::uint8_t> checkpoint_save(const CaptNet& model) {
    return checkpoint_save(model.params());
}

void checkpoint_load(std::span<const std::uint8_t> bytes, const ParamRegistry& params) {
    Reader r(bytes);
    const auto magic = r.take(sizeof(kCheckpointMagic), "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kCheckpointMagic))) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>("entry count");
    std::map<std::string, Entry> entries;
    std::string previous;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>("name length");
        const auto raw = r.take(len, "name");
        std::string name(raw.begin(), raw.end());
        if (i > 0 && !(previous < name)) {
            throw CheckpointError("checkpoint entries not sorted/unique at '" + name + "'");
        }
        previous = name;
        Entry entry;
        const auto rank = r.get<std::uint8_t>("rank of " + name);
        for (std::uint8_t d = 0; d < rank; ++d) {
            entry.shape.push_back(r.get<std::uint32_t>("dims of " + name));
        }
        entry.payload = r.take(4 * shape_numel(entry.shape), "payload of " + name);
        entries.emplace(std::move(name), entry);
    }
    if (!r.done()) {
        throw CheckpointError("trailing bytes after the last checkpoint entry");
    }

    std::vector<std::string> names;
    for (const auto& e : params.entries()) {
        names.push_back(e.name);
    }
    std::sort(names.begin(), names.end());
    for (const auto& [name, entry] : entries) {
        const Tensor* target = params.find(name);
        if (target == nullptr) {
            throw CheckpointError("parameter '" + name + "' is not part of this model");
        }
        if (target->shape() != entry.shape) {
            throw CheckpointError("shape mismatch for '" + name + "': checkpoint " +
                                  shape_str(entry.shape) + ", model " +
                                  shape_str(target->shape()));
        }
    }
    for (const auto& name : names) {
        if (!entries.contains(name)) {
            throw CheckpointError("parameter '" + name + "' missing from checkpoint");
        }
    }
    for (const auto& [name, entry] : entries) {
        Tensor target = *params.find(name);
        auto values = target.mutable_data();
        Reader payload(entry.payload);
        for (double& v : values) {
            v = static_cast<double>(std::bit_cast<float>(payload.get<std::uint32_t>(name)));
        }
    }
}

void checkpoint_load(std::span<const std::uint8_t> bytes, CaptNet& model) {
    checkpoint_load(bytes, model.params());
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "' for reading");
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint_file(const std::string& path, const CaptNet& model) {
    write_file_bytes(path, checkpoint_save(model));
}

void load_checkpoint_file(const std::string& path, CaptNet& model) {
    checkpoint_load(read_file_bytes(path), model);
}

} // namespace captnet
