#include "spdseq/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace spdseq::ad {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw CorruptCache("checkpoint: truncated file");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter*>& params) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("save_checkpoint: cannot open " + tmp);
        out.write(kMagic, 8);
        put_u32(out, kVersion);
        put_u32(out, static_cast<std::uint32_t>(params.size()));
        for (const Parameter* p : params) {
            put_u32(out, static_cast<std::uint32_t>(p->name.size()));
            out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
            put_u32(out, static_cast<std::uint32_t>(p->value.shape.size()));
            for (int d : p->value.shape) put_u32(out, static_cast<std::uint32_t>(d));
            static_assert(sizeof(double) == 8);
            out.write(reinterpret_cast<const char*>(p->value.data.data()),
                      static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
        }
        if (!out) throw IoError("save_checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Parameter> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_checkpoint: cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw CorruptCache("read_checkpoint: bad magic in " + path.string());
    }
    if (get_u32(in) != kVersion) {
        throw VersionMismatch("read_checkpoint: unsupported version");
    }
    const std::uint32_t count = get_u32(in);
    std::vector<Parameter> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw CorruptCache("read_checkpoint: truncated name");
        const std::uint32_t rank = get_u32(in);
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get_u32(in));
        TensorData value(shape, 0.0);
        if (!in.read(reinterpret_cast<char*>(value.data.data()),
                     static_cast<std::streamsize>(value.data.size() * sizeof(double)))) {
            throw CorruptCache("read_checkpoint: truncated payload");
        }
        out.emplace_back(std::move(name), std::move(value));
    }
    return out;
}

void load_checkpoint(const std::filesystem::path& path, std::vector<Parameter*>& params) {
    auto stored = read_checkpoint(path);
    std::map<std::string, const Parameter*> by_name;
    for (const auto& p : stored) by_name[p.name] = &p;
    for (Parameter* p : params) {
        const auto it = by_name.find(p->name);
        if (it == by_name.end()) {
            throw CorruptCache("load_checkpoint: parameter '" + p->name + "' missing");
        }
        if (it->second->value.shape != p->value.shape) {
            throw ShapeMismatch("load_checkpoint: shape differs for '" + p->name + "'");
        }
        p->value = it->second->value;
        p->zero_grad();
    }
}

} // namespace spdseq::ad
