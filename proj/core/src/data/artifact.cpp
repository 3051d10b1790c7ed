#include "uapforge/data/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <type_traits>

#include "uapforge/hash.hpp"

namespace uapforge::data {
namespace {

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

constexpr char kMagic[4] = {'U', 'A', 'P', 'T'};

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    template <class U>
    void pod(U v) {
        bytes(&v, sizeof v);
    }
    std::size_t size() const { return out_.size(); }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void bytes(void* dst, std::size_t n) {
        if (n > in_.size() - pos_) throw DataError("artifact: truncated at byte " + std::to_string(pos_));
        std::memcpy(dst, in_.data() + pos_, n);
        pos_ += n;
    }
    template <class U>
    U pod() {
        U v;
        bytes(&v, sizeof v);
        return v;
    }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t pos) { pos_ = pos; }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::size_t directory_entry_size(const std::string& name, std::size_t rank) {
    return 4 + name.size() + 4 + 8 * rank + 8;
}

}  // namespace

const BasicTensor<float>& Artifact::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw DataError("artifact: no tensor named '" + name + "'");
}

bool Artifact::has(const std::string& name) const {
    for (const auto& entry : tensors) {
        if (entry.first == name) return true;
    }
    return false;
}

void Artifact::add(std::string name, BasicTensor<float> value) {
    if (has(name)) throw ContractViolation("artifact: duplicate tensor name '" + name + "'");
    tensors.emplace_back(std::move(name), std::move(value));
}

std::vector<std::uint8_t> encode_artifact(const Artifact& artifact) {
    std::size_t header = 4 + 4 + 4 + 8;
    for (const auto& [name, t] : artifact.tensors) {
        // The reader rejects these; refuse to write a file it cannot load.
        if (t.rank() == 0 || t.size() == 0) {
            throw ContractViolation("artifact: tensor '" + name + "' needs rank >= 1 and positive dimensions");
        }
        header += directory_entry_size(name, t.rank());
    }

    Fnv1a checksum;
    for (const auto& entry : artifact.tensors) {
        const auto& t = entry.second;
        checksum.update(std::span(reinterpret_cast<const std::uint8_t*>(t.raw()), t.size() * sizeof(float)));
    }

    Writer w;
    w.bytes(kMagic, 4);
    w.pod<std::uint32_t>(kArtifactVersion);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(artifact.tensors.size()));
    w.pod<std::uint64_t>(checksum.digest());
    std::uint64_t offset = header;
    for (const auto& [name, t] : artifact.tensors) {
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.pod<std::uint64_t>(d);
        w.pod<std::uint64_t>(offset);
        offset += t.size() * sizeof(float);
    }
    for (const auto& entry : artifact.tensors) w.bytes(entry.second.raw(), entry.second.size() * sizeof(float));
    const std::string meta = artifact.metadata.dump();
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    return std::move(w.buffer());
}

Artifact decode_artifact(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("artifact: bad magic");
    const auto version = r.pod<std::uint32_t>();
    if (version != kArtifactVersion) {
        throw DataError("artifact: unsupported version " + std::to_string(version) + " (expected " +
                        std::to_string(kArtifactVersion) + ")");
    }
    const auto count = r.pod<std::uint32_t>();
    const auto expected_checksum = r.pod<std::uint64_t>();

    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const auto name_len = r.pod<std::uint32_t>();
        if (name_len > r.remaining()) throw DataError("artifact: truncated tensor name");
        e.name.resize(name_len);
        r.bytes(e.name.data(), name_len);
        const auto rank = r.pod<std::uint32_t>();
        if (rank == 0 || std::uint64_t(rank) * 8 > r.remaining()) {
            throw DataError("artifact: bad rank for tensor '" + e.name + "'");
        }
        for (std::uint32_t k = 0; k < rank; ++k) {
            const auto d = r.pod<std::uint64_t>();
            if (d == 0 || d > bytes.size()) throw DataError("artifact: bad dimension for tensor '" + e.name + "'");
            e.shape.push_back(d);
        }
        e.offset = r.pod<std::uint64_t>();
        entries.push_back(std::move(e));
    }

    const std::size_t payload_begin = r.pos();
    std::size_t cursor = payload_begin;
    Fnv1a checksum;
    Artifact out;
    for (auto& e : entries) {
        const std::uint64_t n = shape_size(e.shape);
        if (e.offset != cursor || n > (bytes.size() - cursor) / sizeof(float)) {
            throw DataError("artifact: payload of tensor '" + e.name + "' out of bounds");
        }
        std::vector<float> values(n);
        r.seek(cursor);
        r.bytes(values.data(), n * sizeof(float));
        checksum.update(bytes.subspan(cursor, n * sizeof(float)));
        cursor += n * sizeof(float);
        out.add(std::move(e.name), BasicTensor<float>(std::move(e.shape), std::move(values)));
    }
    if (checksum.digest() != expected_checksum) throw DataError("artifact: payload checksum mismatch");

    const auto meta_len = r.pod<std::uint32_t>();
    if (meta_len != r.remaining()) throw DataError("artifact: metadata length does not match file size");
    std::string meta(meta_len, '\0');
    r.bytes(meta.data(), meta_len);
    try {
        out.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("artifact: malformed metadata: ") + e.what());
    }
    return out;
}

void save_artifact(const Artifact& artifact, const std::filesystem::path& path) {
    const auto bytes = encode_artifact(artifact);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

Artifact load_artifact(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return decode_artifact(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

BasicTensor<float> to_storage(const Tensor& value) {
    if constexpr (std::is_same_v<real, float>) {
        return value;
    } else {
        auto out = value.template cast<float>();
        static bool warned = false;
        if (!warned) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                if (double(out[i]) != double(value[i])) {
                    std::cerr << "warning: double-precision values narrowed to float32 for storage\n";
                    warned = true;
                    break;
                }
            }
        }
        return out;
    }
}

Tensor from_storage(const BasicTensor<float>& value) {
    if constexpr (std::is_same_v<real, float>) {
        return value;
    } else {
        return value.template cast<real>();
    }
}

}  // namespace uapforge::data
