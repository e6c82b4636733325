#include "kgwalk/snapshot.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "kgwalk/errors.hpp"

namespace kgwalk::snapshot {

namespace {

constexpr char kMagic[8] = {'K', 'G', 'W', 'S', 'N', 'P', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("truncated snapshot file: " + path);
    return value;
}

}  // namespace

void save(const std::string& path, const TensorList& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write snapshot file: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(tensor.rows()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(tensor.cols()));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(sizeof(double) * tensor.size()));
    }
    if (!out) throw DataError("failed writing snapshot file: " + path);
}

TensorList load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open snapshot file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a kgwalk snapshot file (bad magic): " + path);
    const auto count = read_pod<std::uint32_t>(in, path);
    TensorList tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = read_pod<std::uint64_t>(in, path);
        const auto cols = read_pod<std::uint64_t>(in, path);
        nn::Matrix tensor(static_cast<long>(rows), static_cast<long>(cols));
        in.read(reinterpret_cast<char*>(tensor.data()),
                static_cast<std::streamsize>(sizeof(double) * tensor.size()));
        if (!in) throw DataError("truncated snapshot file: " + path);
        tensors.emplace_back(std::move(name), std::move(tensor));
    }
    return tensors;
}

const nn::Matrix& require(const TensorList& tensors, const std::string& name, long rows, long cols) {
    for (const auto& [n, t] : tensors) {
        if (n != name) continue;
        if ((rows >= 0 && t.rows() != rows) || (cols >= 0 && t.cols() != cols))
            throw DataError("snapshot tensor '" + name + "' has unexpected shape");
        return t;
    }
    throw DataError("snapshot tensor '" + name + "' not found");
}

}  // namespace kgwalk::snapshot
