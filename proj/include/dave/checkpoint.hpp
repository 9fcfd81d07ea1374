#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dave/tensor.hpp"

namespace dave {

// Checkpoint container: magic "DAVECKPT", u32 version = 1, u32 tensor count;
// per tensor: u16 name length, UTF-8 name, u8 rank, u32 extents, raw
// little-endian f32 data. All multi-byte integers little-endian.
inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'V', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

namespace detail {

template <typename U>
void write_pod(std::ofstream& f, U v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::ifstream& f, const std::string& path) {
    U v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(U));
    check_state(f.good(), "checkpoint truncated: " + path);
    return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check_state(f.good(), "cannot open checkpoint for writing: " + path);
    f.write(kCheckpointMagic, 8);
    detail::write_pod<std::uint32_t>(f, kCheckpointVersion);
    detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        check_arg(t.name.size() <= 0xffff, "checkpoint tensor name too long: " + t.name);
        check_arg(t.shape.size() <= 0xff, "checkpoint tensor rank too large: " + t.name);
        detail::write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(t.name.size()));
        f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(t.shape.size()));
        std::size_t n = 1;
        for (int e : t.shape) {
            detail::write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(e));
            n *= static_cast<std::size_t>(e);
        }
        check_arg(n == t.values.size(), "checkpoint tensor data does not match shape: " + t.name);
        f.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    }
    check_state(f.good(), "checkpoint write failed: " + path);
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check_state(f.good(), "cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    check_state(f.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0,
                "bad checkpoint magic in file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(f, path);
    check_state(version == kCheckpointVersion,
                "unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const auto count = detail::read_pod<std::uint32_t>(f, path);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const auto name_len = detail::read_pod<std::uint16_t>(f, path);
        t.name.resize(name_len);
        f.read(t.name.data(), name_len);
        const auto rank = detail::read_pod<std::uint8_t>(f, path);
        std::size_t n = 1;
        for (int r = 0; r < rank; ++r) {
            const auto e = detail::read_pod<std::uint32_t>(f, path);
            t.shape.push_back(static_cast<int>(e));
            n *= e;
        }
        t.values.resize(n);
        f.read(reinterpret_cast<char*>(t.values.data()),
               static_cast<std::streamsize>(n * sizeof(float)));
        check_state(f.good(), "checkpoint truncated: " + path);
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
NamedTensor to_named(const std::string& name, const Tensor<T>& t) {
    NamedTensor n;
    n.name = name;
    n.shape = t.shape;
    n.values.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) n.values[i] = static_cast<float>(t.data[i]);
    return n;
}

template <typename T>
void load_into(const NamedTensor& src, Tensor<T>& dst) {
    check_state(src.shape == dst.shape,
                "checkpoint tensor " + src.name + " has unexpected shape");
    for (std::size_t i = 0; i < src.values.size(); ++i) dst.data[i] = static_cast<T>(src.values[i]);
}

}  // namespace dave
