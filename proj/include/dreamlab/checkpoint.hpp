#pragma once
// Flat binary parameter checkpoint.
//
// Layout (all integers little-endian):
//   magic   "DLCK" (4 bytes)
//   version u32 = 1
//   then per slot, in store insertion order:
//     name_len u32, name bytes,
//     rank     u32, dims u64[rank],
//     values   f64[product(dims)]
// Slots run to end of file; there is no count field.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dreamlab/params.hpp"

namespace dreamlab {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::uint64_t bits;
    if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
        bits = std::bit_cast<std::uint64_t>(v);
    } else {
        bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& v) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
    if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
        v = std::bit_cast<double>(bits);
    } else {
        v = static_cast<T>(bits);
    }
    return true;
}

}  // namespace detail

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
    os.write("DLCK", 4);
    detail::write_le<std::uint32_t>(os, 1);
    for (const auto& slot : store.slots()) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(slot.name.size()));
        os.write(slot.name.data(), static_cast<std::streamsize>(slot.name.size()));
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(slot.value.rank()));
        for (std::size_t d : slot.value.shape()) detail::write_le<std::uint64_t>(os, d);
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            detail::write_le<double>(os, slot.value[i]);
        }
    }
    if (!os) throw CheckpointError("checkpoint write failed: " + path);
}

inline ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DLCK", 4) != 0) {
        throw CheckpointError("bad checkpoint magic: " + path);
    }
    std::uint32_t version = 0;
    if (!detail::read_le(is, version) || version != 1) {
        throw CheckpointError("unsupported checkpoint version");
    }
    ParamStore store;
    for (;;) {
        std::uint32_t name_len = 0;
        if (!detail::read_le(is, name_len)) break;  // clean EOF
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw CheckpointError("truncated slot name");
        std::uint32_t rank = 0;
        if (!detail::read_le(is, rank) || rank == 0 || rank > 3) {
            throw CheckpointError("bad slot rank for " + name);
        }
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint64_t dim = 0;
            if (!detail::read_le(is, dim)) throw CheckpointError("truncated dims for " + name);
            d = static_cast<std::size_t>(dim);
        }
        const std::size_t n = Tensor::element_count(shape);
        std::vector<double> data(n);
        for (auto& v : data) {
            if (!detail::read_le(is, v)) throw CheckpointError("truncated values for " + name);
        }
        store.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return store;
}

}  // namespace dreamlab
