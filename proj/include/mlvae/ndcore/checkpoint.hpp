#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mlvae/ndcore/param_store.hpp"

namespace mlvae::nd {

// Binary parameter file, little-endian throughout:
//   "MLV1" | u32 version | u32 entry count |
//   per entry: u32 name length, name bytes, u32 dtype (0 = f32, 1 = f64),
//              u32 rank, u64 dims[rank], row-major payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint32_t { F32 = 0, F64 = 1 };

template <typename T>
std::vector<std::uint8_t> serialize(const ParamStore<T>& store);

template <typename T>
ParamStore<T> deserialize(const std::vector<std::uint8_t>& bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store);

// Reads any dtype, converting to T.
template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path);

// Copies values from `source` into the same-named, same-shaped entries of `target`.
// Every target entry must be present in the source.
template <typename T>
void assign_values(ParamStore<T>& target, const ParamStore<T>& source);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace mlvae::nd
