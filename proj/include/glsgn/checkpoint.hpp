#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glsgn/tensor.hpp"

namespace glsgn {

enum class DType : uint8_t { F32 = 1, F64 = 2 };

// One tensor as stored on disk: raw little-endian row-major payload.
struct NamedTensor {
    std::string name;
    DType dtype = DType::F32;
    Shape shape;
    std::string payload;

    template <typename T>
    static NamedTensor from(const std::string& name, const Tensor<T>& t);
    template <typename T>
    Tensor<T> to() const;
};

// Layout:
//   "GLSG" | u32 version | u32 len + config JSON | u64 seed | i64 step |
//   u32 count | count x (u32 len + name | u8 dtype | u32 rank | rank x i32 |
//   u64 bytes + payload)
// Integers are little-endian.
struct CheckpointFile {
    static constexpr uint32_t kVersion = 1;

    uint32_t version = kVersion;
    std::string config_json;
    uint64_t seed = 0;
    int64_t step = 0;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
};

std::string encode_checkpoint(const CheckpointFile& ckpt);
// Raises Error(CorruptCheckpoint) on bad magic, unknown version or truncation.
CheckpointFile decode_checkpoint(const std::string& bytes);

void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

} // namespace glsgn
