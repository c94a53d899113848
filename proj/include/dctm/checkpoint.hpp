#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dctm/tensor.hpp"

namespace dctm {

// On-disk layout (all integers unsigned 64-bit little-endian):
//   "DCTM1" | N | N x { name_len | name (UTF-8) | rank | dims[rank] | float32 LE payload }
struct CheckpointRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<float> values;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<CheckpointRecord> snapshot_parameters(const std::vector<Tensor<T>>& params);

// Copies records into same-named parameters. Every parameter must be present
// with an identical shape; the error names the offending tensor.
template <typename T>
void restore_parameters(const std::vector<CheckpointRecord>& records, std::vector<Tensor<T>>& params);

template <typename T>
void save_parameters(const std::filesystem::path& path, const std::vector<Tensor<T>>& params) {
    write_checkpoint(path, snapshot_parameters(params));
}

template <typename T>
void load_parameters(const std::filesystem::path& path, std::vector<Tensor<T>>& params) {
    restore_parameters(read_checkpoint(path), params);
}

} // namespace dctm
