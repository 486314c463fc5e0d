// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cud/tensor.hpp"

namespace cud {

// Binary checkpoint layout (all integers little-endian):
//   "CUCK" | u32 version | u64 tensor count |
//   per tensor: u32 name length, name bytes (UTF-8), u32 rank,
//               rank x u64 dims, u8 dtype tag (0 = f64), payload (LE f64) |
//   u32 CRC-32 (IEEE) over every preceding byte.
constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { io, magic, version, crc, truncated, dtype };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    CheckpointErrorKind kind() const { return kind_; }

private:
    CheckpointErrorKind kind_;
};

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n, std::uint32_t seed = 0);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Lookup helper; throws when absent.
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace cud
