#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "haanet/net.hpp"

namespace haanet {

/// Binary layout (little-endian):
///   "HAAN" | u32 version | u32 tensor count |
///   per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
///               f32 values[prod(dims)] |
///   u32 CRC-32 of every preceding byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& table);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& table);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Scalars and 64-bit integers stored exactly in f32 tables.
NamedTensor scalar_entry(const std::string& name, double value);
NamedTensor u64_entry(const std::string& name, std::uint64_t value);
const NamedTensor* find_entry(const std::vector<NamedTensor>& table,
                              const std::string& name);
double scalar_value(const std::vector<NamedTensor>& table, const std::string& name);
std::uint64_t u64_value(const std::vector<NamedTensor>& table,
                        const std::string& name);

/// "meta.*" architecture entries followed by every named parameter.
template <typename S>
std::vector<NamedTensor> net_table(NetWeights<S>& weights);

/// Rebuilds a network from a table; parameter names and shapes must match
/// the architecture described by its meta entries.
template <typename S>
NetWeights<S> net_from_table(const std::vector<NamedTensor>& table);

/// Sum of element counts over non-meta entries.
std::size_t table_parameter_count(const std::vector<NamedTensor>& table);

}  // namespace haanet
