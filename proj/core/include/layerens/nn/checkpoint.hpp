#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "layerens/nn/tensor.hpp"

namespace layerens::nn {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Parameter checkpoint container.
///
///   "LECKPT1\n"
///   u32 entry count
///   per entry: u32 name length, name bytes, u32 rank, u32 extents[rank],
///              u64 byte offset into the payload
///   payload: little-endian f64 values, entries back to back
///
/// Entries are written in the order given; the model passes them in
/// construction (topological) order.
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& entries);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);

std::vector<NamedTensor> read_checkpoint(std::istream& in, const std::string& source = "checkpoint");
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

inline constexpr const char* kCheckpointMagic = "LECKPT1\n";

}  // namespace layerens::nn
