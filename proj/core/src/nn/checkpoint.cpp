#include "layerens/nn/checkpoint.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "common/binary_io.hpp"

namespace layerens::nn {

using detail::read_le;
using detail::write_le;

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& entries) {
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) throw std::invalid_argument("duplicate checkpoint entry " + e.name);
  }
  out.write(kCheckpointMagic, 8);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto extent : e.value.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
    write_le<std::uint64_t>(out, offset);
    offset += e.value.size() * sizeof(double);
  }
  for (const auto& e : entries) {
    for (double v : e.value.values()) detail::write_f64(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, entries);
}

std::vector<NamedTensor> read_checkpoint(std::istream& in, const std::string& source) {
  detail::expect_magic(in, kCheckpointMagic, source);
  const auto count = read_le<std::uint32_t>(in, "entry count");
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> manifest;
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto length = read_le<std::uint32_t>(in, "name length");
    if (length > (1u << 16)) throw std::runtime_error(source + ": implausible name length");
    e.name.resize(length);
    if (!in.read(e.name.data(), length)) throw std::runtime_error(source + ": truncated name");
    const auto rank = read_le<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) throw std::runtime_error(source + ": bad rank for " + e.name);
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(read_le<std::uint32_t>(in, "extent"));
    e.offset = read_le<std::uint64_t>(in, "offset");
    if (e.offset != expected_offset) throw std::runtime_error(source + ": non-contiguous payload at " + e.name);
    expected_offset += element_count(e.shape) * sizeof(double);
    manifest.push_back(std::move(e));
  }
  std::vector<NamedTensor> entries;
  for (auto& e : manifest) {
    std::vector<double> data(element_count(e.shape));
    for (double& v : data) v = detail::read_f64(in, "payload");
    entries.push_back({std::move(e.name), Tensor(std::move(e.shape), std::move(data))});
  }
  return entries;
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace layerens::nn
