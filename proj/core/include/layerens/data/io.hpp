#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "layerens/data/dataset.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::data {

/// Raw tensor container: "LETEN1\n", u32 rank, u32 extents, then f64 values,
/// all little-endian. Masks use the same container with integer values.
void write_tensor(std::ostream& out, const nn::Tensor& tensor);
void write_tensor(const std::filesystem::path& path, const nn::Tensor& tensor);
nn::Tensor read_tensor(std::istream& in, const std::string& source = "tensor");
nn::Tensor read_tensor(const std::filesystem::path& path);

inline constexpr const char* kTensorMagic = "LETEN1\n";

/// 8-bit binary PGM, min-max scaled; for looking at images, not for pipelines.
void write_pgm(const std::filesystem::path& path, const nn::Tensor& image);
/// Reads a P5 PGM into [1,H,W] with values in [0,1].
nn::Tensor read_pgm(const std::filesystem::path& path);

struct ManifestRow {
  std::string id;
  std::string image_path;  // relative to the dataset directory
  std::string mask_path;
  Split split = Split::train;
  std::set<std::string> tags;
};

/// Writes every sample under `dir` plus manifest.csv
/// (id,image_path,mask_path,split,tags with tags joined by ';').
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, int num_classes, bool write_pgm_previews);
Dataset load_dataset(const std::filesystem::path& dir, int num_classes);

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace layerens::data
