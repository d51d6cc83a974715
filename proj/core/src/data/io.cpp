#include "layerens/data/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "common/binary_io.hpp"

namespace layerens::data {

namespace fs = std::filesystem;
using detail::read_le;
using detail::write_le;

void write_tensor(std::ostream& out, const nn::Tensor& tensor) {
  out.write(kTensorMagic, 7);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto extent : tensor.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
  for (double v : tensor.values()) detail::write_f64(out, v);
  if (!out) throw std::runtime_error("failed writing tensor");
}

void write_tensor(const fs::path& path, const nn::Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

nn::Tensor read_tensor(std::istream& in, const std::string& source) {
  detail::expect_magic(in, kTensorMagic, source);
  const auto rank = read_le<std::uint32_t>(in, "rank");
  if (rank == 0 || rank > 8) throw std::runtime_error(source + ": bad rank " + std::to_string(rank));
  nn::Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(read_le<std::uint32_t>(in, "extent"));
  std::vector<double> values(nn::element_count(shape));
  for (double& v : values) v = detail::read_f64(in, "tensor payload");
  return nn::Tensor(std::move(shape), std::move(values));
}

nn::Tensor read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tensor file " + path.string());
  return read_tensor(in, path.string());
}

void write_pgm(const fs::path& path, const nn::Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("write_pgm: expected [1,H,W]");
  const auto [lo_it, hi_it] = std::minmax_element(image.values().begin(), image.values().end());
  const double lo = *lo_it, span = std::max(*hi_it - *lo_it, 1e-12);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  for (double v : image.values()) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (v - lo) / span))));
  }
}

nn::Tensor read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval == 0 || maxval > 255 || width == 0 || height == 0) {
    throw std::runtime_error(path.string() + ": unsupported PGM");
  }
  in.get();
  std::vector<double> values(width * height);
  for (double& v : values) {
    const int byte = in.get();
    if (byte == EOF) throw std::runtime_error(path.string() + ": truncated PGM");
    v = static_cast<double>(byte) / static_cast<double>(maxval);
  }
  return nn::Tensor({1, height, width}, std::move(values));
}

namespace {

std::string join_tags(const std::set<std::string>& tags) {
  std::string out;
  for (const auto& t : tags) {
    if (!out.empty()) out += ';';
    out += t;
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delim)) fields.push_back(field);
  if (!line.empty() && line.back() == delim) fields.emplace_back();
  return fields;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& dataset, int num_classes, bool write_pgm_previews) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  manifest << "id,image_path,mask_path,split,tags\n";
  for (Split split : {Split::train, Split::val, Split::test}) {
    const std::string name = to_string(split);
    fs::create_directories(dir / name);
    for (const auto& s : dataset.split(split)) {
      if (s.mask.num_classes() != num_classes) throw std::invalid_argument("sample " + s.id + ": class count mismatch");
      const std::string image_rel = name + "/" + s.id + ".leten";
      const std::string mask_rel = name + "/" + s.id + "_mask.leten";
      write_tensor(dir / image_rel, s.image);
      write_tensor(dir / mask_rel, s.mask.to_tensor());
      if (write_pgm_previews) write_pgm(dir / (name + "/" + s.id + ".pgm"), s.image);
      manifest << s.id << ',' << image_rel << ',' << mask_rel << ',' << name << ',' << join_tags(s.tags) << '\n';
    }
  }
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "id,image_path,mask_path,split,tags") throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_fields(line, ',');
    if (fields.size() != 5) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    ManifestRow row{fields[0], fields[1], fields[2], parse_split(fields[3]), {}};
    for (auto& tag : split_fields(fields[4], ';')) {
      if (!tag.empty()) row.tags.insert(tag);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Dataset load_dataset(const fs::path& dir, int num_classes) {
  Dataset ds;
  for (auto& row : read_manifest(dir / "manifest.csv")) {
    Sample s;
    s.id = row.id;
    s.tags = row.tags;
    s.image = read_tensor(dir / row.image_path);
    s.mask = LabelMask::from_tensor(read_tensor(dir / row.mask_path), num_classes);
    if (s.image.rank() != 3 || s.image.dim(1) != s.mask.height() || s.image.dim(2) != s.mask.width()) {
      throw ShapeError("sample " + s.id + ": image " + nn::to_string(s.image.shape()) + " does not match its mask");
    }
    switch (row.split) {
      case Split::train: ds.train.push_back(std::move(s)); break;
      case Split::val: ds.val.push_back(std::move(s)); break;
      case Split::test: ds.test.push_back(std::move(s)); break;
    }
  }
  return ds;
}

}  // namespace layerens::data
