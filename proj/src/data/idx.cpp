#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "minima/data.hpp"

namespace minima::data {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated IDX header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  // gzread passes uncompressed input through unchanged.
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw FileError("cannot open " + path);
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  for (;;) {
    int got = gzread(f, buf, sizeof buf);
    if (got < 0) {
      int errnum = 0;
      std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw FormatError("corrupt gzip stream in " + path + ": " + msg, bytes.size());
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), buf, buf + got);
  }
  gzclose(f);
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("short write to " + path);
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes) {
  if (read_be32(images, 0) != kIdxImageMagic) throw FormatError("bad IDX image magic", 0);
  const std::uint64_t count = read_be32(images, 4);
  const std::uint64_t rows = read_be32(images, 8);
  const std::uint64_t cols = read_be32(images, 12);
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("IDX image dimension is zero", 4);
  const unsigned __int128 wide = static_cast<unsigned __int128>(count) * rows * cols;
  if (wide > (std::uint64_t{1} << 40)) throw FormatError("IDX image dimensions are implausibly large", 4);
  const std::uint64_t payload = static_cast<std::uint64_t>(wide);
  if (images.size() - 16 < payload) throw FormatError("truncated IDX image payload", images.size());
  if (images.size() - 16 > payload) throw FormatError("trailing bytes after IDX image payload", 16 + payload);

  if (read_be32(labels, 0) != kIdxLabelMagic) throw FormatError("bad IDX label magic", 0);
  const std::uint64_t label_count = read_be32(labels, 4);
  if (label_count != count)
    throw FormatError("label count " + std::to_string(label_count) + " != image count " + std::to_string(count), 4);
  if (labels.size() - 8 < label_count) throw FormatError("truncated IDX label payload", labels.size());
  if (labels.size() - 8 > label_count) throw FormatError("trailing bytes after IDX label payload", 8 + label_count);

  const std::size_t d = static_cast<std::size_t>(rows * cols);
  Dataset ds;
  ds.features = Matrix(static_cast<std::size_t>(count), d);
  auto values = ds.features.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(images[16 + i]) / 255.0;
  ds.labels.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const std::uint8_t y = labels[8 + i];
    if (y >= num_classes) throw FormatError("label " + std::to_string(y) + " out of range", 8 + i);
    ds.labels[i] = y;
  }
  ds.num_classes = num_classes;
  ds.image = ImageShape{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  ds.range = ValueRange{0.0, 1.0};
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
  auto images = read_file(images_path);
  auto labels = read_file(labels_path);
  return parse_idx(images, labels, num_classes);
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> encode_idx(const Dataset& ds) {
  ds.validate();
  const ImageShape shape = ds.image.value_or(ImageShape{1, ds.dim()});
  if (ds.size() > std::numeric_limits<std::uint32_t>::max() || shape.height > 0xffffffffu || shape.width > 0xffffffffu)
    throw FormatError("dataset too large for IDX", 0);
  if (ds.num_classes > 256) throw FormatError("IDX labels are single bytes", 0);

  std::vector<std::uint8_t> img;
  img.reserve(16 + ds.features.size());
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(shape.height));
  put_be32(img, static_cast<std::uint32_t>(shape.width));
  for (double v : ds.features.values()) {
    const double scaled = v * 255.0;
    const double k = std::nearbyint(scaled);
    if (!(k >= 0.0 && k <= 255.0) || k / 255.0 != v)
      throw FormatError("feature value " + std::to_string(v) + " is not a byte multiple of 1/255", img.size());
    img.push_back(static_cast<std::uint8_t>(k));
  }

  std::vector<std::uint8_t> lab;
  lab.reserve(8 + ds.size());
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.push_back(static_cast<std::uint8_t>(y));
  return {std::move(img), std::move(lab)};
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  auto [img, lab] = encode_idx(ds);
  write_file(images_path, img);
  write_file(labels_path, lab);
}

Dataset quantize_unit_bytes(const Dataset& ds) {
  Dataset out = ds;
  auto v = out.features.values();
  if (v.empty()) return out;
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& x : v) x = std::nearbyint((x - lo) / span * 255.0) / 255.0;
  out.range = ValueRange{0.0, 1.0};
  return out;
}

}  // namespace minima::data
