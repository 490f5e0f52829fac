#include "bfa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bfa {

DatasetError::DatasetError(const std::string& what, std::size_t byte_offset)
    : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
      offset_(byte_offset) {}

Dataset::Dataset(Tensor images, std::vector<int> labels, std::size_t num_classes)
    : images_(std::move(images)), labels_(std::move(labels)), num_classes_(num_classes) {
  if (images_.rank() < 2 || images_.dim(0) != labels_.size()) {
    throw std::invalid_argument("dataset images " + shape_to_string(images_.shape()) + " do not match " +
                                std::to_string(labels_.size()) + " labels");
  }
  for (int l : labels_) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes_) {
      throw std::invalid_argument("label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
    }
  }
}

Shape Dataset::sample_shape() const { return Shape(images_.shape().begin() + 1, images_.shape().end()); }

Tensor Dataset::images(std::span<const std::size_t> indices) const {
  access_.image_reads += indices.size();
  return images_.gather_rows(indices);
}

Tensor Dataset::images(std::size_t begin, std::size_t count) const {
  access_.image_reads += count;
  return images_.slice_rows(begin, count);
}

int Dataset::label(std::size_t index) const {
  ++access_.label_reads;
  return labels_.at(index);
}

std::vector<int> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(label(i));
  return out;
}

std::vector<int> Dataset::labels(std::size_t begin, std::size_t count) const {
  if (begin + count > labels_.size()) throw std::out_of_range("label range out of bounds");
  access_.label_reads += count;
  return {labels_.begin() + static_cast<std::ptrdiff_t>(begin),
          labels_.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return Dataset(images(indices), labels(indices), num_classes_);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

std::size_t infer_classes(const std::vector<int>& labels, std::size_t requested) {
  if (requested) return requested;
  int top = 0;
  for (int l : labels) top = std::max(top, l);
  return static_cast<std::size_t>(top) + 1;
}

}  // namespace

Tensor read_idx(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4) {
    throw DatasetError(path.string() + ": truncated IDX header, expected at least 4 bytes, got " +
                           std::to_string(bytes.size()),
                       bytes.size());
  }
  if (bytes[0] != 0 || bytes[1] != 0) throw DatasetError(path.string() + ": bad IDX magic", 0);
  if (bytes[2] != 0x08) {
    char code[8];
    std::snprintf(code, sizeof code, "0x%02x", bytes[2]);
    throw DatasetError(path.string() + ": unsupported IDX element type " + code + " (only unsigned byte)", 2);
  }
  const std::size_t rank = bytes[3];
  if (rank == 0) throw DatasetError(path.string() + ": IDX rank must be positive", 3);
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) {
    throw DatasetError(path.string() + ": truncated IDX header, expected " + std::to_string(header) +
                           " bytes, got " + std::to_string(bytes.size()),
                       bytes.size());
  }
  Shape dims;
  for (std::size_t i = 0; i < rank; ++i) dims.push_back(read_be32(bytes, 4 + 4 * i));
  const std::size_t expected = header + shape_size(dims);
  if (bytes.size() != expected) {
    throw DatasetError(path.string() + ": expected " + std::to_string(expected) + " bytes for dims " +
                           shape_to_string(dims) + ", got " + std::to_string(bytes.size()),
                       std::min(bytes.size(), expected));
  }
  std::vector<double> values(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return Tensor(std::move(dims), std::move(values));
}

void write_idx(const std::filesystem::path& path, std::span<const std::uint8_t> payload, const Shape& dims) {
  if (shape_size(dims) != payload.size()) throw std::invalid_argument("IDX payload does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint8_t head[4] = {0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  out.write(reinterpret_cast<const char*>(head), 4);
  for (std::size_t d : dims) {
    const auto v = static_cast<std::uint32_t>(d);
    const std::uint8_t be[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                                static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(be), 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes) {
  Tensor pixels = read_idx(images);
  if (pixels.rank() < 2) throw DatasetError(images.string() + ": image file must have rank >= 2", 3);
  for (double& v : pixels.values()) v /= 255.0;
  const Tensor raw_labels = read_idx(labels);
  if (raw_labels.rank() != 1) throw DatasetError(labels.string() + ": label file must have rank 1", 3);
  if (raw_labels.size() != pixels.dim(0)) {
    throw DatasetError(labels.string() + ": " + std::to_string(raw_labels.size()) + " labels for " +
                           std::to_string(pixels.dim(0)) + " images",
                       4);
  }
  std::vector<int> ys(raw_labels.size());
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = static_cast<int>(raw_labels[i]);
  const std::size_t classes = infer_classes(ys, num_classes);
  return Dataset(std::move(pixels), std::move(ys), classes);
}

Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes) {
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::vector<int> ys;
  std::vector<double> pixels;
  std::size_t width = 0;
  std::size_t pos = 0;
  bool first_line = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t line_start = pos;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<long> fields;
    std::size_t cursor = 0;
    bool numeric = true;
    while (cursor <= line.size()) {
      std::size_t comma = line.find(',', cursor);
      if (comma == std::string_view::npos) comma = line.size();
      const std::string_view field = line.substr(cursor, comma - cursor);
      long v = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        numeric = false;
        if (!first_line) {
          throw DatasetError(path.string() + ": non-integer field '" + std::string(field) + "'",
                             line_start + cursor);
        }
        break;
      }
      fields.push_back(v);
      cursor = comma + 1;
    }
    const bool header = first_line && !numeric;
    first_line = false;
    if (header) continue;
    if (fields.size() < 2) throw DatasetError(path.string() + ": row needs a label and pixels", line_start);
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width) {
      throw DatasetError(path.string() + ": expected " + std::to_string(width) + " pixels, got " +
                             std::to_string(fields.size() - 1),
                         line_start);
    }
    if (fields[0] < 0) throw DatasetError(path.string() + ": negative label", line_start);
    ys.push_back(static_cast<int>(fields[0]));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (fields[i] < 0 || fields[i] > 255) {
        throw DatasetError(path.string() + ": pixel value " + std::to_string(fields[i]) + " outside 0..255",
                           line_start);
      }
      pixels.push_back(static_cast<double>(fields[i]) / 255.0);
    }
  }
  if (ys.empty()) throw DatasetError(path.string() + ": no samples", bytes.size());
  Shape shape = width == 784 ? Shape{ys.size(), 28, 28} : Shape{ys.size(), width};
  const std::size_t classes = infer_classes(ys, num_classes);
  return Dataset(Tensor(std::move(shape), std::move(pixels)), std::move(ys), classes);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::filesystem::path& labels, std::size_t num_classes) {
  if (format == DatasetFormat::Csv) return load_csv_dataset(path, num_classes);
  return load_idx_dataset(path, labels, num_classes);
}

}  // namespace bfa
