#pragma once

// Labelled image datasets and their on-disk formats.
//
// IDX (big-endian): two zero bytes, element type (0x08 = unsigned byte), rank,
// then rank big-endian uint32 dimensions, then the payload. Image files are
// rank 3 ([count, rows, cols]), label files rank 1.
//
// CSV: one sample per line, "label,p0,p1,...", pixel values in 0..255. An
// optional header line whose first field is not an integer is skipped. 784
// pixels are read as a 28x28 image, any other count as a flat vector.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfa/tensor.hpp"

namespace bfa {

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::size_t byte_offset);
  std::size_t byte_offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Counts of individual sample reads, for auditing which code paths touch data.
struct AccessCounters {
  std::size_t image_reads = 0;
  std::size_t label_reads = 0;
};

class Dataset {
 public:
  Dataset() = default;
  // images: [count, ...]; labels in [0, num_classes).
  Dataset(Tensor images, std::vector<int> labels, std::size_t num_classes);

  std::size_t size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  Shape sample_shape() const;
  const Shape& shape() const { return images_.shape(); }

  Tensor images(std::span<const std::size_t> indices) const;
  Tensor images(std::size_t begin, std::size_t count) const;
  int label(std::size_t index) const;
  std::vector<int> labels(std::span<const std::size_t> indices) const;
  std::vector<int> labels(std::size_t begin, std::size_t count) const;

  Dataset subset(std::span<const std::size_t> indices) const;

  const AccessCounters& access() const { return access_; }
  void reset_access() const { access_ = {}; }

 private:
  Tensor images_;
  std::vector<int> labels_;
  std::size_t num_classes_ = 0;
  mutable AccessCounters access_;
};

enum class DatasetFormat { Idx, Csv };

// Raw IDX payload as doubles, unscaled, shaped by the header dimensions.
Tensor read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, std::span<const std::uint8_t> payload, const Shape& dims);

// num_classes == 0 infers max(label) + 1.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes = 0);
Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes = 0);

// For Idx, `path` names the image file and `labels` the label file; for Csv
// `labels` is ignored.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::filesystem::path& labels = {}, std::size_t num_classes = 0);

}  // namespace bfa
