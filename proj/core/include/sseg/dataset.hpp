#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sseg/image.hpp"
#include "sseg/tensor.hpp"

namespace sseg {

struct TrainingExample {
  GrayImage image;
  MaskImage label;
};

// Read-only source of labeled patches. at() must be pure so batch assembly
// can run from multiple workers.
class PatchSource {
 public:
  virtual ~PatchSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainingExample at(std::size_t i) const = 0;
};

class MemoryPatchSource : public PatchSource {
 public:
  explicit MemoryPatchSource(std::vector<TrainingExample> examples)
      : examples_(std::move(examples)) {}
  std::size_t size() const override { return examples_.size(); }
  TrainingExample at(std::size_t i) const override { return examples_[i]; }

 private:
  std::vector<TrainingExample> examples_;
};

// Lazily loads patch_<idx>.png / patch_<idx>_mask.png pairs from a dataset
// split directory (as written by the synthesizer). Indices are sorted so
// iteration order is stable.
class DirectoryPatchSource : public PatchSource {
 public:
  explicit DirectoryPatchSource(const std::string& dir);
  std::size_t size() const override { return indices_.size(); }
  TrainingExample at(std::size_t i) const override;

 private:
  std::string dir_;
  std::vector<long> indices_;
};

// Packs one-hot targets for a batch of masks: [batch, classes, H, W] with
// channel 1 carrying the handwritten label.
Tensor pack_mask_batch(const std::vector<const MaskImage*>& masks, int num_classes);

}  // namespace sseg
