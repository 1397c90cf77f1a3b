#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sseg/dataset.hpp"
#include "sseg/image.hpp"
#include "sseg/tensor.hpp"
#include "sseg/unet.hpp"

namespace sseg {

// Per-class pixel tallies pooled over a whole dataset; iou is
// intersection/union, defined as 1 when the union is empty.
struct ClassIoU {
  long long intersection = 0;
  long long union_count = 0;
  double iou = 1.0;
};

struct IoUReport {
  std::vector<ClassIoU> classes;  // indexed by class id; 1 = handwritten
};

// Argmax over the two channels of one batch item; an exact 0.5/0.5 tie
// decodes to background.
template <typename T>
MaskImage decode_segmentation(const TensorT<T>& y, int batch_index = 0);

// Pixel-set IoU for one class over a mask pair. Empty union yields 1.
double iou(const MaskImage& pred, const MaskImage& gt, int class_id);

// Order-independent pooled accumulation: merge per-image counts, divide once.
class IoUAccumulator {
 public:
  explicit IoUAccumulator(int num_classes = 2);
  void add(const MaskImage& pred, const MaskImage& gt);
  void merge(const IoUAccumulator& other);
  IoUReport report() const;

 private:
  std::vector<long long> intersection_;
  std::vector<long long> union_;
};

struct OcrCounts {
  long long correct = 0;
  long long incorrect = 0;
  long long missing = 0;
};

// 100 * correct / (correct + incorrect + missing), rounded half-up to two
// decimals.
double ocr_accuracy(const OcrCounts& counts);

// Reads {"correct": n, "incorrect": n, "missing": n} from a JSON file; no OCR
// engine is bundled, only the metric over externally produced counts.
OcrCounts read_ocr_counts(const std::string& path);

enum class FillPolicy { white, background_median };

FillPolicy fill_policy_from_string(const std::string& name);

// Replaces predicted handwritten pixels per the fill policy; every other
// pixel is bit-identical to the input.
GrayImage remove_handwritten(const GrayImage& img, const MaskImage& pred, FillPolicy fill);

// Red alpha-blend of the mask over a grayscale page, packed RGB.
std::vector<std::uint8_t> render_overlay(const GrayImage& img, const MaskImage& mask);

// Runs inference over every patch and pools intersections/unions across the
// dataset before dividing (dataset-level IoU, not a per-image mean).
IoUReport evaluate_source(const UNetConfig& config, const ParameterSet& params,
                          const PatchSource& source, int batch_size = 16);

IoUReport evaluate_dataset(const UNetConfig& config, const ParameterSet& params,
                           const std::string& dataset_dir, int batch_size = 16);

void write_report_json(const std::string& path, const IoUReport& report,
                       const std::string& config_hash, const std::string& checkpoint_hash);

}  // namespace sseg
