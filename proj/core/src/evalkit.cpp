#include "sseg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace sseg {

template <typename T>
MaskImage decode_segmentation(const TensorT<T>& y, int batch_index) {
  if (y.rank() != 4) throw shape_error("decode expects [batch, 2, H, W]");
  if (y.dim(1) != 2) throw numeric_error("decode expects exactly 2 channels");
  if (batch_index < 0 || batch_index >= y.dim(0))
    throw shape_error("decode batch index out of range");
  const int height = y.dim(2), width = y.dim(3);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const T* base = y.data() + static_cast<std::size_t>(batch_index) * 2 * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    const double sum = static_cast<double>(base[p]) + static_cast<double>(base[plane + p]);
    if (!std::isfinite(sum) || std::abs(sum - 1.0) > 1e-4)
      throw numeric_error("decode input is not a per-pixel distribution");
  }
  MaskImage mask(width, height);
  for (std::size_t p = 0; p < plane; ++p)
    mask.pixels[p] = base[plane + p] > base[p] ? 1 : 0;  // tie -> background
  return mask;
}

template MaskImage decode_segmentation(const TensorT<float>&, int);
template MaskImage decode_segmentation(const TensorT<double>&, int);

double iou(const MaskImage& pred, const MaskImage& gt, int class_id) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw shape_error("iou mask dimension mismatch");
  if (class_id != 0 && class_id != 1) throw config_error("iou class id must be 0 or 1");
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool a = (pred.pixels[i] != 0) == (class_id == 1);
    const bool b = (gt.pixels[i] != 0) == (class_id == 1);
    inter += (a && b);
    uni += (a || b);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

IoUAccumulator::IoUAccumulator(int num_classes)
    : intersection_(static_cast<std::size_t>(num_classes), 0),
      union_(static_cast<std::size_t>(num_classes), 0) {
  if (num_classes != 2)
    throw config_error("IoU accumulation is implemented for the 2-class task only");
}

void IoUAccumulator::add(const MaskImage& pred, const MaskImage& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw shape_error("iou mask dimension mismatch");
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool a = pred.pixels[i] != 0;
    const bool b = gt.pixels[i] != 0;
    intersection_[1] += (a && b);
    union_[1] += (a || b);
    intersection_[0] += (!a && !b);
    union_[0] += (!a || !b);
  }
}

void IoUAccumulator::merge(const IoUAccumulator& other) {
  if (other.intersection_.size() != intersection_.size())
    throw config_error("IoUAccumulator class count mismatch");
  for (std::size_t c = 0; c < intersection_.size(); ++c) {
    intersection_[c] += other.intersection_[c];
    union_[c] += other.union_[c];
  }
}

IoUReport IoUAccumulator::report() const {
  IoUReport rep;
  for (std::size_t c = 0; c < intersection_.size(); ++c) {
    ClassIoU ci;
    ci.intersection = intersection_[c];
    ci.union_count = union_[c];
    ci.iou = ci.union_count == 0
                 ? 1.0
                 : static_cast<double>(ci.intersection) / static_cast<double>(ci.union_count);
    rep.classes.push_back(ci);
  }
  return rep;
}

double ocr_accuracy(const OcrCounts& counts) {
  if (counts.correct < 0 || counts.incorrect < 0 || counts.missing < 0)
    throw config_error("OCR counts must be non-negative");
  const long long total = counts.correct + counts.incorrect + counts.missing;
  if (total == 0) throw numeric_error("OCR accuracy undefined for all-zero counts");
  const double pct = 100.0 * static_cast<double>(counts.correct) / static_cast<double>(total);
  return std::floor(pct * 100.0 + 0.5) / 100.0;  // half-up to 2 decimals
}

OcrCounts read_ocr_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open OCR counts file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed OCR counts file " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("correct") || !j.contains("incorrect") ||
      !j.contains("missing"))
    throw config_error("OCR counts file must contain correct/incorrect/missing: " + path);
  OcrCounts counts;
  counts.correct = j.at("correct").get<long long>();
  counts.incorrect = j.at("incorrect").get<long long>();
  counts.missing = j.at("missing").get<long long>();
  return counts;
}

FillPolicy fill_policy_from_string(const std::string& name) {
  if (name == "white") return FillPolicy::white;
  if (name == "background-median") return FillPolicy::background_median;
  throw config_error("unknown fill policy: " + name + " (expected white|background-median)");
}

GrayImage remove_handwritten(const GrayImage& img, const MaskImage& pred, FillPolicy fill) {
  if (img.width != pred.width || img.height != pred.height)
    throw shape_error("remove_handwritten dimension mismatch");
  std::uint8_t fill_value = 255;
  if (fill == FillPolicy::background_median) {
    std::vector<std::uint8_t> background;
    background.reserve(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      if (pred.pixels[i] == 0) background.push_back(img.pixels[i]);
    if (!background.empty()) {
      const std::size_t mid = (background.size() - 1) / 2;  // lower median
      std::nth_element(background.begin(), background.begin() + static_cast<std::ptrdiff_t>(mid),
                       background.end());
      fill_value = background[mid];
    }
  }
  GrayImage out = img;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    if (pred.pixels[i] != 0) out.pixels[i] = fill_value;
  return out;
}

std::vector<std::uint8_t> render_overlay(const GrayImage& img, const MaskImage& mask) {
  if (img.width != mask.width || img.height != mask.height)
    throw shape_error("overlay dimension mismatch");
  std::vector<std::uint8_t> rgb(img.pixels.size() * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::uint8_t g = img.pixels[i];
    if (mask.pixels[i]) {
      rgb[3 * i] = static_cast<std::uint8_t>((g + 255) / 2);
      rgb[3 * i + 1] = static_cast<std::uint8_t>(g / 2);
      rgb[3 * i + 2] = static_cast<std::uint8_t>(g / 2);
    } else {
      rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = g;
    }
  }
  return rgb;
}

IoUReport evaluate_source(const UNetConfig& config, const ParameterSet& params,
                          const PatchSource& source, int batch_size) {
  if (source.size() == 0) throw config_error("evaluation dataset is empty");
  if (batch_size < 1) throw config_error("evaluation batch size must be >= 1");
  IoUAccumulator acc(config.num_classes);
  std::vector<TrainingExample> batch;
  for (std::size_t start = 0; start < source.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(source.size(), start + static_cast<std::size_t>(batch_size));
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(source.at(i));
    std::vector<const GrayImage*> images;
    for (const auto& ex : batch) images.push_back(&ex.image);
    const Tensor probs = unet_forward(config, params, pack_image_batch(images));
    for (std::size_t i = 0; i < batch.size(); ++i)
      acc.add(decode_segmentation(probs, static_cast<int>(i)), batch[i].label);
  }
  return acc.report();
}

IoUReport evaluate_dataset(const UNetConfig& config, const ParameterSet& params,
                           const std::string& dataset_dir, int batch_size) {
  DirectoryPatchSource source(dataset_dir);
  return evaluate_source(config, params, source, batch_size);
}

void write_report_json(const std::string& path, const IoUReport& report,
                       const std::string& config_hash, const std::string& checkpoint_hash) {
  nlohmann::json j;
  j["classes"] = nlohmann::json::array();
  static const char* kNames[] = {"non_handwritten", "handwritten"};
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    nlohmann::json cls;
    cls["class"] = c;
    cls["name"] = c < 2 ? kNames[c] : ("class_" + std::to_string(c));
    cls["intersection"] = report.classes[c].intersection;
    cls["union"] = report.classes[c].union_count;
    cls["iou"] = report.classes[c].iou;
    j["classes"].push_back(cls);
  }
  j["config_hash"] = config_hash;
  j["checkpoint_hash"] = checkpoint_hash;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write report: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("report write failed: " + path);
}

}  // namespace sseg
