#include "sseg/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "sseg/png_io.hpp"

namespace fs = std::filesystem;

namespace sseg {

DirectoryPatchSource::DirectoryPatchSource(const std::string& dir) : dir_(dir) {
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) throw io_error("dataset directory not found: " + dir_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    // patch_<idx>.png, skipping the paired *_mask.png files
    if (name.rfind("patch_", 0) != 0 || name.size() < 11) continue;
    if (name.find("_mask") != std::string::npos) continue;
    if (name.substr(name.size() - 4) != ".png") continue;
    const std::string digits = name.substr(6, name.size() - 10);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    indices_.push_back(std::stol(digits));
  }
  std::sort(indices_.begin(), indices_.end());
}

TrainingExample DirectoryPatchSource::at(std::size_t i) const {
  const long idx = indices_[i];
  const std::string stem = dir_ + "/patch_" + std::to_string(idx);
  TrainingExample ex;
  ex.image = read_png_gray(stem + ".png");
  ex.label = read_png_mask(stem + "_mask.png");
  if (ex.image.width != ex.label.width || ex.image.height != ex.label.height)
    throw io_error("patch/mask size mismatch at index " + std::to_string(idx));
  return ex;
}

Tensor pack_mask_batch(const std::vector<const MaskImage*>& masks, int num_classes) {
  if (masks.empty()) throw shape_error("pack_mask_batch: empty batch");
  if (num_classes < 2) throw config_error("pack_mask_batch: need at least 2 classes");
  const int w = masks[0]->width, h = masks[0]->height;
  for (const auto* m : masks)
    if (m->width != w || m->height != h) throw shape_error("pack_mask_batch: mismatched sizes");
  Tensor out({static_cast<int>(masks.size()), num_classes, h, w}, 0.0f);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < masks.size(); ++n) {
    float* base = out.data() + n * static_cast<std::size_t>(num_classes) * plane;
    const auto& pix = masks[n]->pixels;
    for (std::size_t p = 0; p < plane; ++p) {
      const int cls = pix[p] ? 1 : 0;
      base[static_cast<std::size_t>(cls) * plane + p] = 1.0f;
    }
  }
  return out;
}

}  // namespace sseg
