#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sseg/image.hpp"
#include "sseg/rng.hpp"

namespace sseg {

// Geometry and intensity parameters of one placed sentence. Rotation and
// scaling act about the sentence center; translation is in canvas pixels;
// offset lightens the ink in inverted-intensity space.
struct TransformParams {
  double scale = 1.0;
  double rotation_deg = 0.0;
  int translate_x = 0;
  int translate_y = 0;
  int offset = 0;
};

struct SynthConfig {
  int patch_size = 256;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double rotation_max_deg = 10.0;
  int offset_max = 80;
  int min_sentences = 1;
  int max_sentences = 3;
  int retry_budget = 10;
};

void validate(const SynthConfig& config);

struct PlacedSentence {
  int sentence_id = 0;
  TransformParams params;
};

struct PatchProvenance {
  std::uint64_t rng_seed = 0;
  int printed_id = 0;  // filled by the dataset synthesizer
  int crop_x = 0;
  int crop_y = 0;
  std::vector<PlacedSentence> sentences;
};

struct LabeledPatch {
  GrayImage image;
  MaskImage label;
  PatchProvenance provenance;
};

// Histogram threshold maximizing between-class variance over 256 bins;
// pixels strictly below the returned value are ink. Smallest maximizer wins
// ties. Throws on constant images (degenerate histogram).
int otsu_threshold(const GrayImage& img);

// Isolates handwritten strokes: mask = pixel < otsu threshold, ink keeps the
// original intensity under the mask and is pure white elsewhere, which also
// removes the block artifacts around concatenated word images.
std::pair<GrayImage, MaskImage> extract_handwritten(const GrayImage& sentence);

// Resamples ink (bilinear) and mask (same geometry, re-binarized at 0.5) onto
// a canvas of the given size. Throws PlacementError when no mask pixel lands
// on the canvas.
std::pair<GrayImage, MaskImage> apply_transform(const GrayImage& ink, const MaskImage& mask,
                                                const TransformParams& params, int canvas_w,
                                                int canvas_h);

// Adds document layers in inverted intensities so white backgrounds never
// saturate and the printed page's scan noise survives untouched:
//   out = 255 - min(255, (255 - printed) + m * max(0, (255 - ink) - offset))
GrayImage invert_compose(const GrayImage& printed, const GrayImage& ink, const MaskImage& mask,
                         int offset);

// One labeled patch: random crop of the printed page, 1..k sentences
// extracted, transformed, offset and composed; the label is the union of the
// placed sentence masks.
LabeledPatch synthesize_patch(const GrayImage& printed_page,
                              const std::vector<GrayImage>& sentences, const SynthConfig& config,
                              Rng& rng);

struct DatasetSources {
  std::vector<std::string> printed_paths;
  std::vector<std::string> handwritten_paths;
};

// {"printed": [paths...], "handwritten": [paths...]}; relative paths resolve
// against the manifest's directory.
DatasetSources load_sources_manifest(const std::string& json_path);

// Sorted *.png listings of two directories.
DatasetSources scan_source_dirs(const std::string& printed_dir,
                                const std::string& handwritten_dir);

struct SynthDatasetOptions {
  SynthConfig config;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

// Writes out_dir/train and out_dir/val with patch_<idx>.png plus
// patch_<idx>_mask.png pairs and a manifest.json recording seed, config and
// per-patch provenance. Byte-identical for identical (sources, counts, seed).
void synthesize_dataset(const DatasetSources& sources, const SynthDatasetOptions& options);

// Re-runs generation from a manifest's recorded seed/config/sources.
void resynthesize_from_manifest(const std::string& manifest_path, const std::string& out_dir);

}  // namespace sseg
