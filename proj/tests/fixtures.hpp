#pragma once

// Deterministic synthetic source material for tests: "printed" pages with
// text-like bands, rules and scan noise, and "handwritten" sentence strips
// with thin wandering strokes. Everything derives from sseg::Rng so fixtures
// are bit-stable across runs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sseg/dataset.hpp"
#include "sseg/image.hpp"
#include "sseg/png_io.hpp"
#include "sseg/rng.hpp"
#include "sseg/synth.hpp"

namespace testsupport {

inline sseg::GrayImage draw_printed_page(int width, int height, std::uint64_t seed) {
  using namespace sseg;
  Rng rng(seed);
  GrayImage page(width, height);
  for (auto& p : page.pixels) p = static_cast<std::uint8_t>(235 + rng.uniform_int(0, 20));

  // text bands: rows of dark word-like runs separated by gaps
  for (int band_top = 6; band_top + 5 < height; band_top += 11) {
    int x = static_cast<int>(rng.uniform_int(2, 6));
    while (x < width - 4) {
      const int run = static_cast<int>(rng.uniform_int(4, 14));
      const int gap = static_cast<int>(rng.uniform_int(2, 6));
      const auto shade = static_cast<std::uint8_t>(rng.uniform_int(25, 90));
      for (int dy = 1; dy < 5; ++dy)
        for (int dx = 0; dx < run && x + dx < width; ++dx)
          page.at(x + dx, band_top + dy) = shade;
      x += run + gap;
    }
  }

  // a couple of table rules
  const int rule_row = height / 2;
  for (int x = 0; x < width; ++x) page.at(x, rule_row) = 40;
  const int rule_col = static_cast<int>(rng.uniform_int(width / 4, 3 * width / 4));
  for (int y = 0; y < height; ++y) page.at(rule_col, y) = 40;
  return page;
}

inline sseg::GrayImage draw_sentence(int width, int height, std::uint64_t seed) {
  using namespace sseg;
  Rng rng(seed);
  GrayImage strip(width, height);
  for (auto& p : strip.pixels) p = static_cast<std::uint8_t>(240 + rng.uniform_int(0, 15));

  int y = height / 2;
  const auto base_shade = static_cast<int>(rng.uniform_int(15, 70));
  for (int x = 1; x < width - 1; ++x) {
    y += static_cast<int>(rng.uniform_int(-1, 1));
    y = std::clamp(y, 1, height - 2);
    // short gaps between "words"
    if (rng.uniform_int(0, 11) == 0) {
      x += static_cast<int>(rng.uniform_int(1, 3));
      continue;
    }
    const auto shade =
        static_cast<std::uint8_t>(std::clamp(base_shade + static_cast<int>(rng.uniform_int(-10, 10)), 5, 100));
    strip.at(x, y) = shade;
    if (rng.uniform_int(0, 2) == 0 && y + 1 < height - 1) strip.at(x, y + 1) = shade;
  }
  return strip;
}

// Labeled patches produced by the real synthesis pipeline over the synthetic
// sources above.
inline sseg::MemoryPatchSource tiny_dataset(std::size_t count, int patch_size,
                                            std::uint64_t seed) {
  using namespace sseg;
  const GrayImage page = draw_printed_page(patch_size * 3, patch_size * 3, derive_seed(seed, 900));
  std::vector<GrayImage> sentences;
  for (int i = 0; i < 3; ++i)
    sentences.push_back(draw_sentence(patch_size * 2, std::max(8, patch_size / 3),
                                      derive_seed(seed, 950 + static_cast<std::uint64_t>(i))));
  SynthConfig config;
  config.patch_size = patch_size;
  config.scale_min = 0.6;
  config.scale_max = 1.0;
  config.rotation_max_deg = 8.0;
  config.offset_max = 40;
  config.min_sentences = 1;
  config.max_sentences = 2;

  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    LabeledPatch patch = synthesize_patch(page, sentences, config, rng);
    examples.push_back({std::move(patch.image), std::move(patch.label)});
  }
  return MemoryPatchSource(std::move(examples));
}

// Writes printed/ and handwritten/ PNG source directories for CLI and
// dataset-level tests. Returns the two directory paths.
inline std::pair<std::string, std::string> write_source_dirs(const std::string& root,
                                                             int num_pages, int num_sentences,
                                                             int page_size,
                                                             std::uint64_t seed) {
  namespace fs = std::filesystem;
  using namespace sseg;
  const fs::path printed_dir = fs::path(root) / "printed";
  const fs::path handwritten_dir = fs::path(root) / "handwritten";
  fs::create_directories(printed_dir);
  fs::create_directories(handwritten_dir);
  for (int i = 0; i < num_pages; ++i)
    write_png_gray((printed_dir / ("page_" + std::to_string(i) + ".png")).string(),
                   draw_printed_page(page_size, page_size,
                                     derive_seed(seed, 10'000 + static_cast<std::uint64_t>(i))));
  for (int i = 0; i < num_sentences; ++i)
    write_png_gray((handwritten_dir / ("sent_" + std::to_string(i) + ".png")).string(),
                   draw_sentence(page_size / 2, std::max(12, page_size / 6),
                                 derive_seed(seed, 20'000 + static_cast<std::uint64_t>(i))));
  return {printed_dir.string(), handwritten_dir.string()};
}

}  // namespace testsupport
