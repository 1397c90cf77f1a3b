#include "sseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "sseg/parallel.hpp"
#include "sseg/png_io.hpp"

namespace fs = std::filesystem;

namespace sseg {

void validate(const SynthConfig& config) {
  if (config.patch_size < 1) throw config_error("patch_size must be >= 1");
  if (!(config.scale_min > 0) || config.scale_max < config.scale_min)
    throw config_error("scale range invalid");
  if (config.rotation_max_deg < 0) throw config_error("rotation_max_deg must be >= 0");
  if (config.offset_max < 0) throw config_error("offset_max must be >= 0");
  if (config.min_sentences < 0 || config.max_sentences < config.min_sentences)
    throw config_error("sentences-per-patch range invalid");
  if (config.retry_budget < 1) throw config_error("retry_budget must be >= 1");
}

int otsu_threshold(const GrayImage& img) {
  long long hist[256] = {};
  for (std::uint8_t p : img.pixels) ++hist[p];

  const auto total = static_cast<long long>(img.pixels.size());
  long long total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += hist[v] * v;

  // Candidates t split pixels into {p < t} and {p >= t}. Scores are computed
  // from exact integer counts/sums so ties are decided identically no matter
  // how the counting was done.
  long long count_below = 0, sum_below = 0;
  double best_score = -1.0;
  int best_t = -1;
  for (int t = 1; t <= 255; ++t) {
    count_below += hist[t - 1];
    sum_below += hist[t - 1] * (t - 1);
    const long long count_above = total - count_below;
    if (count_below == 0 || count_above == 0) continue;
    const double mu0 = static_cast<double>(sum_below) / static_cast<double>(count_below);
    const double mu1 =
        static_cast<double>(total_sum - sum_below) / static_cast<double>(count_above);
    const double diff = mu0 - mu1;
    const double score =
        static_cast<double>(count_below) * static_cast<double>(count_above) * diff * diff;
    if (score > best_score) {
      best_score = score;
      best_t = t;
    }
  }
  if (best_t < 0)
    throw numeric_error("otsu: degenerate histogram (image has a single intensity)");
  return best_t;
}

std::pair<GrayImage, MaskImage> extract_handwritten(const GrayImage& sentence) {
  const int threshold = otsu_threshold(sentence);
  GrayImage ink(sentence.width, sentence.height, 255);
  MaskImage mask(sentence.width, sentence.height, 0);
  for (std::size_t i = 0; i < sentence.pixels.size(); ++i) {
    if (sentence.pixels[i] < threshold) {
      mask.pixels[i] = 1;
      ink.pixels[i] = sentence.pixels[i];
    }
  }
  return {std::move(ink), std::move(mask)};
}

namespace {

struct InverseMap {
  // p = R(-theta) ((q - tr) - c) / s + c
  double cos_t, sin_t, inv_scale;
  double cx, cy;
  double tx, ty;

  InverseMap(const TransformParams& params, int src_w, int src_h) {
    const double rad = params.rotation_deg * std::numbers::pi / 180.0;
    cos_t = std::cos(rad);
    sin_t = std::sin(rad);
    inv_scale = 1.0 / params.scale;
    cx = (src_w - 1) / 2.0;
    cy = (src_h - 1) / 2.0;
    tx = static_cast<double>(params.translate_x);
    ty = static_cast<double>(params.translate_y);
  }

  void operator()(double qx, double qy, double& px, double& py) const {
    const double dx = qx - tx - cx;
    const double dy = qy - ty - cy;
    // inverse rotation = rotation by -theta
    const double rx = cos_t * dx + sin_t * dy;
    const double ry = -sin_t * dx + cos_t * dy;
    px = rx * inv_scale + cx;
    py = ry * inv_scale + cy;
  }
};

double bilinear(const GrayImage& img, double x, double y, double outside) {
  const double x0f = std::floor(x), y0f = std::floor(y);
  const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  const double fx = x - x0f, fy = y - y0f;
  auto sample = [&](int xi, int yi) -> double {
    if (xi < 0 || xi >= img.width || yi < 0 || yi >= img.height) return outside;
    return static_cast<double>(img.at(xi, yi));
  };
  const double top = sample(x0, y0) * (1.0 - fx) + sample(x0 + 1, y0) * fx;
  const double bottom = sample(x0, y0 + 1) * (1.0 - fx) + sample(x0 + 1, y0 + 1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

double bilinear_mask(const MaskImage& mask, double x, double y) {
  const double x0f = std::floor(x), y0f = std::floor(y);
  const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  const double fx = x - x0f, fy = y - y0f;
  auto sample = [&](int xi, int yi) -> double {
    if (xi < 0 || xi >= mask.width || yi < 0 || yi >= mask.height) return 0.0;
    return mask.at(xi, yi) ? 1.0 : 0.0;
  };
  const double top = sample(x0, y0) * (1.0 - fx) + sample(x0 + 1, y0) * fx;
  const double bottom = sample(x0, y0 + 1) * (1.0 - fx) + sample(x0 + 1, y0 + 1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace

std::pair<GrayImage, MaskImage> apply_transform(const GrayImage& ink, const MaskImage& mask,
                                                const TransformParams& params, int canvas_w,
                                                int canvas_h) {
  if (ink.width != mask.width || ink.height != mask.height)
    throw shape_error("apply_transform: ink/mask dimension mismatch");
  if (!(params.scale > 0)) throw config_error("apply_transform: scale must be > 0");
  if (params.offset < 0) throw config_error("apply_transform: offset must be >= 0");

  GrayImage out_ink(canvas_w, canvas_h, 255);
  MaskImage out_mask(canvas_w, canvas_h, 0);
  const InverseMap inverse(params, ink.width, ink.height);

  bool any = false;
  for (int y = 0; y < canvas_h; ++y) {
    for (int x = 0; x < canvas_w; ++x) {
      double px = 0, py = 0;
      inverse(static_cast<double>(x), static_cast<double>(y), px, py);
      if (px < -1.0 || px > ink.width || py < -1.0 || py > ink.height) continue;
      if (bilinear_mask(mask, px, py) >= 0.5) {
        out_mask.at(x, y) = 1;
        const double v = bilinear(ink, px, py, 255.0);
        out_ink.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        any = true;
      }
    }
  }
  if (!any) throw PlacementError("apply_transform: sentence fully clipped off the canvas");
  return {std::move(out_ink), std::move(out_mask)};
}

namespace {

// Shared accumulation core: contributions add in inverted space and a single
// clamp happens when converting back.
void accumulate_inverted(std::vector<int>& accum, const GrayImage& ink, const MaskImage& mask,
                         int offset) {
  for (std::size_t i = 0; i < accum.size(); ++i) {
    if (!mask.pixels[i]) continue;
    const int contribution = (255 - static_cast<int>(ink.pixels[i])) - offset;
    if (contribution > 0) accum[i] += contribution;
  }
}

GrayImage collapse_inverted(const std::vector<int>& accum, int width, int height) {
  GrayImage out(width, height);
  for (std::size_t i = 0; i < accum.size(); ++i)
    out.pixels[i] = static_cast<std::uint8_t>(255 - std::min(255, accum[i]));
  return out;
}

}  // namespace

GrayImage invert_compose(const GrayImage& printed, const GrayImage& ink, const MaskImage& mask,
                         int offset) {
  if (printed.width != ink.width || printed.height != ink.height ||
      printed.width != mask.width || printed.height != mask.height)
    throw shape_error("invert_compose: dimension mismatch");
  if (offset < 0) throw config_error("invert_compose: offset must be >= 0");
  std::vector<int> accum(printed.pixels.size());
  for (std::size_t i = 0; i < accum.size(); ++i) accum[i] = 255 - printed.pixels[i];
  accumulate_inverted(accum, ink, mask, offset);
  return collapse_inverted(accum, printed.width, printed.height);
}

LabeledPatch synthesize_patch(const GrayImage& printed_page,
                              const std::vector<GrayImage>& sentences, const SynthConfig& config,
                              Rng& rng) {
  validate(config);
  const int ps = config.patch_size;
  if (printed_page.width < ps || printed_page.height < ps)
    throw shape_error("printed page smaller than patch size");
  if (sentences.empty() && config.min_sentences > 0)
    throw config_error("no handwritten sentences available");

  LabeledPatch patch;
  patch.provenance.crop_x = static_cast<int>(rng.uniform_int(0, printed_page.width - ps));
  patch.provenance.crop_y = static_cast<int>(rng.uniform_int(0, printed_page.height - ps));

  GrayImage printed(ps, ps);
  for (int y = 0; y < ps; ++y)
    for (int x = 0; x < ps; ++x)
      printed.at(x, y) = printed_page.at(patch.provenance.crop_x + x, patch.provenance.crop_y + y);

  std::vector<int> accum(printed.pixels.size());
  for (std::size_t i = 0; i < accum.size(); ++i) accum[i] = 255 - printed.pixels[i];
  patch.label = MaskImage(ps, ps, 0);

  const int wanted =
      sentences.empty() ? 0
                        : static_cast<int>(rng.uniform_int(config.min_sentences,
                                                           config.max_sentences));
  for (int placed = 0; placed < wanted; ++placed) {
    bool done = false;
    for (int attempt = 0; attempt < config.retry_budget && !done; ++attempt) {
      const int sid = static_cast<int>(
          rng.uniform_int(0, static_cast<std::int64_t>(sentences.size()) - 1));
      TransformParams params;
      params.scale = rng.uniform_real(config.scale_min, config.scale_max);
      params.rotation_deg = rng.uniform_symmetric(config.rotation_max_deg);
      params.offset = static_cast<int>(rng.uniform_int(0, config.offset_max));

      try {
        auto [ink, mask] = extract_handwritten(sentences[static_cast<std::size_t>(sid)]);

        // Transformed bounding box at zero translation, used to keep the
        // sentence on the canvas when it fits.
        const double rad = params.rotation_deg * std::numbers::pi / 180.0;
        const double c = std::cos(rad), s = std::sin(rad);
        const double cx = (ink.width - 1) / 2.0, cy = (ink.height - 1) / 2.0;
        double minx = 1e30, maxx = -1e30, miny = 1e30, maxy = -1e30;
        const double corners[4][2] = {{0, 0},
                                      {static_cast<double>(ink.width - 1), 0},
                                      {0, static_cast<double>(ink.height - 1)},
                                      {static_cast<double>(ink.width - 1),
                                       static_cast<double>(ink.height - 1)}};
        for (const auto& corner : corners) {
          const double dx = (corner[0] - cx) * params.scale;
          const double dy = (corner[1] - cy) * params.scale;
          const double qx = c * dx - s * dy + cx;
          const double qy = s * dx + c * dy + cy;
          minx = std::min(minx, qx);
          maxx = std::max(maxx, qx);
          miny = std::min(miny, qy);
          maxy = std::max(maxy, qy);
        }
        const auto lo_x = static_cast<std::int64_t>(std::ceil(-minx));
        const auto hi_x = static_cast<std::int64_t>(std::floor(ps - 1 - maxx));
        const auto lo_y = static_cast<std::int64_t>(std::ceil(-miny));
        const auto hi_y = static_cast<std::int64_t>(std::floor(ps - 1 - maxy));
        params.translate_x = static_cast<int>(
            hi_x >= lo_x ? rng.uniform_int(lo_x, hi_x) : (lo_x + hi_x) / 2);
        params.translate_y = static_cast<int>(
            hi_y >= lo_y ? rng.uniform_int(lo_y, hi_y) : (lo_y + hi_y) / 2);

        auto [tink, tmask] = apply_transform(ink, mask, params, ps, ps);
        accumulate_inverted(accum, tink, tmask, params.offset);
        for (std::size_t i = 0; i < patch.label.pixels.size(); ++i)
          patch.label.pixels[i] |= tmask.pixels[i];
        patch.provenance.sentences.push_back({sid, params});
        done = true;
      } catch (const PlacementError&) {
        // retry with fresh parameters
      } catch (const Error& e) {
        if (std::string(e.what()).find("degenerate") == std::string::npos) throw;
        // constant sentence image: counts as a failed placement
      }
    }
    if (!done)
      throw numeric_error("synthesize_patch: placement retry budget exhausted");
  }

  patch.image = collapse_inverted(accum, ps, ps);
  return patch;
}

DatasetSources load_sources_manifest(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw io_error("cannot open sources manifest: " + json_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed sources manifest " + json_path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("printed") || !j.contains("handwritten"))
    throw config_error("sources manifest needs printed/handwritten arrays: " + json_path);

  const fs::path root = fs::path(json_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path.string() : (root / path).string();
  };
  DatasetSources sources;
  for (const auto& p : j.at("printed")) sources.printed_paths.push_back(resolve(p.get<std::string>()));
  for (const auto& p : j.at("handwritten"))
    sources.handwritten_paths.push_back(resolve(p.get<std::string>()));
  return sources;
}

DatasetSources scan_source_dirs(const std::string& printed_dir,
                                const std::string& handwritten_dir) {
  auto scan = [](const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw io_error("source directory not found: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().extension() == ".png") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
  };
  DatasetSources sources;
  sources.printed_paths = scan(printed_dir);
  sources.handwritten_paths = scan(handwritten_dir);
  return sources;
}

namespace {

nlohmann::json config_to_json(const SynthConfig& config) {
  return nlohmann::json{{"patch_size", config.patch_size},
                        {"scale_min", config.scale_min},
                        {"scale_max", config.scale_max},
                        {"rotation_max_deg", config.rotation_max_deg},
                        {"offset_max", config.offset_max},
                        {"min_sentences", config.min_sentences},
                        {"max_sentences", config.max_sentences},
                        {"retry_budget", config.retry_budget}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig config;
  config.patch_size = j.at("patch_size").get<int>();
  config.scale_min = j.at("scale_min").get<double>();
  config.scale_max = j.at("scale_max").get<double>();
  config.rotation_max_deg = j.at("rotation_max_deg").get<double>();
  config.offset_max = j.at("offset_max").get<int>();
  config.min_sentences = j.at("min_sentences").get<int>();
  config.max_sentences = j.at("max_sentences").get<int>();
  config.retry_budget = j.at("retry_budget").get<int>();
  return config;
}

}  // namespace

void synthesize_dataset(const DatasetSources& sources, const SynthDatasetOptions& options) {
  validate(options.config);
  if (options.out_dir.empty()) throw config_error("synthesize_dataset: out_dir required");
  if (sources.printed_paths.empty()) throw io_error("no printed source pages listed");
  if (sources.handwritten_paths.empty() && options.config.min_sentences > 0)
    throw io_error("no handwritten source sentences listed");

  std::function<void(const std::string&)> warn = options.warn;
  if (!warn)
    warn = [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); };
  const std::size_t total = options.train_count + options.val_count;
  if (total > sources.printed_paths.size())
    warn("fewer printed pages (" + std::to_string(sources.printed_paths.size()) +
         ") than requested patches (" + std::to_string(total) +
         "); sampling pages with replacement");

  // Load every source up front; a missing file fails before anything is
  // written.
  std::vector<GrayImage> printed;
  printed.reserve(sources.printed_paths.size());
  for (const auto& p : sources.printed_paths) printed.push_back(read_png_gray(p));
  std::vector<GrayImage> handwritten;
  handwritten.reserve(sources.handwritten_paths.size());
  for (const auto& p : sources.handwritten_paths) handwritten.push_back(read_png_gray(p));

  const fs::path out_root(options.out_dir);
  std::error_code ec;
  fs::create_directories(out_root / "train", ec);
  fs::create_directories(out_root / "val", ec);
  if (!fs::is_directory(out_root / "train") || !fs::is_directory(out_root / "val"))
    throw io_error("cannot create dataset directories under " + options.out_dir);

  std::vector<PatchProvenance> provenance(total);

  // Every patch derives its own stream from (seed, global index), so any
  // execution order produces identical bytes.
  parallel_for(total, [&](std::size_t idx) {
    Rng rng(derive_seed(options.seed, idx));
    const auto page_id = static_cast<int>(
        rng.uniform_int(0, static_cast<std::int64_t>(printed.size()) - 1));
    LabeledPatch patch = synthesize_patch(printed[static_cast<std::size_t>(page_id)],
                                          handwritten, options.config, rng);
    patch.provenance.rng_seed = derive_seed(options.seed, idx);
    patch.provenance.printed_id = page_id;

    const bool is_train = idx < options.train_count;
    const std::size_t local = is_train ? idx : idx - options.train_count;
    const fs::path dir = out_root / (is_train ? "train" : "val");
    const std::string stem = "patch_" + std::to_string(local);
    write_png_gray((dir / (stem + ".png")).string(), patch.image);
    write_png_mask((dir / (stem + "_mask.png")).string(), patch.label);
    provenance[idx] = std::move(patch.provenance);
  });

  // Single writer emits the manifest once everything else is on disk.
  nlohmann::json manifest;
  manifest["seed"] = options.seed;
  manifest["train_count"] = options.train_count;
  manifest["val_count"] = options.val_count;
  manifest["config"] = config_to_json(options.config);
  manifest["sources"] = {{"printed", sources.printed_paths},
                         {"handwritten", sources.handwritten_paths}};
  auto patches = nlohmann::json::array();
  for (std::size_t idx = 0; idx < total; ++idx) {
    const auto& prov = provenance[idx];
    const bool is_train = idx < options.train_count;
    nlohmann::json entry;
    entry["split"] = is_train ? "train" : "val";
    entry["index"] = is_train ? idx : idx - options.train_count;
    entry["rng_seed"] = prov.rng_seed;
    entry["printed_id"] = prov.printed_id;
    entry["crop"] = {prov.crop_x, prov.crop_y};
    auto placed = nlohmann::json::array();
    for (const auto& sent : prov.sentences) {
      placed.push_back({{"sentence_id", sent.sentence_id},
                        {"scale", sent.params.scale},
                        {"rotation_deg", sent.params.rotation_deg},
                        {"translate", {sent.params.translate_x, sent.params.translate_y}},
                        {"offset", sent.params.offset}});
    }
    entry["sentences"] = placed;
    patches.push_back(entry);
  }
  manifest["patches"] = patches;

  std::ofstream out(out_root / "manifest.json", std::ios::trunc);
  if (!out) throw io_error("cannot write manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw io_error("manifest write failed");
}

void resynthesize_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("cannot open manifest: " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed manifest " + manifest_path + ": " + e.what());
  }
  SynthDatasetOptions options;
  options.seed = j.at("seed").get<std::uint64_t>();
  options.train_count = j.at("train_count").get<std::size_t>();
  options.val_count = j.at("val_count").get<std::size_t>();
  options.config = config_from_json(j.at("config"));
  options.out_dir = out_dir;
  DatasetSources sources;
  sources.printed_paths = j.at("sources").at("printed").get<std::vector<std::string>>();
  sources.handwritten_paths = j.at("sources").at("handwritten").get<std::vector<std::string>>();
  synthesize_dataset(sources, options);
}

}  // namespace sseg
