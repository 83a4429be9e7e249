#include "mlvc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace mlvc {

NormStats liaci_stats() { return {{0.348f, 0.369f, 0.352f}, {0.249f, 0.244f, 0.206f}}; }
NormStats coco_stats() { return {{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}}; }

Tensor<float> to_tensor(const ImageU8& img, const NormStats& stats, int target_size) {
  if (!img.valid()) throw IoError("to_tensor: invalid image");
  const ImageU8 resized = (img.width == target_size && img.height == target_size)
                              ? img
                              : resize_bilinear(img, target_size, target_size);
  Tensor<float> out = Tensor<float>::zeros({3, target_size, target_size});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < target_size; ++y)
      for (int x = 0; x < target_size; ++x) {
        const float v = resized.at(x, y, c) / 255.0f;
        out.data()[(c * target_size + y) * target_size + x] = (v - stats.mean[c]) / stats.std[c];
      }
  return out;
}

Tensor<float> load_and_preprocess(const std::string& path, const NormStats& stats,
                                  int target_size) {
  return to_tensor(read_ppm(path), stats, target_size);
}

namespace {

ImageU8 mix_weighted(const std::vector<ImageU8>& images, const std::vector<double>& weights) {
  ImageU8 out = images.at(0);
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    double acc = 0.0;
    for (size_t k = 0; k < images.size(); ++k) acc += weights[k] * images[k].pixels[i];
    out.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(acc), 0l, 255l));
  }
  return out;
}

ImageU8 apply_random_op(const ImageU8& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  switch (rng() % 5) {
    case 0: return adjust_brightness(img, 0.7 + 0.6 * uni(rng));
    case 1: return adjust_contrast(img, 0.7 + 0.6 * uni(rng));
    case 2: return posterize(img, 4 + static_cast<int>(rng() % 4));
    case 3: return solarize(img, 128 + static_cast<int>(rng() % 128));
    default: {
      const int dx = static_cast<int>(rng() % 9) - 4;
      const int dy = static_cast<int>(rng() % 9) - 4;
      return translate(img, dx, dy);
    }
  }
}

ImageU8 augmix_simplified(const ImageU8& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  std::vector<ImageU8> chains;
  for (int chain = 0; chain < 3; ++chain) {
    ImageU8 cur = img;
    const int depth = 1 + static_cast<int>(rng() % 3);
    for (int d = 0; d < depth; ++d) cur = apply_random_op(cur, rng);
    chains.push_back(std::move(cur));
  }
  // Dirichlet(1,1,1) chain weights via normalized exponentials
  std::vector<double> w{expo(rng), expo(rng), expo(rng)};
  const double total = w[0] + w[1] + w[2];
  for (double& v : w) v /= total;
  const ImageU8 mixed = mix_weighted(chains, w);
  const double keep_original = uni(rng);  // Beta(1,1)
  return blend(img, mixed, keep_original);
}

}  // namespace

ImageU8 augment(const ImageU8& img, uint64_t seed, const AugmentOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageU8 out = img;
  if (uni(rng) < opts.p_flip) out = hflip(out);
  if (uni(rng) < opts.p_blur) {
    const int kernel = 5 + 2 * static_cast<int>(rng() % 3);  // odd in [5, 9]
    std::uniform_real_distribution<double> sig(0.1, 5.0);
    out = gaussian_blur(out, kernel, sig(rng));
  }
  if (uni(rng) < opts.p_augmix) out = augmix_simplified(out, rng);
  return out;
}

// ---- annotation / manifest / split files ----

std::vector<AnnotatedImage> read_annotations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty annotations file: " + path);
  std::string expected = "path";
  for (const char* name : kClassNames) expected += std::string(",") + name;
  if (line != expected) throw IoError("unexpected annotations header in " + path + ": " + line);

  std::vector<AnnotatedImage> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    AnnotatedImage row;
    std::string cell;
    if (!std::getline(ss, row.path, ',')) throw IoError("bad annotations row in " + path);
    for (int c = 0; c < kNumClasses; ++c) {
      if (!std::getline(ss, cell, ','))
        throw IoError("missing label cell at " + path + ":" + std::to_string(lineno));
      if (cell != "0" && cell != "1")
        throw IoError("label cell must be 0 or 1 at " + path + ":" + std::to_string(lineno));
      row.labels.bits[c] = cell == "1";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_annotations_csv(const std::string& path, const std::vector<AnnotatedImage>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotations file: " + path);
  out << "path";
  for (const char* name : kClassNames) out << "," << name;
  out << "\n";
  for (const auto& row : rows) {
    out << row.path;
    for (int c = 0; c < kNumClasses; ++c) out << "," << (row.labels.bits[c] ? 1 : 0);
    out << "\n";
  }
}

std::vector<SnippetManifestEntry> read_snippet_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open snippet manifest: " + path);
  std::vector<SnippetManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed manifest line in " + path);
    SnippetManifestEntry e;
    const auto& frames = j.at("frames");
    if (frames.size() != 7) throw IoError("manifest entry must list 7 frames in " + path);
    for (size_t i = 0; i < 7; ++i) e.frame_paths[i] = frames[i].get<std::string>();
    const auto& labels = j.at("labels");
    if (labels.size() != kNumClasses) throw IoError("manifest entry needs 9 labels in " + path);
    for (int c = 0; c < kNumClasses; ++c) e.labels.bits[c] = labels[c].get<int>() != 0;
    e.center_path = j.at("center").get<std::string>();
    if (e.center_path != e.frame_paths[3])
      throw IoError("manifest center is not the middle frame in " + path);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_snippet_manifest(const std::string& path,
                            const std::vector<SnippetManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write snippet manifest: " + path);
  for (const auto& e : entries) {
    nlohmann::json j;
    j["frames"] = e.frame_paths;
    std::array<int, kNumClasses> labels{};
    for (int c = 0; c < kNumClasses; ++c) labels[c] = e.labels.bits[c] ? 1 : 0;
    j["labels"] = labels;
    j["center"] = e.center_path;
    out << j.dump() << "\n";
  }
}

SplitSpec read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file: " + path);
  nlohmann::json j;
  in >> j;
  SplitSpec s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.unused = j.at("unused").get<std::vector<std::string>>();
  return s;
}

void write_split(const std::string& path, const SplitSpec& split) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split file: " + path);
  nlohmann::json j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["unused"] = split.unused;
  out << j.dump(2) << "\n";
}

// ---- snippet extraction ----

SnippetExtraction extract_snippets(const std::vector<VideoFrames>& videos,
                                   const std::vector<AnnotatedCenter>& centers) {
  SnippetExtraction result;
  for (const auto& center : centers) {
    const VideoFrames* video = nullptr;
    for (const auto& v : videos)
      if (v.video_id == center.video_id) video = &v;
    if (!video) {
      result.skipped.push_back({center.video_id, center.frame_index, "unknown video"});
      continue;
    }
    const int64_t n = static_cast<int64_t>(video->frame_paths.size());
    if (center.frame_index < 0 || center.frame_index >= n) {
      result.skipped.push_back({center.video_id, center.frame_index, "center outside video"});
      continue;
    }
    if (center.frame_index < 3) {
      result.skipped.push_back({center.video_id, center.frame_index, "insufficient left context"});
      continue;
    }
    if (center.frame_index + 3 >= n) {
      result.skipped.push_back({center.video_id, center.frame_index, "insufficient right context"});
      continue;
    }
    SnippetManifestEntry e;
    for (int64_t k = 0; k < 7; ++k)
      e.frame_paths[static_cast<size_t>(k)] = video->frame_paths[center.frame_index - 3 + k];
    e.labels = center.labels;
    e.center_path = e.frame_paths[3];
    result.entries.push_back(std::move(e));
  }
  return result;
}

// ---- dedup ----

std::vector<float> grayscale_embedding(const ImageU8& img) {
  const ImageU8 small = resize_bilinear(img, 16, 16);
  std::vector<float> out(256);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      out[static_cast<size_t>(y) * 16 + x] =
          (small.at(x, y, 0) + small.at(x, y, 1) + small.at(x, y, 2)) / (3.0f * 255.0f);
  return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b,
                         bool* zero_norm) {
  if (a.size() != b.size()) throw ValueError("cosine_similarity dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm) *zero_norm = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

DedupResult dedup_cosine(const std::vector<ImageU8>& images, const Embedder& embed,
                         double threshold) {
  DedupResult result;
  std::vector<std::vector<float>> kept_vecs;
  for (size_t i = 0; i < images.size(); ++i) {
    std::vector<float> v = embed(images[i]);
    bool removed = false;
    for (size_t k = 0; k < kept_vecs.size(); ++k) {
      bool zero = false;
      const double sim = cosine_similarity(v, kept_vecs[k], &zero);
      if (zero) ++result.zero_norm_flagged;
      if (sim > threshold) {
        result.removed.push_back({i, result.kept[k], sim});
        removed = true;
        break;
      }
    }
    if (!removed) {
      result.kept.push_back(i);
      kept_vecs.push_back(std::move(v));
    }
  }
  return result;
}

// ---- synthetic dataset ----

namespace {

struct Rgb {
  uint8_t r, g, b;
};

// one distinctive color per class, in class order
constexpr Rgb kClassColors[kNumClasses] = {
    {230, 210, 60},   // anode
    {200, 40, 40},    // bilge_keel
    {170, 90, 30},    // corrosion
    {220, 60, 200},   // defect
    {50, 170, 60},    // marine_growth
    {40, 200, 210},   // over_board_valve
    {235, 235, 235},  // paint_peel
    {60, 80, 220},    // propeller
    {90, 90, 100},    // sea_chest_grating
};

void draw_motif(ImageU8& img, int cls, int dx, int dy) {
  // 3x3 grid cell per class, textured rectangle inside the cell
  const int cell_w = img.width / 3, cell_h = img.height / 3;
  const int cx = (cls % 3) * cell_w, cy = (cls / 3) * cell_h;
  const int margin_x = cell_w / 6, margin_y = cell_h / 6;
  const Rgb color = kClassColors[cls];
  for (int y = cy + margin_y; y < cy + cell_h - margin_y; ++y)
    for (int x = cx + margin_x; x < cx + cell_w - margin_x; ++x) {
      const int px = x + dx, py = y + dy;
      if (px < 0 || px >= img.width || py < 0 || py >= img.height) continue;
      // class-dependent texture: stripes, checker or dots
      bool on = true;
      switch (cls % 3) {
        case 0: on = ((x - cx) / 3) % 2 == 0; break;
        case 1: on = (((x - cx) / 4) + ((y - cy) / 4)) % 2 == 0; break;
        default: on = ((x - cx) % 6 < 3) && ((y - cy) % 6 < 3); break;
      }
      if (!on) continue;
      img.set(px, py, 0, color.r);
      img.set(px, py, 1, color.g);
      img.set(px, py, 2, color.b);
    }
}

}  // namespace

ImageU8 synth_frame(const LabelSet& labels, int size, int dx, int dy, double noise_sigma,
                    uint64_t noise_seed) {
  ImageU8 img;
  img.width = img.height = size;
  img.pixels.resize(static_cast<size_t>(3) * size * size);
  // murky blue-green gradient background
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double depth = static_cast<double>(y) / size;
      img.set(x, y, 0, static_cast<uint8_t>(20 + 15 * depth));
      img.set(x, y, 1, static_cast<uint8_t>(70 + 40 * depth));
      img.set(x, y, 2, static_cast<uint8_t>(90 + 50 * depth));
    }
  for (int c = 0; c < kNumClasses; ++c)
    if (labels.bits[c]) draw_motif(img, c, dx, dy);
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& p : img.pixels)
      p = static_cast<uint8_t>(std::clamp(std::lround(p + noise(rng)), 0l, 255l));
  }
  return img;
}

SynthResult synth_dataset(const std::string& out_dir, const SynthConfig& cfg, uint64_t seed) {
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "videos");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto draw_labels = [&]() {
    LabelSet ls;
    for (int c = 0; c < kNumClasses; ++c) ls.bits[c] = uni(rng) < cfg.class_rate;
    return ls;
  };

  SynthResult result;

  // still images
  for (int i = 0; i < cfg.num_images; ++i) {
    const LabelSet labels = draw_labels();
    const ImageU8 img = synth_frame(labels, cfg.frame_size, 0, 0, cfg.noise_sigma, rng());
    char name[64];
    std::snprintf(name, sizeof(name), "images/img_%04d.ppm", i);
    const std::string rel = name;
    write_ppm((fs::path(out_dir) / rel).string(), img);
    result.images.push_back({rel, labels});
  }
  write_annotations_csv((fs::path(out_dir) / "annotations.csv").string(), result.images);

  // videos with per-frame jitter, one label set per video
  std::vector<VideoFrames> videos;
  std::vector<AnnotatedCenter> centers;
  for (int v = 0; v < cfg.num_videos; ++v) {
    LabelSet labels = draw_labels();
    if (labels.count() == 0) labels.bits[static_cast<size_t>(v) % kNumClasses] = true;
    const std::string vid = "video_" + std::to_string(v);
    fs::create_directories(fs::path(out_dir) / "videos" / vid);
    VideoFrames frames;
    frames.video_id = vid;
    std::uniform_int_distribution<int> jitter(-cfg.jitter_px, cfg.jitter_px);
    for (int t = 0; t < cfg.frames_per_video; ++t) {
      const int dx = jitter(rng), dy = jitter(rng);
      const ImageU8 img = synth_frame(labels, cfg.frame_size, dx, dy, cfg.noise_sigma, rng());
      char name[96];
      std::snprintf(name, sizeof(name), "videos/%s/frame_%04d.ppm", vid.c_str(), t);
      const std::string rel = name;
      write_ppm((fs::path(out_dir) / rel).string(), img);
      frames.frame_paths.push_back(rel);
    }
    videos.push_back(std::move(frames));
    // annotate every other frame as a center; boundary ones exercise skipping
    for (int t = 1; t < cfg.frames_per_video; t += 2)
      centers.push_back({vid, t, labels});
  }
  result.extraction = extract_snippets(videos, centers);
  result.snippets = result.extraction.entries;
  write_snippet_manifest((fs::path(out_dir) / "snippets.jsonl").string(), result.snippets);

  // splits, deterministic shuffles, LIACI-like proportions
  auto split_paths = [&](std::vector<std::string> paths, uint64_t salt) {
    std::mt19937_64 srng(seed ^ salt);
    std::shuffle(paths.begin(), paths.end(), srng);
    SplitSpec s;
    const size_t n = paths.size();
    const size_t n_train = static_cast<size_t>(0.77 * n);
    const size_t n_val = static_cast<size_t>(0.115 * n) + 1;
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train) s.train.push_back(paths[i]);
      else if (i < std::min(n, n_train + n_val)) s.val.push_back(paths[i]);
      else s.unused.push_back(paths[i]);
    }
    return s;
  };

  std::vector<std::string> image_paths;
  for (const auto& a : result.images) image_paths.push_back(a.path);
  result.image_split = split_paths(image_paths, 0xA11CE);

  std::vector<std::string> snippet_centers;
  for (const auto& s : result.snippets) snippet_centers.push_back(s.center_path);
  result.snippet_split = split_paths(snippet_centers, 0xB0B);

  write_split((fs::path(out_dir) / "split_images.json").string(), result.image_split);
  write_split((fs::path(out_dir) / "split_snippets.json").string(), result.snippet_split);
  return result;
}

}  // namespace mlvc
