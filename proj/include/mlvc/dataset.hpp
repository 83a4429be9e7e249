#ifndef MLVC_DATASET_HPP
#define MLVC_DATASET_HPP

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlvc/image.hpp"
#include "mlvc/metrics.hpp"
#include "mlvc/tensor.hpp"

namespace mlvc {

struct NormStats {
  std::array<float, 3> mean;
  std::array<float, 3> std;
};

NormStats liaci_stats();
NormStats coco_stats();

// resize -> [0,1] -> (x - mean) / std, planar [3 x S x S]
Tensor<float> to_tensor(const ImageU8& img, const NormStats& stats, int target_size);
Tensor<float> load_and_preprocess(const std::string& path, const NormStats& stats,
                                  int target_size = 224);

struct AugmentOptions {
  double p_flip = 0.5;
  double p_blur = 0.5;
  double p_augmix = 0.5;
};

// Training-time augmentation, fully determined by (image, seed):
// horizontal flip, gaussian blur (odd kernel in [5,9], sigma in [0.1,5]) and
// a simplified 3-chain mixing augmentation over label-preserving ops.
ImageU8 augment(const ImageU8& img, uint64_t seed, const AugmentOptions& opts = {});

struct AnnotatedImage {
  std::string path;
  LabelSet labels;
};

struct SnippetManifestEntry {
  std::array<std::string, 7> frame_paths;
  LabelSet labels;
  std::string center_path;  // always frame_paths[3]
};

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> unused;
};

std::vector<AnnotatedImage> read_annotations_csv(const std::string& path);
void write_annotations_csv(const std::string& path, const std::vector<AnnotatedImage>& rows);

std::vector<SnippetManifestEntry> read_snippet_manifest(const std::string& path);
void write_snippet_manifest(const std::string& path,
                            const std::vector<SnippetManifestEntry>& entries);

SplitSpec read_split(const std::string& path);
void write_split(const std::string& path, const SplitSpec& split);

// ---- weakly supervised snippet generation ----

struct VideoFrames {
  std::string video_id;
  std::vector<std::string> frame_paths;  // temporal order
};

struct AnnotatedCenter {
  std::string video_id;
  int64_t frame_index;
  LabelSet labels;
};

struct SnippetExtraction {
  std::vector<SnippetManifestEntry> entries;
  struct Skip {
    std::string video_id;
    int64_t frame_index;
    std::string reason;
  };
  std::vector<Skip> skipped;
};

// One 7-frame entry per center with >= 3 frames of context on both sides;
// ineligible centers are reported, never silently dropped.
SnippetExtraction extract_snippets(const std::vector<VideoFrames>& videos,
                                   const std::vector<AnnotatedCenter>& centers);

// ---- near-duplicate removal ----

using Embedder = std::function<std::vector<float>(const ImageU8&)>;

// 16x16 grayscale thumbnail, the model-free fallback embedding
std::vector<float> grayscale_embedding(const ImageU8& img);

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b,
                         bool* zero_norm = nullptr);

struct DedupResult {
  std::vector<size_t> kept;  // indices into the input, original order
  struct Removed {
    size_t index;
    size_t duplicate_of;
    double similarity;
  };
  std::vector<Removed> removed;
  int64_t zero_norm_flagged = 0;
};

// Greedy scan in input order; an image is dropped when its similarity to any
// previously kept image exceeds the threshold.
DedupResult dedup_cosine(const std::vector<ImageU8>& images, const Embedder& embed,
                         double threshold = 0.90);

// ---- synthetic desk-scale dataset ----

struct SynthConfig {
  int num_images = 60;
  int num_videos = 4;
  int frames_per_video = 24;
  int frame_size = 96;
  double class_rate = 0.25;  // per-class Bernoulli
  int jitter_px = 2;         // simulated camera motion
  double noise_sigma = 2.5;
};

struct SynthResult {
  std::vector<AnnotatedImage> images;
  std::vector<SnippetManifestEntry> snippets;
  SplitSpec image_split;
  SplitSpec snippet_split;
  SnippetExtraction extraction;
};

// Procedural stand-in data: each class maps to a fixed colored, textured
// region; videos add per-frame translation plus pixel noise. Writes PPM
// frames, annotations.csv, snippets.jsonl and split JSON files under out_dir.
SynthResult synth_dataset(const std::string& out_dir, const SynthConfig& cfg, uint64_t seed);

// Deterministic scene used by tests that need one frame without the full
// dataset tree.
ImageU8 synth_frame(const LabelSet& labels, int size, int dx, int dy, double noise_sigma,
                    uint64_t noise_seed);

}  // namespace mlvc

#endif  // MLVC_DATASET_HPP
