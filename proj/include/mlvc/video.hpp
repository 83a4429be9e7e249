#ifndef MLVC_VIDEO_HPP
#define MLVC_VIDEO_HPP

#include <memory>
#include <string>
#include <vector>

#include "mlvc/vit.hpp"

namespace mlvc {

inline constexpr int kSnippetLen = 7;

enum class VideoVariant { uniform_sampling, tubelet, factorized };
enum class Pool { cls, avg };

std::string to_string(VideoVariant v);
std::string to_string(Pool p);
VideoVariant video_variant_from_string(const std::string& s);
Pool pool_from_string(const std::string& s);

struct VideoModelSpec {
  VideoVariant variant = VideoVariant::factorized;
  VitConfig spatial;  // full geometry for factorized; encoder widths otherwise
  int64_t temporal_depth = 4;
  int64_t temporal_heads = 0;  // 0 = match spatial heads
  int64_t temporal_dim = 0;    // 0 = match spatial dim
  Pool pool_st = Pool::cls;
  Pool pool_tt = Pool::avg;
  bool freeze_spatial = true;

  void validate() const;
  int64_t resolved_temporal_dim() const { return temporal_dim > 0 ? temporal_dim : spatial.dim; }
  int64_t resolved_temporal_heads() const {
    return temporal_heads > 0 ? temporal_heads : spatial.heads;
  }
};

// Seven consecutive preprocessed frames, uniform shape.
struct Snippet {
  std::vector<Tensor<float>> frames;

  void validate() const;
  int64_t frame_size() const { return frames.at(0).dim(1); }
};

// Frame geometry for the uniform-sampling tokenizer: 28 patches of 32x56 per
// 224px frame, 196 tokens across the 7 frames.
Tensor<float> tokenize_uniform(const Snippet& snippet);

// [3 x 7 x H x W] voxel block for the tubelet embedder.
Tensor<float> stack_snippet(const Snippet& snippet);

class VideoModel {
 public:
  VideoModel(const VideoModelSpec& spec, uint64_t seed);

  const VideoModelSpec& spec() const { return spec_; }
  VitModel& spatial() { return *spatial_; }
  const VitModel& spatial() const { return *spatial_; }

  Tensor<float> logits(const Snippet& snippet) const;
  Tensor<float> scores(const Snippet& snippet) const;

  // factorized internals, also used by the trainer's frozen-backbone cache
  Tensor<float> frame_representation(const Tensor<float>& frame) const;  // [dim]
  Tensor<float> temporal_logits(const Tensor<float>& frame_tokens) const;  // [7 x dim] -> [9]

  void set_training(bool on);

  // every named tensor, spatial backbone included
  std::vector<std::pair<std::string, Tensor<float>>> named_parameters() const;
  int64_t count_trainable() const;
  int64_t count_total() const;
  int64_t count_temporal() const;

 private:
  Tensor<float> tubelet_tokens(const Snippet& snippet) const;

  VideoModelSpec spec_;
  std::unique_ptr<VitModel> spatial_;       // backbone (all variants)
  std::shared_ptr<ParamStore> own_;         // tubelet embedder / temporal stack
  Tensor<float> tubelet_w_, tubelet_b_;
  Tensor<float> temporal_cls_, temporal_pos_;
  std::unique_ptr<TransformerEncoder> temporal_;
  Tensor<float> head_fc1_w_, head_fc1_b_, head_fc2_w_, head_fc2_b_;
};

Tensor<float> classify_snippet(const Snippet& snippet, const VideoModel& model);

}  // namespace mlvc

#endif  // MLVC_VIDEO_HPP
