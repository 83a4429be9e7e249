#include "mlvc/video.hpp"

#include <cmath>

namespace mlvc {

namespace {

// pinned tokenizer geometry
constexpr int64_t kFrameSize = 224;
constexpr int64_t kUniformPatchH = 32;
constexpr int64_t kUniformPatchW = 56;
constexpr int64_t kTubeletPatch = 16;

VitConfig uniform_frame_config() {
  VitConfig cfg;
  cfg.image_size = kFrameSize;
  cfg.patch_h = kUniformPatchH;
  cfg.patch_w = kUniformPatchW;
  return cfg;
}

}  // namespace

std::string to_string(VideoVariant v) {
  switch (v) {
    case VideoVariant::uniform_sampling: return "uniform_sampling";
    case VideoVariant::tubelet: return "tubelet";
    case VideoVariant::factorized: return "factorized";
  }
  return "?";
}

std::string to_string(Pool p) { return p == Pool::cls ? "cls" : "avg"; }

VideoVariant video_variant_from_string(const std::string& s) {
  if (s == "uniform_sampling") return VideoVariant::uniform_sampling;
  if (s == "tubelet") return VideoVariant::tubelet;
  if (s == "factorized") return VideoVariant::factorized;
  throw ConfigError("unknown video variant: " + s);
}

Pool pool_from_string(const std::string& s) {
  if (s == "cls") return Pool::cls;
  if (s == "avg") return Pool::avg;
  throw ConfigError("unknown pooling mode: " + s);
}

void VideoModelSpec::validate() const {
  spatial.validate();
  if (temporal_depth < 0) throw ConfigError("temporal_depth must be non-negative");
  if (variant == VideoVariant::factorized && resolved_temporal_dim() != spatial.dim)
    throw ConfigError("factorized variant requires temporal_dim " +
                      std::to_string(resolved_temporal_dim()) + " to equal spatial dim " +
                      std::to_string(spatial.dim));
  if (resolved_temporal_dim() % resolved_temporal_heads() != 0)
    throw ConfigError("temporal_dim not divisible by temporal_heads");
}

void Snippet::validate() const {
  if (frames.size() != kSnippetLen)
    throw ShapeError("snippet must hold exactly " + std::to_string(kSnippetLen) + " frames, got " +
                     std::to_string(frames.size()));
  const Shape& s0 = frames[0].shape();
  if (s0.size() != 3 || s0[0] != 3) throw ShapeError("snippet frames must be [3xHxW]");
  for (const auto& f : frames)
    if (f.shape() != s0)
      throw ShapeError("snippet frames disagree in shape: " + shape_str(s0) + " vs " +
                       shape_str(f.shape()));
}

Tensor<float> tokenize_uniform(const Snippet& snippet) {
  snippet.validate();
  if (snippet.frames[0].dim(1) != kFrameSize || snippet.frames[0].dim(2) != kFrameSize)
    throw ShapeError("uniform sampling expects 224x224 frames, got " +
                     shape_str(snippet.frames[0].shape()));
  const VitConfig cfg = uniform_frame_config();
  std::vector<Tensor<float>> per_frame;
  per_frame.reserve(kSnippetLen);
  for (const auto& frame : snippet.frames) per_frame.push_back(patchify(frame, cfg));
  return concat_rows(per_frame);
}

Tensor<float> stack_snippet(const Snippet& snippet) {
  snippet.validate();
  const int64_t h = snippet.frames[0].dim(1), w = snippet.frames[0].dim(2);
  Tensor<float> out = Tensor<float>::zeros({3, kSnippetLen, h, w});
  for (int64_t t = 0; t < kSnippetLen; ++t)
    for (int64_t c = 0; c < 3; ++c)
      std::copy(snippet.frames[t].data() + c * h * w, snippet.frames[t].data() + (c + 1) * h * w,
                out.data() + (c * kSnippetLen + t) * h * w);
  return out;
}

VideoModel::VideoModel(const VideoModelSpec& spec, uint64_t seed)
    : spec_(spec), own_(std::make_shared<ParamStore>()) {
  spec_.validate();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  auto init_w = [&](const std::string& name, Shape shape) {
    Tensor<float> t = Tensor<float>::zeros(std::move(shape), true);
    fill_trunc_normal(t, 0.02f, rng);
    return own_->add(name, std::move(t));
  };
  auto init_z = [&](const std::string& name, Shape shape) {
    return own_->add(name, Tensor<float>::zeros(std::move(shape), true));
  };

  switch (spec_.variant) {
    case VideoVariant::uniform_sampling: {
      VitConfig cfg = uniform_frame_config();
      cfg.dim = spec_.spatial.dim;
      cfg.depth = spec_.spatial.depth;
      cfg.heads = spec_.spatial.heads;
      cfg.mlp_ratio = spec_.spatial.mlp_ratio;
      cfg.num_classes = spec_.spatial.num_classes;
      const int64_t tokens = kSnippetLen * cfg.patches_per_image();  // 7 * 28 = 196
      spatial_ = std::make_unique<VitModel>(cfg, tokens, cfg.patch_dim(), seed);
      break;
    }
    case VideoVariant::tubelet: {
      VitConfig cfg = spec_.spatial;
      cfg.image_size = kFrameSize;
      cfg.patch_h = cfg.patch_w = kTubeletPatch;
      const int64_t grid = kFrameSize / kTubeletPatch;  // 14
      spatial_ = std::make_unique<VitModel>(cfg, grid * grid, -1, seed);
      tubelet_w_ = init_w("tubelet.weight", {cfg.dim, 3, kSnippetLen, kTubeletPatch, kTubeletPatch});
      tubelet_b_ = init_z("tubelet.bias", {cfg.dim});
      break;
    }
    case VideoVariant::factorized: {
      spatial_ = std::make_unique<VitModel>(spec_.spatial, seed);
      const int64_t dim = spec_.resolved_temporal_dim();
      const int64_t seq = kSnippetLen + (spec_.pool_tt == Pool::cls ? 1 : 0);
      if (spec_.pool_tt == Pool::cls) temporal_cls_ = init_z("temporal.cls_token", {1, dim});
      temporal_pos_ = init_w("temporal.pos_embed", {seq, dim});
      temporal_ = std::make_unique<TransformerEncoder>(*own_, "temporal.", dim, spec_.temporal_depth,
                                                       spec_.resolved_temporal_heads(),
                                                       spec_.spatial.mlp_ratio, rng);
      head_fc1_w_ = init_w("head.fc1.weight", {dim, dim});
      head_fc1_b_ = init_z("head.fc1.bias", {dim});
      head_fc2_w_ = init_w("head.fc2.weight", {dim, spec_.spatial.num_classes});
      head_fc2_b_ = init_z("head.fc2.bias", {spec_.spatial.num_classes});
      if (spec_.freeze_spatial)
        spatial_->params().set_trainable([](const std::string&) { return false; });
      break;
    }
  }
}

Tensor<float> VideoModel::tubelet_tokens(const Snippet& snippet) const {
  auto voxels = stack_snippet(snippet);
  auto fmap = conv3d(voxels, tubelet_w_, tubelet_b_, kSnippetLen, kTubeletPatch, kTubeletPatch);
  // [K x 1 x G x G] -> [G*G x K]
  const int64_t k = fmap.dim(0), cells = fmap.dim(2) * fmap.dim(3);
  return transpose2d(reshape(fmap, {k, cells}));
}

Tensor<float> VideoModel::frame_representation(const Tensor<float>& frame) const {
  auto encoded = spatial_->encode_image(frame);
  if (spec_.pool_st == Pool::cls) return reshape(slice_rows(encoded, 0, 1), {spec_.spatial.dim});
  // mean over patch tokens, class token excluded
  return mean_rows(slice_rows(encoded, 1, encoded.dim(0)));
}

Tensor<float> VideoModel::temporal_logits(const Tensor<float>& frame_tokens) const {
  const int64_t dim = spec_.resolved_temporal_dim();
  if (frame_tokens.ndim() != 2 || frame_tokens.dim(0) != kSnippetLen || frame_tokens.dim(1) != dim)
    throw ShapeError("temporal stack expects [7x" + std::to_string(dim) + "] frame tokens, got " +
                     shape_str(frame_tokens.shape()));
  Tensor<float> tokens = frame_tokens;
  if (spec_.pool_tt == Pool::cls)
    tokens = concat_rows(std::vector<Tensor<float>>{temporal_cls_, tokens});
  auto x = add(tokens, temporal_pos_);
  if (spec_.temporal_depth > 0) x = temporal_->forward(x);
  Tensor<float> pooled = spec_.pool_tt == Pool::cls
                             ? reshape(slice_rows(x, 0, 1), {dim})
                             : mean_rows(x);
  auto hidden = gelu(add_rowvec(matmul(reshape(pooled, {1, dim}), head_fc1_w_), head_fc1_b_));
  auto logits = add_rowvec(matmul(hidden, head_fc2_w_), head_fc2_b_);
  return reshape(logits, {spec_.spatial.num_classes});
}

Tensor<float> VideoModel::logits(const Snippet& snippet) const {
  switch (spec_.variant) {
    case VideoVariant::uniform_sampling:
      return spatial_->classify_patches(tokenize_uniform(snippet));
    case VideoVariant::tubelet:
      return spatial_->classify_tokens(tubelet_tokens(snippet));
    case VideoVariant::factorized: {
      std::vector<Tensor<float>> reps;
      reps.reserve(kSnippetLen);
      if (spec_.freeze_spatial) {
        // no trainable parameter sits upstream, so the spatial pass can run
        // off-tape
        Tape<float>::Pause pause;
        for (const auto& f : snippet.frames)
          reps.push_back(reshape(frame_representation(f), {1, spec_.spatial.dim}));
      } else {
        for (const auto& f : snippet.frames)
          reps.push_back(reshape(frame_representation(f), {1, spec_.spatial.dim}));
      }
      return temporal_logits(concat_rows(reps));
    }
  }
  throw ConfigError("unreachable video variant");
}

Tensor<float> VideoModel::scores(const Snippet& snippet) const { return sigmoid(logits(snippet)); }

void VideoModel::set_training(bool on) { spatial_->set_training(on && !spec_.freeze_spatial); }

std::vector<std::pair<std::string, Tensor<float>>> VideoModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  const std::string backbone_prefix =
      spec_.variant == VideoVariant::factorized ? "spatial." : "backbone.";
  for (const auto& [n, t] : spatial_->params().entries()) out.emplace_back(backbone_prefix + n, t);
  for (const auto& [n, t] : own_->entries()) out.emplace_back(n, t);
  return out;
}

int64_t VideoModel::count_trainable() const {
  return spatial_->params().count_trainable() + own_->count_trainable();
}

int64_t VideoModel::count_total() const {
  return spatial_->params().count_all() + own_->count_all();
}

int64_t VideoModel::count_temporal() const { return own_->count_all(); }

Tensor<float> classify_snippet(const Snippet& snippet, const VideoModel& model) {
  return model.scores(snippet);
}

}  // namespace mlvc
