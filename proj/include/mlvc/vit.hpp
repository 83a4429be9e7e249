#ifndef MLVC_VIT_HPP
#define MLVC_VIT_HPP

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mlvc/metrics.hpp"
#include "mlvc/params.hpp"
#include "mlvc/tensor.hpp"

namespace mlvc {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VitConfig {
  int64_t image_size = 224;
  int64_t patch_h = 16;
  int64_t patch_w = 16;
  int64_t dim = 768;
  int64_t depth = 12;
  int64_t heads = 12;
  double mlp_ratio = 4.0;
  int64_t num_classes = kNumClasses;
  float dropout_p = 0.0f;

  void validate() const;
  int64_t patches_per_image() const { return (image_size / patch_h) * (image_size / patch_w); }
  int64_t patch_dim() const { return 3 * patch_h * patch_w; }
  int64_t mlp_hidden() const { return static_cast<int64_t>(dim * mlp_ratio); }
};

// Classic base configuration, used here for parameter accounting.
VitConfig vit_b16();
// Desk-scale defaults for tests and the synthetic dataset.
VitConfig vit_micro();

// Splits a [3xHxW] image into flattened patches, row-major over the patch
// grid; each patch is flattened channel-major ([c][ph][pw]).
Tensor<float> patchify(const Tensor<float>& image, const VitConfig& cfg);

struct TokenSequence {
  Tensor<float> tokens;     // [(1+N) x dim], row 0 is the class token
  Tensor<float> positions;  // same shape, learned
};

struct ForwardCtx {
  float dropout_p = 0.0f;
  std::mt19937_64* rng = nullptr;
  // when set, receives one [heads*S x S] attention matrix per block
  std::vector<Tensor<float>>* attn_probe = nullptr;
};

// Stack of pre-norm blocks (attention + GELU MLP, residual around each)
// with a closing layer norm.
class TransformerEncoder {
 public:
  TransformerEncoder(ParamStore& store, const std::string& prefix, int64_t dim, int64_t depth,
                     int64_t heads, double mlp_ratio, std::mt19937_64& rng);

  Tensor<float> forward(const Tensor<float>& tokens, const ForwardCtx& ctx = {}) const;
  int64_t depth() const { return static_cast<int64_t>(blocks_.size()); }

 private:
  struct Block {
    Tensor<float> ln1_w, ln1_b;
    Tensor<float> q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;
    Tensor<float> ln2_w, ln2_b;
    Tensor<float> fc1_w, fc1_b, fc2_w, fc2_b;
  };

  Tensor<float> attention(const Block& blk, const Tensor<float>& x, const ForwardCtx& ctx) const;

  int64_t dim_;
  int64_t heads_;
  std::vector<Block> blocks_;
  Tensor<float> norm_w_, norm_b_;
};

// Vision-transformer multi-label classifier. The token geometry is decoupled
// from the image geometry so the video tokenizers can reuse the same
// backbone with their own patch layouts.
class VitModel {
 public:
  // image classifier with geometry from cfg
  VitModel(const VitConfig& cfg, uint64_t seed);
  // explicit token geometry; token_dim < 0 drops the linear patch projection
  // and accepts pre-embedded [N x dim] tokens
  VitModel(const VitConfig& cfg, int64_t num_tokens, int64_t token_dim, uint64_t seed);

  const VitConfig& config() const { return cfg_; }
  int64_t num_tokens() const { return num_tokens_; }
  bool has_patch_proj() const { return patch_w_.size() > 0; }

  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  std::shared_ptr<ParamStore> shared_params() { return store_; }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  // class token + position add + encoder; exposed for the factorized model
  TokenSequence embed_patches(const Tensor<float>& patches) const;
  TokenSequence embed_tokens(const Tensor<float>& tokens) const;
  Tensor<float> encode(const TokenSequence& seq, std::vector<Tensor<float>>* attn_probe = nullptr) const;

  // full [1+N x dim] encoder output for an image
  Tensor<float> encode_image(const Tensor<float>& image, std::vector<Tensor<float>>* attn_probe = nullptr) const;

  Tensor<float> head(const Tensor<float>& pooled) const;  // [dim] -> [classes]

  // raw logits in the fixed class order
  Tensor<float> classify_image(const Tensor<float>& image) const;
  Tensor<float> classify_patches(const Tensor<float>& patches) const;  // flattened-patch path
  Tensor<float> classify_tokens(const Tensor<float>& tokens) const;    // pre-embedded path

  int64_t count_parameters() const { return store_->count_trainable(); }

 private:
  void build(uint64_t seed, int64_t token_dim);

  VitConfig cfg_;
  int64_t num_tokens_;
  std::shared_ptr<ParamStore> store_;
  Tensor<float> patch_w_, patch_b_;  // absent when tokens arrive pre-embedded
  Tensor<float> cls_token_;
  Tensor<float> pos_embed_;
  std::unique_ptr<TransformerEncoder> encoder_;
  Tensor<float> head_w_, head_b_;
  bool training_ = false;
  mutable std::mt19937_64 dropout_rng_{0x5eed};
};

}  // namespace mlvc

#endif  // MLVC_VIT_HPP
