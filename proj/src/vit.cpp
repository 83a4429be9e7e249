#include "mlvc/vit.hpp"

#include <cmath>

namespace mlvc {

void VitConfig::validate() const {
  if (image_size <= 0 || patch_h <= 0 || patch_w <= 0 || dim <= 0 || heads <= 0)
    throw ConfigError("vit config extents must be positive");
  if (depth < 0) throw ConfigError("vit depth must be non-negative");
  if (image_size % patch_h != 0 || image_size % patch_w != 0)
    throw ConfigError("image size " + std::to_string(image_size) + " not divisible by patch " +
                      std::to_string(patch_h) + "x" + std::to_string(patch_w));
  if (dim % heads != 0)
    throw ConfigError("dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (dropout_p < 0.0f || dropout_p >= 1.0f) throw ConfigError("dropout_p must lie in [0,1)");
}

VitConfig vit_b16() {
  VitConfig cfg;
  cfg.image_size = 224;
  cfg.patch_h = cfg.patch_w = 16;
  cfg.dim = 768;
  cfg.depth = 12;
  cfg.heads = 12;
  cfg.mlp_ratio = 4.0;
  return cfg;
}

VitConfig vit_micro() {
  VitConfig cfg;
  cfg.image_size = 64;
  cfg.patch_h = cfg.patch_w = 16;
  cfg.dim = 64;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.mlp_ratio = 4.0;
  return cfg;
}

Tensor<float> patchify(const Tensor<float>& image, const VitConfig& cfg) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw ShapeError("patchify expects a [3xHxW] image, got " + shape_str(image.shape()));
  const int64_t h = image.dim(1), w = image.dim(2);
  if (h != cfg.image_size || w != cfg.image_size)
    throw ShapeError("patchify expects " + std::to_string(cfg.image_size) + "px input, got " +
                     shape_str(image.shape()));
  if (h % cfg.patch_h != 0 || w % cfg.patch_w != 0)
    throw ShapeError("image not divisible into " + std::to_string(cfg.patch_h) + "x" +
                     std::to_string(cfg.patch_w) + " patches");
  const int64_t rows = h / cfg.patch_h, cols = w / cfg.patch_w;
  const int64_t pd = cfg.patch_dim();
  Tensor<float> out = Tensor<float>::zeros({rows * cols, pd});
  for (int64_t pr = 0; pr < rows; ++pr)
    for (int64_t pc = 0; pc < cols; ++pc) {
      float* dst = out.data() + (pr * cols + pc) * pd;
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < cfg.patch_h; ++y)
          for (int64_t x = 0; x < cfg.patch_w; ++x)
            *dst++ = image.data()[(c * h + pr * cfg.patch_h + y) * w + pc * cfg.patch_w + x];
    }
  return out;
}

namespace {

Tensor<float> init_weight(ParamStore& store, const std::string& name, Shape shape,
                          std::mt19937_64& rng) {
  Tensor<float> t = Tensor<float>::zeros(std::move(shape), true);
  fill_trunc_normal(t, 0.02f, rng);
  return store.add(name, std::move(t));
}

Tensor<float> init_zeros(ParamStore& store, const std::string& name, Shape shape) {
  return store.add(name, Tensor<float>::zeros(std::move(shape), true));
}

Tensor<float> init_ones(ParamStore& store, const std::string& name, Shape shape) {
  return store.add(name, Tensor<float>::full(std::move(shape), 1.0f, true));
}

Tensor<float> maybe_dropout(const Tensor<float>& x, const ForwardCtx& ctx) {
  if (ctx.dropout_p <= 0.0f || ctx.rng == nullptr) return x;
  return dropout(x, ctx.dropout_p, *ctx.rng);
}

}  // namespace

TransformerEncoder::TransformerEncoder(ParamStore& store, const std::string& prefix, int64_t dim,
                                       int64_t depth, int64_t heads, double mlp_ratio,
                                       std::mt19937_64& rng)
    : dim_(dim), heads_(heads) {
  const int64_t hidden = static_cast<int64_t>(dim * mlp_ratio);
  for (int64_t i = 0; i < depth; ++i) {
    const std::string p = prefix + "blocks." + std::to_string(i) + ".";
    Block blk{
        .ln1_w = init_ones(store, p + "ln1.weight", {dim}),
        .ln1_b = init_zeros(store, p + "ln1.bias", {dim}),
        .q_w = init_weight(store, p + "attn.q.weight", {dim, dim}, rng),
        .q_b = init_zeros(store, p + "attn.q.bias", {dim}),
        .k_w = init_weight(store, p + "attn.k.weight", {dim, dim}, rng),
        .k_b = init_zeros(store, p + "attn.k.bias", {dim}),
        .v_w = init_weight(store, p + "attn.v.weight", {dim, dim}, rng),
        .v_b = init_zeros(store, p + "attn.v.bias", {dim}),
        .out_w = init_weight(store, p + "attn.out.weight", {dim, dim}, rng),
        .out_b = init_zeros(store, p + "attn.out.bias", {dim}),
        .ln2_w = init_ones(store, p + "ln2.weight", {dim}),
        .ln2_b = init_zeros(store, p + "ln2.bias", {dim}),
        .fc1_w = init_weight(store, p + "mlp.fc1.weight", {dim, hidden}, rng),
        .fc1_b = init_zeros(store, p + "mlp.fc1.bias", {hidden}),
        .fc2_w = init_weight(store, p + "mlp.fc2.weight", {hidden, dim}, rng),
        .fc2_b = init_zeros(store, p + "mlp.fc2.bias", {dim}),
    };
    blocks_.push_back(std::move(blk));
  }
  norm_w_ = init_ones(store, prefix + "norm.weight", {dim});
  norm_b_ = init_zeros(store, prefix + "norm.bias", {dim});
}

Tensor<float> TransformerEncoder::attention(const Block& blk, const Tensor<float>& x,
                                            const ForwardCtx& ctx) const {
  const int64_t head_dim = dim_ / heads_;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));

  auto q = add_rowvec(matmul(x, blk.q_w), blk.q_b);
  auto k = add_rowvec(matmul(x, blk.k_w), blk.k_b);
  auto v = add_rowvec(matmul(x, blk.v_w), blk.v_b);

  std::vector<Tensor<float>> contexts;
  contexts.reserve(static_cast<size_t>(heads_));
  for (int64_t h = 0; h < heads_; ++h) {
    auto qh = slice_cols(q, h * head_dim, (h + 1) * head_dim);
    auto kh = slice_cols(k, h * head_dim, (h + 1) * head_dim);
    auto vh = slice_cols(v, h * head_dim, (h + 1) * head_dim);
    auto scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
    auto attn = softmax(scores, 1);
    if (ctx.attn_probe) ctx.attn_probe->push_back(attn);
    contexts.push_back(matmul(attn, vh));
  }
  auto ctx_cat = concat_cols(contexts);
  return add_rowvec(matmul(ctx_cat, blk.out_w), blk.out_b);
}

Tensor<float> TransformerEncoder::forward(const Tensor<float>& tokens, const ForwardCtx& ctx) const {
  if (tokens.ndim() != 2 || tokens.dim(1) != dim_)
    throw ShapeError("encoder expects [Sx" + std::to_string(dim_) + "] tokens, got " +
                     shape_str(tokens.shape()));
  Tensor<float> x = tokens;
  for (const auto& blk : blocks_) {
    auto normed = layer_norm(x, blk.ln1_w, blk.ln1_b, 1e-6f);
    x = add(x, maybe_dropout(attention(blk, normed, ctx), ctx));
    auto normed2 = layer_norm(x, blk.ln2_w, blk.ln2_b, 1e-6f);
    auto hidden = gelu(add_rowvec(matmul(normed2, blk.fc1_w), blk.fc1_b));
    auto mlp_out = add_rowvec(matmul(hidden, blk.fc2_w), blk.fc2_b);
    x = add(x, maybe_dropout(mlp_out, ctx));
  }
  return layer_norm(x, norm_w_, norm_b_, 1e-6f);
}

VitModel::VitModel(const VitConfig& cfg, uint64_t seed)
    : VitModel(cfg, cfg.patches_per_image(), cfg.patch_dim(), seed) {}

VitModel::VitModel(const VitConfig& cfg, int64_t num_tokens, int64_t token_dim, uint64_t seed)
    : cfg_(cfg), num_tokens_(num_tokens), store_(std::make_shared<ParamStore>()) {
  cfg_.validate();
  if (num_tokens_ <= 0) throw ConfigError("token count must be positive");
  build(seed, token_dim);
}

void VitModel::build(uint64_t seed, int64_t token_dim) {
  std::mt19937_64 rng(seed);
  if (token_dim >= 0) {
    patch_w_ = init_weight(*store_, "patch_embed.weight", {token_dim, cfg_.dim}, rng);
    patch_b_ = init_zeros(*store_, "patch_embed.bias", {cfg_.dim});
  }
  cls_token_ = init_zeros(*store_, "cls_token", {1, cfg_.dim});
  pos_embed_ = init_weight(*store_, "pos_embed", {num_tokens_ + 1, cfg_.dim}, rng);
  encoder_ = std::make_unique<TransformerEncoder>(*store_, "", cfg_.dim, cfg_.depth, cfg_.heads,
                                                  cfg_.mlp_ratio, rng);
  head_w_ = init_weight(*store_, "head.weight", {cfg_.dim, cfg_.num_classes}, rng);
  head_b_ = init_zeros(*store_, "head.bias", {cfg_.num_classes});
}

TokenSequence VitModel::embed_patches(const Tensor<float>& patches) const {
  if (patch_w_.size() == 0)
    throw ConfigError("model was built for pre-embedded tokens; no patch projection");
  if (patches.ndim() != 2 || patches.dim(1) != patch_w_.dim(0))
    throw ShapeError("patch matrix " + shape_str(patches.shape()) + " does not match projection " +
                     shape_str(patch_w_.shape()));
  auto embedded = add_rowvec(matmul(patches, patch_w_), patch_b_);
  return embed_tokens(embedded);
}

TokenSequence VitModel::embed_tokens(const Tensor<float>& tokens) const {
  if (tokens.ndim() != 2 || tokens.dim(1) != cfg_.dim)
    throw ShapeError("token width " + shape_str(tokens.shape()) + " != dim " +
                     std::to_string(cfg_.dim));
  if (tokens.dim(0) != num_tokens_)
    throw ShapeError("expected " + std::to_string(num_tokens_) + " tokens, got " +
                     std::to_string(tokens.dim(0)));
  auto with_cls = concat_rows(std::vector<Tensor<float>>{cls_token_, tokens});
  return TokenSequence{with_cls, pos_embed_};
}

Tensor<float> VitModel::encode(const TokenSequence& seq, std::vector<Tensor<float>>* attn_probe) const {
  if (seq.tokens.shape() != seq.positions.shape())
    throw ShapeError("token/position shapes differ: " + shape_str(seq.tokens.shape()) + " vs " +
                     shape_str(seq.positions.shape()));
  ForwardCtx ctx;
  ctx.dropout_p = training_ ? cfg_.dropout_p : 0.0f;
  ctx.rng = &dropout_rng_;
  ctx.attn_probe = attn_probe;
  auto x = maybe_dropout(add(seq.tokens, seq.positions), ctx);
  return encoder_->forward(x, ctx);
}

Tensor<float> VitModel::encode_image(const Tensor<float>& image,
                                     std::vector<Tensor<float>>* attn_probe) const {
  return encode(embed_patches(patchify(image, cfg_)), attn_probe);
}

Tensor<float> VitModel::head(const Tensor<float>& pooled) const {
  auto row = pooled.ndim() == 1 ? reshape(pooled, {1, cfg_.dim}) : pooled;
  auto logits = add_rowvec(matmul(row, head_w_), head_b_);
  return reshape(logits, {cfg_.num_classes});
}

Tensor<float> VitModel::classify_image(const Tensor<float>& image) const {
  auto encoded = encode_image(image);
  return head(slice_rows(encoded, 0, 1));
}

Tensor<float> VitModel::classify_patches(const Tensor<float>& patches) const {
  auto encoded = encode(embed_patches(patches));
  return head(slice_rows(encoded, 0, 1));
}

Tensor<float> VitModel::classify_tokens(const Tensor<float>& tokens) const {
  auto encoded = encode(embed_tokens(tokens));
  return head(slice_rows(encoded, 0, 1));
}

}  // namespace mlvc
