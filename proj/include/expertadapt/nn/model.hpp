#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "expertadapt/data/grid.hpp"
#include "expertadapt/nn/layers.hpp"

namespace expertadapt::nn {

/// Architecture hyperparameters. The encoder follows the ResNet-18 layout
/// (7x7 stem, 3x3 max pool, four stages of two residual blocks); the decoder
/// is a conventional 4-skip U-Net; every norm layer is instance norm with an
/// expert-selected affine pair unless conditioning is restricted.
struct ModelConfig {
  int input_h = 192;
  int input_w = 192;
  int base_width = 64;
  std::array<int, 4> stage_blocks{2, 2, 2, 2};
  std::array<int, 4> decoder_widths{0, 0, 0, 0};  // 0 = derive {4W, 2W, W, W}
  int n_experts = 1;
  double norm_eps = 1e-5;
  bool condition_encoder = true;  // false conditions decoder norms only

  bool operator==(const ModelConfig&) const = default;

  std::array<int, 4> resolved_decoder_widths() const {
    std::array<int, 4> w = decoder_widths;
    const std::array<int, 4> derived{4 * base_width, 2 * base_width, base_width, base_width};
    for (int i = 0; i < 4; ++i)
      if (w[static_cast<size_t>(i)] == 0) w[static_cast<size_t>(i)] = derived[static_cast<size_t>(i)];
    return w;
  }

  void validate() const {
    if (n_experts < 1) throw ConfigError("model requires n_experts >= 1");
    if (base_width < 1) throw ConfigError("base width must be positive");
    if (input_h % 32 != 0 || input_w % 32 != 0 || input_h < 32 || input_w < 32)
      throw ConfigError(detail::strprintf(
          "input size %dx%d must be a positive multiple of 32 (five downsamplings)", input_h,
          input_w));
    for (int b : stage_blocks)
      if (b < 1) throw ConfigError("each encoder stage needs at least one block");
    for (int w : resolved_decoder_widths())
      if (w < 1) throw ConfigError("decoder widths must be positive");
    if (!(norm_eps > 0.0)) throw ConfigError("norm epsilon must be positive");
  }
};

/// Small configuration for CPU-scale runs.
inline ModelConfig desk_model_config(int n_experts) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 64;
  cfg.base_width = 8;
  cfg.n_experts = n_experts;
  return cfg;
}

/// Full-scale configuration matching the reference training setup.
inline ModelConfig full_model_config(int n_experts) {
  ModelConfig cfg;
  cfg.n_experts = n_experts;
  return cfg;
}

enum class BranchInit { identity, average };
enum class Scope { all, expert_only };

namespace model_detail {

/// ResNet basic block: two 3x3 convs with norm+ReLU, residual add, with a
/// strided 1x1 projection when shape changes.
template <class T>
struct BasicBlock {
  Conv2d<T> conv1, conv2, proj;
  CinNorm<T> norm1, norm2, proj_norm;
  ReLU<T> relu1, relu_out;
  bool has_proj = false;

  BasicBlock(const std::string& name, int in_ch, int out_ch, int stride, int n_experts,
             bool conditioned, double eps, Rng& rng)
      : conv1(name + ".conv1", in_ch, out_ch, 3, stride, 1, false, rng),
        conv2(name + ".conv2", out_ch, out_ch, 3, 1, 1, false, rng),
        norm1(name + ".norm1", out_ch, n_experts, eps, conditioned),
        norm2(name + ".norm2", out_ch, n_experts, eps, conditioned),
        has_proj(stride != 1 || in_ch != out_ch) {
    if (has_proj) {
      proj = Conv2d<T>(name + ".proj", in_ch, out_ch, 1, stride, 0, false, rng);
      proj_norm = CinNorm<T>(name + ".projnorm", out_ch, n_experts, eps, conditioned);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, int expert_slot) {
    Tensor<T> main = relu1.forward(norm1.forward(conv1.forward(x), expert_slot));
    main = norm2.forward(conv2.forward(main), expert_slot);
    if (has_proj) {
      Tensor<T> identity = proj_norm.forward(proj.forward(x), expert_slot);
      for (size_t i = 0; i < main.size(); ++i) main.v[i] += identity.v[i];
    } else {
      for (size_t i = 0; i < main.size(); ++i) main.v[i] += x.v[i];
    }
    return relu_out.forward(main);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dsum = relu_out.backward(dy);
    Tensor<T> dmain = norm2.backward(dsum);
    dmain = conv2.backward(dmain);
    dmain = relu1.backward(dmain);
    dmain = norm1.backward(dmain);
    Tensor<T> dx = conv1.backward(dmain);
    if (has_proj) {
      Tensor<T> didn = proj.backward(proj_norm.backward(dsum));
      for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += didn.v[i];
    } else {
      for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dsum.v[i];
    }
    return dx;
  }

  void release_cache() {
    conv1.release_cache();
    conv2.release_cache();
    norm1.release_cache();
    norm2.release_cache();
    relu1.release_cache();
    relu_out.release_cache();
    if (has_proj) {
      proj.release_cache();
      proj_norm.release_cache();
    }
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    conv1.collect_params(out);
    norm1.collect_params(out);
    conv2.collect_params(out);
    norm2.collect_params(out);
    if (has_proj) {
      proj.collect_params(out);
      proj_norm.collect_params(out);
    }
  }
};

/// Decoder stage: upsampled channels concatenated with the skip, then two
/// 3x3 conv + norm + ReLU blocks.
template <class T>
struct DecoderBlock {
  Conv2d<T> conv_a, conv_b;
  CinNorm<T> norm_a, norm_b;
  ReLU<T> relu_a, relu_b;

  DecoderBlock(const std::string& name, int in_ch, int out_ch, int n_experts, double eps,
               Rng& rng)
      : conv_a(name + ".conv_a", in_ch, out_ch, 3, 1, 1, false, rng),
        conv_b(name + ".conv_b", out_ch, out_ch, 3, 1, 1, false, rng),
        norm_a(name + ".norm_a", out_ch, n_experts, eps),
        norm_b(name + ".norm_b", out_ch, n_experts, eps) {}

  Tensor<T> forward(const Tensor<T>& x, int expert_slot) {
    Tensor<T> y = relu_a.forward(norm_a.forward(conv_a.forward(x), expert_slot));
    return relu_b.forward(norm_b.forward(conv_b.forward(y), expert_slot));
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> g = conv_b.backward(norm_b.backward(relu_b.backward(dy)));
    return conv_a.backward(norm_a.backward(relu_a.backward(g)));
  }

  void release_cache() {
    conv_a.release_cache();
    conv_b.release_cache();
    norm_a.release_cache();
    norm_b.release_cache();
    relu_a.release_cache();
    relu_b.release_cache();
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    conv_a.collect_params(out);
    norm_a.collect_params(out);
    conv_b.collect_params(out);
    norm_b.collect_params(out);
  }
};

}  // namespace model_detail

/// Sizes of the shared/per-expert parameter split.
struct PartitionReport {
  size_t shared_count = 0;
  std::map<int, size_t> per_expert_count;  // expert id -> parameter count
};

/// U-Net with expert-conditioned instance normalization. Branch slots map
/// to user-facing expert ids via `expert_ids`; all convolution weights are
/// shared across experts, all norm affines are per-expert (encoder
/// conditioning optional).
template <class T>
class CinUNet {
 public:
  CinUNet(const ModelConfig& cfg, std::vector<int> expert_ids, std::uint64_t init_seed)
      : cfg_(cfg), expert_ids_(std::move(expert_ids)) {
    cfg_.validate();
    if (static_cast<int>(expert_ids_.size()) != cfg_.n_experts)
      throw ConfigError(detail::strprintf("expected %d expert ids, got %zu", cfg_.n_experts,
                                          expert_ids_.size()));
    for (size_t i = 0; i < expert_ids_.size(); ++i) {
      if (expert_ids_[i] < 1) throw ConfigError("expert ids must be >= 1");
      for (size_t j = 0; j < i; ++j)
        if (expert_ids_[j] == expert_ids_[i])
          throw ConfigError(detail::strprintf("duplicate expert id %d", expert_ids_[i]));
    }
    build(init_seed);
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<int>& expert_ids() const { return expert_ids_; }

  bool has_expert(int expert_id) const {
    for (int e : expert_ids_)
      if (e == expert_id) return true;
    return false;
  }

  int slot_of(int expert_id) const {
    for (size_t i = 0; i < expert_ids_.size(); ++i)
      if (expert_ids_[i] == expert_id) return static_cast<int>(i);
    throw ConfigError(detail::strprintf("model has no branch for expert %d", expert_id));
  }

  /// Adds a fresh branch for `new_expert`: identity starts at (γ=1, β=0),
  /// average at the element-wise mean of the existing branches. Shared
  /// weights and existing branches are untouched.
  void add_expert_branch(int new_expert, BranchInit mode) {
    if (new_expert < 1) throw ConfigError("expert ids must be >= 1");
    if (has_expert(new_expert))
      throw ConfigError(detail::strprintf("expert %d already has a branch", new_expert));
    const bool average = mode == BranchInit::average;
    if (average && expert_ids_.empty())
      throw ConfigError("average branch init requires existing branches");
    for_each_norm([&](CinNorm<T>& norm) { norm.add_branch(average); });
    expert_ids_.push_back(new_expert);
    cfg_.n_experts = static_cast<int>(expert_ids_.size());
  }

  Tensor<T> forward(const Tensor<T>& x, int expert_id) {
    const int slot = slot_of(expert_id);
    if (x.c != 1) throw ConfigError("model expects single-channel input");
    if (x.h % 32 != 0 || x.w % 32 != 0)
      throw ConfigError(detail::strprintf("input %dx%d not divisible by 32", x.h, x.w));

    s0_ = stem_relu_.forward(stem_norm_.forward(stem_conv_.forward(x), slot));
    Tensor<T> t = pool_.forward(s0_);
    for (auto& b : stage_[0]) t = b->forward(t, slot);
    s1_ = t;
    for (auto& b : stage_[1]) t = b->forward(t, slot);
    s2_ = t;
    for (auto& b : stage_[2]) t = b->forward(t, slot);
    s3_ = t;
    for (auto& b : stage_[3]) t = b->forward(t, slot);

    t = dec_[0]->forward(concat_channels(up_[0].forward(t), s3_), slot);
    t = dec_[1]->forward(concat_channels(up_[1].forward(t), s2_), slot);
    t = dec_[2]->forward(concat_channels(up_[2].forward(t), s1_), slot);
    t = dec_[3]->forward(concat_channels(up_[3].forward(t), s0_), slot);
    return head_conv_.forward(final_up_.forward(t));
  }

  /// Backpropagates `dlogits` through the network, accumulating parameter
  /// gradients (shared weights and the active expert's affines only).
  /// Returns the gradient with respect to the input.
  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> g = final_up_.backward(head_conv_.backward(dlogits));

    auto split_dec = [&](int i, const Tensor<T>& skip, Tensor<T>& dskip) {
      Tensor<T> gin = dec_[static_cast<size_t>(i)]->backward(g);
      Tensor<T> dup(gin.n, gin.c - skip.c, gin.h, gin.w);
      dskip = Tensor<T>(gin.n, skip.c, gin.h, gin.w);
      split_channels(gin, dup, dskip);
      g = up_[static_cast<size_t>(i)].backward(dup);
    };

    Tensor<T> ds0, ds1, ds2, ds3;
    split_dec(3, s0_, ds0);
    split_dec(2, s1_, ds1);
    split_dec(1, s2_, ds2);
    split_dec(0, s3_, ds3);

    for (auto it = stage_[3].rbegin(); it != stage_[3].rend(); ++it) g = (*it)->backward(g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += ds3.v[i];
    for (auto it = stage_[2].rbegin(); it != stage_[2].rend(); ++it) g = (*it)->backward(g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += ds2.v[i];
    for (auto it = stage_[1].rbegin(); it != stage_[1].rend(); ++it) g = (*it)->backward(g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += ds1.v[i];
    for (auto it = stage_[0].rbegin(); it != stage_[0].rend(); ++it) g = (*it)->backward(g);
    g = pool_.backward(g);
    for (size_t i = 0; i < g.size(); ++i) g.v[i] += ds0.v[i];
    return stem_conv_.backward(stem_norm_.backward(stem_relu_.backward(g)));
  }

  void zero_grad() {
    for (auto& p : parameters()) std::fill(p.grad->begin(), p.grad->end(), T(0));
  }

  /// Every parameter block with its shared/expert role. Expert roles carry
  /// branch slots; `expert_ids()[slot]` gives the user-facing id.
  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    stem_conv_.collect_params(out);
    stem_norm_.collect_params(out);
    for (auto& st : stage_)
      for (auto& b : st) b->collect_params(out);
    for (int i = 0; i < 4; ++i) dec_[static_cast<size_t>(i)]->collect_params(out);
    head_conv_.collect_params(out);
    return out;
  }

  /// Optimization scope: `all` = shared weights plus the chosen expert's
  /// affines; `expert_only` = that expert's affines alone.
  std::vector<ParamRef<T>> trainable_parameters(Scope scope, int expert_id) {
    const int slot = slot_of(expert_id);
    std::vector<ParamRef<T>> out;
    for (auto& p : parameters()) {
      if (p.role.shared) {
        if (scope == Scope::all) out.push_back(p);
      } else if (p.role.expert_slot == slot) {
        out.push_back(p);
      }
    }
    return out;
  }

  PartitionReport partition_report() {
    PartitionReport rep;
    for (auto& p : parameters()) {
      if (p.role.shared)
        rep.shared_count += p.value->size();
      else
        rep.per_expert_count[expert_ids_[static_cast<size_t>(p.role.expert_slot)]] +=
            p.value->size();
    }
    return rep;
  }

  /// Frees cached activations held for the backward pass.
  void release_caches() {
    stem_conv_.release_cache();
    stem_norm_.release_cache();
    stem_relu_.release_cache();
    pool_.release_cache();
    for (auto& st : stage_)
      for (auto& b : st) b->release_cache();
    for (int i = 0; i < 4; ++i) dec_[static_cast<size_t>(i)]->release_cache();
    head_conv_.release_cache();
    s0_ = s1_ = s2_ = s3_ = Tensor<T>();
  }

 private:
  void build(std::uint64_t init_seed) {
    int ordinal = 0;
    auto layer_rng = [&]() { return Rng::keyed(init_seed, {0x1a7e5u, static_cast<std::uint64_t>(ordinal++)}); };

    const int W = cfg_.base_width;
    const bool enc_cond = cfg_.condition_encoder;
    const int enc_experts = cfg_.n_experts;
    const double eps = cfg_.norm_eps;

    {
      Rng rng = layer_rng();
      stem_conv_ = Conv2d<T>("stem.conv", 1, W, 7, 2, 3, false, rng);
    }
    stem_norm_ = CinNorm<T>("stem.norm", W, enc_experts, eps, enc_cond);

    const std::array<int, 4> stage_width{W, 2 * W, 4 * W, 8 * W};
    int in_ch = W;
    for (int s = 0; s < 4; ++s) {
      const int out_ch = stage_width[static_cast<size_t>(s)];
      for (int b = 0; b < cfg_.stage_blocks[static_cast<size_t>(s)]; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        Rng rng = layer_rng();
        stage_[static_cast<size_t>(s)].push_back(std::make_unique<model_detail::BasicBlock<T>>(
            detail::strprintf("enc%d.b%d", s + 1, b), in_ch, out_ch, stride, enc_experts,
            enc_cond, eps, rng));
        in_ch = out_ch;
      }
    }

    const std::array<int, 4> dec_w = cfg_.resolved_decoder_widths();
    const std::array<int, 4> skip_w{4 * W, 2 * W, W, W};
    int up_ch = 8 * W;
    for (int d = 0; d < 4; ++d) {
      Rng rng = layer_rng();
      dec_[static_cast<size_t>(d)] = std::make_unique<model_detail::DecoderBlock<T>>(
          detail::strprintf("dec%d", d), up_ch + skip_w[static_cast<size_t>(d)],
          dec_w[static_cast<size_t>(d)], cfg_.n_experts, eps, rng);
      up_ch = dec_w[static_cast<size_t>(d)];
    }

    {
      Rng rng = layer_rng();
      head_conv_ = Conv2d<T>("head.conv", dec_w[3], 1, 1, 1, 0, true, rng);
    }
  }

  template <class F>
  void for_each_norm(F&& f) {
    f(stem_norm_);
    for (auto& st : stage_)
      for (auto& b : st) {
        f(b->norm1);
        f(b->norm2);
        if (b->has_proj) f(b->proj_norm);
      }
    for (int i = 0; i < 4; ++i) {
      f(dec_[static_cast<size_t>(i)]->norm_a);
      f(dec_[static_cast<size_t>(i)]->norm_b);
    }
  }

  ModelConfig cfg_;
  std::vector<int> expert_ids_;

  Conv2d<T> stem_conv_, head_conv_;
  CinNorm<T> stem_norm_;
  ReLU<T> stem_relu_;
  MaxPool3x3s2<T> pool_;
  std::array<std::vector<std::unique_ptr<model_detail::BasicBlock<T>>>, 4> stage_;
  std::array<Upsample2x<T>, 4> up_;
  std::array<std::unique_ptr<model_detail::DecoderBlock<T>>, 4> dec_;
  Upsample2x<T> final_up_;

  Tensor<T> s0_, s1_, s2_, s3_;
};

/// Runs one image through the model and thresholds sigmoid(logits).
template <class T>
inline data::BinaryMask predict_mask(CinUNet<T>& model, const data::ImageGrid& image,
                                     int expert_id, double threshold = 0.5) {
  Tensor<T> x(1, 1, image.height(), image.width());
  for (size_t i = 0; i < x.size(); ++i) x.v[i] = static_cast<T>(image.pixels()[i]);
  Tensor<T> logits = model.forward(x, expert_id);
  data::BinaryMask mask(image.height(), image.width());
  for (size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.v[i])));
    mask.pixels()[i] = p >= threshold ? 1 : 0;
  }
  return mask;
}

}  // namespace expertadapt::nn
