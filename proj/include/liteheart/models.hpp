#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "liteheart/nn.hpp"
#include "liteheart/signal.hpp"

namespace liteheart {

// ---------------------------------------------------------------------------
// Tiers

struct ClassifierSpec {
  std::string tier;
  Index w1 = 0, w2 = 0, feature_dim = 0;
  Index heads = 0, mlp_ratio = 2;
  Index target_params = 0;  // 0 = desk-scale tier without a size target
  double tolerance = 0.15;

  static ClassifierSpec for_tier(const std::string& tier);
  static std::vector<std::string> tier_names();
};

struct RestorationSpec {
  std::string tier;
  Index base_ch = 0;
  Index target_params = 0;
  double tolerance = 0.15;
  static constexpr Index kStages = 4;  // stride-2 each; total downsampling 16

  static RestorationSpec for_tier(const std::string& tier);
  static std::vector<std::string> tier_names();
};

// ---------------------------------------------------------------------------
// Classifier: conv stem (stride 4 x 3 = 64x) + self-attention + mean pooling.

template <class T>
struct AttnBlock {
  nn::LayerNorm<T> ln1, ln2;
  nn::MultiHeadSelfAttention<T> attn;
  nn::Linear<T> fc1, fc2;
  nn::ReLU<T> relu;

  void init(Index feat, Index heads, Index mlp_ratio, const std::string& name, RandomEngine& rng) {
    ln1.init(feat, name + ".ln1");
    ln2.init(feat, name + ".ln2");
    attn.init(feat, heads, name + ".attn", rng);
    fc1.init(feat, mlp_ratio * feat, name + ".fc1", rng, /*he=*/true);
    fc2.init(mlp_ratio * feat, feat, name + ".fc2", rng);
  }

  void collect(nn::ParamRefs<T>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }

  Tensor<T> forward(const Tensor<T>& x, Index n_tokens, nn::Cache<T>* cache) const {
    Tensor<T> u = ln1.forward(x, cache);
    Tensor<T> a = attn.forward(u, n_tokens, cache);
    Tensor<T> h(x.shape());
    for (Index i = 0; i < x.numel(); ++i) h[i] = x[i] + a[i];
    Tensor<T> v = ln2.forward(h, cache);
    Tensor<T> m = fc2.forward(relu.forward(fc1.forward(v, cache), cache), cache);
    Tensor<T> y(h.shape());
    for (Index i = 0; i < h.numel(); ++i) y[i] = h[i] + m[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Index n_tokens, nn::Cache<T>& cache) {
    Tensor<T> dm = fc1.backward(relu.backward(fc2.backward(dy, cache), cache), cache);
    Tensor<T> dh = ln2.backward(dm, cache);
    for (Index i = 0; i < dh.numel(); ++i) dh[i] += dy[i];
    Tensor<T> da = attn.backward(dh, n_tokens, cache);
    Tensor<T> dx = ln1.backward(da, cache);
    for (Index i = 0; i < dx.numel(); ++i) dx[i] += dh[i];
    return dx;
  }

  Index flops(Index N, Index n_tokens) const {
    return attn.flops(N, n_tokens) + fc1.flops(N * n_tokens) + fc2.flops(N * n_tokens);
  }
};

/// Convolution-attention multi-label classifier. Forward exposes both the
/// pooled feature vector z and the unactivated logits (sigmoid lives in the
/// losses and metrics only).
template <class T>
class ClassifierNet {
 public:
  ClassifierNet() = default;
  ClassifierNet(const ClassifierSpec& spec, Index n_classes, std::uint64_t init_seed)
      : spec_(spec), n_classes_(n_classes) {
    RandomEngine rng(RandomEngine::derive(init_seed, "classifier-init"));
    conv1_.init(kNumLeads, spec.w1, 7, 4, 3, "conv1", rng);
    cln1_.init(spec.w1, "cln1");
    conv2_.init(spec.w1, spec.w2, 5, 4, 2, "conv2", rng);
    cln2_.init(spec.w2, "cln2");
    conv3_.init(spec.w2, spec.feature_dim, 5, 4, 2, "conv3", rng);
    cln3_.init(spec.feature_dim, "cln3");
    block1_.init(spec.feature_dim, spec.heads, spec.mlp_ratio, "block1", rng);
    block2_.init(spec.feature_dim, spec.heads, spec.mlp_ratio, "block2", rng);
    lnf_.init(spec.feature_dim, "lnf");
    head_.init(spec.feature_dim, n_classes, "head", rng);
  }

  struct Output {
    Tensor<T> features;  // [N, F]
    Tensor<T> logits;    // [N, C]
  };

  /// conv_acts, when non-null, receives the post-activation output of the
  /// last convolutional block (the Grad-CAM tap), shape [N, F, Ttok].
  Output forward(const Tensor<T>& x, nn::Cache<T>* cache = nullptr,
                 Tensor<T>* conv_acts = nullptr) const {
    if (x.ndim() != 3 || x.dim(1) != kNumLeads)
      throw std::invalid_argument("ClassifierNet: expected [N, 12, L], got " +
                                  shape_str(x.shape()));
    const Index N = x.dim(0);
    Tensor<T> h = relu_.forward(cln1_.forward(conv1_.forward(x, cache), cache), cache);
    h = relu_.forward(cln2_.forward(conv2_.forward(h, cache), cache), cache);
    h = relu_.forward(cln3_.forward(conv3_.forward(h, cache), cache), cache);
    if (conv_acts) *conv_acts = h;
    const Index n_tokens = h.dim(2);

    Tensor<T> tokens = nn::transpose_cl(h);  // [N, Ttok, F]
    nn::add_positional_encoding(tokens);
    Tensor<T> flat = tokens.reshaped({N * n_tokens, spec_.feature_dim});
    flat = block1_.forward(flat, n_tokens, cache);
    flat = block2_.forward(flat, n_tokens, cache);
    flat = lnf_.forward(flat, cache);

    Output out;
    out.features = Tensor<T>({N, spec_.feature_dim});
    for (Index n = 0; n < N; ++n)
      for (Index f = 0; f < spec_.feature_dim; ++f) {
        double acc = 0.0;
        for (Index t = 0; t < n_tokens; ++t)
          acc += flat[(n * n_tokens + t) * spec_.feature_dim + f];
        out.features.at(n, f) = static_cast<T>(acc / static_cast<double>(n_tokens));
      }
    out.logits = head_.forward(out.features, cache);
    if (cache) token_count_ = n_tokens;
    return out;
  }

  /// Backward from logits plus an optional external gradient on the pooled
  /// features (the discriminator path). Returns the input gradient.
  /// d_conv_acts, when non-null, receives the gradient at the Grad-CAM tap.
  Tensor<T> backward(const Tensor<T>& dlogits, const Tensor<T>* dfeatures, nn::Cache<T>& cache,
                     Tensor<T>* d_conv_acts = nullptr) {
    const Index N = dlogits.dim(0);
    const Index n_tokens = token_count_;
    Tensor<T> dz = head_.backward(dlogits, cache);
    if (dfeatures) {
      for (Index i = 0; i < dz.numel(); ++i) dz[i] += (*dfeatures)[i];
    }
    Tensor<T> dflat({N * n_tokens, spec_.feature_dim});
    for (Index n = 0; n < N; ++n)
      for (Index t = 0; t < n_tokens; ++t)
        for (Index f = 0; f < spec_.feature_dim; ++f)
          dflat[(n * n_tokens + t) * spec_.feature_dim + f] =
              dz.at(n, f) / static_cast<T>(n_tokens);

    dflat = lnf_.backward(dflat, cache);
    dflat = block2_.backward(dflat, n_tokens, cache);
    dflat = block1_.backward(dflat, n_tokens, cache);

    // [N, Ttok, F] -> [N, F, Ttok]; the positional encoding is additive.
    Tensor<T> dh({N, spec_.feature_dim, n_tokens});
    for (Index n = 0; n < N; ++n)
      for (Index t = 0; t < n_tokens; ++t)
        for (Index f = 0; f < spec_.feature_dim; ++f)
          dh.at(n, f, t) = dflat[(n * n_tokens + t) * spec_.feature_dim + f];
    if (d_conv_acts) *d_conv_acts = dh;

    Tensor<T> g = conv3_.backward(cln3_.backward(relu_.backward(dh, cache), cache), cache);
    g = conv2_.backward(cln2_.backward(relu_.backward(g, cache), cache), cache);
    g = conv1_.backward(cln1_.backward(relu_.backward(g, cache), cache), cache);
    return g;
  }

  /// Parameter references are rebuilt per call, so models stay safely
  /// copyable and movable.
  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> out;
    conv1_.collect(out);
    cln1_.collect(out);
    conv2_.collect(out);
    cln2_.collect(out);
    conv3_.collect(out);
    cln3_.collect(out);
    block1_.collect(out);
    block2_.collect(out);
    lnf_.collect(out);
    head_.collect(out);
    return out;
  }
  Index param_count() const {
    return nn::param_count(const_cast<ClassifierNet*>(this)->params());
  }

  Index flops(Index N, Index L) const {
    const Index l1 = conv1_.out_len(L), l2 = conv2_.out_len(l1), l3 = conv3_.out_len(l2);
    Index total = conv1_.flops(N, L) + conv2_.flops(N, l1) + conv3_.flops(N, l2);
    total += block1_.flops(N, l3);
    total += block2_.flops(N, l3);
    total += head_.flops(N);
    return total;
  }

  const ClassifierSpec& spec() const { return spec_; }
  Index n_classes() const { return n_classes_; }
  /// Input samples per Grad-CAM tap position.
  Index cam_stride() const { return 64; }

 private:
  ClassifierSpec spec_;
  Index n_classes_ = 0;
  nn::Conv1d<T> conv1_, conv2_, conv3_;
  nn::ChannelLayerNorm<T> cln1_, cln2_, cln3_;
  AttnBlock<T> block1_, block2_;
  nn::LayerNorm<T> lnf_;
  nn::Linear<T> head_;
  nn::ReLU<T> relu_;
  mutable Index token_count_ = 0;
};

// ---------------------------------------------------------------------------
// Restoration: 4-stage 1-D encoder/decoder with skip concatenation.
//
// Channels: stem c; encoder stages c->2c->4c->8c->8c; decoder mirrors with
// skip concatenation at every resolution, head maps back to 12 leads.

template <class T>
class RestorationNet {
 public:
  RestorationNet() = default;
  RestorationNet(const RestorationSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    RandomEngine rng(RandomEngine::derive(init_seed, "restoration-init"));
    const Index c = spec.base_ch;
    ch_ = {c, 2 * c, 4 * c, 8 * c, 8 * c};
    stem_.init(1, c, 7, 1, 3, "stem", rng);
    stem_ln_.init(c, "stem_ln");
    for (Index i = 0; i < kS; ++i) {
      const std::string base = "enc" + std::to_string(i);
      enc_down_[i].init(ch_[i], ch_[i + 1], 5, 2, 2, base + ".down", rng);
      enc_ln1_[i].init(ch_[i + 1], base + ".ln1");
      enc_conv_[i].init(ch_[i + 1], ch_[i + 1], 5, 1, 2, base + ".conv", rng);
      enc_ln2_[i].init(ch_[i + 1], base + ".ln2");
    }
    for (Index i = 0; i < kS; ++i) {
      const std::string base = "dec" + std::to_string(i);
      dec_conv1_[i].init(ch_[i + 1] + ch_[i], ch_[i], 5, 1, 2, base + ".conv1", rng);
      dec_ln1_[i].init(ch_[i], base + ".ln1");
      dec_conv2_[i].init(ch_[i], ch_[i], 5, 1, 2, base + ".conv2", rng);
      dec_ln2_[i].init(ch_[i], base + ".ln2");
    }
    head_.init(c, kNumLeads, 7, 1, 3, "head", rng);
  }

  Index downsampling_factor() const { return Index(1) << kS; }

  /// [N, 1, L] -> [N, 12, L]. L not divisible by the downsampling factor is
  /// handled by internal symmetric zero padding, never failure.
  Tensor<T> forward(const Tensor<T>& x, nn::Cache<T>* cache = nullptr) const {
    if (x.ndim() != 3 || x.dim(1) != 1)
      throw std::invalid_argument("RestorationNet: expected [N, 1, L], got " +
                                  shape_str(x.shape()));
    const Index N = x.dim(0), L = x.dim(2);
    const Index df = downsampling_factor();
    const Index Lp = (L + df - 1) / df * df;
    const Index pad_left = (Lp - L) / 2;
    Tensor<T> xin = x;
    if (Lp != L) {
      xin = Tensor<T>({N, 1, Lp});
      for (Index n = 0; n < N; ++n)
        for (Index t = 0; t < L; ++t) xin.at(n, 0, t + pad_left) = x.at(n, 0, t);
    }
    if (cache) {
      pad_left_ = pad_left;
      in_len_ = L;
    }

    // skips[i] feeds decoder stage i: skips[0] = stem output, skips[i>=1] =
    // encoder stage i-1 output.
    std::array<Tensor<T>, kS> skips;
    Tensor<T> h = relu_.forward(stem_ln_.forward(stem_.forward(xin, cache), cache), cache);
    for (Index i = 0; i < kS; ++i) {
      skips[static_cast<std::size_t>(i)] = h;
      h = relu_.forward(enc_ln1_[i].forward(enc_down_[i].forward(h, cache), cache), cache);
      h = relu_.forward(enc_ln2_[i].forward(enc_conv_[i].forward(h, cache), cache), cache);
    }
    for (Index i = kS - 1; i >= 0; --i) {
      Tensor<T> cat = nn::concat_channels(nn::upsample2(h), skips[static_cast<std::size_t>(i)]);
      h = relu_.forward(dec_ln1_[i].forward(dec_conv1_[i].forward(cat, cache), cache), cache);
      h = relu_.forward(dec_ln2_[i].forward(dec_conv2_[i].forward(h, cache), cache), cache);
    }
    Tensor<T> y = head_.forward(h, cache);
    if (Lp != L) {
      Tensor<T> out({N, kNumLeads, L});
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < kNumLeads; ++c)
          for (Index t = 0; t < L; ++t) out.at(n, c, t) = y.at(n, c, t + pad_left);
      return out;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy_in, nn::Cache<T>& cache) {
    const Index N = dy_in.dim(0), L = in_len_;
    const Index df = downsampling_factor();
    const Index Lp = (L + df - 1) / df * df;
    Tensor<T> dy = dy_in;
    if (Lp != L) {
      dy = Tensor<T>({N, kNumLeads, Lp});
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < kNumLeads; ++c)
          for (Index t = 0; t < L; ++t) dy.at(n, c, t + pad_left_) = dy_in.at(n, c, t);
    }

    Tensor<T> dh = head_.backward(dy, cache);
    std::array<Tensor<T>, kS> dskips;
    for (Index i = 0; i < kS; ++i) {
      Tensor<T> g = dec_conv2_[i].backward(
          dec_ln2_[i].backward(relu_.backward(dh, cache), cache), cache);
      Tensor<T> dcat = dec_conv1_[i].backward(
          dec_ln1_[i].backward(relu_.backward(g, cache), cache), cache);
      Tensor<T> dup({dcat.dim(0), ch_[i + 1], dcat.dim(2)});
      Tensor<T> dskip({dcat.dim(0), ch_[i], dcat.dim(2)});
      nn::split_channels(dcat, dup, dskip);
      dskips[static_cast<std::size_t>(i)] = std::move(dskip);
      dh = nn::upsample2_backward(dup);
    }
    // dh is now the gradient at the bottleneck (encoder stage kS-1 output).
    for (Index i = kS - 1; i >= 0; --i) {
      Tensor<T> g = enc_conv_[i].backward(
          enc_ln2_[i].backward(relu_.backward(dh, cache), cache), cache);
      g = enc_down_[i].backward(enc_ln1_[i].backward(relu_.backward(g, cache), cache), cache);
      const Tensor<T>& ds = dskips[static_cast<std::size_t>(i)];
      for (Index j = 0; j < g.numel(); ++j) g[j] += ds[j];
      dh = std::move(g);
    }
    Tensor<T> dx = stem_.backward(stem_ln_.backward(relu_.backward(dh, cache), cache), cache);
    if (Lp != L) {
      Tensor<T> out({N, 1, L});
      for (Index n = 0; n < N; ++n)
        for (Index t = 0; t < L; ++t) out.at(n, 0, t) = dx.at(n, 0, t + pad_left_);
      return out;
    }
    return dx;
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> out;
    stem_.collect(out);
    stem_ln_.collect(out);
    for (Index i = 0; i < kS; ++i) {
      enc_down_[i].collect(out);
      enc_ln1_[i].collect(out);
      enc_conv_[i].collect(out);
      enc_ln2_[i].collect(out);
    }
    for (Index i = 0; i < kS; ++i) {
      dec_conv1_[i].collect(out);
      dec_ln1_[i].collect(out);
      dec_conv2_[i].collect(out);
      dec_ln2_[i].collect(out);
    }
    head_.collect(out);
    return out;
  }
  Index param_count() const {
    return nn::param_count(const_cast<RestorationNet*>(this)->params());
  }

  Index flops(Index N, Index L) const {
    const Index df = downsampling_factor();
    const Index Lp = (L + df - 1) / df * df;
    Index total = stem_.flops(N, Lp);
    Index len = Lp;
    for (Index i = 0; i < kS; ++i) {
      total += enc_down_[i].flops(N, len);
      len /= 2;
      total += enc_conv_[i].flops(N, len);
    }
    for (Index i = kS - 1; i >= 0; --i) {
      len *= 2;
      total += dec_conv1_[i].flops(N, len) + dec_conv2_[i].flops(N, len);
    }
    total += head_.flops(N, Lp);
    return total;
  }

  const RestorationSpec& spec() const { return spec_; }

 private:
  static constexpr Index kS = RestorationSpec::kStages;

  RestorationSpec spec_;
  std::vector<Index> ch_;
  nn::Conv1d<T> stem_, head_;
  nn::ChannelLayerNorm<T> stem_ln_;
  nn::Conv1d<T> enc_down_[kS], enc_conv_[kS];
  nn::ChannelLayerNorm<T> enc_ln1_[kS], enc_ln2_[kS];
  nn::Conv1d<T> dec_conv1_[kS], dec_conv2_[kS];
  nn::ChannelLayerNorm<T> dec_ln1_[kS], dec_ln2_[kS];
  nn::ReLU<T> relu_;
  mutable Index pad_left_ = 0, in_len_ = 0;
};

// ---------------------------------------------------------------------------

/// Pairwise discriminator scoring (student feature, teacher output) pairs:
/// concatenation followed by a 2-layer nonlinear map -> scalar logit.
template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(Index feature_dim, Index n_classes, Index hidden, std::uint64_t init_seed)
      : feat_(feature_dim), classes_(n_classes), hidden_(hidden) {
    if (feature_dim <= 0 || n_classes <= 0)
      throw std::invalid_argument("Discriminator: dims must be positive");
    RandomEngine rng(RandomEngine::derive(init_seed, "discriminator-init"));
    fc1_.init(feature_dim + n_classes, hidden, "disc.fc1", rng, /*he=*/true);
    fc2_.init(hidden, 1, "disc.fc2", rng);
  }

  /// D(z, o) -> [N] scalar logits. o is treated as constant downstream.
  Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& o, nn::Cache<T>* cache = nullptr) const {
    const Index N = z.dim(0);
    if (o.dim(0) != N) throw std::invalid_argument("Discriminator: batch mismatch");
    if (z.dim(1) != feat_ || o.dim(1) != classes_)
      throw std::invalid_argument("Discriminator: dim mismatch");
    Tensor<T> cat({N, feat_ + classes_});
    for (Index n = 0; n < N; ++n) {
      for (Index f = 0; f < feat_; ++f) cat.at(n, f) = z.at(n, f);
      for (Index c = 0; c < classes_; ++c) cat.at(n, feat_ + c) = o.at(n, c);
    }
    Tensor<T> out = fc2_.forward(relu_.forward(fc1_.forward(cat, cache), cache), cache);
    return out.reshaped({N});
  }

  /// Returns the gradient with respect to z; parameter grads accumulate.
  Tensor<T> backward(const Tensor<T>& dout, nn::Cache<T>& cache) {
    const Index N = dout.numel();
    Tensor<T> dcat =
        fc1_.backward(relu_.backward(fc2_.backward(dout.reshaped({N, 1}), cache), cache), cache);
    Tensor<T> dz({N, feat_});
    for (Index n = 0; n < N; ++n)
      for (Index f = 0; f < feat_; ++f) dz.at(n, f) = dcat.at(n, f);
    return dz;
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> out;
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
  }
  Index param_count() const {
    return nn::param_count(const_cast<Discriminator*>(this)->params());
  }
  Index feature_dim() const { return feat_; }
  Index n_classes() const { return classes_; }
  Index hidden() const { return hidden_; }

 private:
  Index feat_ = 0, classes_ = 0, hidden_ = 0;
  nn::Linear<T> fc1_, fc2_;
  nn::ReLU<T> relu_;
};

// ---------------------------------------------------------------------------
// Builders

ClassifierNet<float> build_classifier(const std::string& tier, Index n_classes,
                                      std::uint64_t init_seed);
RestorationNet<float> build_restoration(const std::string& tier, std::uint64_t init_seed);
Discriminator<float> build_discriminator(Index feature_dim, Index n_classes,
                                         std::uint64_t init_seed, Index hidden = 256);

// ---------------------------------------------------------------------------
// Parameter utilities

template <class Model>
void copy_params(Model& dst, Model& src) {
  auto dp = dst.params();
  auto sp = src.params();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i]->value = sp[i]->value;
}

/// FNV-1a over the raw parameter bytes; used by the frozen-weights contracts.
template <class T>
std::uint64_t param_hash(const nn::ParamRefs<T>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const nn::Param<T>* p : params) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = static_cast<std::size_t>(p->value.numel()) * sizeof(T);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint IO (float models): versioned header + raw parameter blobs.

struct CheckpointInfo {
  std::string kind;  // "classifier" | "restoration" | "discriminator"
  std::string tier;
  Index n_classes = 0;
};

void save_classifier(const std::string& path, ClassifierNet<float>& model,
                     const std::string& rng_state = "");
ClassifierNet<float> load_classifier(const std::string& path);
void save_restoration(const std::string& path, RestorationNet<float>& model,
                      const std::string& rng_state = "");
RestorationNet<float> load_restoration(const std::string& path);
void save_discriminator(const std::string& path, Discriminator<float>& model);
Discriminator<float> load_discriminator(const std::string& path);
CheckpointInfo peek_checkpoint(const std::string& path);

}  // namespace liteheart
