#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "liteheart/models.hpp"
#include "liteheart/rng.hpp"
#include "liteheart/tensor.hpp"

namespace liteheart {

struct KDConfig {
  double tau = 4.0;          // distillation temperature
  double alpha_shape = 1.0;  // Beta(alpha, alpha) shape for the region size
  double loss_alpha = 1.0;   // weight of L_K
  double loss_beta = 0.5;    // weight of L_D
  std::optional<double> lambda_override;  // forces the region size (tests, ablation)

  void validate() const {
    if (!(tau > 0)) throw std::invalid_argument("KDConfig: tau must be positive");
    if (!(alpha_shape > 0)) throw std::invalid_argument("KDConfig: alpha_shape must be positive");
    if (loss_alpha < 0 || loss_beta < 0)
      throw std::invalid_argument("KDConfig: loss weights must be >= 0");
  }
};

/// Per-step loss components; total follows the semi-supervised objective
/// total = L_Y + alpha (L_K^B + L_K^U) + beta (L_D^B + L_D^U).
struct LossReport {
  double l_y = 0.0;
  double l_k_labeled = 0.0;
  double l_k_unlabeled = 0.0;
  double l_d_labeled = 0.0;
  double l_d_unlabeled = 0.0;
  double total = 0.0;

  double recompute_total(double alpha, double beta) const {
    return l_y + alpha * (l_k_labeled + l_k_unlabeled) + beta * (l_d_labeled + l_d_unlabeled);
  }
};

// ---------------------------------------------------------------------------
// Region boxes

/// Sampled exchange region. r_w/r_h are the pre-clip extents
/// round(L*sqrt(1-lambda)) and round(12*sqrt(1-lambda)); the box
/// [r_x, r_x+r_w) x [r_y, r_y+r_h) is clipped to the signal extent.
struct RegionBox {
  double lambda = 1.0;
  Index r_x = 0, r_y = 0;
  Index r_w = 0, r_h = 0;
  Index x0 = 0, x1 = 0;  // clipped sample range [x0, x1)
  Index y0 = 0, y1 = 0;  // clipped lead range [y0, y1)
  Index length = 0;      // L of the signal the box was sampled for

  Index mask_zero_count() const { return (x1 - x0) * (y1 - y0); }
  double mask_fraction() const {
    return static_cast<double>(mask_zero_count()) / static_cast<double>(kNumLeads * length);
  }
  bool inside(Index lead, Index t) const { return lead >= y0 && lead < y1 && t >= x0 && t < x1; }

  /// Binary mask [12, L]: 0 inside the clipped box, 1 elsewhere.
  Tensor<float> mask() const {
    Tensor<float> m = Tensor<float>::full({kNumLeads, length}, 1.0f);
    for (Index lead = y0; lead < y1; ++lead)
      for (Index t = x0; t < x1; ++t) m.at(lead, t) = 0.0f;
    return m;
  }

  static RegionBox from_lambda(double lambda, Index r_x, Index r_y, Index L) {
    RegionBox b;
    b.lambda = lambda;
    b.length = L;
    b.r_x = r_x;
    b.r_y = r_y;
    const double root = std::sqrt(std::max(0.0, 1.0 - lambda));
    b.r_w = static_cast<Index>(std::llround(static_cast<double>(L) * root));
    b.r_h = static_cast<Index>(std::llround(static_cast<double>(kNumLeads) * root));
    b.x0 = std::min(r_x, L);
    b.x1 = std::min(r_x + b.r_w, L);
    b.y0 = std::min<Index>(r_y, kNumLeads);
    b.y1 = std::min<Index>(r_y + b.r_h, kNumLeads);
    return b;
  }
};

inline RegionBox sample_region_box(Index L, double alpha_shape, RandomEngine& rng,
                                   std::optional<double> lambda_override = std::nullopt) {
  if (L <= 0) throw std::invalid_argument("sample_region_box: L must be positive");
  const double lambda = lambda_override ? *lambda_override : rng.beta(alpha_shape, alpha_shape);
  const Index r_x = rng.uniform_int(L + 1);
  const Index r_y = rng.uniform_int(kNumLeads + 1);
  return RegionBox::from_lambda(lambda, r_x, r_y, L);
}

/// x_n = M . x_i + (1 - M) . x_j over [12, L] signals.
template <class T>
Tensor<T> region_mix(const Tensor<T>& x_i, const Tensor<T>& x_j, const RegionBox& box) {
  if (!x_i.same_shape(x_j))
    throw std::invalid_argument("region_mix: shape mismatch " + shape_str(x_i.shape()) + " vs " +
                                shape_str(x_j.shape()));
  Tensor<T> out = x_i;
  const Index L = x_i.dim(x_i.ndim() - 1);
  for (Index lead = box.y0; lead < box.y1; ++lead)
    for (Index t = box.x0; t < box.x1; ++t) out.at(lead, t) = x_j.at(lead, t);
  (void)L;
  return out;
}

/// Label weight uses the clipped mask area, so it always describes the mask
/// actually applied: y_n = (1 - w) y_i + w y_j, w = zeros(M) / 12L.
template <class T>
std::vector<T> mix_labels(const std::vector<T>& y_i, const std::vector<T>& y_j,
                          const RegionBox& box) {
  if (y_i.size() != y_j.size()) throw std::invalid_argument("mix_labels: label size mismatch");
  const double w = box.mask_fraction();
  std::vector<T> out(y_i.size());
  for (std::size_t c = 0; c < y_i.size(); ++c)
    out[c] = static_cast<T>((1.0 - w) * y_i[c] + w * y_j[c]);
  return out;
}

// ---------------------------------------------------------------------------
// Loss kernels. Sigmoid outputs are clamped to [1e-7, 1 - 1e-7] before any
// logarithm; gradients honor the clamp (zero in the clamped region).

namespace detail {

constexpr double kSigEps = 1e-7;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ClampedLog {
  double log_value;
  bool clamped;
};

inline ClampedLog log_sigmoid(double x) {
  const double s = sigmoid(x);
  if (s < kSigEps) return {std::log(kSigEps), true};
  if (s > 1.0 - kSigEps) return {std::log(1.0 - kSigEps), true};
  return {std::log(s), false};
}

inline ClampedLog log_one_minus_sigmoid(double x) { return log_sigmoid(-x); }

}  // namespace detail

/// Temperature-scaled sigmoid distillation loss. Teacher logits are treated
/// as constants; the optional out-gradient is with respect to p_s.
template <class T>
double kd_loss(const Tensor<T>& p_s, const Tensor<T>& p_t, double tau,
               Tensor<T>* dp_s = nullptr) {
  if (!p_s.same_shape(p_t)) throw std::invalid_argument("kd_loss: shape mismatch");
  if (!(tau > 0)) throw std::invalid_argument("kd_loss: tau must be positive");
  const Index total = p_s.numel();
  if (total == 0) return 0.0;
  if (dp_s && !dp_s->same_shape(p_s)) *dp_s = Tensor<T>(p_s.shape());

  double acc = 0.0;
  const double norm = tau * tau / static_cast<double>(total);
  for (Index i = 0; i < total; ++i) {
    const double zs = static_cast<double>(p_s[i]) / tau;
    const double zt = static_cast<double>(p_t[i]) / tau;
    const double st = detail::sigmoid(zt);
    const auto ls = detail::log_sigmoid(zs);
    const auto lns = detail::log_one_minus_sigmoid(zs);
    acc += (1.0 - st) * lns.log_value + st * ls.log_value;
    if (dp_s) {
      const double ss = detail::sigmoid(zs);
      double g = 0.0;
      if (!ls.clamped) g += st * (1.0 - ss);
      if (!lns.clamped) g -= (1.0 - st) * ss;
      // d/dp_s of -norm * [...] with inner scale 1/tau
      (*dp_s)[i] = static_cast<T>(-norm * g / tau);
    }
  }
  return -norm * acc;
}

/// Multi-label binary cross-entropy on logits; supports soft targets.
template <class T>
double bce_multilabel(const Tensor<T>& p_s, const Tensor<T>& y, Tensor<T>* dp_s = nullptr) {
  if (!p_s.same_shape(y)) throw std::invalid_argument("bce_multilabel: shape mismatch");
  const Index total = p_s.numel();
  if (total == 0) return 0.0;
  if (dp_s && !dp_s->same_shape(p_s)) *dp_s = Tensor<T>(p_s.shape());

  double acc = 0.0;
  const double norm = 1.0 / static_cast<double>(total);
  for (Index i = 0; i < total; ++i) {
    const double yi = static_cast<double>(y[i]);
    if (yi < 0.0 || yi > 1.0) throw std::invalid_argument("bce_multilabel: targets must be in [0,1]");
    const double z = static_cast<double>(p_s[i]);
    const auto ls = detail::log_sigmoid(z);
    const auto lns = detail::log_one_minus_sigmoid(z);
    acc += (1.0 - yi) * lns.log_value + yi * ls.log_value;
    if (dp_s) {
      const double s = detail::sigmoid(z);
      double g = 0.0;
      if (!ls.clamped) g += yi * (1.0 - s);
      if (!lns.clamped) g -= (1.0 - yi) * s;
      (*dp_s)[i] = static_cast<T>(-norm * g);
    }
  }
  return -norm * acc;
}

/// Discriminator (mutual-information) loss over paired and cyclically
/// shifted negative pairs: pi(n) = (n+1) mod N, so no sample self-pairs for
/// N >= 2. Gradients flow into theta_d and (through dz_s) theta_s; o_t is
/// constant. grad_scale multiplies every gradient contribution (the loss
/// value is returned unscaled); used to fold the beta weight into one pass.
template <class T>
double discriminator_loss(const Tensor<T>& z_s, const Tensor<T>& o_t, Discriminator<T>& disc,
                          Tensor<T>* dz_s = nullptr, double grad_scale = 1.0) {
  const Index N = z_s.dim(0);
  if (N < 2) throw std::invalid_argument("discriminator_loss: needs N >= 2 for negative pairing");
  if (o_t.dim(0) != N) throw std::invalid_argument("discriminator_loss: batch mismatch");

  Tensor<T> o_neg(o_t.shape());
  const Index C = o_t.dim(1);
  for (Index n = 0; n < N; ++n) {
    const Index src = (n + 1) % N;
    for (Index c = 0; c < C; ++c) o_neg.at(n, c) = o_t.at(src, c);
  }

  const bool want_grads = dz_s != nullptr;
  nn::Cache<T> cache_pos, cache_neg;
  Tensor<T> pos = disc.forward(z_s, o_t, want_grads ? &cache_pos : nullptr);
  Tensor<T> neg = disc.forward(z_s, o_neg, want_grads ? &cache_neg : nullptr);

  double acc = 0.0;
  Tensor<T> dpos({N}), dneg({N});
  for (Index n = 0; n < N; ++n) {
    const auto lp = detail::log_sigmoid(static_cast<double>(pos[n]));
    const auto ln = detail::log_one_minus_sigmoid(static_cast<double>(neg[n]));
    acc += lp.log_value + ln.log_value;
    if (want_grads) {
      const double sp = detail::sigmoid(static_cast<double>(pos[n]));
      const double sn = detail::sigmoid(static_cast<double>(neg[n]));
      dpos[n] =
          static_cast<T>(lp.clamped ? 0.0 : -grad_scale * (1.0 - sp) / static_cast<double>(N));
      dneg[n] = static_cast<T>(ln.clamped ? 0.0 : grad_scale * sn / static_cast<double>(N));
    }
  }
  const double loss = -acc / static_cast<double>(N);

  if (want_grads) {
    Tensor<T> dz1 = disc.backward(dneg, cache_neg);
    Tensor<T> dz2 = disc.backward(dpos, cache_pos);
    *dz_s = Tensor<T>(z_s.shape());
    for (Index i = 0; i < dz_s->numel(); ++i) (*dz_s)[i] = dz1[i] + dz2[i];
  }
  return loss;
}

}  // namespace liteheart
