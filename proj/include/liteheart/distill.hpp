#pragma once

#include <optional>
#include <vector>

#include "liteheart/losses.hpp"
#include "liteheart/models.hpp"

namespace liteheart {

/// Ablation ladder rungs. Baseline trains the student with the supervised
/// loss only; each later rung adds one module on top of vanilla KD.
enum class DistillVariant { Baseline, VanillaKD, RegionKD, RegionKDMI, Full };

inline const char* variant_name(DistillVariant v) {
  switch (v) {
    case DistillVariant::Baseline: return "baseline";
    case DistillVariant::VanillaKD: return "vanilla_kd";
    case DistillVariant::RegionKD: return "liteheart_i";
    case DistillVariant::RegionKDMI: return "liteheart_ii";
    case DistillVariant::Full: return "liteheart";
  }
  return "?";
}

inline DistillVariant variant_from_name(const std::string& name) {
  for (DistillVariant v : {DistillVariant::Baseline, DistillVariant::VanillaKD,
                           DistillVariant::RegionKD, DistillVariant::RegionKDMI,
                           DistillVariant::Full}) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown distillation variant '" + name + "'");
}

inline bool variant_uses_kd(DistillVariant v) { return v != DistillVariant::Baseline; }
inline bool variant_uses_mixing(DistillVariant v) {
  return v == DistillVariant::RegionKD || v == DistillVariant::RegionKDMI ||
         v == DistillVariant::Full;
}
inline bool variant_uses_discriminator(DistillVariant v) {
  return v == DistillVariant::RegionKDMI || v == DistillVariant::Full;
}
inline bool variant_uses_unlabeled(DistillVariant v) { return v == DistillVariant::Full; }

/// One mini-batch of prepared signals. `labels` is empty for unlabeled data.
template <class T>
struct DistillBatch {
  Tensor<T> real;      // [N, 12, L] real signals (teacher input source)
  Tensor<T> restored;  // [N, 12, L] frozen-restoration outputs (student source)
  Tensor<T> labels;    // [N, C] targets in [0, 1]; empty when unlabeled

  Index size() const { return real.empty() ? 0 : real.dim(0); }
};

namespace detail {

template <class T>
struct MixedBatch {
  Tensor<T> teacher_in;
  Tensor<T> student_in;
  Tensor<T> labels;  // mixed soft labels (labeled batches only)
};

/// Region mixing with matched masks: the same box and partner are applied to
/// the real pair (teacher view) and the restored pair (student view).
template <class T>
MixedBatch<T> mix_batch(const DistillBatch<T>& batch, const KDConfig& cfg, bool mix,
                        RandomEngine& box_rng, RandomEngine& partner_rng) {
  MixedBatch<T> out;
  if (!mix) {
    out.teacher_in = batch.real;
    out.student_in = batch.restored;
    out.labels = batch.labels;
    return out;
  }
  const Index N = batch.size();
  const Index L = batch.real.dim(2);
  const bool labeled = !batch.labels.empty();
  std::vector<Index> partner(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) partner[static_cast<std::size_t>(i)] = i;
  partner_rng.shuffle(partner.begin(), partner.end());

  out.teacher_in = Tensor<T>({N, kNumLeads, L});
  out.student_in = Tensor<T>({N, kNumLeads, L});
  if (labeled) out.labels = Tensor<T>(batch.labels.shape());
  const Index C = labeled ? batch.labels.dim(1) : 0;

  for (Index i = 0; i < N; ++i) {
    const Index j = partner[static_cast<std::size_t>(i)];
    const RegionBox box = sample_region_box(L, cfg.alpha_shape, box_rng, cfg.lambda_override);
    const T* xi = batch.real.data() + i * kNumLeads * L;
    const T* xj = batch.real.data() + j * kNumLeads * L;
    const T* ri = batch.restored.data() + i * kNumLeads * L;
    const T* rj = batch.restored.data() + j * kNumLeads * L;
    T* tx = out.teacher_in.data() + i * kNumLeads * L;
    T* sx = out.student_in.data() + i * kNumLeads * L;
    std::copy(xi, xi + kNumLeads * L, tx);
    std::copy(ri, ri + kNumLeads * L, sx);
    for (Index lead = box.y0; lead < box.y1; ++lead) {
      for (Index t = box.x0; t < box.x1; ++t) {
        tx[lead * L + t] = xj[lead * L + t];
        sx[lead * L + t] = rj[lead * L + t];
      }
    }
    if (labeled) {
      const double w = box.mask_fraction();
      for (Index c = 0; c < C; ++c)
        out.labels.at(i, c) = static_cast<T>((1.0 - w) * batch.labels.at(i, c) +
                                             w * batch.labels.at(j, c));
    }
  }
  return out;
}

}  // namespace detail

/// Loss on one labeled batch: L_Y + alpha L_K + beta L_D (terms gated by the
/// variant). Gradients accumulate into the student and discriminator.
template <class T>
LossReport labeled_objective(const ClassifierNet<T>& teacher, ClassifierNet<T>& student,
                             Discriminator<T>* disc, const DistillBatch<T>& batch,
                             const KDConfig& cfg, DistillVariant variant, RandomEngine& box_rng,
                             RandomEngine& partner_rng) {
  cfg.validate();
  LossReport report;
  const auto mixed =
      detail::mix_batch(batch, cfg, variant_uses_mixing(variant), box_rng, partner_rng);

  Tensor<T> p_t;
  if (variant_uses_kd(variant) || variant_uses_discriminator(variant))
    p_t = teacher.forward(mixed.teacher_in).logits;

  nn::Cache<T> cache;
  const auto s_out = student.forward(mixed.student_in, &cache);

  Tensor<T> dp(s_out.logits.shape());
  Tensor<T> dy;
  report.l_y = bce_multilabel(s_out.logits, mixed.labels, &dy);
  for (Index i = 0; i < dp.numel(); ++i) dp[i] = dy[i];

  if (variant_uses_kd(variant)) {
    Tensor<T> dk;
    report.l_k_labeled = kd_loss(s_out.logits, p_t, cfg.tau, &dk);
    for (Index i = 0; i < dp.numel(); ++i) dp[i] += static_cast<T>(cfg.loss_alpha) * dk[i];
  }

  Tensor<T> dz;
  bool have_dz = false;
  if (disc && variant_uses_discriminator(variant) && batch.size() >= 2) {
    report.l_d_labeled =
        discriminator_loss(s_out.features, p_t, *disc, &dz, /*grad_scale=*/cfg.loss_beta);
    have_dz = true;
  }

  student.backward(dp, have_dz ? &dz : nullptr, cache);
  report.total = report.recompute_total(cfg.loss_alpha, cfg.loss_beta);
  return report;
}

/// Loss on one unlabeled batch: alpha L_K + beta L_D, no supervised term.
template <class T>
LossReport unlabeled_objective(const ClassifierNet<T>& teacher, ClassifierNet<T>& student,
                               Discriminator<T>* disc, const DistillBatch<T>& batch,
                               const KDConfig& cfg, DistillVariant variant, RandomEngine& box_rng,
                               RandomEngine& partner_rng) {
  cfg.validate();
  LossReport report;
  if (batch.size() == 0) return report;  // empty unlabeled set contributes exactly 0
  const auto mixed =
      detail::mix_batch(batch, cfg, variant_uses_mixing(variant), box_rng, partner_rng);
  const Tensor<T> p_t = teacher.forward(mixed.teacher_in).logits;

  nn::Cache<T> cache;
  const auto s_out = student.forward(mixed.student_in, &cache);

  Tensor<T> dp(s_out.logits.shape());
  Tensor<T> dk;
  report.l_k_unlabeled = kd_loss(s_out.logits, p_t, cfg.tau, &dk);
  for (Index i = 0; i < dp.numel(); ++i) dp[i] = static_cast<T>(cfg.loss_alpha) * dk[i];

  Tensor<T> dz;
  bool have_dz = false;
  if (disc && variant_uses_discriminator(variant) && batch.size() >= 2) {
    report.l_d_unlabeled =
        discriminator_loss(s_out.features, p_t, *disc, &dz, /*grad_scale=*/cfg.loss_beta);
    have_dz = true;
  }

  student.backward(dp, have_dz ? &dz : nullptr, cache);
  report.total = report.recompute_total(cfg.loss_alpha, cfg.loss_beta);
  return report;
}

/// Baseline objective of the ablation ladder: no region mixing, no
/// discriminator, labeled data only (L = L_Y + alpha L_K).
template <class T>
LossReport vanilla_total(const ClassifierNet<T>& teacher, ClassifierNet<T>& student,
                         const DistillBatch<T>& batch, const KDConfig& cfg,
                         RandomEngine& box_rng, RandomEngine& partner_rng) {
  return labeled_objective<T>(teacher, student, nullptr, batch, cfg, DistillVariant::VanillaKD,
                              box_rng, partner_rng);
}

/// One full distillation step: labeled + optional unlabeled objective, then a
/// joint AdamW update of theta_s and theta_d. Returns the summed report.
template <class T>
LossReport distill_step(const ClassifierNet<T>& teacher, ClassifierNet<T>& student,
                        Discriminator<T>* disc, nn::AdamW<T>& optimizer,
                        const DistillBatch<T>& labeled, const DistillBatch<T>* unlabeled,
                        const KDConfig& cfg, DistillVariant variant, RandomEngine& box_rng,
                        RandomEngine& partner_rng) {
  nn::ParamRefs<T> trainable = student.params();
  if (disc && variant_uses_discriminator(variant))
    for (nn::Param<T>* p : disc->params()) trainable.push_back(p);
  nn::zero_grads(trainable);

  LossReport report = labeled_objective(teacher, student, disc, labeled, cfg, variant, box_rng,
                                        partner_rng);
  if (unlabeled && variant_uses_unlabeled(variant) && unlabeled->size() > 0) {
    const LossReport u = unlabeled_objective(teacher, student, disc, *unlabeled, cfg, variant,
                                             box_rng, partner_rng);
    report.l_k_unlabeled = u.l_k_unlabeled;
    report.l_d_unlabeled = u.l_d_unlabeled;
  }
  report.total = report.recompute_total(cfg.loss_alpha, cfg.loss_beta);
  optimizer.update(trainable);
  return report;
}

}  // namespace liteheart
