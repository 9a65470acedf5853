#pragma once

#include <functional>
#include <string>
#include <vector>

#include "liteheart/metrics.hpp"
#include "liteheart/models.hpp"

namespace liteheart {

/// 1-D Grad-CAM map over the input time axis, max-normalized to 1 when any
/// activation survives rectification.
struct SaliencyMap {
  Tensor<float> heatmap;  // [1, L]
  int target_class = 0;
  std::string model_id;
};

/// Channel weights are the time-averaged gradients of the class logit at the
/// last convolutional block; the rectified weighted sum is linearly
/// upsampled from tap resolution to L.
SaliencyMap grad_cam(ClassifierNet<float>& model, const Tensor<float>& input, int target_class);

// ---------------------------------------------------------------------------
// Analytic FLOPs (1 multiply-accumulate = 2 FLOPs)

Index conv1d_flops(Index kernel, Index c_in, Index c_out, Index l_out, Index batch);
Index linear_flops(Index in_dim, Index out_dim, Index rows);

Index count_flops(const ClassifierNet<float>& model, Index batch, Index length);
Index count_flops(const RestorationNet<float>& model, Index batch, Index length);

// ---------------------------------------------------------------------------
// Latency / memory

struct LatencyStats {
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int reps = 0;
};

/// Wall clock over a warm callable; `warmup` runs are discarded.
LatencyStats measure_latency(const std::function<void()>& fn, int reps = 100, int warmup = 10);

/// Peak tensor-buffer allocation during one invocation, in MB.
double measure_peak_memory(const std::function<void()>& fn);

struct EfficiencyReport {
  std::string name;
  Index param_count = 0;
  Index flops_per_forward = 0;  // at the configured batch
  Index batch = 4;
  Index length = 0;
  LatencyStats latency;
  double peak_memory_mb = 0.0;

  std::string to_json() const;
};

/// Restoration + student pipeline bench (the deployed 1-lead system).
EfficiencyReport efficiency_report(RestorationNet<float>& restoration,
                                   ClassifierNet<float>& student, Index batch, Index length,
                                   int reps, const std::string& name);
/// Teacher-only bench (the 12-lead reference system).
EfficiencyReport efficiency_report(ClassifierNet<float>& teacher, Index batch, Index length,
                                   int reps, const std::string& name);

// ---------------------------------------------------------------------------
// SVG emission

/// Line plot of one lead with the saliency map as background intensity.
void write_saliency_svg(const std::string& path, const std::vector<float>& signal,
                        const std::vector<float>& heat, const std::string& title);

/// Scatter of (x, y) points with labels (tier sweeps: performance vs FLOPs).
void write_scatter_svg(const std::string& path, const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::vector<std::string>& labels,
                       const std::string& x_label, const std::string& y_label);

}  // namespace liteheart
