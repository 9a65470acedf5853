#include "liteheart/xai.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace liteheart {

SaliencyMap grad_cam(ClassifierNet<float>& model, const Tensor<float>& input, int target_class) {
  if (target_class < 0 || target_class >= model.n_classes())
    throw std::invalid_argument("grad_cam: class index " + std::to_string(target_class) +
                                " out of range");
  Tensor<float> x = input;
  if (x.ndim() == 2) x = x.reshaped({1, x.dim(0), x.dim(1)});
  if (x.dim(0) != 1) throw std::invalid_argument("grad_cam: expects a single record");
  const Index L = x.dim(2);

  nn::Cache<float> cache;
  Tensor<float> acts;
  const auto out = model.forward(x, &cache, &acts);

  Tensor<float> dlogits(out.logits.shape());
  dlogits.at(0, target_class) = 1.0f;
  Tensor<float> dacts;
  auto params = model.params();
  nn::zero_grads(params);
  model.backward(dlogits, nullptr, cache, &dacts);
  nn::zero_grads(params);  // CAM only reads activations; discard param grads

  const Index C = acts.dim(1), Ttap = acts.dim(2);
  std::vector<double> cam(static_cast<std::size_t>(Ttap), 0.0);
  for (Index c = 0; c < C; ++c) {
    double w = 0.0;
    for (Index t = 0; t < Ttap; ++t) w += dacts.at(0, c, t);
    w /= static_cast<double>(Ttap);
    for (Index t = 0; t < Ttap; ++t) cam[static_cast<std::size_t>(t)] += w * acts.at(0, c, t);
  }
  for (double& v : cam) v = std::max(0.0, v);

  // Linear upsample from tap cells (centered) to L samples.
  SaliencyMap map;
  map.target_class = target_class;
  map.model_id = model.spec().tier;
  map.heatmap = Tensor<float>({1, L});
  const double stride = static_cast<double>(L) / static_cast<double>(Ttap);
  double peak = 0.0;
  for (Index t = 0; t < L; ++t) {
    const double pos = (static_cast<double>(t) + 0.5) / stride - 0.5;
    const Index i0 = std::clamp<Index>(static_cast<Index>(std::floor(pos)), 0, Ttap - 1);
    const Index i1 = std::min<Index>(i0 + 1, Ttap - 1);
    const double frac = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
    const double v = (1.0 - frac) * cam[static_cast<std::size_t>(i0)] +
                     frac * cam[static_cast<std::size_t>(i1)];
    map.heatmap.at(0, t) = static_cast<float>(v);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (Index t = 0; t < L; ++t)
      map.heatmap.at(0, t) = static_cast<float>(map.heatmap.at(0, t) / peak);
  }
  return map;
}

// ---------------------------------------------------------------------------

Index conv1d_flops(Index kernel, Index c_in, Index c_out, Index l_out, Index batch) {
  return 2 * kernel * c_in * c_out * l_out * batch;
}

Index linear_flops(Index in_dim, Index out_dim, Index rows) { return 2 * in_dim * out_dim * rows; }

Index count_flops(const ClassifierNet<float>& model, Index batch, Index length) {
  return model.flops(batch, length);
}

Index count_flops(const RestorationNet<float>& model, Index batch, Index length) {
  return model.flops(batch, length);
}

// ---------------------------------------------------------------------------

LatencyStats measure_latency(const std::function<void()>& fn, int reps, int warmup) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(ms.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < ms.size() ? (1.0 - frac) * ms[i] + frac * ms[i + 1] : ms[i];
  };
  LatencyStats s;
  s.median_ms = quantile(0.5);
  s.iqr_ms = quantile(0.75) - quantile(0.25);
  s.reps = reps;
  return s;
}

double measure_peak_memory(const std::function<void()>& fn) {
  memtrack::begin();
  fn();
  const std::int64_t peak = memtrack::end();
  return static_cast<double>(peak) / (1024.0 * 1024.0);
}

std::string EfficiencyReport::to_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\n"
                "  \"name\": \"%s\",\n"
                "  \"param_count\": %lld,\n"
                "  \"flops_per_forward\": %lld,\n"
                "  \"batch\": %lld,\n"
                "  \"length\": %lld,\n"
                "  \"latency_median_ms\": %.6g,\n"
                "  \"latency_iqr_ms\": %.6g,\n"
                "  \"latency_reps\": %d,\n"
                "  \"peak_memory_mb\": %.6g\n"
                "}\n",
                name.c_str(), static_cast<long long>(param_count),
                static_cast<long long>(flops_per_forward), static_cast<long long>(batch),
                static_cast<long long>(length), latency.median_ms, latency.iqr_ms, latency.reps,
                peak_memory_mb);
  return buf;
}

EfficiencyReport efficiency_report(RestorationNet<float>& restoration,
                                   ClassifierNet<float>& student, Index batch, Index length,
                                   int reps, const std::string& name) {
  EfficiencyReport r;
  r.name = name;
  r.batch = batch;
  r.length = length;
  r.param_count = restoration.param_count() + student.param_count();
  r.flops_per_forward = restoration.flops(batch, length) + student.flops(batch, length);
  Tensor<float> input({batch, 1, length});
  RandomEngine rng(7);
  for (Index i = 0; i < input.numel(); ++i) input[i] = static_cast<float>(rng.normal());
  const auto run = [&]() {
    const Tensor<float> restored = restoration.forward(input);
    (void)student.forward(restored);
  };
  r.latency = measure_latency(run, reps);
  r.peak_memory_mb = measure_peak_memory(run);
  return r;
}

EfficiencyReport efficiency_report(ClassifierNet<float>& teacher, Index batch, Index length,
                                   int reps, const std::string& name) {
  EfficiencyReport r;
  r.name = name;
  r.batch = batch;
  r.length = length;
  r.param_count = teacher.param_count();
  r.flops_per_forward = teacher.flops(batch, length);
  Tensor<float> input({batch, kNumLeads, length});
  RandomEngine rng(7);
  for (Index i = 0; i < input.numel(); ++i) input[i] = static_cast<float>(rng.normal());
  const auto run = [&]() { (void)teacher.forward(input); };
  r.latency = measure_latency(run, reps);
  r.peak_memory_mb = measure_peak_memory(run);
  return r;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string svg_header(int w, int h) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                w, h, w, h, w, h);
  return buf;
}

}  // namespace

void write_saliency_svg(const std::string& path, const std::vector<float>& signal,
                        const std::vector<float>& heat, const std::string& title) {
  const int W = 900, H = 260, pad = 30;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << svg_header(W, H);
  out << "<text x=\"" << pad << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << title
      << "</text>\n";

  const std::size_t n = signal.size();
  float lo = signal[0], hi = signal[0];
  for (float v : signal) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-6f) hi = lo + 1e-6f;
  const double sx = static_cast<double>(W - 2 * pad) / static_cast<double>(n - 1);

  // heat as background bands
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const float a = heat.empty() ? 0.0f : heat[i];
    if (a < 0.02f) continue;
    out << "<rect x=\"" << pad + sx * static_cast<double>(i) << "\" y=\"" << pad << "\" width=\""
        << sx + 0.5 << "\" height=\"" << H - 2 * pad << "\" fill=\"crimson\" opacity=\""
        << 0.45f * a << "\"/>\n";
  }
  out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pad + sx * static_cast<double>(i);
    const double y = H - pad - (signal[i] - lo) / (hi - lo) * (H - 2 * pad);
    out << x << "," << y << " ";
  }
  out << "\"/>\n</svg>\n";
}

void write_scatter_svg(const std::string& path, const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::vector<std::string>& labels,
                       const std::string& x_label, const std::string& y_label) {
  const int W = 640, H = 480, pad = 60;
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("write_scatter_svg: bad inputs");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << svg_header(W, H);
  double xlo = xs[0], xhi = xs[0], ylo = ys[0], yhi = ys[0];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xlo = std::min(xlo, xs[i]);
    xhi = std::max(xhi, xs[i]);
    ylo = std::min(ylo, ys[i]);
    yhi = std::max(yhi, ys[i]);
  }
  if (xhi - xlo < 1e-12) xhi = xlo + 1.0;
  if (yhi - ylo < 1e-12) yhi = ylo + 1.0;
  const auto X = [&](double v) { return pad + (v - xlo) / (xhi - xlo) * (W - 2 * pad); };
  const auto Y = [&](double v) { return H - pad - (v - ylo) / (yhi - ylo) * (H - 2 * pad); };
  out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
      << H - pad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 14
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2
      << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << "<circle cx=\"" << X(xs[i]) << "\" cy=\"" << Y(ys[i])
        << "\" r=\"5\" fill=\"steelblue\"/>\n";
    if (i < labels.size())
      out << "<text x=\"" << X(xs[i]) + 8 << "\" y=\"" << Y(ys[i]) - 6
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << labels[i] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace liteheart
