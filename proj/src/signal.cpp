#include "liteheart/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace liteheart {

namespace {

bool all_finite(const Tensor<float>& t) {
  for (Index i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

}  // namespace

void validate_record(const SignalRecord& record) {
  if (record.signal.ndim() != 2 || record.signal.dim(0) != kNumLeads)
    throw std::invalid_argument("record '" + record.id + "': signal must be [12, L], got " +
                                shape_str(record.signal.shape()));
  if (record.signal.dim(1) <= 0)
    throw std::invalid_argument("record '" + record.id + "': empty signal");
  if (!all_finite(record.signal))
    throw std::invalid_argument("record '" + record.id + "': non-finite sample");
  if (!(record.fs > 2.0 * 47.0))
    throw std::invalid_argument("record '" + record.id +
                                "': sampling rate must exceed 94 Hz (Nyquist for the 47 Hz band)");
  if (record.is_labeled) {
    for (std::uint8_t v : record.labels) {
      if (v != 0 && v != 1)
        throw std::invalid_argument("record '" + record.id + "': labels must be binary");
    }
  }
}

// ---------------------------------------------------------------------------
// Butterworth band-pass

BandpassDesign BandpassDesign::butterworth(double low_hz, double high_hz, double fs, int order) {
  if (!(low_hz > 0) || !(high_hz > low_hz)) throw std::invalid_argument("bandpass: bad band edges");
  if (!(fs > 2.0 * high_hz)) throw std::invalid_argument("bandpass: fs too low for the band");
  if (order < 1) throw std::invalid_argument("bandpass: order must be >= 1");

  using C = std::complex<double>;
  const double k = 2.0 * fs;  // bilinear constant
  const double wl = k * std::tan(M_PI * low_hz / fs);
  const double wh = k * std::tan(M_PI * high_hz / fs);
  const double w0sq = wl * wh;
  const double bw = wh - wl;

  // Analog prototype poles, then low-pass -> band-pass transform.
  std::vector<C> spoles;
  for (int i = 0; i < order; ++i) {
    const double theta = M_PI * (2.0 * i + 1.0) / (2.0 * order);
    const C p(-std::sin(theta), std::cos(theta));
    const C pb = p * bw;
    const C disc = std::sqrt(pb * pb - 4.0 * w0sq);
    spoles.push_back((pb + disc) / 2.0);
    spoles.push_back((pb - disc) / 2.0);
  }

  // Bilinear transform.
  std::vector<C> zpoles;
  zpoles.reserve(spoles.size());
  for (const C& s : spoles) zpoles.push_back((k + s) / (k - s));

  // Pair conjugate poles into biquads; each section carries zeros at z=+1, -1.
  std::vector<C> upper, real_poles;
  for (const C& p : zpoles) {
    if (p.imag() > 1e-12)
      upper.push_back(p);
    else if (p.imag() >= -1e-12)
      real_poles.push_back(p);
  }
  BandpassDesign d;
  d.fs = fs;
  for (const C& p : upper) {
    Sos s{1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)};
    d.sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    const double p1 = real_poles[i].real(), p2 = real_poles[i + 1].real();
    Sos s{1.0, 0.0, -1.0, -(p1 + p2), p1 * p2};
    d.sections.push_back(s);
  }

  // Normalize to unit gain at the geometric band center, split across sections.
  const double f0 = std::sqrt(low_hz * high_hz);
  const double g = std::abs(d.response(f0));
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(d.sections.size()));
  for (Sos& s : d.sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return d;
}

std::complex<double> BandpassDesign::response(double f_hz) const {
  using C = std::complex<double>;
  const double w = 2.0 * M_PI * f_hz / fs;
  const C z1 = std::exp(C(0.0, -w));
  const C z2 = z1 * z1;
  C h(1.0, 0.0);
  for (const Sos& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

double BandpassDesign::filtfilt_gain(double f_hz) const { return std::norm(response(f_hz)); }

namespace {

// Steady-state state of one transposed-direct-form-II biquad for a unit step.
void sos_zi(const BandpassDesign::Sos& s, double& z1, double& z2) {
  const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  z1 = g - s.b0;
  z2 = s.b2 - s.a2 * g;
}

void sosfilt_inplace(const std::vector<BandpassDesign::Sos>& sections, std::vector<double>& x) {
  for (const auto& s : sections) {
    double z1, z2;
    sos_zi(s, z1, z2);
    z1 *= x.empty() ? 0.0 : x[0];
    z2 *= x.empty() ? 0.0 : x[0];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<double> sosfiltfilt(const BandpassDesign& design, const std::vector<double>& x,
                                Index padlen) {
  const Index n = static_cast<Index>(x.size());
  if (n < 2) throw std::invalid_argument("sosfiltfilt: signal too short");
  padlen = std::min<Index>(padlen, n - 1);

  std::vector<double> ext;
  ext.reserve(static_cast<std::size_t>(n + 2 * padlen));
  for (Index i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[static_cast<std::size_t>(i)]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (Index i = 1; i <= padlen; ++i)
    ext.push_back(2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(n - 1 - i)]);

  sosfilt_inplace(design.sections, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(design.sections, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + padlen, ext.begin() + padlen + n);
}

SignalRecord bandpass_filter(const SignalRecord& record, double low_hz, double high_hz) {
  validate_record(record);
  if (!(record.fs > 2.0 * high_hz))
    throw std::invalid_argument("bandpass_filter: fs <= 2*high for record '" + record.id + "'");

  const BandpassDesign design = BandpassDesign::butterworth(low_hz, high_hz, record.fs);
  // Cover the slow low-edge transient; clamped to L-1 inside sosfiltfilt.
  const Index padlen = static_cast<Index>(std::ceil(3.0 * record.fs / low_hz));

  SignalRecord out = record;
  const Index L = record.length();
  std::vector<double> chan(static_cast<std::size_t>(L));
  for (int lead = 0; lead < kNumLeads; ++lead) {
    for (Index t = 0; t < L; ++t) chan[static_cast<std::size_t>(t)] = record.signal.at(lead, t);
    const std::vector<double> y = sosfiltfilt(design, chan, padlen);
    for (Index t = 0; t < L; ++t) out.signal.at(lead, t) = static_cast<float>(y[static_cast<std::size_t>(t)]);
  }
  return out;
}

std::vector<SignalRecord> preprocess_corpus(const std::vector<SignalRecord>& records,
                                            double low_hz, double high_hz) {
  std::vector<SignalRecord> out;
  out.reserve(records.size());
  for (const SignalRecord& r : records)
    out.push_back(zscore_normalize(bandpass_filter(r, low_hz, high_hz)));
  return out;
}

SignalRecord zscore_normalize(const SignalRecord& record) {
  SignalRecord out = record;
  const Index L = record.length();
  if (L == 0) throw std::invalid_argument("zscore_normalize: empty record");
  for (int lead = 0; lead < kNumLeads; ++lead) {
    double mean = 0.0;
    for (Index t = 0; t < L; ++t) mean += record.signal.at(lead, t);
    mean /= static_cast<double>(L);
    double var = 0.0;
    for (Index t = 0; t < L; ++t) {
      const double d = record.signal.at(lead, t) - mean;
      var += d * d;
    }
    var /= static_cast<double>(L);
    const double std_dev = std::sqrt(var);
    if (std_dev < 1e-8) {
      for (Index t = 0; t < L; ++t) out.signal.at(lead, t) = 0.0f;
    } else {
      const double inv = 1.0 / std_dev;
      for (Index t = 0; t < L; ++t)
        out.signal.at(lead, t) = static_cast<float>((record.signal.at(lead, t) - mean) * inv);
    }
  }
  return out;
}

LeadView mask_to_lead(const SignalRecord& record, int lead_index) {
  if (lead_index < 0 || lead_index >= kNumLeads)
    throw std::invalid_argument("mask_to_lead: lead_index " + std::to_string(lead_index) +
                                " out of [0, 11]");
  LeadView view;
  view.source_id = record.id;
  view.lead_index = lead_index;
  const Index L = record.length();
  view.signal = Tensor<float>({1, L});
  for (Index t = 0; t < L; ++t) view.signal.at(0, t) = record.signal.at(lead_index, t);
  return view;
}

SignalRecord resample(const SignalRecord& record, double target_fs) {
  if (!(target_fs > 2.0 * 47.0)) throw std::invalid_argument("resample: target fs below 94 Hz");
  if (record.fs == target_fs) return record;
  const Index L = record.length();
  const Index Lout = static_cast<Index>(std::llround(static_cast<double>(L) * target_fs / record.fs));
  if (Lout < 2) throw std::invalid_argument("resample: record too short");
  SignalRecord out = record;
  out.fs = target_fs;
  out.signal = Tensor<float>({kNumLeads, Lout});
  const double scale = record.fs / target_fs;
  for (int lead = 0; lead < kNumLeads; ++lead) {
    for (Index t = 0; t < Lout; ++t) {
      const double pos = static_cast<double>(t) * scale;
      const Index i0 = std::min<Index>(static_cast<Index>(pos), L - 1);
      const Index i1 = std::min<Index>(i0 + 1, L - 1);
      const double frac = pos - static_cast<double>(i0);
      out.signal.at(lead, t) = static_cast<float>((1.0 - frac) * record.signal.at(lead, i0) +
                                                  frac * record.signal.at(lead, i1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  if (!(train_frac > 0) || !(val_frac > 0) || !(test_frac > 0))
    throw std::invalid_argument("SplitSpec: fractions must be positive");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("SplitSpec: fractions must sum to 1");
  if (!(labeled_frac > 0.0) || labeled_frac > 1.0)
    throw std::invalid_argument("SplitSpec: labeled_frac must be in (0, 1]");
}

DatasetSplits split_dataset(const std::vector<SignalRecord>& records, const SplitSpec& spec) {
  spec.validate();
  const Index n = static_cast<Index>(records.size());
  if (n == 0) throw std::invalid_argument("split_dataset: empty input");
  if (n < 10) throw std::invalid_argument("split_dataset: need at least 10 records");

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  RandomEngine rng(RandomEngine::derive(spec.seed, "split"));
  rng.shuffle(order.begin(), order.end());

  const Index n_val = static_cast<Index>(std::floor(spec.val_frac * static_cast<double>(n)));
  const Index n_test = static_cast<Index>(std::floor(spec.test_frac * static_cast<double>(n)));
  const Index n_train = n - n_val - n_test;  // remainder goes to train
  Index n_labeled = static_cast<Index>(std::floor(spec.labeled_frac * static_cast<double>(n_train)));
  if (spec.labeled_frac >= 1.0) n_labeled = n_train;
  if (n_labeled < 1) n_labeled = 1;

  DatasetSplits out;
  Index pos = 0;
  for (Index i = 0; i < n_labeled; ++i) out.train_labeled.push_back(records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])]);
  for (Index i = n_labeled; i < n_train; ++i) {
    SignalRecord r = records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])];
    r.labels.clear();  // training view of D_U carries no labels
    r.is_labeled = false;
    out.train_unlabeled.push_back(std::move(r));
  }
  for (Index i = 0; i < n_val; ++i) out.val.push_back(records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])]);
  for (Index i = 0; i < n_test; ++i) out.test.push_back(records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SynthConfig::validate() const {
  if (n_records <= 0) throw std::invalid_argument("SynthConfig: n_records must be positive");
  if (n_classes <= 0) throw std::invalid_argument("SynthConfig: n_classes must be positive");
  if (length <= 0) throw std::invalid_argument("SynthConfig: length must be positive");
  if (!(fs > 2.0 * 47.0)) throw std::invalid_argument("SynthConfig: fs must exceed 94 Hz");
  if (static_cast<int>(class_prevalence.size()) != n_classes)
    throw std::invalid_argument("SynthConfig: class_prevalence size mismatch");
  for (double p : class_prevalence) {
    if (!(p > 0.0) || !(p < 1.0))
      throw std::invalid_argument("SynthConfig: prevalence values must lie in (0, 1)");
  }
  if (static_cast<int>(patterns.size()) != n_classes)
    throw std::invalid_argument("SynthConfig: pattern_table size mismatch");
  bool any_lead0_free = false;
  for (const ClassPattern& p : patterns) {
    if (p.leads.empty()) throw std::invalid_argument("SynthConfig: every class must affect >= 1 lead");
    for (int l : p.leads) {
      if (l < 0 || l >= kNumLeads)
        throw std::invalid_argument("SynthConfig: pattern lead out of range");
    }
    if (!(p.window_lo >= 0.0 && p.window_hi <= 1.0 && p.window_lo < p.window_hi))
      throw std::invalid_argument("SynthConfig: pattern window must satisfy 0 <= lo < hi <= 1");
    if (std::find(p.leads.begin(), p.leads.end(), 0) == p.leads.end()) any_lead0_free = true;
  }
  if (!any_lead0_free)
    throw std::invalid_argument("SynthConfig: at least one class must leave lead 0 untouched");
  if (!(heart_rate_lo > 20.0 && heart_rate_hi > heart_rate_lo && heart_rate_hi < 220.0))
    throw std::invalid_argument("SynthConfig: bad heart rate range");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("SynthConfig: noise_std must be >= 0");
}

std::vector<std::string> SynthConfig::class_names() const {
  std::vector<std::string> names;
  names.reserve(patterns.size());
  for (std::size_t i = 0; i < patterns.size(); ++i)
    names.push_back(patterns[i].name.empty() ? "C" + std::to_string(i) : patterns[i].name);
  return names;
}

std::pair<Index, Index> pattern_window_samples(const SynthConfig& cfg, int class_index) {
  const ClassPattern& p = cfg.patterns.at(static_cast<std::size_t>(class_index));
  const Index lo = static_cast<Index>(std::floor(p.window_lo * static_cast<double>(cfg.length)));
  const Index hi = static_cast<Index>(std::ceil(p.window_hi * static_cast<double>(cfg.length)));
  return {lo, std::min(hi, cfg.length)};
}

namespace {

struct Wave {
  double offset;  // center offset in fractions of the RR interval
  double width;   // gaussian width in fractions of the RR interval
  double amp;     // mV at unit lead gain
};

// PQRST-like template.
constexpr Wave kWaves[] = {
    {-0.200, 0.025, 0.15},   // P
    {-0.035, 0.010, -0.12},  // Q
    {0.000, 0.014, 1.00},    // R
    {0.035, 0.010, -0.22},   // S
    {0.170, 0.045, 0.30},    // T
};

// Relative projection of the cardiac source onto each of the 12 leads.
constexpr double kLeadGain[kNumLeads] = {1.00, 0.85, 0.55, -0.70, 0.45, 0.80,
                                         -0.35, 0.50, 0.65, 0.80, 0.70, 0.55};
// Sensitivity of each lead to the per-record axis rotation.
constexpr double kLeadAxis[kNumLeads] = {0.20, -0.15, 0.30, -0.25, 0.10, 0.15,
                                         0.35, -0.30, 0.25, -0.20, 0.30, -0.10};

struct Beat {
  double center;          // samples
  bool distorted[kNumLeads] = {};  // replace QRS with a wide ectopic bump on these leads
  double distort_amp = 0.0;
};

void add_gaussian(Tensor<float>& sig, int lead, double center, double width_samples, double amp,
                  Index L) {
  const Index lo = std::max<Index>(0, static_cast<Index>(std::floor(center - 5.0 * width_samples)));
  const Index hi = std::min<Index>(L - 1, static_cast<Index>(std::ceil(center + 5.0 * width_samples)));
  for (Index t = lo; t <= hi; ++t) {
    const double d = (static_cast<double>(t) - center) / width_samples;
    sig.at(lead, t) += static_cast<float>(amp * std::exp(-0.5 * d * d));
  }
}

SignalRecord generate_one(const SynthConfig& cfg, int index) {
  RandomEngine rng(RandomEngine::derive(cfg.seed ^ static_cast<std::uint64_t>(index), "synth-record"));
  const Index L = cfg.length;

  SignalRecord rec;
  rec.id = "r" + std::string(6 - std::min<std::size_t>(6, std::to_string(index).size()), '0') +
           std::to_string(index);
  rec.fs = cfg.fs;
  rec.signal = Tensor<float>({kNumLeads, L});
  rec.is_labeled = true;
  rec.labels.resize(static_cast<std::size_t>(cfg.n_classes));
  for (int k = 0; k < cfg.n_classes; ++k)
    rec.labels[static_cast<std::size_t>(k)] =
        rng.uniform() < cfg.class_prevalence[static_cast<std::size_t>(k)] ? 1 : 0;

  const double hr = rng.uniform(cfg.heart_rate_lo, cfg.heart_rate_hi);
  const double period = 60.0 / hr * cfg.fs;  // samples per beat
  const double phase = rng.uniform(0.0, period);
  const double axis = rng.uniform(-0.5, 0.5);
  const double amp_scale = rng.uniform(0.9, 1.1);

  std::vector<Beat> beats;
  for (double c = -phase; c < static_cast<double>(L) + period; c += period) {
    Beat b;
    b.center = c + rng.normal(0.0, 0.015 * period);
    beats.push_back(b);
  }

  // Rhythm patterns move one beat on the shared grid before rendering.
  for (int k = 0; k < cfg.n_classes; ++k) {
    if (!rec.labels[static_cast<std::size_t>(k)]) continue;
    const ClassPattern& pat = cfg.patterns[static_cast<std::size_t>(k)];
    if (pat.kind != ClassPattern::Kind::Premature) continue;
    const auto [wlo, whi] = pattern_window_samples(cfg, k);
    const double target = 0.5 * static_cast<double>(wlo + whi);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t m = 0; m < beats.size(); ++m) {
      const double d = std::abs(beats[m].center - target);
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    beats[best].center -= pat.timing_shift * period;
    for (int l : pat.leads) beats[best].distorted[l] = true;
    beats[best].distort_amp = pat.amplitude;
  }

  // Render the quasi-periodic template.
  for (const Beat& b : beats) {
    for (int lead = 0; lead < kNumLeads; ++lead) {
      const double gain = amp_scale * (kLeadGain[lead] + axis * kLeadAxis[lead]);
      if (b.distorted[lead]) {
        // Ectopic morphology: wide dominant bump in place of the sharp QRS.
        add_gaussian(rec.signal, lead, b.center, 0.060 * period, b.distort_amp * gain, L);
        add_gaussian(rec.signal, lead, b.center + 0.170 * period, 0.045 * period, -0.3 * gain, L);
      } else {
        for (const Wave& w : kWaves)
          add_gaussian(rec.signal, lead, b.center + w.offset * period, w.width * period,
                       w.amp * gain, L);
      }
    }
  }

  // Morphology and baseline patterns add waveforms only on their own leads.
  for (int k = 0; k < cfg.n_classes; ++k) {
    if (!rec.labels[static_cast<std::size_t>(k)]) continue;
    const ClassPattern& pat = cfg.patterns[static_cast<std::size_t>(k)];
    const auto [wlo, whi] = pattern_window_samples(cfg, k);
    if (pat.kind == ClassPattern::Kind::Bump) {
      for (const Beat& b : beats) {
        const double c = b.center + 0.45 * period;
        if (c < static_cast<double>(wlo) || c >= static_cast<double>(whi)) continue;
        for (int l : pat.leads) add_gaussian(rec.signal, l, c, 0.050 * period, pat.amplitude, L);
      }
    } else if (pat.kind == ClassPattern::Kind::Baseline) {
      const Index ramp = std::max<Index>(1, (whi - wlo) / 10);
      for (int l : pat.leads) {
        for (Index t = wlo; t < whi; ++t) {
          double env = 1.0;
          if (t - wlo < ramp) env = 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(t - wlo + 1) / static_cast<double>(ramp));
          else if (whi - 1 - t < ramp) env = 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(whi - t) / static_cast<double>(ramp));
          rec.signal.at(l, t) += static_cast<float>(pat.amplitude * env);
        }
      }
    }
  }

  if (cfg.noise_std > 0.0) {
    for (Index i = 0; i < rec.signal.numel(); ++i)
      rec.signal[i] += static_cast<float>(rng.normal(0.0, cfg.noise_std));
  }
  return rec;
}

}  // namespace

std::vector<SignalRecord> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SignalRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.n_records));
  for (int i = 0; i < cfg.n_records; ++i) out.push_back(generate_one(cfg, i));
  return out;
}

}  // namespace liteheart
