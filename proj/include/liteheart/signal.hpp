#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "liteheart/rng.hpp"
#include "liteheart/tensor.hpp"

namespace liteheart {

inline constexpr int kNumLeads = 12;

/// One multi-lead signal in millivolts, shape [12, L].
struct SignalRecord {
  std::string id;
  Tensor<float> signal;  // [12, L]
  double fs = 0.0;
  std::vector<std::uint8_t> labels;  // empty when unlabeled
  bool is_labeled = false;

  Index length() const { return signal.empty() ? 0 : signal.dim(1); }
};

/// Single-lead extraction of a SignalRecord, shape [1, L].
struct LeadView {
  std::string source_id;
  Tensor<float> signal;  // [1, L]
  int lead_index = 0;
};

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  double labeled_frac = 0.1;
  std::uint64_t seed = 0;
  bool group_by_patient = false;  // config option for real data; synthetic ids are unique

  void validate() const;
};

struct DatasetSplits {
  std::vector<SignalRecord> train_labeled;    // D_B
  std::vector<SignalRecord> train_unlabeled;  // D_U, labels stripped
  std::vector<SignalRecord> val;              // D_V
  std::vector<SignalRecord> test;             // D_T
};

/// Per-class synthetic disease pattern.
struct ClassPattern {
  enum class Kind { Bump, Baseline, Premature };

  std::string name;        // class vocabulary entry, used by external evaluation
  Kind kind = Kind::Bump;
  std::vector<int> leads;  // leads carrying the morphology change
  double window_lo = 0.0;  // time window as fraction of L
  double window_hi = 1.0;
  double amplitude = 0.5;     // mV
  double timing_shift = 0.0;  // Premature only: beat shift in fractions of the RR interval
};

struct SynthConfig {
  int n_records = 0;
  int n_classes = 0;
  Index length = 640;
  double fs = 128.0;
  std::vector<double> class_prevalence;  // length n_classes, each in (0,1)
  std::vector<ClassPattern> patterns;    // length n_classes
  double heart_rate_lo = 55.0;  // bpm
  double heart_rate_hi = 95.0;
  double noise_std = 0.1;  // mV
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::string> class_names() const;
};

// ---------------------------------------------------------------------------
// Preprocessing

/// Biquad cascade realizing a Butterworth band-pass (order-4 prototype,
/// 8 poles), designed with bilinear transform and frequency prewarping.
struct BandpassDesign {
  struct Sos {
    double b0, b1, b2, a1, a2;
  };
  std::vector<Sos> sections;
  double fs = 0.0;

  static BandpassDesign butterworth(double low_hz, double high_hz, double fs, int order = 4);

  /// Single-pass complex frequency response at f_hz.
  std::complex<double> response(double f_hz) const;
  /// Forward-backward amplitude ratio at f_hz (the filtfilt oracle).
  double filtfilt_gain(double f_hz) const;
};

/// Zero-phase forward-backward filtering of one channel with odd-reflection
/// padding and steady-state initial conditions.
std::vector<double> sosfiltfilt(const BandpassDesign& design, const std::vector<double>& x,
                                Index padlen);

SignalRecord bandpass_filter(const SignalRecord& record, double low_hz = 1.0,
                             double high_hz = 47.0);

/// Per-lead z-score over the record (population std, eps guard 1e-8;
/// constant leads map to zeros).
SignalRecord zscore_normalize(const SignalRecord& record);

LeadView mask_to_lead(const SignalRecord& record, int lead_index = 0);

/// Linear-interpolation resampling to target_fs (callers band-limit first).
SignalRecord resample(const SignalRecord& record, double target_fs);

/// Standard pipeline: band-pass then per-lead z-score, record by record.
std::vector<SignalRecord> preprocess_corpus(const std::vector<SignalRecord>& records,
                                            double low_hz = 1.0, double high_hz = 47.0);

// ---------------------------------------------------------------------------
// Splitting and synthesis

DatasetSplits split_dataset(const std::vector<SignalRecord>& records, const SplitSpec& spec);

std::vector<SignalRecord> synth_generate(const SynthConfig& cfg);

/// Ground-truth injection window of a class in samples, [lo, hi).
std::pair<Index, Index> pattern_window_samples(const SynthConfig& cfg, int class_index);

void validate_record(const SignalRecord& record);

}  // namespace liteheart
