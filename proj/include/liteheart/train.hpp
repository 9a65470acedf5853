#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "liteheart/dataset_io.hpp"
#include "liteheart/distill.hpp"
#include "liteheart/metrics.hpp"
#include "liteheart/models.hpp"

namespace liteheart {

struct TrainConfig {
  double lr = 2e-3;
  Index batch_size = 128;
  int patience = 10;
  int max_epochs = 200;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr >= 0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 0");
  }
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_objective = 0.0;
};

struct RunLog {
  std::vector<EpochStat> epochs;
  std::vector<LossReport> steps;  // distillation only
  int best_epoch = -1;
  double best_val = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_seconds = 0.0;
};

/// Training halts once the validation objective has not improved for
/// `patience` consecutive epochs; the best epoch's weights are restored.
struct EarlyStopper {
  int patience;
  double best = 1e300;
  int best_epoch = -1;
  int bad_epochs = 0;

  explicit EarlyStopper(int p) : patience(p) {}
  bool observe(double val, int epoch) {
    if (val < best) {
      best = val;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }
  bool should_stop() const { return bad_epochs >= patience; }
};

/// Deterministic epoch batching; a trailing single-sample batch is merged
/// into its predecessor so pairwise losses always see N >= 2.
std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, RandomEngine& rng);

// ---------------------------------------------------------------------------
// Prepared tensors

struct ClassifierData {
  Tensor<float> x;  // [N, 12, L]
  Tensor<float> y;  // [N, C]
};

ClassifierData stack_classifier_data(const std::vector<SignalRecord>& records);
Tensor<float> stack_lead(const std::vector<SignalRecord>& records, int lead_index);
Tensor<float> stack_full(const std::vector<SignalRecord>& records);

/// Frozen-restoration outputs for every record, computed in chunks.
Tensor<float> restore_all(const RestorationNet<float>& restoration,
                          const std::vector<SignalRecord>& records, int lead_index,
                          Index chunk = 64);

// ---------------------------------------------------------------------------
// Trainers (all deterministic given seed/config/corpus)

struct RestorationTrainResult {
  RunLog log;
};

/// Minimizes the MSE between restored and original 12-lead signals;
/// early-stops on validation MSE and restores the best checkpoint.
RestorationTrainResult train_restoration(RestorationNet<float>& model,
                                         const std::vector<SignalRecord>& train,
                                         const std::vector<SignalRecord>& val, int lead_index,
                                         const TrainConfig& cfg);

struct ClassifierTrainResult {
  RunLog log;
};

/// Supervised multi-label BCE training on prepared inputs; early-stops on
/// validation BCE. Used for teacher pretraining/fine-tuning and the no-KD
/// baseline student.
ClassifierTrainResult train_classifier_supervised(ClassifierNet<float>& model,
                                                  const ClassifierData& train,
                                                  const ClassifierData& val,
                                                  const TrainConfig& cfg);

struct DistillInputs {
  DistillBatch<float> labeled;    // full D_B tensors
  DistillBatch<float> unlabeled;  // full D_U tensors (labels empty)
  ClassifierData val;             // restored val inputs + labels
};

/// Precomputes real/restored tensor stacks for distillation (the restoration
/// net is frozen, so its outputs are cached once).
DistillInputs prepare_distill_inputs(const RestorationNet<float>& restoration,
                                     const std::vector<SignalRecord>& train_labeled,
                                     const std::vector<SignalRecord>& train_unlabeled,
                                     const std::vector<SignalRecord>& val, int lead_index);

struct DistillResult {
  RunLog log;
};

/// Region-aware semi-supervised distillation; theta_s and theta_d update
/// jointly while the teacher and restoration stay frozen. Early stop on the
/// student's supervised validation BCE.
DistillResult distill(const ClassifierNet<float>& teacher, ClassifierNet<float>& student,
                      Discriminator<float>* disc, const DistillInputs& inputs,
                      const KDConfig& kd, DistillVariant variant, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Ablation ladder

struct AblationCell {
  MetricReport report;
};

struct AblationResult {
  // variant name -> one report per seed, in seed order
  std::vector<std::string> variant_names;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<MetricReport>> reports;
  std::map<std::string, MetricReport> teacher_reports_by_seed_name;  // "seed<k>"

  std::string to_csv() const;
};

struct ExperimentConfig {
  SynthConfig synth;
  SplitSpec split;
  std::string teacher_tier = "micro";
  std::string student_tier = "micro";
  std::string restoration_tier = "tiny";
  int lead_index = 0;
  KDConfig kd;
  TrainConfig restoration_train;
  TrainConfig teacher_train;
  TrainConfig distill_train;
  Index disc_hidden = 128;
};

struct SeedRunArtifacts {
  RestorationNet<float> restoration;
  ClassifierNet<float> teacher;
  std::map<std::string, ClassifierNet<float>> students;  // variant name -> model
  std::map<std::string, MetricReport> reports;           // variant name -> test metrics
  std::map<std::string, EvalResult> eval_results;
  MetricReport teacher_report;
  EvalResult teacher_eval;
  DatasetSplits splits;
};

/// One seed of the reference experiment: split, train restoration + teacher,
/// then run the requested ladder variants and evaluate each on the test set.
SeedRunArtifacts run_experiment_seed(const ExperimentConfig& cfg,
                                     const std::vector<SignalRecord>& corpus, std::uint64_t seed,
                                     const std::vector<DistillVariant>& variants);

/// Full ladder over a seed set; emits per-variant mean +- std per metric.
AblationResult ablation_ladder(const ExperimentConfig& cfg,
                               const std::vector<SignalRecord>& corpus,
                               const std::vector<std::uint64_t>& seeds);

}  // namespace liteheart
