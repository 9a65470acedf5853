#pragma once

#include <string>
#include <vector>

#include "liteheart/models.hpp"
#include "liteheart/signal.hpp"
#include "liteheart/tensor.hpp"

namespace liteheart {

/// Multi-label evaluation suite. Coverage is 1-based (in [1, C]); a 0-based
/// reference definition would shift reported values by exactly 1.
struct MetricReport {
  double ranking_loss = 0.0;
  double coverage = 0.0;
  double map = 0.0;
  double macro_auc = 0.0;
  double macro_f1 = 0.0;
  double macro_fbeta = 0.0;
  double threshold = 0.5;
  double beta = 2.0;
  int excluded_classes = 0;  // degenerate classes dropped from macro averages
  int skipped_samples = 0;   // ranking-loss samples lacking a pos/neg pair

  std::string to_json() const;
  std::string to_table() const;
};

// scores: [N, C] real scores (any monotone scale); y: [N, C] binary.
double ranking_loss(const Tensor<double>& scores, const Tensor<double>& y);
double coverage(const Tensor<double>& scores, const Tensor<double>& y);
double map_macro(const Tensor<double>& scores, const Tensor<double>& y);
double auc_macro(const Tensor<double>& scores, const Tensor<double>& y);
double f_macro(const Tensor<double>& scores, const Tensor<double>& y, double threshold,
               double beta);
std::vector<double> per_class_auc(const Tensor<double>& scores, const Tensor<double>& y);

MetricReport compute_metrics(const Tensor<double>& scores, const Tensor<double>& y,
                             double threshold = 0.5, double beta = 2.0);

// ---------------------------------------------------------------------------
// Whole-pipeline evaluation

struct StudentSystem {
  RestorationNet<float>* restoration = nullptr;
  ClassifierNet<float>* student = nullptr;
  int lead_index = 0;
};

struct EvalResult {
  MetricReport report;
  Tensor<double> scores;  // [N, C] sigmoid scores
  Tensor<double> labels;  // [N, C]
  std::vector<double> class_auc;
};

/// 1-lead -> restoration -> student pipeline over labeled records.
EvalResult evaluate_student(const StudentSystem& system, const std::vector<SignalRecord>& records,
                            double threshold = 0.5, double beta = 2.0);
/// 12-lead teacher evaluation.
EvalResult evaluate_teacher(ClassifierNet<float>& teacher, const std::vector<SignalRecord>& records,
                            double threshold = 0.5, double beta = 2.0);

/// Sigmoid scores for precomputed [N, 12, L] classifier inputs, batched.
Tensor<double> classifier_scores(const ClassifierNet<float>& net, const Tensor<float>& inputs,
                                 Index batch = 64);

}  // namespace liteheart
