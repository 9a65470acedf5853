#include "liteheart/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace liteheart {

namespace {

void check_shapes(const Tensor<double>& scores, const Tensor<double>& y) {
  if (scores.ndim() != 2 || !scores.same_shape(y))
    throw std::invalid_argument("metrics: scores and labels must share shape [N, C]");
}

// Average ranks (1-based) for ties, computed per sample or per class slice.
std::vector<double> average_ranks_desc(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double ranking_loss(const Tensor<double>& scores, const Tensor<double>& y) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  double acc = 0.0;
  Index used = 0;
  std::vector<double> row(static_cast<std::size_t>(C));
  for (Index n = 0; n < N; ++n) {
    Index n_pos = 0;
    for (Index c = 0; c < C; ++c) {
      row[static_cast<std::size_t>(c)] = scores.at(n, c);
      if (y.at(n, c) > 0.5) ++n_pos;
    }
    const Index n_neg = C - n_pos;
    if (n_pos == 0 || n_neg == 0) continue;  // skipped per precondition
    // Mann-Whitney with average ranks realizes the ties-count-half rule.
    const std::vector<double> ranks = average_ranks_desc(row);
    double pos_rank_sum = 0.0;
    for (Index c = 0; c < C; ++c)
      if (y.at(n, c) > 0.5) pos_rank_sum += ranks[static_cast<std::size_t>(c)];
    // Mis-ordered pairs: ranks are descending, so a positive ranked deep
    // contributes. U = sum of (rank - expected best block).
    const double misordered =
        pos_rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
    acc += misordered / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    ++used;
  }
  return used > 0 ? acc / static_cast<double>(used) : 0.0;
}

double coverage(const Tensor<double>& scores, const Tensor<double>& y) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  double acc = 0.0;
  Index used = 0;
  for (Index n = 0; n < N; ++n) {
    Index deepest = 0;
    bool any_pos = false;
    for (Index c = 0; c < C; ++c) {
      if (y.at(n, c) <= 0.5) continue;
      any_pos = true;
      // Ties take the worst rank: count every item scoring >= this one.
      Index rank = 0;
      for (Index c2 = 0; c2 < C; ++c2)
        if (scores.at(n, c2) >= scores.at(n, c)) ++rank;
      deepest = std::max(deepest, rank);
    }
    if (!any_pos) continue;
    acc += static_cast<double>(deepest);
    ++used;
  }
  return used > 0 ? acc / static_cast<double>(used) : 0.0;
}

namespace {

// Per-class average precision; ties broken by sample index (stable order).
double average_precision(const std::vector<double>& s, const std::vector<int>& lab) {
  const std::size_t n = s.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  double hits = 0.0, acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (lab[idx[r]]) {
      hits += 1.0;
      acc += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0 ? acc / hits : 0.0;
}

}  // namespace

double map_macro(const Tensor<double>& scores, const Tensor<double>& y) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  double acc = 0.0;
  Index used = 0;
  std::vector<double> s(static_cast<std::size_t>(N));
  std::vector<int> lab(static_cast<std::size_t>(N));
  for (Index c = 0; c < C; ++c) {
    Index n_pos = 0;
    for (Index n = 0; n < N; ++n) {
      s[static_cast<std::size_t>(n)] = scores.at(n, c);
      lab[static_cast<std::size_t>(n)] = y.at(n, c) > 0.5 ? 1 : 0;
      n_pos += lab[static_cast<std::size_t>(n)];
    }
    if (n_pos == 0) continue;
    acc += average_precision(s, lab);
    ++used;
  }
  return used > 0 ? acc / static_cast<double>(used) : 0.0;
}

std::vector<double> per_class_auc(const Tensor<double>& scores, const Tensor<double>& y) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  std::vector<double> out(static_cast<std::size_t>(C), std::nan(""));
  std::vector<double> s(static_cast<std::size_t>(N));
  for (Index c = 0; c < C; ++c) {
    Index n_pos = 0;
    for (Index n = 0; n < N; ++n) {
      s[static_cast<std::size_t>(n)] = scores.at(n, c);
      if (y.at(n, c) > 0.5) ++n_pos;
    }
    const Index n_neg = N - n_pos;
    if (n_pos == 0 || n_neg == 0) continue;
    const std::vector<double> ranks = average_ranks_desc(s);
    double pos_rank_sum = 0.0;
    for (Index n = 0; n < N; ++n)
      if (y.at(n, c) > 0.5) pos_rank_sum += ranks[static_cast<std::size_t>(n)];
    const double misordered =
        pos_rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
    out[static_cast<std::size_t>(c)] =
        1.0 - misordered / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  }
  return out;
}

double auc_macro(const Tensor<double>& scores, const Tensor<double>& y) {
  const std::vector<double> aucs = per_class_auc(scores, y);
  double acc = 0.0;
  Index used = 0;
  for (double a : aucs) {
    if (std::isnan(a)) continue;
    acc += a;
    ++used;
  }
  return used > 0 ? acc / static_cast<double>(used) : 0.0;
}

double f_macro(const Tensor<double>& scores, const Tensor<double>& y, double threshold,
               double beta) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  const double b2 = beta * beta;
  double acc = 0.0;
  Index used = 0;
  for (Index c = 0; c < C; ++c) {
    Index tp = 0, fp = 0, fn = 0, n_pos = 0;
    for (Index n = 0; n < N; ++n) {
      const bool truth = y.at(n, c) > 0.5;
      const bool pred = scores.at(n, c) >= threshold;
      n_pos += truth;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    if (n_pos == 0 || n_pos == N) continue;  // degenerate class
    const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double denom = b2 * precision + recall;
    acc += denom > 0 ? (1.0 + b2) * precision * recall / denom : 0.0;
    ++used;
  }
  return used > 0 ? acc / static_cast<double>(used) : 0.0;
}

MetricReport compute_metrics(const Tensor<double>& scores, const Tensor<double>& y,
                             double threshold, double beta) {
  check_shapes(scores, y);
  const Index N = scores.dim(0), C = scores.dim(1);
  MetricReport r;
  r.threshold = threshold;
  r.beta = beta;
  r.ranking_loss = ranking_loss(scores, y);
  r.coverage = coverage(scores, y);
  r.map = map_macro(scores, y);
  r.macro_auc = auc_macro(scores, y);
  r.macro_f1 = f_macro(scores, y, threshold, 1.0);
  r.macro_fbeta = f_macro(scores, y, threshold, beta);
  for (Index c = 0; c < C; ++c) {
    Index n_pos = 0;
    for (Index n = 0; n < N; ++n) n_pos += y.at(n, c) > 0.5;
    if (n_pos == 0 || n_pos == N) ++r.excluded_classes;
  }
  for (Index n = 0; n < N; ++n) {
    Index n_pos = 0;
    for (Index c = 0; c < C; ++c) n_pos += y.at(n, c) > 0.5;
    if (n_pos == 0 || n_pos == C) ++r.skipped_samples;
  }
  return r;
}

std::string MetricReport::to_json() const {
  char buf[640];
  std::snprintf(buf, sizeof(buf),
                "{\n"
                "  \"ranking_loss\": %.17g,\n"
                "  \"coverage\": %.17g,\n"
                "  \"map\": %.17g,\n"
                "  \"macro_auc\": %.17g,\n"
                "  \"macro_f1\": %.17g,\n"
                "  \"macro_fbeta\": %.17g,\n"
                "  \"threshold\": %.17g,\n"
                "  \"beta\": %.17g,\n"
                "  \"excluded_classes\": %d,\n"
                "  \"skipped_samples\": %d\n"
                "}\n",
                ranking_loss, coverage, map, macro_auc, macro_f1, macro_fbeta, threshold, beta,
                excluded_classes, skipped_samples);
  return buf;
}

std::string MetricReport::to_table() const {
  char buf[640];
  std::snprintf(buf, sizeof(buf),
                "metric          value\n"
                "ranking_loss    %8.4f\n"
                "coverage        %8.4f\n"
                "map             %8.2f\n"
                "macro_auc       %8.2f\n"
                "macro_f1        %8.2f\n"
                "macro_fbeta     %8.2f\n",
                ranking_loss, coverage, map * 100.0, macro_auc * 100.0, macro_f1 * 100.0,
                macro_fbeta * 100.0);
  return buf;
}

// ---------------------------------------------------------------------------

Tensor<double> classifier_scores(const ClassifierNet<float>& net, const Tensor<float>& inputs,
                                 Index batch) {
  const Index N = inputs.dim(0), C = net.n_classes(), L = inputs.dim(2);
  Tensor<double> scores({N, C});
  for (Index start = 0; start < N; start += batch) {
    const Index n = std::min(batch, N - start);
    Tensor<float> chunk({n, kNumLeads, L});
    std::copy(inputs.data() + start * kNumLeads * L, inputs.data() + (start + n) * kNumLeads * L,
              chunk.data());
    const auto out = net.forward(chunk);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < C; ++c)
        scores.at(start + i, c) = 1.0 / (1.0 + std::exp(-static_cast<double>(out.logits.at(i, c))));
  }
  return scores;
}

namespace {

Tensor<double> labels_tensor(const std::vector<SignalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const Index N = static_cast<Index>(records.size());
  const Index C = static_cast<Index>(records.front().labels.size());
  Tensor<double> y({N, C});
  for (Index n = 0; n < N; ++n) {
    const SignalRecord& r = records[static_cast<std::size_t>(n)];
    if (!r.is_labeled || static_cast<Index>(r.labels.size()) != C)
      throw std::invalid_argument("evaluate: record '" + r.id + "' lacks labels");
    for (Index c = 0; c < C; ++c) y.at(n, c) = r.labels[static_cast<std::size_t>(c)];
  }
  return y;
}

Tensor<float> stack_signals(const std::vector<SignalRecord>& records) {
  const Index N = static_cast<Index>(records.size());
  const Index L = records.front().length();
  Tensor<float> x({N, kNumLeads, L});
  for (Index n = 0; n < N; ++n) {
    const SignalRecord& r = records[static_cast<std::size_t>(n)];
    if (r.length() != L) throw std::invalid_argument("evaluate: record length mismatch at '" + r.id + "'");
    std::copy(r.signal.data(), r.signal.data() + kNumLeads * L, x.data() + n * kNumLeads * L);
  }
  return x;
}

}  // namespace

EvalResult evaluate_student(const StudentSystem& system, const std::vector<SignalRecord>& records,
                            double threshold, double beta) {
  if (!system.restoration || !system.student)
    throw std::invalid_argument("evaluate_student: incomplete system");
  EvalResult res;
  res.labels = labels_tensor(records);
  const Index N = static_cast<Index>(records.size());
  const Index L = records.front().length();

  Tensor<float> restored({N, kNumLeads, L});
  constexpr Index kChunk = 64;
  for (Index start = 0; start < N; start += kChunk) {
    const Index n = std::min(kChunk, N - start);
    Tensor<float> lead({n, 1, L});
    for (Index i = 0; i < n; ++i) {
      const SignalRecord& r = records[static_cast<std::size_t>(start + i)];
      for (Index t = 0; t < L; ++t) lead.at(i, 0, t) = r.signal.at(system.lead_index, t);
    }
    const Tensor<float> out = system.restoration->forward(lead);
    std::copy(out.data(), out.data() + n * kNumLeads * L, restored.data() + start * kNumLeads * L);
  }
  res.scores = classifier_scores(*system.student, restored);
  res.report = compute_metrics(res.scores, res.labels, threshold, beta);
  res.class_auc = per_class_auc(res.scores, res.labels);
  return res;
}

EvalResult evaluate_teacher(ClassifierNet<float>& teacher, const std::vector<SignalRecord>& records,
                            double threshold, double beta) {
  EvalResult res;
  res.labels = labels_tensor(records);
  const Tensor<float> x = stack_signals(records);
  res.scores = classifier_scores(teacher, x);
  res.report = compute_metrics(res.scores, res.labels, threshold, beta);
  res.class_auc = per_class_auc(res.scores, res.labels);
  return res;
}

}  // namespace liteheart
