#include "liteheart/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace liteheart {

std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, RandomEngine& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < n; start += batch_size) {
    const Index end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

ClassifierData stack_classifier_data(const std::vector<SignalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("stack_classifier_data: empty dataset");
  ClassifierData out;
  out.x = stack_full(records);
  const Index N = static_cast<Index>(records.size());
  const Index C = static_cast<Index>(records.front().labels.size());
  out.y = Tensor<float>({N, C});
  for (Index n = 0; n < N; ++n) {
    const SignalRecord& r = records[static_cast<std::size_t>(n)];
    if (!r.is_labeled || static_cast<Index>(r.labels.size()) != C)
      throw std::invalid_argument("stack_classifier_data: record '" + r.id + "' lacks labels");
    for (Index c = 0; c < C; ++c) out.y.at(n, c) = r.labels[static_cast<std::size_t>(c)];
  }
  return out;
}

Tensor<float> stack_full(const std::vector<SignalRecord>& records) {
  const Index N = static_cast<Index>(records.size());
  const Index L = records.front().length();
  Tensor<float> x({N, kNumLeads, L});
  for (Index n = 0; n < N; ++n) {
    const SignalRecord& r = records[static_cast<std::size_t>(n)];
    if (r.length() != L)
      throw std::invalid_argument("stack_full: record length mismatch at '" + r.id + "'");
    std::copy(r.signal.data(), r.signal.data() + kNumLeads * L, x.data() + n * kNumLeads * L);
  }
  return x;
}

Tensor<float> stack_lead(const std::vector<SignalRecord>& records, int lead_index) {
  const Index N = static_cast<Index>(records.size());
  const Index L = records.front().length();
  Tensor<float> x({N, 1, L});
  for (Index n = 0; n < N; ++n) {
    const SignalRecord& r = records[static_cast<std::size_t>(n)];
    for (Index t = 0; t < L; ++t) x.at(n, 0, t) = r.signal.at(lead_index, t);
  }
  return x;
}

Tensor<float> restore_all(const RestorationNet<float>& restoration,
                          const std::vector<SignalRecord>& records, int lead_index, Index chunk) {
  const Index N = static_cast<Index>(records.size());
  if (N == 0) return Tensor<float>();
  const Index L = records.front().length();
  Tensor<float> out({N, kNumLeads, L});
  for (Index start = 0; start < N; start += chunk) {
    const Index n = std::min(chunk, N - start);
    Tensor<float> lead({n, 1, L});
    for (Index i = 0; i < n; ++i) {
      const SignalRecord& r = records[static_cast<std::size_t>(start + i)];
      for (Index t = 0; t < L; ++t) lead.at(i, 0, t) = r.signal.at(lead_index, t);
    }
    const Tensor<float> restored = restoration.forward(lead);
    std::copy(restored.data(), restored.data() + n * kNumLeads * L,
              out.data() + start * kNumLeads * L);
  }
  return out;
}

namespace {

Tensor<float> gather_rows(const Tensor<float>& src, const std::vector<Index>& rows) {
  std::vector<Index> shape = src.shape();
  shape[0] = static_cast<Index>(rows.size());
  Tensor<float> out(shape);
  const Index stride = src.numel() / src.dim(0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(src.data() + rows[i] * stride, src.data() + (rows[i] + 1) * stride,
              out.data() + static_cast<Index>(i) * stride);
  return out;
}

double mse_value(const Tensor<float>& pred, const Tensor<float>& target) {
  double acc = 0.0;
  for (Index i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.numel());
}

template <class Model>
std::vector<Tensor<float>> snapshot_params(Model& m) {
  std::vector<Tensor<float>> out;
  for (nn::Param<float>* p : m.params()) out.push_back(p->value);
  return out;
}

template <class Model>
void restore_params(Model& m, const std::vector<Tensor<float>>& snap) {
  auto params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace

RestorationTrainResult train_restoration(RestorationNet<float>& model,
                                         const std::vector<SignalRecord>& train,
                                         const std::vector<SignalRecord>& val, int lead_index,
                                         const TrainConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  RestorationTrainResult result;
  result.log.seed = cfg.seed;
  if (cfg.max_epochs == 0) return result;  // zero-epoch budget: model unchanged

  const Tensor<float> train_in = stack_lead(train, lead_index);
  const Tensor<float> train_target = stack_full(train);
  const Tensor<float> val_in = stack_lead(val, lead_index);
  const Tensor<float> val_target = stack_full(val);
  const Index N = train_in.dim(0);

  nn::AdamW<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  opt.init(model.params());

  RandomEngine batch_rng(RandomEngine::derive(cfg.seed, "batches"));
  EarlyStopper stopper(cfg.patience);
  std::vector<Tensor<float>> best = snapshot_params(model);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    Index epoch_items = 0;
    for (const auto& batch : make_batches(N, cfg.batch_size, batch_rng)) {
      const Tensor<float> x = gather_rows(train_in, batch);
      const Tensor<float> target = gather_rows(train_target, batch);
      nn::Cache<float> cache;
      const Tensor<float> pred = model.forward(x, &cache);
      // L = mean (pred - target)^2 ; dL/dpred = 2 (pred - target) / numel
      Tensor<float> dpred(pred.shape());
      double loss = 0.0;
      const double inv = 1.0 / static_cast<double>(pred.numel());
      for (Index i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        loss += d * d;
        dpred[i] = static_cast<float>(2.0 * d * inv);
      }
      loss *= inv;
      nn::zero_grads(model.params());
      model.backward(dpred, cache);
      opt.update(model.params());
      epoch_loss += loss * static_cast<double>(batch.size());
      epoch_items += static_cast<Index>(batch.size());
    }

    // validation MSE in inference mode, chunked
    double val_mse = 0.0;
    const Index NV = val_in.dim(0);
    for (Index start = 0; start < NV; start += 64) {
      const Index n = std::min<Index>(64, NV - start);
      std::vector<Index> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), start);
      const Tensor<float> pred = model.forward(gather_rows(val_in, rows));
      val_mse += mse_value(pred, gather_rows(val_target, rows)) * static_cast<double>(n);
    }
    val_mse /= static_cast<double>(NV);

    result.log.epochs.push_back({epoch, epoch_loss / static_cast<double>(epoch_items), val_mse});
    if (stopper.observe(val_mse, epoch)) best = snapshot_params(model);
    if (stopper.should_stop()) break;
  }

  restore_params(model, best);
  result.log.best_epoch = stopper.best_epoch;
  result.log.best_val = stopper.best;
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

ClassifierTrainResult train_classifier_supervised(ClassifierNet<float>& model,
                                                  const ClassifierData& train,
                                                  const ClassifierData& val,
                                                  const TrainConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  ClassifierTrainResult result;
  result.log.seed = cfg.seed;
  if (cfg.max_epochs == 0) return result;

  const Index N = train.x.dim(0);
  nn::AdamW<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  opt.init(model.params());

  RandomEngine batch_rng(RandomEngine::derive(cfg.seed, "batches"));
  EarlyStopper stopper(cfg.patience);
  std::vector<Tensor<float>> best = snapshot_params(model);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    Index epoch_items = 0;
    for (const auto& batch : make_batches(N, cfg.batch_size, batch_rng)) {
      const Tensor<float> x = gather_rows(train.x, batch);
      const Tensor<float> y = gather_rows(train.y, batch);
      nn::Cache<float> cache;
      const auto out = model.forward(x, &cache);
      Tensor<float> dp;
      const double loss = bce_multilabel(out.logits, y, &dp);
      nn::zero_grads(model.params());
      model.backward(dp, nullptr, cache);
      opt.update(model.params());
      epoch_loss += loss * static_cast<double>(batch.size());
      epoch_items += static_cast<Index>(batch.size());
    }

    double val_loss = 0.0;
    const Index NV = val.x.dim(0);
    for (Index start = 0; start < NV; start += 64) {
      const Index n = std::min<Index>(64, NV - start);
      std::vector<Index> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), start);
      const auto out = model.forward(gather_rows(val.x, rows));
      val_loss +=
          bce_multilabel<float>(out.logits, gather_rows(val.y, rows)) * static_cast<double>(n);
    }
    val_loss /= static_cast<double>(NV);

    result.log.epochs.push_back({epoch, epoch_loss / static_cast<double>(epoch_items), val_loss});
    if (stopper.observe(val_loss, epoch)) best = snapshot_params(model);
    if (stopper.should_stop()) break;
  }

  restore_params(model, best);
  result.log.best_epoch = stopper.best_epoch;
  result.log.best_val = stopper.best;
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

DistillInputs prepare_distill_inputs(const RestorationNet<float>& restoration,
                                     const std::vector<SignalRecord>& train_labeled,
                                     const std::vector<SignalRecord>& train_unlabeled,
                                     const std::vector<SignalRecord>& val, int lead_index) {
  if (train_labeled.empty()) throw std::invalid_argument("distill: labeled set must not be empty");
  DistillInputs out;
  out.labeled.real = stack_full(train_labeled);
  out.labeled.restored = restore_all(restoration, train_labeled, lead_index);
  {
    const Index N = static_cast<Index>(train_labeled.size());
    const Index C = static_cast<Index>(train_labeled.front().labels.size());
    out.labeled.labels = Tensor<float>({N, C});
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c)
        out.labeled.labels.at(n, c) =
            train_labeled[static_cast<std::size_t>(n)].labels[static_cast<std::size_t>(c)];
  }
  if (!train_unlabeled.empty()) {
    out.unlabeled.real = stack_full(train_unlabeled);
    out.unlabeled.restored = restore_all(restoration, train_unlabeled, lead_index);
  }
  out.val.x = restore_all(restoration, val, lead_index);
  {
    const Index N = static_cast<Index>(val.size());
    const Index C = static_cast<Index>(val.front().labels.size());
    out.val.y = Tensor<float>({N, C});
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c)
        out.val.y.at(n, c) = val[static_cast<std::size_t>(n)].labels[static_cast<std::size_t>(c)];
  }
  return out;
}

namespace {

template <class T>
DistillBatch<T> slice_batch(const DistillBatch<T>& full, const std::vector<Index>& rows) {
  DistillBatch<T> out;
  out.real = gather_rows(full.real, rows);
  out.restored = gather_rows(full.restored, rows);
  if (!full.labels.empty()) out.labels = gather_rows(full.labels, rows);
  return out;
}

}  // namespace

DistillResult distill(const ClassifierNet<float>& teacher, ClassifierNet<float>& student,
                      Discriminator<float>* disc, const DistillInputs& inputs, const KDConfig& kd,
                      DistillVariant variant, const TrainConfig& cfg) {
  cfg.validate();
  kd.validate();
  const auto t_start = std::chrono::steady_clock::now();
  DistillResult result;
  result.log.seed = cfg.seed;
  if (cfg.max_epochs == 0) return result;

  const Index NB = inputs.labeled.size();
  const Index NU = variant_uses_unlabeled(variant) ? inputs.unlabeled.size() : 0;
  if (NB == 0) throw std::invalid_argument("distill: labeled set must not be empty");

  nn::AdamW<float> opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  {
    nn::ParamRefs<float> trainable = student.params();
    if (disc && variant_uses_discriminator(variant))
      for (nn::Param<float>* p : disc->params()) trainable.push_back(p);
    opt.init(trainable);
  }

  RandomEngine batch_rng(RandomEngine::derive(cfg.seed, "batches"));
  RandomEngine box_rng(RandomEngine::derive(cfg.seed, "regions"));
  RandomEngine partner_rng(RandomEngine::derive(cfg.seed, "partners"));
  EarlyStopper stopper(cfg.patience);
  std::vector<Tensor<float>> best = snapshot_params(student);

  // One labeled batch + one unlabeled batch per step; the smaller stream is
  // cycled with reshuffles so every step sees both kinds of data.
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto labeled_batches = make_batches(NB, cfg.batch_size, batch_rng);
    std::vector<std::vector<Index>> unlabeled_batches;
    if (NU > 0) unlabeled_batches = make_batches(NU, cfg.batch_size, batch_rng);
    const std::size_t steps = std::max(labeled_batches.size(),
                                       NU > 0 ? unlabeled_batches.size() : std::size_t(0));

    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      if (s % labeled_batches.size() == 0 && s > 0)
        labeled_batches = make_batches(NB, cfg.batch_size, batch_rng);
      const auto& lb = labeled_batches[s % labeled_batches.size()];
      DistillBatch<float> labeled = slice_batch(inputs.labeled, lb);

      DistillBatch<float> unlabeled;
      const DistillBatch<float>* unlabeled_ptr = nullptr;
      if (NU > 0) {
        if (s % unlabeled_batches.size() == 0 && s > 0)
          unlabeled_batches = make_batches(NU, cfg.batch_size, batch_rng);
        unlabeled = slice_batch(inputs.unlabeled, unlabeled_batches[s % unlabeled_batches.size()]);
        unlabeled_ptr = &unlabeled;
      }

      const LossReport report = distill_step(teacher, student, disc, opt, labeled, unlabeled_ptr,
                                             kd, variant, box_rng, partner_rng);
      result.log.steps.push_back(report);
      epoch_loss += report.total;
    }

    // Early stopping on the student's supervised validation BCE.
    double val_loss = 0.0;
    const Index NV = inputs.val.x.dim(0);
    for (Index start = 0; start < NV; start += 64) {
      const Index n = std::min<Index>(64, NV - start);
      std::vector<Index> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), start);
      const auto out = student.forward(gather_rows(inputs.val.x, rows));
      val_loss += bce_multilabel<float>(out.logits, gather_rows(inputs.val.y, rows)) *
                  static_cast<double>(n);
    }
    val_loss /= static_cast<double>(NV);

    result.log.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(1, steps)), val_loss});
    if (stopper.observe(val_loss, epoch)) best = snapshot_params(student);
    if (stopper.should_stop()) break;
  }

  restore_params(student, best);
  result.log.best_epoch = stopper.best_epoch;
  result.log.best_val = stopper.best;
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// ---------------------------------------------------------------------------

SeedRunArtifacts run_experiment_seed(const ExperimentConfig& cfg,
                                     const std::vector<SignalRecord>& corpus, std::uint64_t seed,
                                     const std::vector<DistillVariant>& variants) {
  SeedRunArtifacts art;

  SplitSpec split = cfg.split;
  split.seed = seed;
  art.splits = split_dataset(corpus, split);

  const Index C = static_cast<Index>(cfg.synth.n_classes);

  // Restoration trains on all training signals (labeled + unlabeled).
  std::vector<SignalRecord> restoration_train = art.splits.train_labeled;
  restoration_train.insert(restoration_train.end(), art.splits.train_unlabeled.begin(),
                           art.splits.train_unlabeled.end());

  art.restoration =
      build_restoration(cfg.restoration_tier, RandomEngine::derive(seed, "restoration"));
  TrainConfig rcfg = cfg.restoration_train;
  rcfg.seed = RandomEngine::derive(seed, "restoration-train");
  train_restoration(art.restoration, restoration_train, art.splits.val, cfg.lead_index, rcfg);

  // Teacher fine-tunes on the labeled set only.
  art.teacher = build_classifier(cfg.teacher_tier, C, RandomEngine::derive(seed, "teacher"));
  TrainConfig tcfg = cfg.teacher_train;
  tcfg.seed = RandomEngine::derive(seed, "teacher-train");
  const ClassifierData teacher_train = stack_classifier_data(art.splits.train_labeled);
  const ClassifierData teacher_val = stack_classifier_data(art.splits.val);
  train_classifier_supervised(art.teacher, teacher_train, teacher_val, tcfg);
  art.teacher_eval = evaluate_teacher(art.teacher, art.splits.test);
  art.teacher_report = art.teacher_eval.report;

  const DistillInputs inputs =
      prepare_distill_inputs(art.restoration, art.splits.train_labeled,
                             art.splits.train_unlabeled, art.splits.val, cfg.lead_index);

  for (DistillVariant variant : variants) {
    const std::string name = variant_name(variant);
    ClassifierNet<float> student =
        build_classifier(cfg.student_tier, C, RandomEngine::derive(seed, "student"));
    TrainConfig dcfg = cfg.distill_train;
    dcfg.seed = RandomEngine::derive(seed, std::string("distill-") + name);

    if (variant == DistillVariant::Baseline) {
      ClassifierData train{inputs.labeled.restored, inputs.labeled.labels};
      train_classifier_supervised(student, train, inputs.val, dcfg);
    } else {
      Discriminator<float> disc(student.spec().feature_dim, C, cfg.disc_hidden,
                                RandomEngine::derive(seed, "discriminator"));
      Discriminator<float>* disc_ptr =
          variant_uses_discriminator(variant) ? &disc : nullptr;
      distill(art.teacher, student, disc_ptr, inputs, cfg.kd, variant, dcfg);
    }

    StudentSystem system{&art.restoration, &student, cfg.lead_index};
    EvalResult ev = evaluate_student(system, art.splits.test);
    art.reports[name] = ev.report;
    art.eval_results[name] = std::move(ev);
    art.students.emplace(name, std::move(student));
  }
  return art;
}

AblationResult ablation_ladder(const ExperimentConfig& cfg,
                               const std::vector<SignalRecord>& corpus,
                               const std::vector<std::uint64_t>& seeds) {
  const std::vector<DistillVariant> ladder = {DistillVariant::Baseline, DistillVariant::VanillaKD,
                                              DistillVariant::RegionKD, DistillVariant::RegionKDMI,
                                              DistillVariant::Full};
  AblationResult result;
  result.seeds = seeds;
  for (DistillVariant v : ladder) result.variant_names.push_back(variant_name(v));

  for (std::uint64_t seed : seeds) {
    SeedRunArtifacts art = run_experiment_seed(cfg, corpus, seed, ladder);
    for (const auto& [name, report] : art.reports) result.reports[name].push_back(report);
    result.teacher_reports_by_seed_name["seed" + std::to_string(seed)] = art.teacher_report;
  }
  return result;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  sd = 0.0;
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size())) : 0.0;
}

}  // namespace

std::string AblationResult::to_csv() const {
  std::string out =
      "variant,metric,mean,std\n";
  const char* metric_names[6] = {"ranking_loss", "coverage", "map",
                                 "macro_auc",    "macro_f1", "macro_fbeta"};
  for (const std::string& name : variant_names) {
    const auto it = reports.find(name);
    if (it == reports.end()) continue;
    for (int m = 0; m < 6; ++m) {
      std::vector<double> vals;
      for (const MetricReport& r : it->second) {
        const double v[6] = {r.ranking_loss, r.coverage, r.map, r.macro_auc, r.macro_f1,
                             r.macro_fbeta};
        vals.push_back(v[m]);
      }
      double mean, sd;
      mean_std(vals, mean, sd);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g\n", name.c_str(), metric_names[m], mean,
                    sd);
      out += buf;
    }
  }
  return out;
}

}  // namespace liteheart
