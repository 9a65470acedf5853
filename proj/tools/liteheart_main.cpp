// liteheart command-line interface: corpus synthesis, pretraining,
// fine-tuning, distillation, evaluation (including cross-device external
// validation), explanation, efficiency benchmarking, and the ablation ladder.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "liteheart/config.hpp"
#include "liteheart/dataset_io.hpp"
#include "liteheart/xai.hpp"

namespace fs = std::filesystem;
using namespace liteheart;

namespace {

const char* program_path = "liteheart";

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // -1: use the config's first seed
  std::string tier_student, tier_restoration;
  int lead_index = -1;
  double labeled_frac = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool need_config = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "run config (.toml or .json)");
  if (need_config) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides run.out_dir)");
  cmd->add_option("--seed", args.seed, "single seed to run (overrides run.seeds)");
  cmd->add_option("--tier-student", args.tier_student, "student tier override");
  cmd->add_option("--tier-restoration", args.tier_restoration, "restoration tier override");
  cmd->add_option("--lead-index", args.lead_index, "input lead override (0-11)");
  cmd->add_option("--labeled-frac", args.labeled_frac, "labeled fraction override");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
  if (args.seed >= 0) rc.seeds = {static_cast<std::uint64_t>(args.seed)};
  if (!args.tier_student.empty()) rc.experiment.student_tier = args.tier_student;
  if (!args.tier_restoration.empty()) rc.experiment.restoration_tier = args.tier_restoration;
  if (args.lead_index >= 0) {
    if (args.lead_index >= kNumLeads) throw std::invalid_argument("--lead-index out of [0, 11]");
    rc.experiment.lead_index = args.lead_index;
  }
  if (args.labeled_frac > 0) {
    rc.experiment.split.labeled_frac = args.labeled_frac;
    rc.experiment.split.validate();
  }
  ClassifierSpec::for_tier(rc.experiment.student_tier);
  RestorationSpec::for_tier(rc.experiment.restoration_tier);
  rc.config_hash = std::to_string(fnv1a_hash(rc.to_toml()));
  return rc;
}

void write_snapshot(const RunConfig& rc, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.snapshot.toml");
  if (!out) throw std::runtime_error("cannot write config snapshot in '" + dir.string() + "'");
  out << rc.to_toml();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<SignalRecord> load_corpus(const RunConfig& rc, bool preprocess = true) {
  std::vector<SignalRecord> records;
  if (!rc.dataset_dir.empty()) {
    std::cerr << "loading dataset from " << rc.dataset_dir << "\n";
    records = load_dataset(rc.dataset_dir).records;
  } else {
    std::cerr << "synthesizing " << rc.experiment.synth.n_records << " records\n";
    records = synth_generate(rc.experiment.synth);
  }
  if (preprocess) {
    std::cerr << "preprocessing (band-pass 1-47 Hz + z-score)\n";
    records = preprocess_corpus(records);
  }
  return records;
}

std::vector<std::string> corpus_class_names(const RunConfig& rc) {
  if (!rc.dataset_dir.empty()) return load_dataset(rc.dataset_dir).class_names;
  return rc.experiment.synth.class_names();
}

void write_run_log(const RunLog& log, const fs::path& dir) {
  {
    std::ofstream out(dir / "steps.jsonl");
    for (const LossReport& r : log.steps) {
      char line[320];
      std::snprintf(line, sizeof(line),
                    "{\"l_y\":%.9g,\"l_k_labeled\":%.9g,\"l_k_unlabeled\":%.9g,"
                    "\"l_d_labeled\":%.9g,\"l_d_unlabeled\":%.9g,\"total\":%.9g}\n",
                    r.l_y, r.l_k_labeled, r.l_k_unlabeled, r.l_d_labeled, r.l_d_unlabeled,
                    r.total);
      out << line;
    }
  }
  {
    std::ofstream out(dir / "epochs.csv");
    out << "epoch,train_loss,val_objective\n";
    for (const EpochStat& e : log.epochs) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", e.epoch, e.train_loss,
                    e.val_objective);
      out << line;
    }
  }
  char summary[256];
  std::snprintf(summary, sizeof(summary),
                "{\"best_epoch\":%d,\"best_val\":%.17g,\"seed\":%llu,\"wall_seconds\":%.3f}\n",
                log.best_epoch, log.best_val, static_cast<unsigned long long>(log.seed),
                log.wall_seconds);
  write_text(dir / "train_summary.json", summary);
}

void write_eval(const EvalResult& ev, const std::vector<std::string>& class_names,
                const fs::path& dir, const std::string& stem) {
  write_text(dir / (stem + ".json"), ev.report.to_json());
  write_text(dir / (stem + ".txt"), ev.report.to_table());
  std::string csv = "class,auc\n";
  for (std::size_t c = 0; c < ev.class_auc.size(); ++c) {
    char line[128];
    const std::string name = c < class_names.size() ? class_names[c] : "C" + std::to_string(c);
    std::snprintf(line, sizeof(line), "%s,%.17g\n", name.c_str(), ev.class_auc[c]);
    csv += line;
  }
  write_text(dir / (stem + "_per_class_auc.csv"), csv);
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args, const std::string& data_out) {
  RunConfig rc = resolve_config(args);
  const std::string dir = data_out.empty() ? (rc.out_dir + "/dataset") : data_out;
  const auto records = synth_generate(rc.experiment.synth);  // raw corpus on disk
  save_dataset(records, rc.experiment.synth.class_names(), dir);
  std::cerr << "wrote " << records.size() << " records to " << dir << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  RunConfig rc = resolve_config(args);
  const std::uint64_t seed = rc.seeds.front();
  const fs::path dir = fs::path(rc.out_dir) / ("seed" + std::to_string(seed));
  write_snapshot(rc, dir);

  const auto corpus = load_corpus(rc);
  SplitSpec split = rc.experiment.split;
  split.seed = seed;
  const DatasetSplits splits = split_dataset(corpus, split);

  std::vector<SignalRecord> restoration_train = splits.train_labeled;
  restoration_train.insert(restoration_train.end(), splits.train_unlabeled.begin(),
                           splits.train_unlabeled.end());

  std::cerr << "pretraining restoration (" << rc.experiment.restoration_tier << ")\n";
  RestorationNet<float> restoration =
      build_restoration(rc.experiment.restoration_tier, RandomEngine::derive(seed, "restoration"));
  TrainConfig rcfg = rc.experiment.restoration_train;
  rcfg.seed = RandomEngine::derive(seed, "restoration-train");
  const auto rres =
      train_restoration(restoration, restoration_train, splits.val, rc.experiment.lead_index, rcfg);
  fs::create_directories(dir / "restoration");
  write_run_log(rres.log, dir / "restoration");
  save_restoration((dir / "restoration.ckpt").string(), restoration);

  std::cerr << "pretraining teacher (" << rc.experiment.teacher_tier << ")\n";
  const Index C = static_cast<Index>(splits.train_labeled.front().labels.size());
  ClassifierNet<float> teacher =
      build_classifier(rc.experiment.teacher_tier, C, RandomEngine::derive(seed, "teacher"));
  TrainConfig tcfg = rc.experiment.teacher_train;
  tcfg.seed = RandomEngine::derive(seed, "teacher-train");
  const auto tres = train_classifier_supervised(teacher, stack_classifier_data(splits.train_labeled),
                                                stack_classifier_data(splits.val), tcfg);
  fs::create_directories(dir / "teacher");
  write_run_log(tres.log, dir / "teacher");
  save_classifier((dir / "teacher.ckpt").string(), teacher);

  const EvalResult ev = evaluate_teacher(teacher, splits.test, rc.eval_threshold, rc.eval_beta);
  write_eval(ev, corpus_class_names(rc), dir, "teacher_report");
  std::cerr << "teacher macro F1 " << ev.report.macro_f1 * 100.0 << "\n";
  return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& restoration_path,
                 const std::string& teacher_path) {
  RunConfig rc = resolve_config(args);
  const std::uint64_t seed = rc.seeds.front();
  const fs::path dir = fs::path(rc.out_dir) / ("seed" + std::to_string(seed)) / "finetune";
  write_snapshot(rc, dir);
  if (!fs::exists(restoration_path))
    throw std::invalid_argument("missing checkpoint: " + restoration_path);
  if (!fs::exists(teacher_path)) throw std::invalid_argument("missing checkpoint: " + teacher_path);

  const auto corpus = load_corpus(rc);
  SplitSpec split = rc.experiment.split;
  split.seed = seed;
  const DatasetSplits splits = split_dataset(corpus, split);

  // restoration fine-tunes on all training signals, teacher on labels only
  RestorationNet<float> restoration = load_restoration(restoration_path);
  std::vector<SignalRecord> all_train = splits.train_labeled;
  all_train.insert(all_train.end(), splits.train_unlabeled.begin(), splits.train_unlabeled.end());
  TrainConfig rcfg = rc.experiment.restoration_train;
  rcfg.seed = RandomEngine::derive(seed, "restoration-finetune");
  const auto rres =
      train_restoration(restoration, all_train, splits.val, rc.experiment.lead_index, rcfg);
  save_restoration((dir / "restoration.ckpt").string(), restoration);

  ClassifierNet<float> teacher = load_classifier(teacher_path);
  TrainConfig tcfg = rc.experiment.teacher_train;
  tcfg.seed = RandomEngine::derive(seed, "teacher-finetune");
  const auto tres = train_classifier_supervised(teacher, stack_classifier_data(splits.train_labeled),
                                                stack_classifier_data(splits.val), tcfg);
  save_classifier((dir / "teacher.ckpt").string(), teacher);

  fs::create_directories(dir / "restoration");
  fs::create_directories(dir / "teacher");
  write_run_log(rres.log, dir / "restoration");
  write_run_log(tres.log, dir / "teacher");
  return 0;
}

int cmd_distill(const CommonArgs& args, const std::string& teacher_path,
                const std::string& restoration_path, const std::string& variant_name_arg) {
  RunConfig rc = resolve_config(args);
  const std::uint64_t seed = rc.seeds.front();
  const DistillVariant variant = variant_from_name(variant_name_arg);
  const fs::path dir = fs::path(rc.out_dir) / ("seed" + std::to_string(seed));
  write_snapshot(rc, dir);

  if (!fs::exists(teacher_path)) throw std::invalid_argument("missing checkpoint: " + teacher_path);
  if (!fs::exists(restoration_path))
    throw std::invalid_argument("missing checkpoint: " + restoration_path);

  const auto corpus = load_corpus(rc);
  SplitSpec split = rc.experiment.split;
  split.seed = seed;
  const DatasetSplits splits = split_dataset(corpus, split);

  ClassifierNet<float> teacher = load_classifier(teacher_path);
  RestorationNet<float> restoration = load_restoration(restoration_path);
  const Index C = teacher.n_classes();

  ClassifierNet<float> student =
      build_classifier(rc.experiment.student_tier, C, RandomEngine::derive(seed, "student"));
  Discriminator<float> disc(student.spec().feature_dim, C, rc.experiment.disc_hidden,
                            RandomEngine::derive(seed, "discriminator"));

  const DistillInputs inputs =
      prepare_distill_inputs(restoration, splits.train_labeled, splits.train_unlabeled, splits.val,
                             rc.experiment.lead_index);
  TrainConfig dcfg = rc.experiment.distill_train;
  dcfg.seed = RandomEngine::derive(seed, std::string("distill-") + variant_name(variant));

  std::cerr << "distilling (" << variant_name(variant) << ")\n";
  DistillResult res;
  if (variant == DistillVariant::Baseline) {
    ClassifierData train{inputs.labeled.restored, inputs.labeled.labels};
    const auto sup = train_classifier_supervised(student, train, inputs.val, dcfg);
    res.log = sup.log;
  } else {
    Discriminator<float>* disc_ptr = variant_uses_discriminator(variant) ? &disc : nullptr;
    res = distill(teacher, student, disc_ptr, inputs, rc.experiment.kd, variant, dcfg);
  }

  const std::string variant_stem = std::string("student_") + variant_name(variant);
  fs::create_directories(dir / variant_stem);
  write_run_log(res.log, dir / variant_stem);
  save_classifier((dir / (variant_stem + ".ckpt")).string(), student);
  if (variant_uses_discriminator(variant))
    save_discriminator((dir / (variant_stem + "_disc.ckpt")).string(), disc);

  StudentSystem system{&restoration, &student, rc.experiment.lead_index};
  const EvalResult ev = evaluate_student(system, splits.test, rc.eval_threshold, rc.eval_beta);
  write_eval(ev, corpus_class_names(rc), dir, variant_stem + "_report");
  std::cerr << variant_name(variant) << " macro F1 " << ev.report.macro_f1 * 100.0 << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             const std::string& restoration_path, const std::string& data_dir, bool oracle_stub) {
  RunConfig rc = resolve_config(args);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  write_snapshot(rc, dir);

  RunConfig data_rc = rc;
  if (!data_dir.empty()) data_rc.dataset_dir = data_dir;
  const auto corpus = load_corpus(data_rc);
  SplitSpec split = rc.experiment.split;
  split.seed = rc.seeds.front();
  const DatasetSplits splits = split_dataset(corpus, split);

  if (oracle_stub) {
    // plumbing self-check: scores := labels
    const Index N = static_cast<Index>(splits.test.size());
    const Index C = static_cast<Index>(splits.test.front().labels.size());
    Tensor<double> y({N, C});
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c)
        y.at(n, c) = splits.test[static_cast<std::size_t>(n)].labels[static_cast<std::size_t>(c)];
    EvalResult ev;
    ev.labels = y;
    ev.scores = y;
    ev.report = compute_metrics(y, y, rc.eval_threshold, rc.eval_beta);
    ev.class_auc = per_class_auc(y, y);
    write_eval(ev, corpus_class_names(data_rc), dir, "report");
    std::cout << ev.report.to_table();
    return 0;
  }

  if (!fs::exists(checkpoint)) throw std::invalid_argument("missing checkpoint: " + checkpoint);
  const CheckpointInfo info = peek_checkpoint(checkpoint);
  EvalResult ev;
  if (!restoration_path.empty()) {
    if (!fs::exists(restoration_path))
      throw std::invalid_argument("missing checkpoint: " + restoration_path);
    ClassifierNet<float> student = load_classifier(checkpoint);
    RestorationNet<float> restoration = load_restoration(restoration_path);
    StudentSystem system{&restoration, &student, rc.experiment.lead_index};
    ev = evaluate_student(system, splits.test, rc.eval_threshold, rc.eval_beta);
  } else {
    if (info.kind != "classifier")
      throw std::invalid_argument("'" + checkpoint + "' is not a classifier checkpoint");
    ClassifierNet<float> model = load_classifier(checkpoint);
    ev = evaluate_teacher(model, splits.test, rc.eval_threshold, rc.eval_beta);
  }
  write_eval(ev, corpus_class_names(data_rc), dir, "report");
  std::cout << ev.report.to_table();
  return 0;
}

int cmd_external_eval(const CommonArgs& args, const std::string& checkpoint,
                      const std::string& restoration_path, const std::string& train_data,
                      const std::string& external_data) {
  RunConfig rc = resolve_config(args);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  write_snapshot(rc, dir);

  const Dataset train_ds = load_dataset(train_data);
  const Dataset external_ds = load_dataset(external_data);

  // map classes by canonical abbreviation strings; evaluate the intersection
  std::vector<std::pair<Index, Index>> shared;  // (train idx, external idx)
  std::vector<std::string> shared_names;
  for (std::size_t i = 0; i < train_ds.class_names.size(); ++i) {
    const auto it = std::find(external_ds.class_names.begin(), external_ds.class_names.end(),
                              train_ds.class_names[i]);
    if (it == external_ds.class_names.end()) continue;
    shared.emplace_back(static_cast<Index>(i),
                        static_cast<Index>(it - external_ds.class_names.begin()));
    shared_names.push_back(train_ds.class_names[i]);
  }
  if (shared.empty()) throw std::invalid_argument("empty class intersection");
  for (const std::string& name : train_ds.class_names)
    if (std::find(shared_names.begin(), shared_names.end(), name) == shared_names.end())
      std::cerr << "excluded train class: " << name << "\n";
  for (const std::string& name : external_ds.class_names)
    if (std::find(shared_names.begin(), shared_names.end(), name) == shared_names.end())
      std::cerr << "excluded external class: " << name << "\n";

  if (!fs::exists(checkpoint)) throw std::invalid_argument("missing checkpoint: " + checkpoint);
  if (!fs::exists(restoration_path))
    throw std::invalid_argument("missing checkpoint: " + restoration_path);
  ClassifierNet<float> student = load_classifier(checkpoint);
  RestorationNet<float> restoration = load_restoration(restoration_path);

  const auto records = preprocess_corpus(external_ds.records);
  StudentSystem system{&restoration, &student, rc.experiment.lead_index};
  const EvalResult full = evaluate_student(system, records, rc.eval_threshold, rc.eval_beta);

  // restrict scores/labels to the shared classes
  const Index N = full.scores.dim(0);
  const Index S = static_cast<Index>(shared.size());
  Tensor<double> scores({N, S});
  Tensor<double> labels({N, S});
  for (Index n = 0; n < N; ++n)
    for (Index s = 0; s < S; ++s) {
      scores.at(n, s) = full.scores.at(n, shared[static_cast<std::size_t>(s)].first);
      labels.at(n, s) = full.labels.at(n, shared[static_cast<std::size_t>(s)].second);
    }
  EvalResult ev;
  ev.scores = scores;
  ev.labels = labels;
  ev.report = compute_metrics(scores, labels, rc.eval_threshold, rc.eval_beta);
  ev.class_auc = per_class_auc(scores, labels);
  write_eval(ev, shared_names, dir, "external_report");
  std::cout << ev.report.to_table();
  return 0;
}

int cmd_explain(const CommonArgs& args, const std::string& checkpoint,
                const std::string& restoration_path, const std::string& record_id,
                int target_class) {
  RunConfig rc = resolve_config(args);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);

  const auto corpus = load_corpus(rc);
  const SignalRecord* record = nullptr;
  for (const auto& r : corpus)
    if (record_id.empty() || r.id == record_id) {
      record = &r;
      break;
    }
  if (!record) throw std::invalid_argument("record '" + record_id + "' not found");

  if (!fs::exists(checkpoint)) throw std::invalid_argument("missing checkpoint: " + checkpoint);
  ClassifierNet<float> model = load_classifier(checkpoint);

  Tensor<float> input;
  std::vector<float> plotted_lead(static_cast<std::size_t>(record->length()));
  if (!restoration_path.empty()) {
    if (!fs::exists(restoration_path))
      throw std::invalid_argument("missing checkpoint: " + restoration_path);
    RestorationNet<float> restoration = load_restoration(restoration_path);
    const LeadView lead = mask_to_lead(*record, rc.experiment.lead_index);
    const Tensor<float> restored =
        restoration.forward(lead.signal.reshaped({1, 1, record->length()}));
    input = restored;
    for (Index t = 0; t < record->length(); ++t)
      plotted_lead[static_cast<std::size_t>(t)] = restored.at(0, 1, t);  // lead II view
  } else {
    input = record->signal.reshaped({1, kNumLeads, record->length()});
    for (Index t = 0; t < record->length(); ++t)
      plotted_lead[static_cast<std::size_t>(t)] = record->signal.at(1, t);
  }

  const SaliencyMap map = grad_cam(model, input, target_class);
  std::vector<float> heat(static_cast<std::size_t>(record->length()));
  for (Index t = 0; t < record->length(); ++t) heat[static_cast<std::size_t>(t)] = map.heatmap.at(0, t);

  const std::string stem =
      "saliency_" + record->id + "_class" + std::to_string(target_class);
  write_saliency_svg((dir / (stem + ".svg")).string(), plotted_lead, heat,
                     record->id + " / class " + std::to_string(target_class));
  std::string js = "{\"record\":\"" + record->id + "\",\"target_class\":" +
                   std::to_string(target_class) + ",\"heatmap\":[";
  for (Index t = 0; t < record->length(); ++t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), t ? ",%.6g" : "%.6g", heat[static_cast<std::size_t>(t)]);
    js += buf;
  }
  js += "]}\n";
  write_text(dir / (stem + ".json"), js);
  std::cerr << "wrote " << (dir / (stem + ".svg")).string() << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  RunConfig rc = resolve_config(args);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  write_snapshot(rc, dir);

  const Index C = rc.experiment.synth.n_classes > 0 ? rc.experiment.synth.n_classes : 6;
  std::string all = "[\n";
  std::vector<double> xs, ys;
  std::vector<std::string> labels;

  ClassifierNet<float> teacher = build_classifier("teacher", C, 1);
  EfficiencyReport tr = efficiency_report(teacher, rc.bench_batch, rc.bench_length, rc.bench_reps,
                                          "teacher");
  all += tr.to_json();
  std::cerr << "teacher: " << tr.latency.median_ms << " ms, "
            << tr.flops_per_forward / 1e9 << " GFLOPs\n";

  for (const std::string& tier : {"tiny", "small", "base"}) {
    RestorationNet<float> rest = build_restoration(tier, 1);
    ClassifierNet<float> stud = build_classifier(tier, C, 2);
    EfficiencyReport er = efficiency_report(rest, stud, rc.bench_batch, rc.bench_length,
                                            rc.bench_reps, "student_system_" + tier);
    all += ",\n" + er.to_json();
    xs.push_back(static_cast<double>(er.flops_per_forward) / 1e9);
    ys.push_back(er.latency.median_ms);
    labels.push_back(tier);
    std::cerr << "student system (" << tier << "): " << er.latency.median_ms << " ms\n";
  }
  all += "]\n";
  write_text(dir / "bench.json", all);
  write_scatter_svg((dir / "bench_scatter.svg").string(), xs, ys, labels, "GFLOPs per forward",
                    "median latency (ms)");
  return 0;
}

int run_ablate_seed(const RunConfig& rc, const std::vector<SignalRecord>& corpus,
                    std::uint64_t seed, const fs::path& seed_dir,
                    const std::vector<std::string>& class_names) {
  fs::create_directories(seed_dir);
  const std::vector<DistillVariant> ladder = {DistillVariant::Baseline, DistillVariant::VanillaKD,
                                              DistillVariant::RegionKD, DistillVariant::RegionKDMI,
                                              DistillVariant::Full};
  const SeedRunArtifacts art = run_experiment_seed(rc.experiment, corpus, seed, ladder);
  for (const auto& [name, ev] : art.eval_results)
    write_eval(ev, class_names, seed_dir, "report_" + name);
  write_eval(art.teacher_eval, class_names, seed_dir, "report_teacher");
  return 0;
}

int cmd_ablate(const CommonArgs& args, int jobs, std::int64_t only_seed) {
  RunConfig rc = resolve_config(args);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  write_snapshot(rc, dir);
  const auto corpus = load_corpus(rc);
  const auto class_names = corpus_class_names(rc);

  if (only_seed >= 0) {
    return run_ablate_seed(rc, corpus, static_cast<std::uint64_t>(only_seed),
                           dir / ("seed" + std::to_string(only_seed)), class_names);
  }

  if (jobs > 1) {
    // independent seed processes; each child re-reads the config
    std::vector<std::string> cmds;
    for (std::uint64_t seed : rc.seeds) {
      std::string cmd = std::string(program_path) + " ablate --config " + args.config_path +
                        " --out " + rc.out_dir + " --only-seed " + std::to_string(seed);
      if (!args.tier_student.empty()) cmd += " --tier-student " + args.tier_student;
      if (!args.tier_restoration.empty()) cmd += " --tier-restoration " + args.tier_restoration;
      cmds.push_back(cmd);
    }
    std::vector<std::thread> workers;
    std::vector<int> codes(cmds.size(), 0);
    std::size_t next = 0;
    std::mutex mu;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&]() {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cmds.size()) return;
            i = next++;
          }
          codes[i] = std::system(cmds[i].c_str());
        }
      });
    }
    for (auto& w : workers) w.join();
    for (int code : codes)
      if (code != 0) throw std::runtime_error("a seed process failed");
  } else {
    for (std::uint64_t seed : rc.seeds) {
      std::cerr << "=== seed " << seed << " ===\n";
      run_ablate_seed(rc, corpus, seed, dir / ("seed" + std::to_string(seed)), class_names);
    }
  }

  // aggregate: per-variant mean +- std across seeds from the per-seed files
  AblationResult agg;
  agg.seeds = rc.seeds;
  for (const char* name :
       {"baseline", "vanilla_kd", "liteheart_i", "liteheart_ii", "liteheart"}) {
    agg.variant_names.push_back(name);
    for (std::uint64_t seed : rc.seeds) {
      const fs::path report =
          dir / ("seed" + std::to_string(seed)) / (std::string("report_") + name + ".json");
      std::ifstream in(report);
      if (!in) throw std::runtime_error("missing per-seed report '" + report.string() + "'");
      const auto j = nlohmann::json::parse(in);
      MetricReport r;
      r.ranking_loss = j.at("ranking_loss");
      r.coverage = j.at("coverage");
      r.map = j.at("map");
      r.macro_auc = j.at("macro_auc");
      r.macro_f1 = j.at("macro_f1");
      r.macro_fbeta = j.at("macro_fbeta");
      agg.reports[name].push_back(r);
    }
  }
  write_text(dir / "ablation.csv", agg.to_csv());
  std::cout << agg.to_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  program_path = argv[0];
  CLI::App app{"semi-supervised 1-lead distillation toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, pretrain_args, finetune_args, distill_args, eval_args, ext_args,
      explain_args, bench_args, ablate_args;

  std::string synth_data_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus to disk");
  add_common(synth, synth_args);
  synth->add_option("--data-out", synth_data_out, "dataset directory (default <out>/dataset)");

  auto* pretrain = app.add_subcommand("pretrain", "train restoration + teacher");
  add_common(pretrain, pretrain_args);

  std::string ft_restoration, ft_teacher;
  auto* finetune = app.add_subcommand("finetune", "fine-tune restoration + teacher checkpoints");
  add_common(finetune, finetune_args);
  finetune->add_option("--restoration", ft_restoration, "restoration checkpoint")->required();
  finetune->add_option("--teacher", ft_teacher, "teacher checkpoint")->required();

  std::string d_teacher, d_restoration, d_variant = "liteheart";
  auto* distill_cmd = app.add_subcommand("distill", "distill a student from a frozen teacher");
  add_common(distill_cmd, distill_args);
  distill_cmd->add_option("--teacher", d_teacher, "teacher checkpoint")->required();
  distill_cmd->add_option("--restoration", d_restoration, "restoration checkpoint")->required();
  distill_cmd->add_option("--variant", d_variant,
                          "baseline|vanilla_kd|liteheart_i|liteheart_ii|liteheart");

  std::string e_checkpoint, e_restoration, e_data;
  bool e_oracle = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", e_checkpoint, "classifier checkpoint");
  eval_cmd->add_option("--restoration", e_restoration,
                       "restoration checkpoint (evaluates the 1-lead system)");
  eval_cmd->add_option("--data", e_data, "dataset directory override");
  eval_cmd->add_flag("--oracle-stub", e_oracle, "score with the labels themselves (self-check)");

  std::string x_checkpoint, x_restoration, x_train_data, x_external_data;
  auto* ext = app.add_subcommand("external-eval",
                                 "cross-device evaluation on the class intersection");
  add_common(ext, ext_args);
  ext->add_option("--checkpoint", x_checkpoint, "student checkpoint")->required();
  ext->add_option("--restoration", x_restoration, "restoration checkpoint")->required();
  ext->add_option("--train-data", x_train_data, "training dataset directory")->required();
  ext->add_option("--external-data", x_external_data, "external dataset directory")->required();

  std::string ex_checkpoint, ex_restoration, ex_record;
  int ex_class = 0;
  auto* explain = app.add_subcommand("explain", "grad-cam saliency for one record");
  add_common(explain, explain_args);
  explain->add_option("--checkpoint", ex_checkpoint, "classifier checkpoint")->required();
  explain->add_option("--restoration", ex_restoration, "restoration checkpoint (student view)");
  explain->add_option("--record", ex_record, "record id (default: first)");
  explain->add_option("--class", ex_class, "target class index")->required();

  auto* bench = app.add_subcommand("bench", "inference-efficiency bench across tiers");
  add_common(bench, bench_args);

  int ab_jobs = 1;
  std::int64_t ab_only_seed = -1;
  auto* ablate = app.add_subcommand("ablate", "run the ablation ladder over the seed set");
  add_common(ablate, ablate_args);
  ablate->add_option("--jobs", ab_jobs, "parallel seed processes");
  ablate->add_option("--only-seed", ab_only_seed, "internal: run a single seed")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args, synth_data_out);
    if (pretrain->parsed()) return cmd_pretrain(pretrain_args);
    if (finetune->parsed()) return cmd_finetune(finetune_args, ft_restoration, ft_teacher);
    if (distill_cmd->parsed()) return cmd_distill(distill_args, d_teacher, d_restoration, d_variant);
    if (eval_cmd->parsed())
      return cmd_eval(eval_args, e_checkpoint, e_restoration, e_data, e_oracle);
    if (ext->parsed())
      return cmd_external_eval(ext_args, x_checkpoint, x_restoration, x_train_data,
                               x_external_data);
    if (explain->parsed())
      return cmd_explain(explain_args, ex_checkpoint, ex_restoration, ex_record, ex_class);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (ablate->parsed()) return cmd_ablate(ablate_args, ab_jobs, ab_only_seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
