#include "liteheart/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace liteheart {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// TOML subset parser

namespace {

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (c == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

class ValueParser {
 public:
  explicit ValueParser(const std::string& text) : text_(text) {}

  json parse() {
    skip_ws();
    json v = parse_value();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("config: " + msg + " in '" + text_ + "'");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  json parse_value() {
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  json parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\' && pos_ < text_.size()) {
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail("unsupported escape");
        }
      }
      out.push_back(c);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return json(out);
  }

  json parse_array() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    for (;;) {
      skip_ws();
      arr.push_back(parse_value());
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']'");
    }
  }

  json parse_scalar() {
    std::size_t end = pos_;
    while (end < text_.size() && text_[end] != ',' && text_[end] != ']' &&
           !std::isspace(static_cast<unsigned char>(text_[end])))
      ++end;
    const std::string tok = text_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true") return json(true);
    if (tok == "false") return json(false);
    // integer?
    bool is_int = !tok.empty();
    for (std::size_t i = 0; i < tok.size(); ++i) {
      const char c = tok[i];
      if (i == 0 && (c == '+' || c == '-')) continue;
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        is_int = false;
        break;
      }
    }
    if (is_int) {
      try {
        return json(static_cast<std::int64_t>(std::stoll(tok)));
      } catch (...) {
        fail("bad integer");
      }
    }
    char* endp = nullptr;
    const double d = std::strtod(tok.c_str(), &endp);
    if (endp && *endp == '\0' && endp != tok.c_str()) return json(d);
    fail("unrecognized scalar '" + tok + "'");
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

json* descend(json& root, const std::string& dotted, bool last_is_array) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(trim(part));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    json& child = (*node)[parts[i]];
    if (last && last_is_array) {
      if (child.is_null()) child = json::array();
      if (!child.is_array())
        throw std::invalid_argument("config: '" + dotted + "' is not an array of tables");
      child.push_back(json::object());
      node = &child.back();
    } else {
      if (child.is_null()) child = json::object();
      if (child.is_array()) {
        if (child.empty()) throw std::invalid_argument("config: empty table array '" + parts[i] + "'");
        node = &child.back();
      } else {
        node = &child;
      }
    }
  }
  return node;
}

}  // namespace

json parse_toml(const std::string& text) {
  json root = json::object();
  json* current = &root;
  std::stringstream ss(text);
  std::string raw;
  int lineno = 0;
  std::string pending_key, pending_value;
  int bracket_depth = 0;

  while (std::getline(ss, raw)) {
    ++lineno;
    std::string line = trim(strip_comment(raw));

    if (bracket_depth > 0) {
      pending_value += " " + line;
      for (char c : line) {
        if (c == '[') ++bracket_depth;
        if (c == ']') --bracket_depth;
      }
      if (bracket_depth > 0) continue;
      (*current)[pending_key] = ValueParser(pending_value).parse();
      pending_key.clear();
      pending_value.clear();
      continue;
    }

    if (line.empty()) continue;

    if (line.size() >= 4 && line.substr(0, 2) == "[[" && line.substr(line.size() - 2) == "]]") {
      current = descend(root, line.substr(2, line.size() - 4), /*last_is_array=*/true);
      continue;
    }
    if (line.front() == '[' && line.back() == ']') {
      current = descend(root, line.substr(1, line.size() - 2), /*last_is_array=*/false);
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": empty key");

    int depth = 0;
    for (char c : value) {
      if (c == '[') ++depth;
      if (c == ']') --depth;
    }
    if (depth > 0) {
      pending_key = key;
      pending_value = value;
      bracket_depth = depth;
      continue;
    }
    (*current)[key] = ValueParser(value).parse();
  }
  if (bracket_depth > 0) throw std::invalid_argument("config: unterminated array");
  return root;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config file '" + path + "' not found");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return json::parse(text);
  return parse_toml(text);
}

// ---------------------------------------------------------------------------
// Known schema

namespace {

const std::vector<std::string>& known_paths() {
  static const std::vector<std::string> paths = {
      "run.name", "run.out_dir", "run.seeds", "run.dataset_dir",
      "synth.n_records", "synth.n_classes", "synth.length", "synth.fs", "synth.noise_std",
      "synth.heart_rate_lo", "synth.heart_rate_hi", "synth.seed", "synth.class_prevalence",
      "split.train_frac", "split.val_frac", "split.test_frac", "split.labeled_frac",
      "models.teacher_tier", "models.student_tier", "models.restoration_tier",
      "models.lead_index", "models.disc_hidden",
      "kd.tau", "kd.alpha_shape", "kd.loss_alpha", "kd.loss_beta",
      "train.restoration.lr", "train.restoration.batch_size", "train.restoration.patience",
      "train.restoration.max_epochs", "train.restoration.weight_decay",
      "train.restoration.clip_norm",
      "train.teacher.lr", "train.teacher.batch_size", "train.teacher.patience",
      "train.teacher.max_epochs", "train.teacher.weight_decay", "train.teacher.clip_norm",
      "train.distill.lr", "train.distill.batch_size", "train.distill.patience",
      "train.distill.max_epochs", "train.distill.weight_decay", "train.distill.clip_norm",
      "eval.threshold", "eval.beta",
      "bench.batch", "bench.length", "bench.reps",
  };
  return paths;
}

// synth.patterns is an array of tables with its own keys.
const std::set<std::string>& pattern_keys() {
  static const std::set<std::string> keys = {"name",      "kind",        "leads", "window",
                                             "amplitude", "timing_shift"};
  return keys;
}

void collect_leaf_paths(const json& node, const std::string& prefix,
                        std::vector<std::string>& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      if (v.is_object()) {
        collect_leaf_paths(v, path, out);
      } else {
        out.push_back(path);
      }
    }
  }
}

void reject_unknown_keys(const json& cfg) {
  std::vector<std::string> leaves;
  collect_leaf_paths(cfg, "", leaves);
  const auto& known = known_paths();
  for (const std::string& path : leaves) {
    if (path == "synth.patterns") continue;
    if (std::find(known.begin(), known.end(), path) == known.end())
      throw std::invalid_argument("config: unknown key '" + path + "'");
  }
  if (cfg.contains("synth") && cfg["synth"].contains("patterns")) {
    const json& patterns = cfg["synth"]["patterns"];
    if (!patterns.is_array()) throw std::invalid_argument("config: synth.patterns must be an array");
    for (const json& p : patterns) {
      for (const auto& [k, v] : p.items()) {
        (void)v;
        if (!pattern_keys().count(k))
          throw std::invalid_argument("config: unknown pattern key '" + k + "'");
      }
    }
  }
}

std::string normalize(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return c == '.' ? '_' : std::tolower(c); });
  return s;
}

json parse_env_value(const std::string& text) {
  try {
    return ValueParser(text).parse();
  } catch (const std::exception&) {
    return json(text);  // fall back to a plain string
  }
}

json& path_ref(json& root, const std::string& dotted) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &(*node)[part];
  return *node;
}

}  // namespace

void apply_env_overrides(json& cfg) {
  for (char** env = environ; *env; ++env) {
    const std::string entry(*env);
    const std::string prefix = "LITEHEART_";
    if (entry.rfind(prefix, 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string raw_key = entry.substr(prefix.size(), eq - prefix.size());
    const std::string value = entry.substr(eq + 1);
    const std::string want = normalize(raw_key);

    std::vector<std::string> matches;
    for (const std::string& path : known_paths())
      if (normalize(path) == want) matches.push_back(path);
    if (matches.empty())
      throw std::invalid_argument("environment override LITEHEART_" + raw_key +
                                  " does not match any config key");
    if (matches.size() > 1)
      throw std::invalid_argument("environment override LITEHEART_" + raw_key + " is ambiguous");
    path_ref(cfg, matches.front()) = parse_env_value(value);
  }
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

template <class T>
T get_or(const json& node, const std::string& key, T fallback) {
  if (!node.is_object() || !node.contains(key)) return fallback;
  return node.at(key).get<T>();
}

ClassPattern parse_pattern(const json& p, int index) {
  ClassPattern out;
  out.name = get_or<std::string>(p, "name", "C" + std::to_string(index));
  const std::string kind = get_or<std::string>(p, "kind", "bump");
  if (kind == "bump")
    out.kind = ClassPattern::Kind::Bump;
  else if (kind == "baseline")
    out.kind = ClassPattern::Kind::Baseline;
  else if (kind == "premature")
    out.kind = ClassPattern::Kind::Premature;
  else
    throw std::invalid_argument("config: unknown pattern kind '" + kind + "'");
  if (!p.contains("leads")) throw std::invalid_argument("config: pattern needs 'leads'");
  out.leads = p.at("leads").get<std::vector<int>>();
  if (p.contains("window")) {
    const auto w = p.at("window").get<std::vector<double>>();
    if (w.size() != 2) throw std::invalid_argument("config: pattern window must be [lo, hi]");
    out.window_lo = w[0];
    out.window_hi = w[1];
  }
  out.amplitude = get_or<double>(p, "amplitude", 0.5);
  out.timing_shift = get_or<double>(p, "timing_shift", 0.0);
  return out;
}

TrainConfig parse_train(const json& node, const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  cfg.lr = get_or<double>(node, "lr", cfg.lr);
  cfg.batch_size = get_or<Index>(node, "batch_size", cfg.batch_size);
  cfg.patience = get_or<int>(node, "patience", cfg.patience);
  cfg.max_epochs = get_or<int>(node, "max_epochs", cfg.max_epochs);
  cfg.weight_decay = get_or<double>(node, "weight_decay", cfg.weight_decay);
  cfg.clip_norm = get_or<double>(node, "clip_norm", cfg.clip_norm);
  cfg.validate();
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const json& cfg) {
  reject_unknown_keys(cfg);
  RunConfig rc;
  const json run = cfg.contains("run") ? cfg.at("run") : json::object();
  rc.name = get_or<std::string>(run, "name", rc.name);
  rc.out_dir = get_or<std::string>(run, "out_dir", rc.out_dir);
  rc.dataset_dir = get_or<std::string>(run, "dataset_dir", "");
  if (run.contains("seeds")) rc.seeds = run.at("seeds").get<std::vector<std::uint64_t>>();
  if (rc.seeds.empty()) throw std::invalid_argument("config: run.seeds must not be empty");

  ExperimentConfig& exp = rc.experiment;
  if (cfg.contains("synth")) {
    const json& sc = cfg.at("synth");
    exp.synth.n_records = get_or<int>(sc, "n_records", 0);
    exp.synth.n_classes = get_or<int>(sc, "n_classes", 0);
    exp.synth.length = get_or<Index>(sc, "length", 640);
    exp.synth.fs = get_or<double>(sc, "fs", 128.0);
    exp.synth.noise_std = get_or<double>(sc, "noise_std", 0.1);
    exp.synth.heart_rate_lo = get_or<double>(sc, "heart_rate_lo", 55.0);
    exp.synth.heart_rate_hi = get_or<double>(sc, "heart_rate_hi", 95.0);
    exp.synth.seed = get_or<std::uint64_t>(sc, "seed", 0);
    if (sc.contains("class_prevalence"))
      exp.synth.class_prevalence = sc.at("class_prevalence").get<std::vector<double>>();
    if (sc.contains("patterns")) {
      int idx = 0;
      for (const json& p : sc.at("patterns")) exp.synth.patterns.push_back(parse_pattern(p, idx++));
    }
    if (rc.dataset_dir.empty()) exp.synth.validate();
  } else if (rc.dataset_dir.empty()) {
    throw std::invalid_argument("config: needs either [synth] or run.dataset_dir");
  }

  const json split = cfg.contains("split") ? cfg.at("split") : json::object();
  exp.split.train_frac = get_or<double>(split, "train_frac", 0.8);
  exp.split.val_frac = get_or<double>(split, "val_frac", 0.1);
  exp.split.test_frac = get_or<double>(split, "test_frac", 0.1);
  exp.split.labeled_frac = get_or<double>(split, "labeled_frac", 0.1);
  exp.split.validate();

  const json models = cfg.contains("models") ? cfg.at("models") : json::object();
  exp.teacher_tier = get_or<std::string>(models, "teacher_tier", "micro");
  exp.student_tier = get_or<std::string>(models, "student_tier", "micro");
  exp.restoration_tier = get_or<std::string>(models, "restoration_tier", "tiny");
  exp.lead_index = get_or<int>(models, "lead_index", 0);
  exp.disc_hidden = get_or<Index>(models, "disc_hidden", 128);
  ClassifierSpec::for_tier(exp.teacher_tier);
  ClassifierSpec::for_tier(exp.student_tier);
  RestorationSpec::for_tier(exp.restoration_tier);
  if (exp.lead_index < 0 || exp.lead_index >= kNumLeads)
    throw std::invalid_argument("config: models.lead_index out of [0, 11]");

  const json kd = cfg.contains("kd") ? cfg.at("kd") : json::object();
  exp.kd.tau = get_or<double>(kd, "tau", 4.0);
  exp.kd.alpha_shape = get_or<double>(kd, "alpha_shape", 1.0);
  exp.kd.loss_alpha = get_or<double>(kd, "loss_alpha", 1.0);
  exp.kd.loss_beta = get_or<double>(kd, "loss_beta", 0.5);
  exp.kd.validate();

  const json train = cfg.contains("train") ? cfg.at("train") : json::object();
  TrainConfig pretrain_defaults;
  pretrain_defaults.lr = 1e-3;
  pretrain_defaults.batch_size = 64;
  pretrain_defaults.max_epochs = 200;
  TrainConfig downstream_defaults;
  downstream_defaults.lr = 2e-3;
  downstream_defaults.batch_size = 32;
  downstream_defaults.max_epochs = 200;
  exp.restoration_train = parse_train(
      train.contains("restoration") ? train.at("restoration") : json::object(), pretrain_defaults);
  exp.teacher_train = parse_train(train.contains("teacher") ? train.at("teacher") : json::object(),
                                  downstream_defaults);
  exp.distill_train = parse_train(train.contains("distill") ? train.at("distill") : json::object(),
                                  downstream_defaults);

  const json eval = cfg.contains("eval") ? cfg.at("eval") : json::object();
  rc.eval_threshold = get_or<double>(eval, "threshold", 0.5);
  rc.eval_beta = get_or<double>(eval, "beta", 2.0);

  const json bench = cfg.contains("bench") ? cfg.at("bench") : json::object();
  rc.bench_batch = get_or<Index>(bench, "batch", 4);
  rc.bench_length = get_or<Index>(bench, "length", 4096);
  rc.bench_reps = get_or<int>(bench, "reps", 20);

  rc.config_hash = std::to_string(fnv1a_hash(rc.to_toml()));
  return rc;
}

RunConfig load_run_config(const std::string& path, bool with_env) {
  json cfg = load_config_file(path);
  if (with_env) apply_env_overrides(cfg);
  return parse_run_config(cfg);
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_train(const char* section, const TrainConfig& t) {
  std::string out;
  out += std::string("[train.") + section + "]\n";
  out += "lr = " + fmt_double(t.lr) + "\n";
  out += "batch_size = " + std::to_string(t.batch_size) + "\n";
  out += "patience = " + std::to_string(t.patience) + "\n";
  out += "max_epochs = " + std::to_string(t.max_epochs) + "\n";
  out += "weight_decay = " + fmt_double(t.weight_decay) + "\n";
  out += "clip_norm = " + fmt_double(t.clip_norm) + "\n";
  return out;
}

}  // namespace

std::string RunConfig::to_toml() const {
  const ExperimentConfig& exp = experiment;
  std::string out;
  out += "[run]\n";
  out += "name = \"" + name + "\"\n";
  out += "out_dir = \"" + out_dir + "\"\n";
  out += "seeds = [";
  for (std::size_t i = 0; i < seeds.size(); ++i)
    out += (i ? ", " : "") + std::to_string(seeds[i]);
  out += "]\n";
  if (!dataset_dir.empty()) out += "dataset_dir = \"" + dataset_dir + "\"\n";

  if (exp.synth.n_records > 0) {
    out += "\n[synth]\n";
    out += "n_records = " + std::to_string(exp.synth.n_records) + "\n";
    out += "n_classes = " + std::to_string(exp.synth.n_classes) + "\n";
    out += "length = " + std::to_string(exp.synth.length) + "\n";
    out += "fs = " + fmt_double(exp.synth.fs) + "\n";
    out += "noise_std = " + fmt_double(exp.synth.noise_std) + "\n";
    out += "heart_rate_lo = " + fmt_double(exp.synth.heart_rate_lo) + "\n";
    out += "heart_rate_hi = " + fmt_double(exp.synth.heart_rate_hi) + "\n";
    out += "seed = " + std::to_string(exp.synth.seed) + "\n";
    out += "class_prevalence = [";
    for (std::size_t i = 0; i < exp.synth.class_prevalence.size(); ++i)
      out += (i ? ", " : "") + fmt_double(exp.synth.class_prevalence[i]);
    out += "]\n";
    for (const ClassPattern& p : exp.synth.patterns) {
      out += "\n[[synth.patterns]]\n";
      out += "name = \"" + p.name + "\"\n";
      const char* kind = p.kind == ClassPattern::Kind::Bump ? "bump"
                         : p.kind == ClassPattern::Kind::Baseline ? "baseline"
                                                                  : "premature";
      out += std::string("kind = \"") + kind + "\"\n";
      out += "leads = [";
      for (std::size_t i = 0; i < p.leads.size(); ++i)
        out += (i ? ", " : "") + std::to_string(p.leads[i]);
      out += "]\n";
      out += "window = [" + fmt_double(p.window_lo) + ", " + fmt_double(p.window_hi) + "]\n";
      out += "amplitude = " + fmt_double(p.amplitude) + "\n";
      if (p.timing_shift != 0.0) out += "timing_shift = " + fmt_double(p.timing_shift) + "\n";
    }
  }

  out += "\n[split]\n";
  out += "train_frac = " + fmt_double(exp.split.train_frac) + "\n";
  out += "val_frac = " + fmt_double(exp.split.val_frac) + "\n";
  out += "test_frac = " + fmt_double(exp.split.test_frac) + "\n";
  out += "labeled_frac = " + fmt_double(exp.split.labeled_frac) + "\n";

  out += "\n[models]\n";
  out += "teacher_tier = \"" + exp.teacher_tier + "\"\n";
  out += "student_tier = \"" + exp.student_tier + "\"\n";
  out += "restoration_tier = \"" + exp.restoration_tier + "\"\n";
  out += "lead_index = " + std::to_string(exp.lead_index) + "\n";
  out += "disc_hidden = " + std::to_string(exp.disc_hidden) + "\n";

  out += "\n[kd]\n";
  out += "tau = " + fmt_double(exp.kd.tau) + "\n";
  out += "alpha_shape = " + fmt_double(exp.kd.alpha_shape) + "\n";
  out += "loss_alpha = " + fmt_double(exp.kd.loss_alpha) + "\n";
  out += "loss_beta = " + fmt_double(exp.kd.loss_beta) + "\n";

  out += "\n" + fmt_train("restoration", exp.restoration_train);
  out += "\n" + fmt_train("teacher", exp.teacher_train);
  out += "\n" + fmt_train("distill", exp.distill_train);

  out += "\n[eval]\n";
  out += "threshold = " + fmt_double(eval_threshold) + "\n";
  out += "beta = " + fmt_double(eval_beta) + "\n";

  out += "\n[bench]\n";
  out += "batch = " + std::to_string(bench_batch) + "\n";
  out += "length = " + std::to_string(bench_length) + "\n";
  out += "reps = " + std::to_string(bench_reps) + "\n";
  return out;
}

}  // namespace liteheart
