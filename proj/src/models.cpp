#include "liteheart/models.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace liteheart {

using nlohmann::json;

// Widths are chosen so realized counts land within a few percent of the
// published tier sizes; `micro` is the fast desk-scale tier with no target.
ClassifierSpec ClassifierSpec::for_tier(const std::string& tier) {
  ClassifierSpec s;
  s.tier = tier;
  if (tier == "micro") {
    s.w1 = 16;
    s.w2 = 32;
    s.feature_dim = 64;
    s.heads = 4;
    s.mlp_ratio = 1;
    s.target_params = 0;
  } else if (tier == "tiny") {
    s.w1 = 29;
    s.w2 = 58;
    s.feature_dim = 116;
    s.heads = 4;
    s.target_params = 260'000;
  } else if (tier == "small") {
    s.w1 = 57;
    s.w2 = 114;
    s.feature_dim = 228;
    s.heads = 4;
    s.target_params = 1'010'000;
  } else if (tier == "base") {
    s.w1 = 72;
    s.w2 = 144;
    s.feature_dim = 288;
    s.heads = 8;
    s.target_params = 1'600'000;
  } else if (tier == "teacher") {
    s.w1 = 406;
    s.w2 = 812;
    s.feature_dim = 1624;
    s.heads = 8;
    s.target_params = 50'500'000;
  } else {
    throw std::invalid_argument("unknown classifier tier '" + tier + "'");
  }
  return s;
}

std::vector<std::string> ClassifierSpec::tier_names() {
  return {"micro", "tiny", "small", "base", "teacher"};
}

RestorationSpec RestorationSpec::for_tier(const std::string& tier) {
  RestorationSpec s;
  s.tier = tier;
  if (tier == "micro") {
    s.base_ch = 6;
    s.target_params = 0;
  } else if (tier == "tiny") {
    s.base_ch = 12;
    s.target_params = 360'000;
  } else if (tier == "small") {
    s.base_ch = 23;
    s.target_params = 1'430'000;
  } else if (tier == "base") {
    s.base_ch = 46;
    s.target_params = 5'710'000;
  } else {
    throw std::invalid_argument("unknown restoration tier '" + tier + "'");
  }
  return s;
}

std::vector<std::string> RestorationSpec::tier_names() {
  return {"micro", "tiny", "small", "base"};
}

ClassifierNet<float> build_classifier(const std::string& tier, Index n_classes,
                                      std::uint64_t init_seed) {
  return ClassifierNet<float>(ClassifierSpec::for_tier(tier), n_classes, init_seed);
}

RestorationNet<float> build_restoration(const std::string& tier, std::uint64_t init_seed) {
  return RestorationNet<float>(RestorationSpec::for_tier(tier), init_seed);
}

Discriminator<float> build_discriminator(Index feature_dim, Index n_classes,
                                         std::uint64_t init_seed, Index hidden) {
  return Discriminator<float>(feature_dim, n_classes, hidden, init_seed);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic "LHCK", u32 version, u64 header length, JSON
// header (kind/tier/hyper-parameters/param table/rng state), float32 blobs.

namespace {

constexpr char kMagic[4] = {'L', 'H', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_blob(std::ofstream& out, const Tensor<float>& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

json param_table(const nn::ParamRefs<float>& params) {
  json arr = json::array();
  for (const nn::Param<float>* p : params) {
    json e;
    e["name"] = p->name;
    e["shape"] = p->value.shape();
    arr.push_back(e);
  }
  return arr;
}

void save_with_header(const std::string& path, const json& header,
                      const nn::ParamRefs<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  out.write(kMagic, 4);
  const std::uint32_t ver = kVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  const std::string hs = header.dump();
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const nn::Param<float>* p : params) write_blob(out, p->value);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

json read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  if (ver != kVersion)
    throw std::runtime_error("'" + path + "': unsupported checkpoint version " +
                             std::to_string(ver));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("'" + path + "': truncated checkpoint header");
  return json::parse(hs);
}

void load_blobs(std::ifstream& in, const std::string& path, const json& header,
                const nn::ParamRefs<float>& params) {
  const json& table = header.at("params");
  if (table.size() != params.size())
    throw std::runtime_error("'" + path + "': parameter table size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = table[i].at("shape").get<std::vector<Index>>();
    if (shape != params[i]->value.shape())
      throw std::runtime_error("'" + path + "': shape mismatch for parameter '" +
                               params[i]->name + "'");
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(params[i]->value.numel() * sizeof(float)));
  }
  if (!in) throw std::runtime_error("'" + path + "': truncated parameter payload");
}

}  // namespace

void save_classifier(const std::string& path, ClassifierNet<float>& model,
                     const std::string& rng_state) {
  json h;
  h["kind"] = "classifier";
  h["tier"] = model.spec().tier;
  h["n_classes"] = model.n_classes();
  h["rng_state"] = rng_state;
  h["params"] = param_table(model.params());
  save_with_header(path, h, model.params());
}

ClassifierNet<float> load_classifier(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint '" + path + "'");
  const json h = read_header(in, path);
  if (h.at("kind") != "classifier")
    throw std::runtime_error("'" + path + "': expected a classifier checkpoint");
  ClassifierNet<float> model(ClassifierSpec::for_tier(h.at("tier").get<std::string>()),
                             h.at("n_classes").get<Index>(), /*init_seed=*/0);
  const nn::ParamRefs<float> prefs = model.params();
  load_blobs(in, path, h, prefs);
  return model;
}

void save_restoration(const std::string& path, RestorationNet<float>& model,
                      const std::string& rng_state) {
  json h;
  h["kind"] = "restoration";
  h["tier"] = model.spec().tier;
  h["rng_state"] = rng_state;
  h["params"] = param_table(model.params());
  save_with_header(path, h, model.params());
}

RestorationNet<float> load_restoration(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint '" + path + "'");
  const json h = read_header(in, path);
  if (h.at("kind") != "restoration")
    throw std::runtime_error("'" + path + "': expected a restoration checkpoint");
  RestorationNet<float> model(RestorationSpec::for_tier(h.at("tier").get<std::string>()),
                              /*init_seed=*/0);
  const nn::ParamRefs<float> prefs = model.params();
  load_blobs(in, path, h, prefs);
  return model;
}

void save_discriminator(const std::string& path, Discriminator<float>& model) {
  json h;
  h["kind"] = "discriminator";
  h["feature_dim"] = model.feature_dim();
  h["n_classes"] = model.n_classes();
  h["hidden"] = model.hidden();
  h["params"] = param_table(model.params());
  save_with_header(path, h, model.params());
}

Discriminator<float> load_discriminator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint '" + path + "'");
  const json h = read_header(in, path);
  if (h.at("kind") != "discriminator")
    throw std::runtime_error("'" + path + "': expected a discriminator checkpoint");
  Discriminator<float> model(h.at("feature_dim").get<Index>(), h.at("n_classes").get<Index>(),
                             h.at("hidden").get<Index>(), /*init_seed=*/0);
  const nn::ParamRefs<float> prefs = model.params();
  load_blobs(in, path, h, prefs);
  return model;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint '" + path + "'");
  const json h = read_header(in, path);
  CheckpointInfo info;
  info.kind = h.at("kind").get<std::string>();
  if (h.contains("tier")) info.tier = h.at("tier").get<std::string>();
  if (h.contains("n_classes")) info.n_classes = h.at("n_classes").get<Index>();
  return info;
}

}  // namespace liteheart
