#include "liteheart/dataset_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace liteheart {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_u32le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_signal_file(const fs::path& path, const Tensor<float>& sig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_u32le(out, static_cast<std::uint32_t>(sig.dim(0)));
  write_u32le(out, static_cast<std::uint32_t>(sig.dim(1)));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(sig.data()),
            static_cast<std::streamsize>(sig.numel() * 4));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Tensor<float> read_signal_file(const fs::path& path, const std::string& record_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("record '" + record_id + "': missing signal file '" + path.string() + "'");
  std::uint32_t rows, cols;
  try {
    rows = read_u32le(in);
    cols = read_u32le(in);
  } catch (const std::exception&) {
    throw std::runtime_error("record '" + record_id + "': truncated signal header");
  }
  if (rows != static_cast<std::uint32_t>(kNumLeads) || cols == 0)
    throw std::runtime_error("record '" + record_id + "': bad signal shape " + std::to_string(rows) +
                             "x" + std::to_string(cols));
  Tensor<float> sig({static_cast<Index>(rows), static_cast<Index>(cols)});
  in.read(reinterpret_cast<char*>(sig.data()), static_cast<std::streamsize>(sig.numel() * 4));
  if (in.gcount() != static_cast<std::streamsize>(sig.numel() * 4))
    throw std::runtime_error("record '" + record_id + "': truncated signal payload");
  return sig;
}

}  // namespace

void save_dataset(const std::vector<SignalRecord>& records,
                  const std::vector<std::string>& class_names, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "signals");

  json meta;
  meta["format_version"] = 1;
  meta["classes"] = class_names;
  meta["fs"] = records.empty() ? 0.0 : records.front().fs;
  {
    std::ofstream out(root / "meta.json");
    if (!out) throw std::runtime_error("cannot write '" + (root / "meta.json").string() + "'");
    out << meta.dump(2) << "\n";
  }

  std::ofstream manifest(root / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write '" + (root / "manifest.jsonl").string() + "'");
  for (const SignalRecord& r : records) {
    const std::string rel = "signals/" + r.id + ".f32";
    write_signal_file(root / rel, r.signal);
    json line;
    line["id"] = r.id;
    line["fs"] = r.fs;
    if (r.is_labeled) {
      line["labels"] = r.labels;
    } else {
      line["labels"] = nullptr;
    }
    line["path"] = rel;
    manifest << line.dump() << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  Dataset out;

  {
    std::ifstream in(root / "meta.json");
    if (!in) throw std::runtime_error("missing '" + (root / "meta.json").string() + "'");
    json meta = json::parse(in, nullptr, /*allow_exceptions=*/true);
    if (meta.contains("classes")) out.class_names = meta["classes"].get<std::vector<std::string>>();
  }

  std::ifstream manifest(root / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("missing '" + (root / "manifest.jsonl").string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    SignalRecord r;
    try {
      r.id = entry.at("id").get<std::string>();
      r.fs = entry.at("fs").get<double>();
      if (entry.contains("labels") && !entry["labels"].is_null()) {
        r.labels = entry["labels"].get<std::vector<std::uint8_t>>();
        r.is_labeled = true;
      }
      r.signal = read_signal_file(root / entry.at("path").get<std::string>(), r.id);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + " (id '" + r.id +
                               "'): " + e.what());
    }
    validate_record(r);
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace liteheart
