#pragma once

#include <string>
#include <vector>

#include "liteheart/signal.hpp"

namespace liteheart {

/// On-disk dataset layout:
///   <dir>/meta.json       {"format_version", "classes", "fs"}
///   <dir>/manifest.jsonl  one record per line: {"id", "fs", "labels", "path"}
///   <dir>/signals/*.f32   8-byte header (uint32 rows, uint32 cols, LE) +
///                         row-major float32 LE payload
struct Dataset {
  std::vector<SignalRecord> records;
  std::vector<std::string> class_names;
};

void save_dataset(const std::vector<SignalRecord>& records,
                  const std::vector<std::string>& class_names, const std::string& dir);

Dataset load_dataset(const std::string& dir);

}  // namespace liteheart
