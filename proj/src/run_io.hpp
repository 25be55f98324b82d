#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "agent.hpp"

namespace dac {

std::string sha256_hex(const std::string& bytes);
std::string sha256_hex_file(const std::string& path);

// write-to-temp + rename so readers never observe a partial file
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Append-only metrics log: one JSON object per line, each line written and
// flushed as a unit so a crash cannot commit a partial final line.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const IterationMetrics& m);

 private:
  std::ofstream out_;
};

std::string iteration_metrics_json(const IterationMetrics& m);

// manifest.json: format version, run info, and (path, bytes, sha256) for
// every emitted file
void write_manifest(const std::string& run_dir,
                    const std::vector<std::string>& files,
                    const std::string& run_info_json);
// verifies every listed hash; throws on mismatch or missing file
void verify_manifest(const std::string& run_dir);
std::vector<std::string> manifest_files(const std::string& run_dir);
std::string manifest_run_info(const std::string& run_dir);

// metrics.jsonl -> CSV with the fixed column schema
void export_metrics_csv(const std::string& jsonl_path,
                        const std::string& csv_path);

void write_csv(const std::string& path,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

}  // namespace dac
