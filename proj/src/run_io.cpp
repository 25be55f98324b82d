#include "run_io.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dac {

namespace {

std::string digest_hex(const unsigned char* data, std::size_t len) {
  unsigned char hash[EVP_MAX_MD_SIZE];
  unsigned int hash_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data, len) != 1 ||
      EVP_DigestFinal_ex(ctx, hash, &hash_len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < hash_len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0')
        << static_cast<int>(hash[i]);
  return out.str();
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  return digest_hex(reinterpret_cast<const unsigned char*>(bytes.data()),
                    bytes.size());
}

std::string sha256_hex_file(const std::string& path) {
  return sha256_hex(read_file(path));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const std::string& path, const std::string& content) {
  std::filesystem::path target(path);
  if (target.has_parent_path())
    std::filesystem::create_directories(target.parent_path());
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

MetricsWriter::MetricsWriter(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open metrics log: " + path);
}

void MetricsWriter::append(const IterationMetrics& m) {
  std::string line = iteration_metrics_json(m);
  line.push_back('\n');
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("metrics log write failed");
}

std::string iteration_metrics_json(const IterationMetrics& m) {
  nlohmann::json j;
  j["iteration"] = m.iteration;
  j["frames"] = m.frames;
  j["mean_return"] = m.mean_return;
  j["policy_loss"] = m.policy_loss;
  j["value_loss"] = m.value_loss;
  j["entropy"] = m.entropy;
  j["clip_fraction"] = m.clip_fraction;
  j["grad_norm"] = m.grad_norm;
  j["flops_inference"] = m.flops_inference;
  j["flops_update"] = m.flops_update;
  return j.dump();
}

void write_manifest(const std::string& run_dir,
                    const std::vector<std::string>& files,
                    const std::string& run_info_json) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["hash_algorithm"] = "sha256";
  j["run"] = nlohmann::json::parse(run_info_json.empty() ? "{}"
                                                         : run_info_json);
  nlohmann::json list = nlohmann::json::array();
  for (const std::string& f : files) {
    std::filesystem::path p = std::filesystem::path(run_dir) / f;
    nlohmann::json entry;
    entry["path"] = f;
    entry["bytes"] = std::filesystem::file_size(p);
    entry["sha256"] = sha256_hex_file(p.string());
    list.push_back(entry);
  }
  j["files"] = list;
  atomic_write((std::filesystem::path(run_dir) / "manifest.json").string(),
               j.dump(2) + "\n");
}

namespace {
nlohmann::json load_manifest(const std::string& run_dir) {
  std::string path =
      (std::filesystem::path(run_dir) / "manifest.json").string();
  return nlohmann::json::parse(read_file(path));
}
}  // namespace

void verify_manifest(const std::string& run_dir) {
  nlohmann::json j = load_manifest(run_dir);
  if (j.at("hash_algorithm") != "sha256")
    throw std::runtime_error("manifest: unsupported hash algorithm");
  for (const auto& entry : j.at("files")) {
    std::filesystem::path p =
        std::filesystem::path(run_dir) / entry.at("path").get<std::string>();
    if (!std::filesystem::exists(p))
      throw std::runtime_error("manifest: missing file " + p.string());
    std::string actual = sha256_hex_file(p.string());
    if (actual != entry.at("sha256").get<std::string>())
      throw std::runtime_error("manifest: hash mismatch for " + p.string());
  }
}

std::vector<std::string> manifest_files(const std::string& run_dir) {
  nlohmann::json j = load_manifest(run_dir);
  std::vector<std::string> out;
  for (const auto& entry : j.at("files"))
    out.push_back(entry.at("path").get<std::string>());
  return out;
}

std::string manifest_run_info(const std::string& run_dir) {
  return load_manifest(run_dir).at("run").dump();
}

void export_metrics_csv(const std::string& jsonl_path,
                        const std::string& csv_path) {
  static const char* kColumns[] = {
      "iteration",     "frames",       "mean_return",
      "policy_loss",   "value_loss",   "entropy",
      "clip_fraction", "grad_norm",    "flops_inference",
      "flops_update"};
  std::ifstream in(jsonl_path);
  if (!in) throw std::runtime_error("cannot open metrics log: " + jsonl_path);
  std::ostringstream out;
  bool first = true;
  for (const char* c : kColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << "\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    first = true;
    for (const char* c : kColumns) {
      out << (first ? "" : ",") << j.at(c).dump();
      first = false;
    }
    out << "\n";
  }
  atomic_write(csv_path, out.str());
}

void write_csv(const std::string& path,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out << std::setprecision(12);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw std::invalid_argument("write_csv: row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << row[i];
    out << "\n";
  }
  atomic_write(path, out.str());
}

}  // namespace dac
