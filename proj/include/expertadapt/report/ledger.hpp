#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/report/aggregate.hpp"

namespace expertadapt::report {

namespace ledger_detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  return detail::strprintf("%016llx", static_cast<unsigned long long>(v));
}

}  // namespace ledger_detail

/// Stable short digest of a canonical string (used for config hashes and
/// run identifiers).
inline std::string digest(const std::string& canonical) {
  return ledger_detail::hex64(ledger_detail::fnv1a64(canonical));
}

/// Append-only store of run results, one JSON file per grid cell under
/// <root>/<experiment>/<run-id>.json. Writes are atomic (tmp + rename) so a
/// partially written cell never shadows a finished one, and re-running an
/// experiment resumes by skipping cells already present with a matching
/// configuration hash.
class ResultsLedger {
 public:
  explicit ResultsLedger(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  /// Identifier derived from the cell's identity fields only (never the
  /// metric values), so a rerun of the same cell maps to the same file.
  static std::string run_id(const RunResult& r) {
    std::string key = r.experiment + "|" + r.arm + "|" +
                      detail::strprintf("t%d|n%d|r%d|w%d|u%d|c", r.train_expert, r.count,
                                        r.replicate, r.sampling_way, r.new_expert);
    for (size_t i = 0; i < r.combo.size(); ++i)
      key += detail::strprintf(i ? ",%d" : "%d", r.combo[i]);
    key += "|" + r.config_hash;
    return digest(key);
  }

  std::filesystem::path cell_path(const RunResult& r) const {
    return root_ / r.experiment / (run_id(r) + ".json");
  }

  /// Result already recorded for this cell (same identity + config hash)?
  std::optional<RunResult> find(const RunResult& key) const {
    const auto path = cell_path(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    return j.get<RunResult>();
  }

  void append(const RunResult& r) {
    const auto path = cell_path(r);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
      std::ofstream out(tmp);
      if (!out) throw DataError("cannot write ledger cell: " + tmp.string());
      out << nlohmann::json(r).dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
  }

  /// All recorded results for one experiment, in filename order (stable
  /// across platforms and independent of write order).
  std::vector<RunResult> load(const std::string& experiment) const {
    std::vector<RunResult> out;
    const auto dir = root_ / experiment;
    if (!std::filesystem::exists(dir)) return out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      nlohmann::json j;
      try {
        in >> j;
        out.push_back(j.get<RunResult>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt ledger cell " + f.string() + ": " + e.what());
      }
    }
    return out;
  }

 private:
  std::filesystem::path root_;
};

}  // namespace expertadapt::report
