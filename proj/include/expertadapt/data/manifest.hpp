#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/data/dataset.hpp"
#include "expertadapt/data/png_io.hpp"

namespace expertadapt::data {

namespace fs = std::filesystem;

/// On-disk layout:
///   <root>/manifest.json            case list, expert roster, pixel spacing
///   <root>/case_<k>/image.png       16-bit (or 8-bit) grayscale
///   <root>/case_<k>/expert_<r>.png  8-bit mask, samples 0/255
///
/// A missing manifest is tolerated: the tree is scanned for case_<k>
/// directories and the roster is inferred from the mask files present.

inline constexpr const char* kDatasetFormatTag = "expertadapt-dataset-v1";

namespace manifest_detail {

using ::expertadapt::detail::strprintf;

struct ManifestInfo {
  std::vector<int> case_indices;
  std::vector<int> experts;
  PixelSpacing spacing;
};

inline ManifestInfo read_manifest_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  ManifestInfo info;
  try {
    if (j.value("format", std::string(kDatasetFormatTag)) != kDatasetFormatTag)
      throw DataError(path.string() + ": unsupported dataset format " +
                      j["format"].get<std::string>());
    info.case_indices = j.at("cases").get<std::vector<int>>();
    info.experts = j.at("experts").get<std::vector<int>>();
    if (j.contains("spacing")) {
      info.spacing.row = j["spacing"].value("row", 1.0);
      info.spacing.col = j["spacing"].value("col", 1.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return info;
}

inline ManifestInfo scan_tree(const fs::path& root) {
  ManifestInfo info;
  if (fs::exists(root) && fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!entry.is_directory()) continue;
      std::string name = entry.path().filename().string();
      int k = 0, used = 0;
      if (std::sscanf(name.c_str(), "case_%d%n", &k, &used) == 1 &&
          used == static_cast<int>(name.size()) && k >= 1)
        info.case_indices.push_back(k);
    }
  }
  std::sort(info.case_indices.begin(), info.case_indices.end());
  if (info.case_indices.empty())
    throw DataError("no cases found in " + root.string());

  fs::path first = root / strprintf("case_%d", info.case_indices.front());
  for (const auto& entry : fs::directory_iterator(first)) {
    std::string name = entry.path().filename().string();
    int r = 0, used = 0;
    if (std::sscanf(name.c_str(), "expert_%d.png%n", &r, &used) == 1 &&
        used == static_cast<int>(name.size()) && r >= 1)
      info.experts.push_back(r);
  }
  std::sort(info.experts.begin(), info.experts.end());
  return info;
}

}  // namespace manifest_detail

/// Loads a dataset tree, preferring manifest.json when present.
inline MultiExpertDataset load_dataset(const std::string& root_str) {
  using manifest_detail::strprintf;
  fs::path root(root_str);
  manifest_detail::ManifestInfo info;
  if (fs::exists(root / "manifest.json"))
    info = manifest_detail::read_manifest_file(root / "manifest.json");
  else
    info = manifest_detail::scan_tree(root);
  if (info.case_indices.empty()) throw DataError("no cases found in " + root.string());

  MultiExpertDataset out;
  out.spacing = info.spacing;
  for (int r : info.experts) out.expert_roster.insert(ExpertId(r));
  out.cases.reserve(info.case_indices.size());
  for (int k : info.case_indices) {
    fs::path dir = root / strprintf("case_%d", k);
    fs::path image_path = dir / "image.png";
    if (!fs::exists(image_path))
      throw DataError(strprintf("case %d: missing %s", k, image_path.string().c_str()));
    AnnotatedCase c;
    c.case_index = k;
    c.image = load_image_png(image_path.string());
    for (int r : info.experts) {
      fs::path mask_path = dir / strprintf("expert_%d.png", r);
      if (!fs::exists(mask_path))
        throw DataError(strprintf("case %d: missing mask for expert %d (%s)", k, r,
                                  mask_path.string().c_str()));
      c.masks.emplace(ExpertId(r), load_mask_png(mask_path.string()));
    }
    out.cases.push_back(std::move(c));
  }
  out.validate();
  return out;
}

/// Saves a dataset tree with manifest. Images are written 16-bit; pixel
/// values already on the 16-bit grid round-trip exactly.
inline void save_dataset(const std::string& root_str, const MultiExpertDataset& dataset) {
  using manifest_detail::strprintf;
  dataset.validate();
  fs::path root(root_str);
  fs::create_directories(root);

  nlohmann::json j;
  j["format"] = kDatasetFormatTag;
  j["spacing"] = {{"row", dataset.spacing.row}, {"col", dataset.spacing.col}};
  std::vector<int> experts;
  for (ExpertId e : dataset.expert_roster) experts.push_back(e.value);
  j["experts"] = experts;
  std::vector<int> cases;
  for (const auto& c : dataset.cases) cases.push_back(c.case_index);
  j["cases"] = cases;
  {
    std::ofstream out(root / "manifest.json");
    if (!out) throw DataError("cannot write " + (root / "manifest.json").string());
    out << j.dump(2) << "\n";
  }

  for (const auto& c : dataset.cases) {
    fs::path dir = root / strprintf("case_%d", c.case_index);
    fs::create_directories(dir);
    save_image_png((dir / "image.png").string(), c.image);
    for (const auto& [expert, mask] : c.masks)
      save_mask_png((dir / strprintf("expert_%d.png", expert.value)).string(), mask);
  }
}

}  // namespace expertadapt::data
