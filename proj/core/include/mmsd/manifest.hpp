#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mmsd {

struct ManifestEntry {
  std::string video;
  std::string landmarks;
  std::string label;
  std::optional<std::string> gender;
  std::optional<std::string> skin_tone;
  std::string split;  // "train" or "test"
};

// Labeled dataset listing. The class table always puts "real" at index 0;
// generator classes follow in lexicographic order.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> labels;

  int label_index(const std::string& label) const;
  int num_classes() const { return static_cast<int>(labels.size()); }
  static constexpr int kRealIndex = 0;

  std::vector<const ManifestEntry*> split(const std::string& which) const;
};

// JSON array of {video, landmarks, label, gender?, skin_tone?, split}.
// Paths are resolved relative to the manifest's directory.
DatasetManifest load_manifest(const std::string& path);

void save_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace mmsd
