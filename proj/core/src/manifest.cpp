#include "mmsd/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mmsd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmsd {

int DatasetManifest::label_index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw DataError("unknown class label '" + label + "'");
  return static_cast<int>(it - labels.begin());
}

std::vector<const ManifestEntry*> DatasetManifest::split(
    const std::string& which) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == which) out.push_back(&e);
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("manifest " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("manifest must be a JSON array");

  fs::path base = fs::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q.string() : (base / q).string();
  };

  DatasetManifest m;
  std::set<std::string> seen_videos;
  std::set<std::string> label_set;
  for (const auto& item : doc) {
    ManifestEntry e;
    try {
      e.video = resolve(item.at("video").get<std::string>());
      e.landmarks = resolve(item.at("landmarks").get<std::string>());
      e.label = item.at("label").get<std::string>();
      e.split = item.at("split").get<std::string>();
      if (item.contains("gender")) e.gender = item["gender"].get<std::string>();
      if (item.contains("skin_tone"))
        e.skin_tone = item["skin_tone"].get<std::string>();
    } catch (const json::exception& ex) {
      throw DataError("manifest entry " + std::to_string(m.entries.size()) +
                      ": " + ex.what());
    }
    if (e.split != "train" && e.split != "test")
      throw DataError("manifest entry for " + e.video + ": unknown split '" +
                      e.split + "'");
    if (!seen_videos.insert(e.video).second)
      throw DataError("duplicate video path in manifest: " + e.video);
    label_set.insert(e.label);
    m.entries.push_back(std::move(e));
  }

  if (!label_set.count("real"))
    throw DataError("manifest has no 'real' class");
  m.labels.push_back("real");
  for (const auto& l : label_set)
    if (l != "real") m.labels.push_back(l);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json doc = json::array();
  for (const auto& e : manifest.entries) {
    json item = {{"video", e.video},
                 {"landmarks", e.landmarks},
                 {"label", e.label},
                 {"split", e.split}};
    if (e.gender) item["gender"] = *e.gender;
    if (e.skin_tone) item["skin_tone"] = *e.skin_tone;
    doc.push_back(item);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace mmsd
