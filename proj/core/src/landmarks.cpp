#include "mmsd/landmarks.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mmsd/errors.hpp"

using nlohmann::json;

namespace mmsd {

LandmarkTrack load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark sidecar " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("landmarks " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("landmark sidecar must be a JSON array");

  LandmarkTrack track;
  track.frames.reserve(doc.size());
  for (size_t i = 0; i < doc.size(); ++i) {
    FrameLandmarks f;
    const auto& item = doc[i];
    if (!item.is_null()) {
      try {
        const auto& pts = item.at("points");
        if (pts.size() != 5)
          throw DataError("landmarks " + path + " frame " + std::to_string(i) +
                          ": expected 5 points");
        for (size_t p = 0; p < 5; ++p) {
          f.points[p][0] = pts[p].at(0).get<double>();
          f.points[p][1] = pts[p].at(1).get<double>();
          if (!std::isfinite(f.points[p][0]) || !std::isfinite(f.points[p][1]))
            throw DataError("landmarks " + path + " frame " +
                            std::to_string(i) + ": non-finite coordinate");
        }
        f.confidence = item.at("confidence").get<double>();
        f.present = true;
      } catch (const json::exception& e) {
        throw DataError("landmarks " + path + " frame " + std::to_string(i) +
                        ": " + e.what());
      }
    }
    track.frames.push_back(f);
  }
  return track;
}

void save_landmarks(const LandmarkTrack& track, const std::string& path) {
  json doc = json::array();
  for (const auto& f : track.frames) {
    if (!f.present) {
      doc.push_back(nullptr);
      continue;
    }
    json pts = json::array();
    for (const auto& p : f.points) pts.push_back({p[0], p[1]});
    doc.push_back({{"points", pts}, {"confidence", f.confidence}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark sidecar " + path);
  out << doc.dump() << "\n";
}

}  // namespace mmsd
