#include "mmsd/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmsd/errors.hpp"

namespace mmsd {

using json = nlohmann::ordered_json;

VideoVerdict aggregate(const std::string& video_id,
                       const std::vector<SamplePrediction>& predictions,
                       int num_classes) {
  if (predictions.empty()) throw DataError("no sample predictions to aggregate");
  if (num_classes < 1) throw UsageError("num_classes must be >= 1");
  VideoVerdict v;
  v.video = video_id;
  v.samples = predictions;
  v.tally.assign(num_classes, 0);
  std::vector<double> conf_sum(num_classes, 0.0);
  for (const auto& p : predictions) {
    if (p.predicted_class < 0 || p.predicted_class >= num_classes) {
      throw DataError("prediction class out of range in video " + video_id);
    }
    v.tally[p.predicted_class] += 1;
    conf_sum[p.predicted_class] += p.confidence;
  }
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (v.tally[c] > v.tally[best] ||
        (v.tally[c] == v.tally[best] && conf_sum[c] > conf_sum[best])) {
      best = c;
    }
  }
  v.predicted = best;
  v.aggregate_confidence = conf_sum[best];
  return v;
}

EvalReport build_report(const std::vector<VideoVerdict>& verdicts,
                        const std::vector<int>& true_labels,
                        const std::vector<std::string>& labels,
                        int real_index) {
  if (verdicts.size() != true_labels.size()) {
    throw UsageError("verdict/label count mismatch");
  }
  if (verdicts.empty()) throw DataError("nothing to evaluate");
  int k = static_cast<int>(labels.size());
  EvalReport r;
  r.labels = labels;
  r.confusion.assign(k, std::vector<int>(k, 0));
  int video_ok = 0, sample_ok = 0, binary_ok = 0, samples = 0;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    int truth = true_labels[i];
    if (truth < 0 || truth >= k) throw DataError("true label out of range");
    int pred = verdicts[i].predicted;
    if (pred < 0 || pred >= k) throw DataError("prediction out of range");
    r.confusion[truth][pred] += 1;
    if (pred == truth) ++video_ok;
    if ((pred == real_index) == (truth == real_index)) ++binary_ok;
    for (const auto& s : verdicts[i].samples) {
      ++samples;
      if (s.predicted_class == truth) ++sample_ok;
    }
  }
  r.videos = static_cast<int>(verdicts.size());
  r.samples = samples;
  r.video_accuracy = static_cast<double>(video_ok) / r.videos;
  r.binary_accuracy = static_cast<double>(binary_ok) / r.videos;
  r.sample_accuracy =
      samples > 0 ? static_cast<double>(sample_ok) / samples : 0.0;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["labels"] = r.labels;
  j["videos"] = r.videos;
  j["samples"] = r.samples;
  j["video_accuracy"] = r.video_accuracy;
  j["sample_accuracy"] = r.sample_accuracy;
  j["binary_accuracy"] = r.binary_accuracy;
  j["confusion"] = r.confusion;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "videos," << r.videos << "\n";
  os << "samples," << r.samples << "\n";
  char buf[64];
  auto put = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << name << "," << buf << "\n";
  };
  put("video_accuracy", r.video_accuracy);
  put("sample_accuracy", r.sample_accuracy);
  put("binary_accuracy", r.binary_accuracy);
  os << "\ntrue\\predicted";
  for (const auto& l : r.labels) os << "," << l;
  os << "\n";
  for (size_t i = 0; i < r.confusion.size(); ++i) {
    os << r.labels[i];
    for (int v : r.confusion[i]) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::vector<GroupRow> bias_report(const std::vector<VideoVerdict>& verdicts,
                                  const std::vector<int>& true_labels,
                                  const std::vector<VideoGroup>& groups,
                                  int min_count) {
  if (verdicts.size() != true_labels.size() ||
      verdicts.size() != groups.size()) {
    throw UsageError("verdict/label/group count mismatch");
  }
  struct Acc {
    int videos = 0, video_ok = 0, samples = 0, sample_ok = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    std::string tone =
        groups[i].skin_tone.empty() ? "unlabeled" : groups[i].skin_tone;
    std::string gender =
        groups[i].gender.empty() ? "unlabeled" : groups[i].gender;
    Acc& a = acc[{tone, gender}];
    a.videos += 1;
    if (verdicts[i].predicted == true_labels[i]) a.video_ok += 1;
    for (const auto& s : verdicts[i].samples) {
      a.samples += 1;
      if (s.predicted_class == true_labels[i]) a.sample_ok += 1;
    }
  }
  std::vector<GroupRow> rows;
  for (const auto& [key, a] : acc) {
    GroupRow row;
    row.skin_tone = key.first;
    row.gender = key.second;
    row.videos = a.videos;
    row.samples = a.samples;
    row.video_accuracy = static_cast<double>(a.video_ok) / a.videos;
    row.sample_accuracy =
        a.samples > 0 ? static_cast<double>(a.sample_ok) / a.samples : 0.0;
    row.low_count = a.videos < min_count;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string bias_to_csv(const std::vector<GroupRow>& rows) {
  std::ostringstream os;
  os << "skin_tone,gender,videos,samples,video_accuracy,sample_accuracy,low_count\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.video_accuracy,
                  r.sample_accuracy);
    os << r.skin_tone << "," << r.gender << "," << r.videos << ","
       << r.samples << "," << buf << "," << (r.low_count ? 1 : 0) << "\n";
  }
  return os.str();
}

std::string bias_to_json(const std::vector<GroupRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"skin_tone", r.skin_tone},
                   {"gender", r.gender},
                   {"videos", r.videos},
                   {"samples", r.samples},
                   {"video_accuracy", r.video_accuracy},
                   {"sample_accuracy", r.sample_accuracy},
                   {"low_count", r.low_count}});
  }
  return arr.dump(2) + "\n";
}

double psnr_luma(const RealGrid& a, const RealGrid& b) {
  if (a.w != b.w || a.h != b.h) throw UsageError("psnr dimension mismatch");
  if (a.v.empty()) throw UsageError("psnr on empty frame");
  double mse = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = (a.v[i] - b.v[i]) * 255.0;
    mse += d * d;
  }
  mse /= a.v.size();
  if (mse <= 0.0) return 99.0;
  double p = 10.0 * std::log10(255.0 * 255.0 / mse);
  return std::min(p, 99.0);
}

std::vector<double> psnr_series(const std::vector<RealGrid>& originals,
                                const std::vector<RealGrid>& magnified) {
  if (originals.size() != magnified.size()) {
    throw UsageError("psnr series length mismatch");
  }
  std::vector<double> out;
  out.reserve(originals.size());
  for (size_t i = 0; i < originals.size(); ++i) {
    out.push_back(psnr_luma(originals[i], magnified[i]));
  }
  return out;
}

PsnrSummary summarize_psnr(const std::string& label,
                           const std::vector<double>& values) {
  PsnrSummary s;
  s.label = label;
  s.frames = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / values.size();
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / values.size());
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  s.median = (n % 2 == 1) ? sorted[n / 2]
                          : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

std::string psnr_to_csv(const std::vector<PsnrSummary>& rows) {
  std::ostringstream os;
  os << "label,frames,mean_db,median_db,stddev_db\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f", r.mean, r.median,
                  r.stddev);
    os << r.label << "," << r.frames << "," << buf << "\n";
  }
  return os.str();
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "m,t,alpha_p,k,status,video_accuracy,sample_accuracy,binary_accuracy,note\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%g,%d,%g,%d", p.m, p.t, p.alpha_p, p.k);
    os << buf;
    if (p.skipped) {
      os << ",skipped,,,," << p.note << "\n";
    } else {
      std::snprintf(buf, sizeof(buf), ",ok,%.6f,%.6f,%.6f,", p.video_accuracy,
                    p.sample_accuracy, p.binary_accuracy);
      os << buf << p.note << "\n";
    }
  }
  return os.str();
}

}  // namespace mmsd
