#pragma once

#include <string>
#include <vector>

#include "mmsd/classifier.hpp"
#include "mmsd/grid.hpp"

namespace mmsd {

struct VideoVerdict {
  std::string video;
  int predicted = 0;
  std::vector<SamplePrediction> samples;
  std::vector<int> tally;  // votes per class, sums to sample count
  // Summed confidence of the samples that voted for the winning class.
  double aggregate_confidence = 0.0;
};

// Majority vote. Ties go to the larger summed confidence over the tied
// classes, then to the lowest class index.
VideoVerdict aggregate(const std::string& video_id,
                       const std::vector<SamplePrediction>& predictions,
                       int num_classes);

struct EvalReport {
  std::vector<std::string> labels;
  std::vector<std::vector<int>> confusion;  // [true][predicted], video level
  double video_accuracy = 0.0;
  double sample_accuracy = 0.0;
  // Real-vs-any-fake agreement at video level.
  double binary_accuracy = 0.0;
  int videos = 0;
  int samples = 0;
};

// true_labels aligns with verdicts; real_index marks the non-fake class
// for the binary collapse.
EvalReport build_report(const std::vector<VideoVerdict>& verdicts,
                        const std::vector<int>& true_labels,
                        const std::vector<std::string>& labels,
                        int real_index = 0);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

struct GroupRow {
  std::string skin_tone;  // "unlabeled" when absent
  std::string gender;
  int videos = 0;
  int samples = 0;
  double video_accuracy = 0.0;
  double sample_accuracy = 0.0;
  bool low_count = false;
};

struct VideoGroup {
  std::string skin_tone;
  std::string gender;
};

// One row per (skin_tone, gender) present, sorted; groups smaller than
// min_count videos are flagged rather than dropped.
std::vector<GroupRow> bias_report(const std::vector<VideoVerdict>& verdicts,
                                  const std::vector<int>& true_labels,
                                  const std::vector<VideoGroup>& groups,
                                  int min_count = 5);

std::string bias_to_csv(const std::vector<GroupRow>& rows);
std::string bias_to_json(const std::vector<GroupRow>& rows);

// Luminance PSNR on the 8-bit scale; identical inputs report the 99 dB cap.
double psnr_luma(const RealGrid& a, const RealGrid& b);

std::vector<double> psnr_series(const std::vector<RealGrid>& originals,
                                const std::vector<RealGrid>& magnified);

struct PsnrSummary {
  std::string label;
  int frames = 0;
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
};

PsnrSummary summarize_psnr(const std::string& label,
                           const std::vector<double>& values);
std::string psnr_to_csv(const std::vector<PsnrSummary>& rows);

struct SweepPoint {
  double m = 2.0;
  int t = 5;
  double alpha_p = 10.0;
  int k = 4;
  bool skipped = false;
  std::string note;
  double video_accuracy = 0.0;
  double sample_accuracy = 0.0;
  double binary_accuracy = 0.0;
};

std::string sweep_to_csv(const std::vector<SweepPoint>& points);

}  // namespace mmsd
