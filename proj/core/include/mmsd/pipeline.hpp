#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mmsd/classifier.hpp"
#include "mmsd/clip_io.hpp"
#include "mmsd/deep_magnifier.hpp"
#include "mmsd/evaluator.hpp"
#include "mmsd/fusion.hpp"
#include "mmsd/manifest.hpp"
#include "mmsd/phase_magnifier.hpp"
#include "mmsd/sampler.hpp"
#include "mmsd/steerable_pyramid.hpp"

namespace mmsd {

struct PipelineConfig {
  SamplerConfig sampler;
  PyramidConfig pyramid;
  PhaseConfig phase;
  DeepMagConfig deep;
  double width_multiplier = 1.0;
  double dropout = 0.5;
  TrainConfig train;
  double val_fraction = 0.15;
  MagnifierTrainConfig mag_train;
  int mag_pairs = 300;
  uint64_t seed = 42;
  int workers = 1;
  std::string cache_dir;  // empty: $MMSD_CACHE_DIR, else .mmsd-cache
  DecodeConfig decode;
};

// Cross-field checks: t <= omega, bandpass edges within fps/2, and the
// per-module ranges. Throws UsageError.
void validate_pipeline_config(const PipelineConfig& cfg);

// Flat key-value view shared by config files, CLI overrides and
// --dump-config. apply throws UsageError on unknown keys or bad values.
void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                     const std::string& value);
std::map<std::string, std::string> config_kv(const PipelineConfig& cfg);

// cfg.cache_dir if set, else $MMSD_CACHE_DIR, else ".mmsd-cache".
std::string resolve_cache_dir(const PipelineConfig& cfg);

struct WindowRef {
  std::string id;  // <video>#<start>
  std::string video;
  int start = 0;
  int label = -1;
  std::string tensor_path;  // cached fused tensor
};

struct PrepareResult {
  std::vector<WindowRef> windows;
  std::vector<std::string> warnings;
};

struct TrainSummary {
  std::string model_path;
  std::vector<EpochStats> log;
  int train_windows = 0;
  int val_windows = 0;
  std::vector<std::string> warnings;
};

struct EvalOutput {
  EvalReport report;
  std::vector<VideoVerdict> verdicts;
  std::vector<int> truths;
  std::vector<VideoGroup> groups;
  std::vector<std::string> warnings;
};

struct SweepGrid {
  std::vector<double> m_values;
  std::vector<int> t_values;
  std::vector<double> alpha_values;
  std::vector<int> k_values;
};

struct PsnrOutput {
  std::vector<PsnrSummary> rows;
  std::vector<std::string> warnings;
};

// Orchestrates sampling, both magnification streams, fusion, the disk
// cache, training and evaluation. Every stage is cached under content-hash
// keys (video bytes, landmark bytes, magnifier weights, the config fields
// that stage depends on): aligned windows and both magnified streams as
// lossless float tensors, fused tensors in the quantized tensor format.
// Sweep points that share a stage's inputs reuse its cache entries, and a
// cache hit reproduces the fresh computation bit for bit.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  const PipelineConfig& config() const { return cfg_; }
  const std::string& cache_dir() const { return cache_dir_; }

  FrameClip load_video(const std::string& path) const;
  SampleResult sample(const std::string& video_path,
                      const std::string& landmarks_path,
                      const std::string& video_id) const;

  std::vector<RealGrid> phase_stream(const SampleWindow& window) const;
  FrameClip deep_stream(const SampleWindow& window);
  FusedTensor fuse_window(const SampleWindow& window);

  // Ensures every usable window of every entry has a cached fused tensor.
  // Entry paths are already resolved by load_manifest. Videos that reject
  // (no usable windows, too short) become warnings.
  PrepareResult prepare(const std::vector<const ManifestEntry*>& entries,
                        const DatasetManifest& manifest);

  std::vector<EpochLoss> run_train_magnifier(const std::string& weights_out);

  TrainSummary run_train(const std::string& manifest_path,
                         const std::string& model_out);

  VideoVerdict run_predict(const std::string& model_path,
                           const std::string& video_path,
                           const std::string& landmarks_path);

  EvalOutput run_evaluate(const std::string& model_path,
                          const std::string& manifest_path,
                          const std::string& split = "test");

  PsnrOutput run_psnr(const std::string& manifest_path,
                      const std::string& split = "test");

  // Points ordered m-major, then t, alpha_p, k. Infeasible points (t >
  // omega) are emitted as skipped rows; each feasible point retrains with
  // the same seed and evaluates on the test split.
  std::vector<SweepPoint> run_sweep(const std::string& manifest_path,
                                    const SweepGrid& grid);

 private:
  DeepMagnifier& magnifier();
  std::unique_ptr<DeepMagnifier> make_magnifier() const;
  std::string file_hash(const std::string& path) const;
  std::string sampler_digest() const;
  std::string phase_digest() const;
  std::string deep_digest() const;
  Classifier load_model(const std::string& path) const;

  PipelineConfig cfg_;
  std::string cache_dir_;
  std::unique_ptr<DeepMagnifier> mag_;
  mutable std::mutex hash_mutex_;
  mutable std::map<std::string, std::string> hash_cache_;
};

}  // namespace mmsd
