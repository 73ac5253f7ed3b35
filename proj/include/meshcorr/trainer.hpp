#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "meshcorr/config.hpp"
#include "meshcorr/datagen.hpp"
#include "meshcorr/io.hpp"
#include "meshcorr/losses.hpp"
#include "meshcorr/metrics.hpp"
#include "meshcorr/network.hpp"

namespace meshcorr {

// Runs fn(0..n-1) on up to `threads` workers; outputs must be per-index so
// results do not depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

int resolve_threads(int configured);

// Per-view training data extracted from the stack files; weight maps are
// computed once on load.
struct TrainSampleData {
  Tensor<float> input;
  ImageF d_lq;
  ImageF d_hq;
  ImageF label_g;
  ImageU8 valid;
  ImageU64 hq_ids;
  RigidTransform pose;
  ImageF weight_map;
};

class SampleStore {
 public:
  SampleStore(const DatasetManifest& manifest, const RunConfig& config);

  // group -> sample indices (4 views), restricted to a split
  std::vector<std::vector<int>> groups(const std::string& split) const;
  const TrainSampleData& sample(int index);
  const DataSample& record(int index) const { return manifest_.samples[index]; }
  std::size_t size() const { return manifest_.samples.size(); }

 private:
  DatasetManifest manifest_;
  RunConfig config_;
  std::vector<std::unique_ptr<TrainSampleData>> cache_;
};

struct StepStats {
  LossReport report;
  double grad_norm = 0.0;
  double lr = 0.0;
  int images = 0;
};

class Trainer {
 public:
  Trainer(const RunConfig& config, const DatasetManifest& manifest);

  StepStats step();
  std::int64_t current_step() const { return step_; }

  CorrectionNetF& net() { return net_; }
  AdamState& adam() { return adam_; }
  SampleStore& store() { return store_; }

  // Full loop with CSV logging and periodic checkpoints. Returns the FNV-1a
  // digest of the log bytes written by this call.
  std::uint64_t run(const std::string& out_dir, const std::string& resume_checkpoint = "");

 private:
  RunConfig config_;
  SampleStore store_;
  std::vector<std::vector<int>> train_groups_;
  CorrectionNetF net_;
  AdamState adam_;
  std::int64_t step_ = 0;
  int threads_ = 1;
};

struct EvalResult {
  MetricReport metrics;
  double gc_residual_mean = 0.0;
  std::size_t gc_pixels = 0;
};

EvalResult evaluate(const CorrectionNetF& net, SampleStore& store, const std::string& split,
                    const RunConfig& config);

}  // namespace meshcorr
