#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsm/config.hpp"
#include "dsm/encoder.hpp"
#include "dsm/objectives.hpp"
#include "dsm/synth.hpp"
#include "dsm/temporal.hpp"

namespace dsm {

// A training video plus the generator spec when analytic flow is available.
struct TrainingVideo {
  VideoClip video;
  std::optional<SyntheticSpec> spec;
};

// Train-split videos of a manifest; sidecar specs are read when present.
std::vector<TrainingVideo> load_training_videos(const DatasetManifest& manifest);

// Learning rate for a 0-based epoch: lr * 0.1^(number of boundaries passed),
// boundary k at round(fraction_k * epochs).
double scheduled_lr(const TrainConfig& config, int epoch);

struct Triplet {
  VideoClip anchor;
  VideoClip positive;
  VideoClip negative;  // empty when the objective runs without an intra-video negative
  int start = 0;       // anchor window start in the source video
  int tau = 0;
  std::array<CropWindow, 3> crops{};
};

// a = b(c1) from the anchor window, p = s(c2) on the same window, n = t(c3)
// on the window shifted by tau. Each crop is resized to the encoder input.
Triplet make_triplet(const TrainingVideo& video, const TrainConfig& config, Rng& rng);

// Batch objective (mean over samples for both losses). In contrastive mode a
// goes through `query` and p, n through `key`; triplet mode uses `query` for
// all three. When grads is non-null it receives d(loss)/d(query params).
// anchor_keys, when non-null, receives key-encoder embeddings of the anchors.
double batch_objective(const TrainConfig& config, const EncoderState& query, const EncoderState& key,
                       const std::vector<Triplet>& batch, const MemoryQueue& queue,
                       std::vector<float>* grads, std::vector<Embedding>* anchor_keys = nullptr);

struct MetricRow {
  int epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  EncoderState query;
  std::vector<MetricRow> metrics;
};

struct PretrainOutputs {
  std::filesystem::path checkpoint;  // empty: not written
  std::filesystem::path metrics_log;  // empty: not written
};

// Runs the full loop. Errors from any module are rethrown as the same error
// kind with "epoch E step S" prepended.
PretrainResult pretrain(const TrainConfig& config, const std::vector<TrainingVideo>& videos,
                        const PretrainOutputs& outputs = {});
PretrainResult pretrain(const TrainConfig& config, const DatasetManifest& manifest,
                        const PretrainOutputs& outputs = {});

// Metrics log: "epoch\tstep\tloss\tlr" per line.
std::string format_metric_row(const MetricRow& row);

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double step = 0.0;
  int side = 0;  // 0 central, +1 forward, -1 backward one-sided difference
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Finite differences on `count` random query parameters for the configured
// objective on a random 2-sample micro-batch. Central differences with step h
// unless a ReLU mask or triplet hinge flips inside [x - h, x + h]; then a
// second-order one-sided difference on a side without a flip, shrinking h by
// 4 (at most three times) when both sides have one.
GradCheckReport gradient_check(const TrainConfig& config, int count, std::uint64_t seed, double h = 1e-3);

}  // namespace dsm
