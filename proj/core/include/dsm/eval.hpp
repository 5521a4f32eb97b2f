#pragma once

#include <map>
#include <vector>

#include "dsm/encoder.hpp"
#include "dsm/synth.hpp"

namespace dsm {

struct EmbeddedClip {
  Embedding embedding;
  int scene_label = 0;
  int motion_label = 0;
  bool train = true;
  std::size_t entry = 0;  // manifest row
  int start = 0;          // first frame of the window
};

// Disjoint windows of `frames` frames at `stride`: for each block of
// frames*stride consecutive frames, one window per phase 0..stride-1. Windows
// are resized from the full frame to the encoder input. Videos too short for a
// single window are skipped with a warning on stderr.
std::vector<EmbeddedClip> embed_dataset(const EncoderState& state, const DatasetManifest& manifest,
                                        int frames, int stride);

// Window starts used by embed_dataset for a video of the given length.
std::vector<int> window_starts(int length, int frames, int stride);

inline const std::vector<int> kDefaultRecallKs{1, 5, 10, 20, 50};

struct RetrievalReport {
  std::vector<int> ks;
  std::vector<double> recall;  // parallel to ks
  std::map<int, std::vector<double>> per_class;  // label -> recall per k
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;

  double at(int k) const;
};

// Cosine-similarity ranking of the gallery for each query; a hit at K when any
// of the K most similar gallery items shares the query label.
RetrievalReport recall_at_k(const std::vector<Embedding>& queries, const std::vector<int>& query_labels,
                            const std::vector<Embedding>& gallery, const std::vector<int>& gallery_labels,
                            const std::vector<int>& ks = kDefaultRecallKs);

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Class centroids from train embeddings; each test embedding takes the label of
// the most cosine-similar centroid. Ties go to the class with more training
// samples, then the lower label.
ProbeResult nearest_centroid_probe(const std::vector<Embedding>& train, const std::vector<int>& train_labels,
                                   const std::vector<Embedding>& test, const std::vector<int>& test_labels);

enum class LabelKind { kScene, kMotion };

// Convenience wrappers over an embedded dataset: test split queries against the
// train split gallery; probe trained on train, scored on test.
RetrievalReport retrieval_report(const std::vector<EmbeddedClip>& clips, LabelKind label,
                                 const std::vector<int>& ks = kDefaultRecallKs);
ProbeResult probe_report(const std::vector<EmbeddedClip>& clips, LabelKind label);

}  // namespace dsm
