#include "dsm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "dsm/clip_io.hpp"
#include "dsm/error.hpp"

namespace dsm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

void check_dims(const std::vector<Embedding>& v, std::size_t dim, const char* what) {
  for (const Embedding& e : v) {
    if (e.size() != dim) throw ShapeMismatch(std::string(what) + " embeddings have inconsistent dimension");
  }
}

}  // namespace

std::vector<int> window_starts(int length, int frames, int stride) {
  if (frames < 1 || stride < 1) throw InvalidArgument("frames and stride must be positive");
  std::vector<int> out;
  const int block = frames * stride;
  for (int b = 0; b * block < length; ++b) {
    for (int p = 0; p < stride; ++p) {
      const int start = b * block + p;
      if (start + (frames - 1) * stride < length) out.push_back(start);
    }
  }
  return out;
}

std::vector<EmbeddedClip> embed_dataset(const EncoderState& state, const DatasetManifest& manifest,
                                        int frames, int stride) {
  if (frames != state.config.frames) {
    throw ShapeMismatch("window length " + std::to_string(frames) + " differs from the encoder's " +
                        std::to_string(state.config.frames) + " frames");
  }
  std::vector<EmbeddedClip> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    const VideoClip video = read_clip(manifest.resolve(e));
    const std::vector<int> starts = window_starts(video.frames(), frames, stride);
    if (starts.empty()) {
      std::cerr << "warning: skipping " << e.path << ": " << video.frames() << " frames is too short for "
                << frames << " frames at stride " << stride << "\n";
      continue;
    }
    const CropWindow full = full_frame_window(video.height(), video.width(), state.config.height, state.config.width);
    for (int start : starts) {
      std::vector<int> idx(static_cast<std::size_t>(frames));
      for (int k = 0; k < frames; ++k) idx[static_cast<std::size_t>(k)] = start + k * stride;
      const VideoClip clip = apply_crop(gather_frames(video, idx), full);
      out.push_back({embed(state, clip), e.scene_label, e.motion_label, e.train, i, start});
    }
  }
  return out;
}

double RetrievalReport::at(int k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw InvalidArgument("recall@" + std::to_string(k) + " was not computed");
}

RetrievalReport recall_at_k(const std::vector<Embedding>& queries, const std::vector<int>& query_labels,
                            const std::vector<Embedding>& gallery, const std::vector<int>& gallery_labels,
                            const std::vector<int>& ks) {
  if (queries.empty() || gallery.empty()) throw InvalidArgument("query and gallery sets must be nonempty");
  if (queries.size() != query_labels.size() || gallery.size() != gallery_labels.size()) {
    throw ShapeMismatch("embedding and label counts differ");
  }
  if (ks.empty()) throw InvalidArgument("no K values requested");
  for (int k : ks) {
    if (k < 1) throw InvalidArgument("K must be positive");
    if (static_cast<std::size_t>(k) > gallery.size()) {
      throw InvalidArgument("K = " + std::to_string(k) + " exceeds gallery size " + std::to_string(gallery.size()));
    }
  }
  const std::size_t dim = queries.front().size();
  check_dims(queries, dim, "query");
  check_dims(gallery, dim, "gallery");

  RetrievalReport report;
  report.ks = ks;
  report.recall.assign(ks.size(), 0.0);
  report.query_count = queries.size();
  report.gallery_count = gallery.size();
  std::map<int, std::vector<double>> class_hits;
  std::map<int, std::size_t> class_counts;

  std::vector<double> sims(gallery.size());
  std::vector<std::size_t> order(gallery.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t g = 0; g < gallery.size(); ++g) sims[g] = cosine(queries[q], gallery[g]);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    // Rank of the first same-label gallery item.
    std::size_t first_hit = gallery.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_labels[order[r]] == query_labels[q]) {
        first_hit = r;
        break;
      }
    }
    auto& hits = class_hits[query_labels[q]];
    hits.resize(ks.size(), 0.0);
    ++class_counts[query_labels[q]];
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first_hit < static_cast<std::size_t>(ks[i])) {
        report.recall[i] += 1.0;
        hits[i] += 1.0;
      }
    }
  }
  for (double& r : report.recall) r /= static_cast<double>(queries.size());
  for (auto& [label, hits] : class_hits) {
    for (double& h : hits) h /= static_cast<double>(class_counts[label]);
    report.per_class[label] = hits;
  }
  return report;
}

ProbeResult nearest_centroid_probe(const std::vector<Embedding>& train, const std::vector<int>& train_labels,
                                   const std::vector<Embedding>& test, const std::vector<int>& test_labels) {
  if (train.size() != train_labels.size() || test.size() != test_labels.size()) {
    throw ShapeMismatch("embedding and label counts differ");
  }
  if (train.empty() || test.empty()) throw InvalidArgument("probe needs nonempty train and test sets");
  const std::size_t dim = train.front().size();
  check_dims(train, dim, "train");
  check_dims(test, dim, "test");

  std::map<int, std::vector<double>> centroids;
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto& c = centroids[train_labels[i]];
    c.resize(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) c[d] += train[i][d];
    ++counts[train_labels[i]];
  }
  for (int label : test_labels) {
    if (!centroids.count(label)) {
      throw InvalidArgument("class " + std::to_string(label) + " has no training embeddings");
    }
  }
  if (centroids.size() < 2) throw InvalidArgument("probe needs at least two classes");
  for (auto& [label, c] : centroids) {
    for (double& v : c) v /= static_cast<double>(counts[label]);
  }

  constexpr double kTie = 1e-12;
  ProbeResult result;
  result.total = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    int best = 0;
    double best_sim = -2.0;
    bool first = true;
    for (const auto& [label, c] : centroids) {
      const double s = cosine(test[i], c);
      const bool better = first || s > best_sim + kTie ||
                          (std::abs(s - best_sim) <= kTie && counts[label] > counts[best]);
      if (better) {
        best = label;
        best_sim = s;
        first = false;
      }
    }
    if (best == test_labels[i]) ++result.correct;
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.total);
  return result;
}

namespace {

int label_of(const EmbeddedClip& c, LabelKind kind) {
  return kind == LabelKind::kScene ? c.scene_label : c.motion_label;
}

void split(const std::vector<EmbeddedClip>& clips, LabelKind kind, std::vector<Embedding>& train,
           std::vector<int>& train_labels, std::vector<Embedding>& test, std::vector<int>& test_labels) {
  for (const EmbeddedClip& c : clips) {
    if (c.train) {
      train.push_back(c.embedding);
      train_labels.push_back(label_of(c, kind));
    } else {
      test.push_back(c.embedding);
      test_labels.push_back(label_of(c, kind));
    }
  }
}

}  // namespace

RetrievalReport retrieval_report(const std::vector<EmbeddedClip>& clips, LabelKind label,
                                 const std::vector<int>& ks) {
  std::vector<Embedding> train, test;
  std::vector<int> train_labels, test_labels;
  split(clips, label, train, train_labels, test, test_labels);
  return recall_at_k(test, test_labels, train, train_labels, ks);
}

ProbeResult probe_report(const std::vector<EmbeddedClip>& clips, LabelKind label) {
  std::vector<Embedding> train, test;
  std::vector<int> train_labels, test_labels;
  split(clips, label, train, train_labels, test, test_labels);
  return nearest_centroid_probe(train, train_labels, test, test_labels);
}

}  // namespace dsm
